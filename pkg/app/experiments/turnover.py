# app/experiments/turnover.py
import logging
from typing import List, Optional, Tuple

import numpy as np

from app.evaluation import PerfStats, net_sharpe_proxy, portfolio_variance, sharpe_insample, turnover_cost
from app.experiments.common import (
    INTERPRETATIONS,
    MarketData,
    fit_model,
    load_market_data,
    method_names,
    repair_candidates,
    scale_candidates,
)
from app.reporting import Report
from app.rng import derive_seed, make_rng
from app.schemas import ExperimentConfig

logger = logging.getLogger(__name__)

EXPERIMENT = "turnover"


def rebalancing_events(config: ExperimentConfig, n_assets: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Пары кандидатов (z_old, z_new): z_new = z_old + δ в сырых
    координатах, обе делятся на одну и ту же сумму z_old.
    """
    rng = make_rng(derive_seed(config.seed, EXPERIMENT, "candidates", 0))
    raw_old = rng.uniform(0.0, 1.0, size=(config.rebalance_events, n_assets))
    delta = rng.normal(0.0, config.rebalance_noise, size=raw_old.shape)
    raw_new = raw_old + delta
    divisor = raw_old.sum(axis=1, keepdims=True)
    return (
        scale_candidates(raw_old, config.candidate_scaling, divisor),
        scale_candidates(raw_new, config.candidate_scaling, divisor),
    )


def run_turnover(config: ExperimentConfig, data: Optional[MarketData] = None) -> Report:
    """Средний оборот, издержки в б.п. и прокси нетто-Шарпа по методам."""
    logger.info("turnover: %d rebalancing events", config.rebalance_events)
    data = data or load_market_data(config)
    model = fit_model(data.prices, data.esg, config)
    z_old, z_new = rebalancing_events(config, model.n)

    rows: List[dict] = []
    for name in method_names(config):
        before = repair_candidates(z_old, model, config, name)
        after = repair_candidates(z_new, model, config, name)

        events: List[PerfStats] = []
        for (p_old, _), (p_new, _) in zip(before, after):
            t, c = turnover_cost(p_old, p_new, config.cost_rate_bps)
            events.append(
                PerfStats(
                    variance=portfolio_variance(p_new, model),
                    sharpe=sharpe_insample(p_new, model, config.risk_free),
                    turnover=t,
                    cost_bps=c,
                )
            )
        net = [
            net_sharpe_proxy(e.sharpe, e.cost_bps, float(np.sqrt(e.variance)), config.rebalances_per_year)
            for e in events
        ]
        turnovers = [e.turnover for e in events]

        rows.append(
            {
                "method": name,
                "mean_turnover": float(np.mean(turnovers)),
                "mean_cost_bps": float(np.mean([e.cost_bps for e in events])),
                "mean_gross_sharpe": float(np.mean([e.sharpe for e in events])),
                "mean_net_sharpe_proxy": float(np.mean(net)),
                "max_turnover": float(np.max(turnovers)),
            }
        )

    logger.info("turnover finished")
    return Report(
        experiment=EXPERIMENT,
        config=config.to_flat(),
        tables={"methods": rows},
        main_table="methods",
        interpretations={
            "candidates": INTERPRETATIONS["candidates"],
            "rebalancing": INTERPRETATIONS["rebalancing"],
            "net_sharpe": INTERPRETATIONS["net_sharpe"],
        },
    )
