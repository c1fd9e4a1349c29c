# app/experiments/oos.py
import logging
from typing import Dict, List, Optional

import numpy as np

from app.errors import InvalidArgumentError, UndefinedMetricError
from app.evaluation import sharpe_insample, sharpe_realized
from app.experiments.common import (
    INTERPRETATIONS,
    MarketData,
    diagnostics,
    load_market_data,
    method_names,
    paired_test,
    repair_candidates,
    sample_candidates,
)
from app.market import estimate_model, walk_forward_splits
from app.reporting import Report
from app.schemas import BASELINE_METHOD, ExperimentConfig
from app.stats import spearman_rho

logger = logging.getLogger(__name__)

EXPERIMENT = "oos"


def _rho(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    try:
        return spearman_rho(a, b)
    except (UndefinedMetricError, InvalidArgumentError) as exc:
        logger.debug("rank correlation skipped: %s", exc)
        return None


def run_oos(config: ExperimentConfig, data: Optional[MarketData] = None) -> Report:
    """
    Walk-forward: на каждой границе модель оценивается на train,
    кандидаты ремонтируются, Шарп считается in-sample (модель train)
    и реализованный (панель test).
    """
    if not config.split_boundaries:
        raise InvalidArgumentError("oos needs at least one split boundary (split_boundaries)")
    # число кандидатов на разбиение; без oos_candidates берётся n_candidates
    count = config.oos_candidates or config.n_candidates
    logger.info("oos: %d splits, %d candidates", len(config.split_boundaries), count)

    data = data or load_market_data(config)
    splits = walk_forward_splits(data.prices, config.split_boundaries)
    names = method_names(config)

    rows: List[dict] = []
    realized_by_method: Dict[str, List[float]] = {name: [] for name in names}
    for i, split in enumerate(splits):
        model = estimate_model(
            split.train,
            shrinkage=config.shrinkage,
            annualization=config.annualization,
            esg=data.esg,
        )
        zs = sample_candidates(config, model.n, EXPERIMENT, split=i, count=count)

        insample: Dict[str, np.ndarray] = {}
        realized: Dict[str, np.ndarray] = {}
        diag: Dict[str, dict] = {}
        for name in names:
            repaired = repair_candidates(zs, model, config, name)
            insample[name] = np.array([sharpe_insample(p, model, config.risk_free) for p, _ in repaired])
            realized[name] = np.array(
                [sharpe_realized(p, split.test, config.risk_free, config.annualization) for p, _ in repaired]
            )
            diag[name] = diagnostics(repaired)

        for name in names:
            test = paired_test(realized[name], realized[BASELINE_METHOD]) if name != BASELINE_METHOD else {}
            mean_in = float(insample[name].mean())
            mean_out = float(realized[name].mean())
            realized_by_method[name].append(mean_out)
            rows.append(
                {
                    "split": str(split.boundary_date),
                    "train_days": len(split.train),
                    "test_days": len(split.test),
                    "candidates": len(zs),
                    "method": name,
                    "mean_insample_sharpe": mean_in,
                    "mean_realized_sharpe": mean_out,
                    "sharpe_decay": mean_in - mean_out,
                    "spearman_insample_realized": _rho(insample[name], realized[name]),
                    "p_value_vs_euclidean": test.get("p_value"),
                    "statistic_vs_euclidean": test.get("statistic"),
                    **diag[name],
                }
            )

    summary = [
        {
            "method": name,
            "splits": len(splits),
            "mean_realized_sharpe": float(np.mean(realized_by_method[name])),
        }
        for name in names
    ]
    logger.info("oos finished: %d rows", len(rows))
    return Report(
        experiment=EXPERIMENT,
        config=config.to_flat(),
        tables={"splits": rows, "summary": summary},
        main_table="splits",
        interpretations={"candidates": INTERPRETATIONS["candidates"]},
    )
