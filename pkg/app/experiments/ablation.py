# app/experiments/ablation.py
import logging
from typing import Dict, List, Optional

import numpy as np

from app.evaluation import portfolio_variance, sharpe_insample
from app.experiments.common import (
    INTERPRETATIONS,
    MarketData,
    diagnostics,
    fit_model,
    load_market_data,
    method_names,
    paired_test,
    repair_candidates,
    sample_candidates,
)
from app.reporting import Report
from app.schemas import BASELINE_METHOD, ExperimentConfig

logger = logging.getLogger(__name__)

EXPERIMENT = "ablation"

# (метод, с чем сравниваем) сверх "всё против euclidean"
EXTRA_COMPARISONS = [("casp-basic", "volnorm-euc")]


def run_ablation(config: ExperimentConfig, data: Optional[MarketData] = None) -> Report:
    """
    n_candidates случайных кандидатов, каждый ремонтируется всеми
    методами; средние дисперсия и Шарп, снижение дисперсии против
    euclidean и парные критерии Уилкоксона по дисперсии.
    """
    logger.info("ablation: %d candidates, methods %s", config.n_candidates, ",".join(config.methods))
    data = data or load_market_data(config)
    model = fit_model(data.prices, data.esg, config)
    zs = sample_candidates(config, model.n, EXPERIMENT)

    names = method_names(config)
    variances: Dict[str, np.ndarray] = {}
    sharpes: Dict[str, np.ndarray] = {}
    diag: Dict[str, dict] = {}
    for name in names:
        repaired = repair_candidates(zs, model, config, name)
        variances[name] = np.array([portfolio_variance(p, model) for p, _ in repaired])
        sharpes[name] = np.array([sharpe_insample(p, model, config.risk_free) for p, _ in repaired])
        diag[name] = diagnostics(repaired)

    base = float(variances[BASELINE_METHOD].mean())
    rows: List[dict] = []
    for name in names:
        mean_var = float(variances[name].mean())
        test = paired_test(variances[name], variances[BASELINE_METHOD]) if name != BASELINE_METHOD else {}
        rows.append(
            {
                "method": name,
                "mean_variance": mean_var,
                "mean_sharpe": float(sharpes[name].mean()),
                "variance_reduction_pct": 100.0 * (base - mean_var) / base if name != BASELINE_METHOD else 0.0,
                "p_value_vs_euclidean": test.get("p_value"),
                "statistic_vs_euclidean": test.get("statistic"),
                **diag[name],
            }
        )

    comparisons: List[dict] = []
    pairs = [(name, BASELINE_METHOD) for name in names if name != BASELINE_METHOD]
    pairs += [(a, b) for a, b in EXTRA_COMPARISONS if a in variances and b in variances]
    for a, b in pairs:
        comparisons.append(
            {
                "method": a,
                "versus": b,
                "mean_variance_difference": float((variances[a] - variances[b]).mean()),
                **paired_test(variances[a], variances[b]),
            }
        )

    logger.info("ablation finished: euclidean mean variance %.6g", base)
    return Report(
        experiment=EXPERIMENT,
        config=config.to_flat(),
        tables={"methods": rows, "comparisons": comparisons},
        main_table="methods",
        interpretations={"candidates": INTERPRETATIONS["candidates"]},
        extras={"model": dict(model.meta)},
    )
