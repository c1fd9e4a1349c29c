# app/experiments/optimize.py
"""
Повторные прогоны MOGWO по методам + подбор (λ, γ) для RA-CASP.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from app.evaluation import hypervolume, hypervolume_reference, sharpe_insample
from app.experiments.common import (
    INTERPRETATIONS,
    MarketData,
    fit_model,
    load_market_data,
    method_names,
    paired_test,
    repair_candidates,
    sample_candidates,
)
from app.market import PriceHistory, split_prices
from app.mogwo import Objectives, ParetoArchive, optimize
from app.reporting import Report
from app.rng import derive_seed
from app.schemas import BASELINE_METHOD, ExperimentConfig

logger = logging.getLogger(__name__)

EXPERIMENT = "optimize"

LAMBDA_GRID = (0.4, 0.6, 0.8, 1.0, 1.2)
GAMMA_GRID = (0.15, 0.20, 0.25, 0.30, 0.35)


# ---------- подбор λ, γ ----------


@dataclass(frozen=True)
class TuneResult:
    lam: float
    gamma: float
    grid: List[Dict[str, float]]


def _tuning_prices(prices: PriceHistory, config: ExperimentConfig) -> PriceHistory:
    if not config.split_boundaries:
        return prices
    train, _ = split_prices(prices, config.split_boundaries[0])
    return train


def tune_return_params(config: ExperimentConfig, data: Optional[MarketData] = None) -> TuneResult:
    """
    Перебор 5×5 по (λ, γ) на train первого разбиения (или на всей
    панели); критерий: средний in-sample Шарп RA-CASP. При равенстве
    побеждает первая точка в построчном порядке.
    """
    data = data or load_market_data(config)
    model = fit_model(_tuning_prices(data.prices, config), data.esg, config)
    zs = sample_candidates(config, model.n, "tune")

    grid: List[Dict[str, float]] = []
    best: Optional[Dict[str, float]] = None
    for lam in LAMBDA_GRID:
        for gamma in GAMMA_GRID:
            tuned = config.with_overrides(ra_lambda=lam, ra_gamma=gamma)
            repaired = repair_candidates(zs, model, tuned, "ra-casp")
            score = float(np.mean([sharpe_insample(p, model, config.risk_free) for p, _ in repaired]))
            row = {"lambda": lam, "gamma": gamma, "mean_sharpe": score}
            grid.append(row)
            if best is None or score > best["mean_sharpe"]:
                best = row

    assert best is not None
    logger.info("tuning selected lambda=%g gamma=%g (mean Sharpe %.4f)", best["lambda"], best["gamma"], best["mean_sharpe"])
    return TuneResult(lam=best["lambda"], gamma=best["gamma"], grid=grid)


# ---------- прогоны ----------


def _archive_doc(archive: ParetoArchive) -> List[Dict[str, Any]]:
    return [{**p.to_dict(), "objectives": obj.to_dict()} for p, obj in archive.members]


def _best_sharpe(objs: List[Objectives], r_f: float) -> Optional[float]:
    values = [(o.ret - r_f) / np.sqrt(o.variance) for o in objs if o.variance > 0]
    return float(max(values)) if values else None


def run_optimize(config: ExperimentConfig, data: Optional[MarketData] = None, tune: bool = False) -> Report:
    """
    config.repeats прогонов MOGWO на метод с сидами
    (master, "optimize", метод, номер прогона). Гиперобъём считается
    от общей опорной точки по всем фронтам.
    """
    data = data or load_market_data(config)
    tuning: Optional[TuneResult] = None
    if tune:
        tuning = tune_return_params(config, data)
        config = config.with_overrides(ra_lambda=tuning.lam, ra_gamma=tuning.gamma)

    model = fit_model(data.prices, data.esg, config)
    names = method_names(config)
    logger.info("optimize: %d methods x %d runs", len(names), config.repeats)

    runs: Dict[str, List[Dict[str, Any]]] = {}
    for name in names:
        method = config.method(name)
        runs[name] = []
        for rep in range(config.repeats):
            seed = derive_seed(config.seed, EXPERIMENT, name, rep)
            mogwo_cfg = config.mogwo.model_copy(update={"seed": seed})
            archive, log = optimize(
                model,
                config.constraints,
                method,
                mogwo_cfg,
                risk_free=config.risk_free,
                workers=config.workers,
            )
            runs[name].append({"seed": seed, "archive": archive, "log": log})
            logger.debug("optimize %s run %d: archive size %d", name, rep, len(archive))

    reference = hypervolume_reference([r["archive"].objectives() for name in names for r in runs[name]])

    run_rows: List[dict] = []
    method_rows: List[dict] = []
    archives: Dict[str, List[Dict[str, Any]]] = {}
    best_sharpes: Dict[str, List[float]] = {}
    for name in names:
        archives[name] = []
        sharpes, returns, volumes = [], [], []
        for rep, run in enumerate(runs[name]):
            objs = run["archive"].objectives()
            best_s = _best_sharpe(objs, config.risk_free)
            best_r = float(max(o.ret for o in objs))
            hv = hypervolume(objs, reference)
            sharpes.append(np.nan if best_s is None else best_s)
            returns.append(best_r)
            volumes.append(hv)
            run_rows.append(
                {
                    "method": name,
                    "run": rep,
                    "seed": run["seed"],
                    "archive_size": len(objs),
                    "best_sharpe": best_s,
                    "best_return": best_r,
                    "min_variance": float(min(o.variance for o in objs)),
                    "max_esg": float(max(o.esg for o in objs)),
                    "hypervolume": hv,
                }
            )
            archives[name].append(
                {
                    "run": rep,
                    "seed": run["seed"],
                    "members": _archive_doc(run["archive"]),
                    "run_log": run["log"].records,
                }
            )
        best_sharpes[name] = sharpes
        method_rows.append(
            {
                "method": name,
                "runs": config.repeats,
                "mean_best_sharpe": float(np.nanmean(sharpes)) if not np.all(np.isnan(sharpes)) else None,
                "mean_best_return": float(np.mean(returns)),
                "best_return_overall": float(np.max(returns)),
                "mean_hypervolume": float(np.mean(volumes)),
            }
        )

    for row in method_rows:
        name = row["method"]
        test = paired_test(best_sharpes[name], best_sharpes[BASELINE_METHOD]) if name != BASELINE_METHOD else {}
        row["p_value_vs_euclidean"] = test.get("p_value")
        row["statistic_vs_euclidean"] = test.get("statistic")

    tables: Dict[str, List[dict]] = {"runs": run_rows, "methods": method_rows}
    extras: Dict[str, Any] = {"hypervolume_reference": reference.to_dict(), "archives": archives}
    if tuning is not None:
        tables["tuning"] = tuning.grid
        extras["tuned"] = {"ra_lambda": tuning.lam, "ra_gamma": tuning.gamma}

    logger.info("optimize finished")
    return Report(
        experiment=EXPERIMENT,
        config=config.to_flat(),
        tables=tables,
        main_table="runs",
        interpretations={"hypervolume_reference": INTERPRETATIONS["hypervolume_reference"]},
        extras=extras,
    )
