# app/experiments/common.py
"""
Общие куски экспериментов: данные, кандидаты, пакетный ремонт,
диагностика проекций и парные сравнения с базовым методом.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import InsufficientDataError
from app.market import (
    EsgInputs,
    MarketModel,
    PriceHistory,
    compute_returns,
    estimate_model,
    load_esg,
    load_prices,
    synth_esg,
    synth_market,
)
from app.projection import Portfolio, QpReport
from app.repair import repair_batch
from app.rng import derive_seed, make_rng
from app.schemas import BASELINE_METHOD, ExperimentConfig
from app.stats import wilcoxon_signed_rank

logger = logging.getLogger(__name__)

Repaired = List[Tuple[Portfolio, QpReport]]

# Подписи интерпретаций, которые попадают в отчёты как есть
INTERPRETATIONS = {
    "candidates": (
        "candidates drawn uniform in [0,1]^N; with candidate_scaling=budget each draw "
        "is divided by its sum before repair (selection is scale-invariant)"
    ),
    "rebalancing": (
        "each event repairs z and z + delta, delta ~ N(0, rebalance_noise^2) per coordinate "
        "added before scaling; both vectors share the raw sum of z as divisor"
    ),
    "net_sharpe": (
        "proxy value: gross Sharpe minus cost_bps * 1e-4 * rebalances_per_year / portfolio volatility"
    ),
    "hypervolume_reference": (
        "nadir of the union of all compared fronts (variance, -return, -esg) offset by 5% of each range"
    ),
}


@dataclass(frozen=True)
class MarketData:
    prices: PriceHistory
    esg: Optional[EsgInputs]


def load_market_data(config: ExperimentConfig) -> MarketData:
    """CSV из конфига либо синтетический рынок (с синтетическими ESG)."""
    if config.prices_csv:
        prices = load_prices(config.prices_csv)
        esg = load_esg(config.esg_csv, prices.asset_ids) if config.esg_csv else None
        return MarketData(prices, esg)

    src = config.synthetic
    prices = synth_market(
        src.n_assets,
        src.n_factors,
        src.seed,
        src.horizon,
        regime_start=src.regime_start,
        regime_drift=src.regime_drift,
    )
    return MarketData(prices, synth_esg(src.n_assets, src.seed))


def fit_model(prices: PriceHistory, esg: Optional[EsgInputs], config: ExperimentConfig) -> MarketModel:
    return estimate_model(
        compute_returns(prices),
        shrinkage=config.shrinkage,
        annualization=config.annualization,
        esg=esg,
    )


def scale_candidates(raw: np.ndarray, scaling: str, divisor: Optional[np.ndarray] = None) -> np.ndarray:
    if scaling == "raw":
        return raw
    d = raw.sum(axis=1, keepdims=True) if divisor is None else divisor
    return raw / d


def sample_candidates(
    config: ExperimentConfig,
    n_assets: int,
    experiment: str,
    split: int = 0,
    count: Optional[int] = None,
) -> np.ndarray:
    """
    Общий для всех методов поток кандидатов: сравнения парные.
    Сид: (master, эксперимент, "candidates", номер разбиения).
    count = None берёт config.n_candidates.
    """
    rng = make_rng(derive_seed(config.seed, experiment, "candidates", split))
    raw = rng.uniform(0.0, 1.0, size=(count or config.n_candidates, n_assets))
    return scale_candidates(raw, config.candidate_scaling)


def method_names(config: ExperimentConfig) -> List[str]:
    """Базовый euclidean всегда есть и всегда первый."""
    names = [m for m in config.methods if m != BASELINE_METHOD]
    return [BASELINE_METHOD] + names


def repair_candidates(zs: np.ndarray, model: MarketModel, config: ExperimentConfig, name: str) -> Repaired:
    return repair_batch(zs, model, config.constraints, config.method(name), workers=config.workers)


def diagnostics(repaired: Repaired) -> Dict[str, Any]:
    reports = [r for _, r in repaired]
    return {
        "mean_qp_iterations": float(np.mean([r.iterations for r in reports])),
        "regularized_solves": sum(1 for r in reports if r.regularized),
        "fallback_solves": sum(1 for r in reports if r.fallback),
        "max_kkt_residual": float(max(r.kkt_residual for r in reports)),
        "zero_score_selections": sum(1 for r in reports if r.zero_scores),
    }


def paired_test(a: Sequence[float], b: Sequence[float]) -> Dict[str, Optional[float]]:
    """Уилкоксон a против b; при < 5 ненулевых разностей: пустые поля."""
    try:
        res = wilcoxon_signed_rank(a, b)
    except InsufficientDataError as exc:
        logger.debug("paired test skipped: %s", exc)
        return {"statistic": None, "p_value": None, "n_effective": None}
    return {"statistic": res.statistic, "p_value": res.p_value, "n_effective": res.n_effective}
