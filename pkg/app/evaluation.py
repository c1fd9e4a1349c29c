# app/evaluation.py
"""
Метрики портфеля и качества фронта Парето.

Статистические критерии: в app.stats.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import settings
from app.errors import InvalidArgumentError, UndefinedMetricError
from app.market import MarketModel, ReturnPanel
from app.mogwo import Objectives
from app.projection import Portfolio

logger = logging.getLogger(__name__)

REFERENCE_OFFSET = 0.05
BPS = 1e-4

Weights = Union[Portfolio, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class PerfStats:
    variance: float
    sharpe: float
    realized_sharpe: Optional[float] = None
    turnover: Optional[float] = None
    cost_bps: Optional[float] = None


# =========================
# Шарп
# =========================


def portfolio_variance(p: Portfolio, model: MarketModel) -> float:
    w = p.dense(model.n)
    return float(w @ model.omega @ w)


def sharpe_insample(p: Portfolio, model: MarketModel, r_f: Optional[float] = None) -> float:
    """(μᵀw − r_f)/√(wᵀΩw)."""
    rf = settings.RISK_FREE if r_f is None else float(r_f)
    w = p.dense(model.n)
    var = float(w @ model.omega @ w)
    if not var > 0.0:
        raise UndefinedMetricError("Sharpe ratio undefined for zero portfolio variance")
    return (float(model.mu @ w) - rf) / float(np.sqrt(var))


def sharpe_realized(
    p: Portfolio,
    panel: ReturnPanel,
    r_f: Optional[float] = None,
    annualization: Optional[int] = None,
) -> float:
    """
    Годовой средний дневной лог-доход портфеля минус r_f,
    делённый на годовое стандартное отклонение (ddof=1).
    """
    rf = settings.RISK_FREE if r_f is None else float(r_f)
    ann = settings.ANNUALIZATION if annualization is None else int(annualization)
    if len(panel) == 0:
        raise InvalidArgumentError("return panel is empty")
    if len(panel) < 2:
        raise UndefinedMetricError("realized Sharpe needs at least 2 observations")

    daily = panel.returns[:, list(p.active)] @ p.weights
    if np.ptp(daily) == 0.0:
        raise UndefinedMetricError("realized Sharpe undefined for constant portfolio returns")
    sd = float(np.std(daily, ddof=1))
    if sd == 0.0:
        raise UndefinedMetricError("realized Sharpe undefined for zero realized variance")
    return (ann * float(daily.mean()) - rf) / (np.sqrt(ann) * sd)


# =========================
# Трекинг-ошибка и оборот
# =========================


def tracking_error_sq(w1: Sequence[float], w2: Sequence[float], omega: np.ndarray) -> float:
    a = np.asarray(w1, dtype=float).reshape(-1)
    b = np.asarray(w2, dtype=float).reshape(-1)
    om = np.asarray(omega, dtype=float)
    if a.shape != b.shape or om.shape != (len(a), len(a)):
        raise InvalidArgumentError("weight vectors and covariance disagree in dimension")
    d = a - b
    return float(d @ om @ d)


def _as_map(w: Weights) -> Dict[int, float]:
    if isinstance(w, Portfolio):
        return {i: float(x) for i, x in zip(w.active, w.weights)}
    arr = np.asarray(w, dtype=float).reshape(-1)
    return {int(i): float(arr[i]) for i in np.flatnonzero(arr)}


def turnover_cost(
    w_old: Weights,
    w_new: Weights,
    cost_rate_bps: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Оборот Σ|Δw|/2 по объединению активных множеств и издержки
    в б.п.: turnover × cost_rate. Плотные векторы должны быть одной длины.
    """
    rate = settings.COST_RATE_BPS if cost_rate_bps is None else float(cost_rate_bps)
    if not isinstance(w_old, Portfolio) and not isinstance(w_new, Portfolio):
        if np.asarray(w_old).shape != np.asarray(w_new).shape:
            raise InvalidArgumentError("weight vectors differ in length")
    old, new = _as_map(w_old), _as_map(w_new)
    union = sorted(set(old) | set(new))
    turnover = 0.5 * sum(abs(new.get(i, 0.0) - old.get(i, 0.0)) for i in union)
    return turnover, turnover * rate


def net_sharpe_proxy(
    gross_sharpe: float,
    cost_bps: float,
    sigma: float,
    rebalances_per_year: float = 12.0,
) -> float:
    """
    Нетто-Шарп (прокси): gross − (cost_bps·1e-4 · ребалансировок в год)/σ_p.
    Годовые издержки вычитаются из избыточной доходности.
    """
    if not sigma > 0.0:
        raise UndefinedMetricError("net Sharpe proxy needs positive volatility")
    return gross_sharpe - cost_bps * BPS * rebalances_per_year / sigma


# =========================
# Гиперобъём
# =========================


def _area_2d(points: np.ndarray, ref_x: float, ref_y: float) -> float:
    area = 0.0
    prev_y = ref_y
    for x, y in sorted(points.tolist()):
        if y < prev_y:
            area += (ref_x - x) * (prev_y - y)
            prev_y = y
    return area


def hypervolume(front: Iterable[Objectives], reference: Objectives) -> float:
    """
    Точный объём для трёх критериев: сортировка по третьей координате
    и сумма площадей двумерных срезов. Все критерии сначала
    приводятся к минимизации. Точки, не доминирующие опорную строго
    по каждой координате, исключаются с предупреждением.
    """
    ref = np.array(reference.oriented())
    pts = [np.array(obj.oriented()) for obj in front]
    kept = [p for p in pts if np.all(p < ref)]
    if len(kept) < len(pts):
        logger.warning("%d front points do not dominate the reference point and were excluded", len(pts) - len(kept))
    if not kept:
        return 0.0

    arr = np.array(kept)
    arr = arr[np.argsort(arr[:, 2], kind="stable")]
    volume = 0.0
    for i in range(len(arr)):
        top = arr[i + 1, 2] if i + 1 < len(arr) else ref[2]
        depth = top - arr[i, 2]
        if depth > 0:
            volume += depth * _area_2d(arr[: i + 1, :2], ref[0], ref[1])
    return float(volume)


def hypervolume_reference(
    fronts: Iterable[Iterable[Objectives]],
    offset: float = REFERENCE_OFFSET,
) -> Objectives:
    """
    Надир объединения всех сравниваемых фронтов (в ориентации на
    минимизацию), сдвинутый на offset от диапазона каждого критерия.
    При нулевом диапазоне сдвиг берётся от модуля координаты (или 1).
    """
    pts = np.array([obj.oriented() for front in fronts for obj in front])
    if pts.size == 0:
        raise InvalidArgumentError("no points to build a reference from")
    nadir = pts.max(axis=0)
    span = nadir - pts.min(axis=0)
    fallback = np.maximum(np.abs(nadir), 1.0)
    ref = nadir + offset * np.where(span > 0, span, fallback)
    return Objectives(variance=float(ref[0]), ret=float(-ref[1]), esg=float(-ref[2]))
