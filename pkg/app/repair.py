# app/repair.py
"""
Операторы ремонта: отбор K активов (этап 1) + проекция весов (этап 2).

Семь именованных методов собираются в app.schemas.method_preset.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.errors import CaspError, InvalidArgumentError, RepairBatchError
from app.market import MarketModel
from app.projection import (
    DEFAULT_TOL,
    Portfolio,
    QpReport,
    bisect_simplex_box,
    project_omega,
)
from app.schemas import (
    ConstraintSet,
    ProjectionKind,
    RepairMethod,
    SelectionKind,
    SelectionRule,
)

logger = logging.getLogger(__name__)

RepairResult = Tuple[Portfolio, QpReport]

# отбор по этим правилам зависит от z; для sharpe: нет
_Z_DRIVEN = {
    SelectionKind.ABS,
    SelectionKind.VOL_NORM,
    SelectionKind.MIN_VAR,
    SelectionKind.RETURN_BOOSTED,
}


# ---------- ОТБОР ----------


def normalized_returns(mu: np.ndarray) -> np.ndarray:
    """μ̃ = (μ − μ_min)/(μ_max − μ_min); при μ_max = μ_min: 0.5 для всех."""
    mu = np.asarray(mu, dtype=float)
    lo, hi = float(mu.min()), float(mu.max())
    if hi == lo:
        return np.full_like(mu, 0.5)
    return (mu - lo) / (hi - lo)


def selection_scores(z: Sequence[float], model: MarketModel, rule: SelectionRule) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape != (model.n,):
        raise InvalidArgumentError("candidate length does not match the universe", n=model.n, got=len(z))

    variance = np.diag(model.omega)
    sigma = model.sigma
    kind = rule.kind

    if kind == SelectionKind.ABS:
        return np.abs(z)
    if kind == SelectionKind.VOL_NORM:
        return np.abs(z) / sigma
    if kind == SelectionKind.MIN_VAR:
        return np.abs(z) / variance
    if kind == SelectionKind.SHARPE:
        return (model.mu - rule.risk_free) / sigma
    if kind == SelectionKind.RETURN_BOOSTED:
        return np.abs(z) * (1.0 + rule.lam * normalized_returns(model.mu)) / sigma
    raise InvalidArgumentError("unknown selection rule", kind=str(kind))


def select_top_k(scores: Sequence[float], k: int) -> Tuple[int, ...]:
    """K лучших индексов; при равенстве выигрывает меньший индекс. Ответ по возрастанию."""
    s = np.asarray(scores, dtype=float).reshape(-1)
    if k < 1 or k > len(s):
        raise InvalidArgumentError("k must satisfy 1 <= k <= N", k=k, n=len(s))
    order = np.argsort(-s, kind="stable")[:k]
    return tuple(sorted(int(i) for i in order))


# ---------- РЕМОНТ ----------


def _euclidean(z_s: np.ndarray, omega_s: np.ndarray, c: ConstraintSet) -> RepairResult:
    w, iters = bisect_simplex_box(z_s, c.lower, c.upper, DEFAULT_TOL)
    sym = 0.5 * (omega_s + omega_s.T)
    d = w - z_s
    return w, QpReport(objective_value=max(0.5 * float(d @ sym @ d), 0.0), iterations=iters)


def repair(
    z: Sequence[float],
    model: MarketModel,
    constraints: ConstraintSet,
    method: RepairMethod,
) -> RepairResult:
    """
    Двухэтапный ремонт кандидата z.

    Этап 1: S = top-K по selection_scores. Этап 2: z_S проецируется
    на бокс-симплекс: евклидово, в метрике Ω_S или в метрике Ω_S
    с линейным членом −γ·μ̃_Sᵀw. Вне S веса нулевые.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape != (model.n,):
        raise InvalidArgumentError("candidate length does not match the universe", n=model.n, got=len(z))
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("candidate has non-finite entries")
    if constraints.k > model.n:
        raise InvalidArgumentError("cardinality exceeds universe size", k=constraints.k, n=model.n)

    scores = selection_scores(z, model, method.selection)
    zero_scores = method.selection.kind in _Z_DRIVEN and not np.any(scores)
    if zero_scores:
        logger.debug("all selection scores are zero; taking the %d lowest indices", constraints.k)

    active = select_top_k(scores, constraints.k)
    idx = list(active)
    z_s = z[idx]
    omega_s = model.omega[np.ix_(idx, idx)]

    proj = method.projection
    if proj.kind == ProjectionKind.EUCLIDEAN:
        w, report = _euclidean(z_s, omega_s, constraints)
    elif proj.kind == ProjectionKind.OMEGA_METRIC:
        w, report = project_omega(z_s, omega_s, constraints.lower, constraints.upper)
    else:
        linear = proj.gamma * normalized_returns(model.mu)[idx]
        w, report = project_omega(z_s, omega_s, constraints.lower, constraints.upper, linear=linear)

    if zero_scores:
        report = replace(report, zero_scores=True)
    return Portfolio(active, w), report


def repair_batch(
    zs: Sequence[Sequence[float]],
    model: MarketModel,
    constraints: ConstraintSet,
    method: RepairMethod,
    workers: int = 1,
) -> List[RepairResult]:
    """
    Поэлементный ремонт с сохранением порядка.

    Ошибки собираются по всем элементам; если есть хоть одна:
    RepairBatchError с частичными результатами.
    """

    def _one(z: Sequence[float]) -> Tuple[Optional[RepairResult], Optional[CaspError]]:
        try:
            return repair(z, model, constraints, method), None
        except CaspError as exc:
            return None, exc

    items = list(zs)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one, items))
    else:
        outcomes = [_one(z) for z in items]

    failures = [(i, err) for i, (_, err) in enumerate(outcomes) if err is not None]
    results = [res for res, _ in outcomes]
    if failures:
        raise RepairBatchError(failures, results)
    return results  # type: ignore[return-value]
