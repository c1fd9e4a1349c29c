# app/projection.py
"""
Проекционные ядра.

  * project_simplex_box: евклидова проекция на {Σw = 1, ℓ ≤ w ≤ u}
    бисекцией по порогу τ;
  * project_omega: проекция в метрике Ω (квадратичная программа
    с одним равенством и боксом), прямой метод активного множества;
  * is_feasible: проверка портфеля на бюджет / кардинальность / бокс.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.errors import ConvergenceError, InfeasibleConstraintsError, InvalidArgumentError
from app.schemas import ConstraintSet

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
BRACKET_WIDTH = 1e-12
SNAP_TOL = 1e-12
MIN_EIGENVALUE = 1e-8

BUDGET_TOL = 1e-8
BOX_TOL = 1e-10


# =========================
# Типы
# =========================


@dataclass(frozen=True)
class Portfolio:
    """Допустимое решение: упорядоченное активное множество и веса на нём."""

    active: Tuple[int, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "active", tuple(int(i) for i in self.active))
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if len(self.active) != len(w):
            raise InvalidArgumentError("active set and weights differ in length")

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[list(self.active)] = self.weights
        return out

    def to_dict(self) -> dict:
        return {"active": list(self.active), "weights": [float(x) for x in self.weights]}


@dataclass(frozen=True)
class QpReport:
    objective_value: float
    iterations: int
    regularized: bool = False
    kkt_residual: float = 0.0
    fallback: bool = False
    zero_scores: bool = False


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    violations: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


# =========================
# Евклидова проекция
# =========================


def _check_box_simplex(k: int, lower: float, upper: float) -> None:
    if k < 1:
        raise InfeasibleConstraintsError("empty vector cannot be projected")
    if lower > upper or k * lower > 1.0 + 1e-12 or k * upper < 1.0 - 1e-12:
        raise InfeasibleConstraintsError(
            "box-constrained simplex is empty",
            k=k,
            lower=lower,
            upper=upper,
        )


def _snap(w: np.ndarray, lower: float, upper: float) -> np.ndarray:
    w = np.clip(w, lower, upper)
    w[np.abs(w - lower) <= SNAP_TOL] = lower
    w[np.abs(w - upper) <= SNAP_TOL] = upper
    return w


def bisect_simplex_box(z: np.ndarray, lower: float, upper: float, tol: float) -> Tuple[np.ndarray, int]:
    """Бисекция по τ: Σ clip(z − τ, ℓ, u) убывает по τ. Возвращает (w, число шагов)."""
    lo = float(z.min()) - upper  # тут сумма = k·u ≥ 1
    hi = float(z.max()) - lower  # тут сумма = k·ℓ ≤ 1
    iters = 0
    tau = 0.5 * (lo + hi)
    while hi - lo > BRACKET_WIDTH:
        tau = 0.5 * (lo + hi)
        total = np.clip(z - tau, lower, upper).sum()
        iters += 1
        if abs(total - 1.0) < tol:
            break
        if total > 1.0:
            lo = tau
        else:
            hi = tau
        if iters > 400:
            break

    w = np.clip(z - tau, lower, upper)
    # уточнение: при известном множестве свободных координат τ считается явно
    free = (w > lower) & (w < upper)
    if np.any(free):
        clipped_mass = w[~free].sum()
        tau_exact = (z[free].sum() - (1.0 - clipped_mass)) / free.sum()
        w_exact = np.clip(z - tau_exact, lower, upper)
        if np.array_equal((w_exact > lower) & (w_exact < upper), free):
            w = w_exact
    return _snap(w, lower, upper), iters


def project_simplex_box(
    z_s: Sequence[float],
    lower: float,
    upper: float,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """
    Евклидова проекция z на {w : Σw = 1, ℓ ≤ w_i ≤ u}.

    Ответ имеет вид w_i = clip(z_i − τ*, ℓ, u); τ* ищется бисекцией
    на отрезке [min(z) − u, max(z) − ℓ].
    """
    z = np.asarray(z_s, dtype=float).reshape(-1)
    if tol <= 0:
        raise InvalidArgumentError("tolerance must be positive", tol=tol)
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("candidate has non-finite entries")
    _check_box_simplex(len(z), lower, upper)
    w, _ = bisect_simplex_box(z, lower, upper, tol)
    return w


# =========================
# Проекция в метрике Ω
# =========================


def _regularize(omega: np.ndarray) -> Tuple[np.ndarray, bool]:
    lam_min = float(np.linalg.eigvalsh(omega)[0])
    if lam_min >= MIN_EIGENVALUE:
        return omega, False
    eps = MIN_EIGENVALUE - lam_min
    logger.debug("QP matrix regularized: min eigenvalue %.3e, shift %.3e", lam_min, eps)
    return omega + eps * np.eye(len(omega)), True


def _kkt(
    w: np.ndarray,
    grad: np.ndarray,
    lower: float,
    upper: float,
    at_lower: np.ndarray,
    at_upper: np.ndarray,
) -> Tuple[float, float, np.ndarray]:
    """
    Множитель ν при равенстве и множители границ.

    Стационарность: g + ν·1 − μ_L + μ_U = 0; для свободных g_i + ν = 0.
    Возвращает (ν, невязка, множители границ со знаком: < 0: нарушение).
    """
    free = ~(at_lower | at_upper)
    if np.any(free):
        nu = -float(grad[free].mean())
    else:
        # все на границах: ν из допустимого интервала
        lo = float(np.max(-grad[at_lower])) if np.any(at_lower) else -np.inf
        hi = float(np.min(-grad[at_upper])) if np.any(at_upper) else np.inf
        if np.isinf(lo) and np.isinf(hi):
            nu = 0.0
        elif np.isinf(lo):
            nu = hi
        elif np.isinf(hi):
            nu = lo
        else:
            nu = 0.5 * (lo + hi)

    mult = np.zeros_like(w)
    mult[at_lower] = grad[at_lower] + nu
    mult[at_upper] = -(grad[at_upper] + nu)

    stationarity = float(np.max(np.abs(grad[free] + nu))) if np.any(free) else 0.0
    dual = float(np.max(np.maximum(-mult, 0.0))) if w.size else 0.0
    primal = max(
        abs(float(w.sum()) - 1.0),
        float(np.max(np.maximum(lower - w, 0.0))),
        float(np.max(np.maximum(w - upper, 0.0))),
    )
    return nu, max(stationarity, dual, primal), mult


def _active_set(
    omega: np.ndarray,
    q: np.ndarray,
    w0: np.ndarray,
    lower: float,
    upper: float,
    tol: float,
    max_iter: int,
) -> Tuple[np.ndarray, int, float, bool]:
    """
    Прямой метод активного множества для min ½wᵀΩw + qᵀw,
    Σw = 1, ℓ ≤ w ≤ u. Старт: допустимая точка w0.
    """
    k = len(w0)
    w = w0.copy()
    at_lower = w <= lower
    at_upper = (w >= upper) & ~at_lower
    residual = np.inf

    for it in range(1, max_iter + 1):
        grad = omega @ w + q
        free = ~(at_lower | at_upper)
        idx = np.flatnonzero(free)
        m = len(idx)

        step = np.zeros(k)
        if m >= 2:
            # [Ω_FF 1; 1ᵀ 0] [p; ν] = [−g_F; 0]
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = omega[np.ix_(idx, idx)]
            kkt[:m, m] = 1.0
            kkt[m, :m] = 1.0
            rhs = np.concatenate([-grad[idx], [0.0]])
            sol = np.linalg.solve(kkt, rhs)
            step[idx] = sol[:m]

        scale = 1.0 + float(np.max(np.abs(w)))
        if np.max(np.abs(step)) <= 1e-13 * scale:
            nu, residual, mult = _kkt(w, grad, lower, upper, at_lower, at_upper)
            bound = at_lower | at_upper
            if not np.any(bound):
                return w, it, residual, True
            worst = int(np.argmin(np.where(bound, mult, np.inf)))
            if mult[worst] >= -tol:
                return w, it, residual, True
            # снимаем ограничение с самым отрицательным множителем
            at_lower[worst] = False
            at_upper[worst] = False
            continue

        # длина шага до ближайшей блокирующей границы
        alpha = 1.0
        blocking = -1
        blocking_upper = False
        for i in idx:
            if step[i] < 0:
                ratio = (lower - w[i]) / step[i]
                if ratio < alpha:
                    alpha, blocking, blocking_upper = ratio, i, False
            elif step[i] > 0:
                ratio = (upper - w[i]) / step[i]
                if ratio < alpha:
                    alpha, blocking, blocking_upper = ratio, i, True
        alpha = max(alpha, 0.0)
        w = w + alpha * step
        if blocking >= 0:
            if blocking_upper:
                w[blocking] = upper
                at_upper[blocking] = True
            else:
                w[blocking] = lower
                at_lower[blocking] = True

    grad = omega @ w + q
    _, residual, _ = _kkt(w, grad, lower, upper, at_lower, at_upper)
    return w, max_iter, residual, False


def _projected_gradient(
    omega: np.ndarray,
    q: np.ndarray,
    w0: np.ndarray,
    lower: float,
    upper: float,
    tol: float,
    max_iter: int,
) -> Tuple[np.ndarray, int]:
    """Запасной путь: w ← P(w − ∇f/L), P: евклидова проекция на бокс-симплекс."""
    lipschitz = float(np.linalg.eigvalsh(omega)[-1])
    step = 1.0 / max(lipschitz, 1e-300)
    w = w0.copy()
    for it in range(1, max_iter + 1):
        w_next, _ = bisect_simplex_box(w - step * (omega @ w + q), lower, upper, DEFAULT_TOL)
        if np.max(np.abs(w_next - w)) <= tol * 1e-2:
            return w_next, it
        w = w_next
    return w, max_iter


def _residual_at(
    w: np.ndarray, omega: np.ndarray, q: np.ndarray, lower: float, upper: float
) -> float:
    at_lower = np.abs(w - lower) <= SNAP_TOL
    at_upper = (np.abs(w - upper) <= SNAP_TOL) & ~at_lower
    _, residual, _ = _kkt(w, omega @ w + q, lower, upper, at_lower, at_upper)
    return residual


def _polish_budget(w: np.ndarray, lower: float, upper: float) -> np.ndarray:
    w = _snap(w, lower, upper)
    free = (w > lower) & (w < upper)
    gap = 1.0 - w.sum()
    if np.any(free) and gap != 0.0:
        w[free] += gap / free.sum()
        w = _snap(w, lower, upper)
    return w


def project_omega(
    z_s: Sequence[float],
    omega_s: np.ndarray,
    lower: float,
    upper: float,
    tol: float = DEFAULT_TOL,
    linear: Optional[Sequence[float]] = None,
    max_iter: Optional[int] = None,
) -> Tuple[np.ndarray, QpReport]:
    """
    min ½(w − z)ᵀΩ(w − z) − cᵀw  при  Σw = 1, ℓ ≤ w ≤ u.

    c (linear) необязателен: это линейный член return-regularized
    проекции. Ω симметризуется; если λ_min < 1e-8, добавляется εI.
    После 50·k итераций без сходимости: проекционный градиент.
    """
    z = np.asarray(z_s, dtype=float).reshape(-1)
    k = len(z)
    om = np.asarray(omega_s, dtype=float)
    if om.shape != (k, k):
        raise InvalidArgumentError("covariance block does not match candidate", shape=om.shape, k=k)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(om))):
        raise InvalidArgumentError("non-finite QP input")
    if tol <= 0:
        raise InvalidArgumentError("tolerance must be positive", tol=tol)
    _check_box_simplex(k, lower, upper)

    sym = 0.5 * (om + om.T)
    solve_om, regularized = _regularize(sym)
    c = np.zeros(k) if linear is None else np.asarray(linear, dtype=float).reshape(-1)
    if c.shape != (k,):
        raise InvalidArgumentError("linear term does not match candidate", k=k)

    # ½wᵀΩw + qᵀw, q = −(Ωz + c)
    q = -(solve_om @ z + c)
    w0, _ = bisect_simplex_box(z, lower, upper, DEFAULT_TOL)

    cap = max_iter if max_iter is not None else 50 * k
    w, iterations, residual, converged = _active_set(solve_om, q, w0, lower, upper, tol, cap)
    fallback = False
    if not converged or residual > max(tol, 1e-9):
        logger.warning(
            "active-set QP did not converge in %d iterations (residual %.2e); projected gradient fallback",
            cap,
            residual,
        )
        fallback = True
        w_pg, pg_iters = _projected_gradient(solve_om, q, w, lower, upper, tol, 20000)
        iterations += pg_iters
        w = w_pg

    w = _polish_budget(w, lower, upper)
    residual = _residual_at(w, solve_om, q, lower, upper)
    if residual > max(tol, 1e-8):
        raise ConvergenceError(
            "omega-metric projection did not converge",
            best_iterate=w,
            residual=residual,
            iterations=iterations,
        )

    d = w - z
    objective = 0.5 * float(d @ sym @ d)
    report = QpReport(
        objective_value=max(objective, 0.0),
        iterations=int(iterations),
        regularized=regularized,
        kkt_residual=float(residual),
        fallback=fallback,
    )
    return w, report


# =========================
# Допустимость
# =========================


def is_feasible(p: Portfolio, c: ConstraintSet, n: int) -> Feasibility:
    """
    Бюджет (Σw = 1 ± 1e-8), кардинальность (|S| ≤ k),
    бокс (ℓ ≤ w ≤ u ± 1e-10) и корректность индексов.
    """
    violations: List[str] = []
    active = list(p.active)
    w = p.weights

    if len(active) > c.k:
        violations.append(f"cardinality: {len(active)} active assets > k={c.k}")
    if len(set(active)) != len(active):
        violations.append("index: duplicate active indices")
    if active != sorted(active):
        violations.append("index: active indices not sorted")
    if any(i < 0 or i >= n for i in active):
        violations.append(f"index: active index outside universe of {n}")
    if not np.all(np.isfinite(w)):
        violations.append("weights: non-finite weight")
    elif abs(float(w.sum()) - 1.0) > BUDGET_TOL:
        violations.append(f"budget: weights sum to {float(w.sum()):.12g}")
    if np.any(w < c.lower - BOX_TOL):
        violations.append(f"box: weight below lower bound {c.lower}")
    if np.any(w > c.upper + BOX_TOL):
        violations.append(f"box: weight above upper bound {c.upper}")

    return Feasibility(ok=not violations, violations=violations)
