# app/stats.py
"""
Непараметрика для отчётов: парный критерий Уилкоксона и ранговая
корреляция Спирмена.
"""
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from app.errors import InsufficientDataError, InvalidArgumentError, UndefinedMetricError

EXACT_MAX_N = 25
MIN_EFFECTIVE = 5

WilcoxonMethod = Literal["auto", "exact", "approx"]


@dataclass(frozen=True)
class TestResult:
    statistic: float  # T = W⁺ − W⁻
    p_value: float
    n_effective: int
    method: str = "exact"


def _exact_p(w_plus2: int, ranks2: np.ndarray) -> float:
    """
    Точное распределение W⁺ при H0 перебором знаков через свёртку.
    Ранги удвоены, чтобы полуцелые средние ранги стали целыми.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    lower = float(counts[: w_plus2 + 1].sum())
    upper = float(counts[w_plus2:].sum())
    return min(1.0, 2.0 * min(lower, upper))


def _approx_p(w_plus: float, n: int, ranks: np.ndarray) -> float:
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / np.sqrt(var)
    return min(1.0, 2.0 * float(norm.sf(z)))


def wilcoxon_signed_rank(
    paired_a: Sequence[float],
    paired_b: Sequence[float],
    method: WilcoxonMethod = "auto",
) -> TestResult:
    """
    Двусторонний критерий для d = a − b.

    Нулевые разности отбрасываются, связки получают средний ранг.
    auto: точное распределение при n ≤ 25, иначе нормальное
    приближение с поправкой на непрерывность и на связки.
    """
    a = np.asarray(paired_a, dtype=float).reshape(-1)
    b = np.asarray(paired_b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise InvalidArgumentError("paired samples differ in length", a=len(a), b=len(b))
    if method not in ("auto", "exact", "approx"):
        raise InvalidArgumentError("unknown Wilcoxon method", method=method)

    d = a - b
    d = d[d != 0.0]
    n = len(d)
    if n < MIN_EFFECTIVE:
        raise InsufficientDataError("fewer than 5 nonzero paired differences", n_effective=n)

    ranks = rankdata(np.abs(d))  # средние ранги
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())

    use_exact = method == "exact" or (method == "auto" and n <= EXACT_MAX_N)
    if use_exact:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        w_plus2 = int(ranks2[d > 0].sum())
        p = _exact_p(w_plus2, ranks2)
    else:
        p = _approx_p(w_plus, n, ranks)

    return TestResult(
        statistic=w_plus - w_minus,
        p_value=float(min(max(p, 0.0), 1.0)),
        n_effective=n,
        method="exact" if use_exact else "approx",
    )


def spearman_rho(a: Sequence[float], b: Sequence[float]) -> float:
    """Корреляция Пирсона между средними рангами."""
    x = np.asarray(a, dtype=float).reshape(-1)
    y = np.asarray(b, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise InvalidArgumentError("samples differ in length", a=len(x), b=len(y))
    if len(x) < 3:
        raise InvalidArgumentError("need at least 3 pairs", n=len(x))

    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = float(np.sqrt((rx @ rx) * (ry @ ry)))
    if denom == 0.0:
        raise UndefinedMetricError("rank correlation is undefined for constant input")
    rho = float(rx @ ry) / denom
    return float(min(1.0, max(-1.0, rho)))
