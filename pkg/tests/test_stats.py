import numpy as np
import pytest
from scipy.stats import spearmanr

from app.errors import InsufficientDataError, InvalidArgumentError, UndefinedMetricError
from app.stats import spearman_rho, wilcoxon_signed_rank
from tests.oracles import wilcoxon_enumerated_p


# ---------- Уилкоксон ----------


def test_all_positive_six_pairs():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5, 6], [0] * 6)
    assert res.p_value == pytest.approx(0.03125, abs=1e-12)
    assert res.statistic == 21.0
    assert res.n_effective == 6
    assert res.method == "exact"


def test_swapping_samples_flips_statistic(rng):
    a, b = rng.normal(size=15), rng.normal(size=15)
    ab = wilcoxon_signed_rank(a, b)
    ba = wilcoxon_signed_rank(b, a)
    assert ab.statistic == -ba.statistic
    assert ab.p_value == pytest.approx(ba.p_value, abs=1e-15)


def test_zero_differences_are_dropped():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5, 6, 7], [1, 2, 2, 3, 4, 5, 6])
    assert res.n_effective == 5


def test_fewer_than_five_nonzero_differences():
    with pytest.raises(InsufficientDataError):
        wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 1, 1, 1, 1])


def test_argument_errors():
    with pytest.raises(InvalidArgumentError):
        wilcoxon_signed_rank([1, 2, 3], [1, 2])
    with pytest.raises(InvalidArgumentError):
        wilcoxon_signed_rank([1, 2, 3, 4, 5], [0] * 5, method="bootstrap")


def test_exact_p_matches_sign_enumeration(rng):
    for _ in range(60):
        n = int(rng.integers(5, 13))
        # округление даёт связки и нули
        d = np.round(rng.normal(size=n), 1)
        if np.count_nonzero(d) < 5:
            continue
        res = wilcoxon_signed_rank(d, np.zeros(n), method="exact")
        assert res.p_value == pytest.approx(wilcoxon_enumerated_p(d), abs=1e-12)


def test_normal_approximation_is_close_at_twenty(rng):
    for _ in range(20):
        d = rng.normal(0.2, 1.0, size=20)
        exact = wilcoxon_signed_rank(d, np.zeros(20), method="exact")
        approx = wilcoxon_signed_rank(d, np.zeros(20), method="approx")
        assert approx.method == "approx"
        assert abs(exact.p_value - approx.p_value) < 0.02


def test_auto_switches_above_twenty_five(rng):
    assert wilcoxon_signed_rank(rng.normal(size=25), np.zeros(25)).method == "exact"
    assert wilcoxon_signed_rank(rng.normal(size=26), np.zeros(26)).method == "approx"


def test_clear_shift_is_significant(rng):
    a = rng.normal(1.0, 0.1, size=200)
    res = wilcoxon_signed_rank(a, np.zeros(200))
    assert res.p_value < 1e-10
    assert res.statistic == pytest.approx(200 * 201 / 2)


# ---------- Спирмен ----------


def test_four_point_example():
    assert spearman_rho([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_monotone_transform_gives_one():
    x = np.linspace(0.1, 3.0, 30)
    assert spearman_rho(x, np.exp(x)) == pytest.approx(1.0)
    assert spearman_rho(x, -x**3) == pytest.approx(-1.0)


def test_ties_agree_with_scipy(rng):
    for _ in range(30):
        a = rng.integers(0, 5, size=12)
        b = rng.integers(0, 5, size=12)
        if len(set(a)) == 1 or len(set(b)) == 1:
            continue
        assert spearman_rho(a, b) == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)


def test_spearman_errors():
    with pytest.raises(UndefinedMetricError):
        spearman_rho([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidArgumentError):
        spearman_rho([1, 2], [1, 2])
    with pytest.raises(InvalidArgumentError):
        spearman_rho([1, 2, 3], [1, 2])
