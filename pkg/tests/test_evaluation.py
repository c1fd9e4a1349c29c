import logging

import numpy as np
import pytest

from app.errors import InvalidArgumentError, UndefinedMetricError
from app.evaluation import (
    hypervolume,
    hypervolume_reference,
    net_sharpe_proxy,
    portfolio_variance,
    sharpe_insample,
    sharpe_realized,
    tracking_error_sq,
    turnover_cost,
)
from app.market import ReturnPanel, compute_returns, estimate_model, synth_market
from app.mogwo import Objectives
from app.projection import Portfolio
from tests.conftest import make_model
from tests.oracles import hypervolume_inclusion_exclusion


def _obj(oriented):
    """Objectives из точки в ориентации на минимизацию."""
    v, neg_ret, neg_esg = (float(x) for x in oriented)
    return Objectives(variance=v, ret=-neg_ret, esg=-neg_esg)


def _panel(rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    dates = np.datetime64("2024-01-02") + np.arange(len(rows))
    return ReturnPanel(tuple(f"A{i}" for i in range(rows.shape[1])), dates, rows)


# ---------- Шарп ----------


def test_insample_sharpe_by_hand():
    model = make_model(np.diag([0.04, 0.09]), mu=np.array([0.10, 0.20]))
    p = Portfolio((0, 1), [0.5, 0.5])
    var = 0.25 * 0.04 + 0.25 * 0.09
    assert portfolio_variance(p, model) == pytest.approx(var)
    assert sharpe_insample(p, model, r_f=0.05) == pytest.approx((0.15 - 0.05) / np.sqrt(var))


def test_insample_sharpe_zero_variance():
    model = make_model(np.zeros((2, 2)))
    with pytest.raises(UndefinedMetricError):
        sharpe_insample(Portfolio((0, 1), [0.5, 0.5]), model, r_f=0.0)


def test_realized_sharpe_formula(rng):
    r = rng.normal(5e-4, 0.01, size=(300, 3))
    p = Portfolio((0, 2), [0.4, 0.6])
    daily = r[:, [0, 2]] @ np.array([0.4, 0.6])
    expected = (252 * daily.mean() - 0.03) / (np.sqrt(252) * daily.std(ddof=1))
    assert sharpe_realized(p, _panel(r), r_f=0.03, annualization=252) == pytest.approx(expected, rel=1e-12)


def test_realized_sharpe_degenerate_panels():
    p = Portfolio((0,), [1.0])
    with pytest.raises(UndefinedMetricError):
        sharpe_realized(p, _panel([[0.01], [0.01], [0.01]]), r_f=0.0)
    with pytest.raises(UndefinedMetricError):
        sharpe_realized(p, _panel([[0.01]]), r_f=0.0)
    empty = ReturnPanel(("A0",), np.array([], dtype="datetime64[D]"), np.zeros((0, 1)))
    with pytest.raises(InvalidArgumentError):
        sharpe_realized(p, empty, r_f=0.0)


def test_realized_matches_insample_on_training_panel():
    panel = compute_returns(synth_market(6, 2, seed=13, horizon=400))
    model = estimate_model(panel, shrinkage=0.0, annualization=252)
    for i in range(model.n):
        p = Portfolio((i,), [1.0])
        insample = sharpe_insample(p, model, r_f=0.045)
        assert sharpe_realized(p, panel, r_f=0.045, annualization=252) == pytest.approx(insample, abs=1e-9)


# ---------- трекинг-ошибка ----------


def test_tracking_error_equals_variance_of_return_difference(rng):
    panel = compute_returns(synth_market(12, 3, seed=21, horizon=500))
    omega = estimate_model(panel, shrinkage=0.0, annualization=1).omega
    for _ in range(100):
        w1 = rng.dirichlet(np.ones(12))
        w2 = rng.dirichlet(np.ones(12))
        diff = panel.returns @ (w1 - w2)
        assert tracking_error_sq(w1, w2, omega) == pytest.approx(np.var(diff, ddof=1), rel=1e-10)


def test_tracking_error_is_zero_for_identical_weights(rng):
    w = rng.dirichlet(np.ones(4))
    assert tracking_error_sq(w, w, np.eye(4)) == 0.0
    with pytest.raises(InvalidArgumentError):
        tracking_error_sq(w, w[:3], np.eye(4))


# ---------- оборот и издержки ----------


def test_turnover_over_union_of_supports():
    old = Portfolio((0, 1), [0.5, 0.5])
    new = Portfolio((1, 2), [0.5, 0.5])
    turnover, cost = turnover_cost(old, new, cost_rate_bps=10)
    assert turnover == pytest.approx(0.5)
    assert cost == pytest.approx(5.0)


def test_turnover_on_dense_vectors():
    turnover, cost = turnover_cost([0.2, 0.8, 0.0], [0.2, 0.8, 0.0], cost_rate_bps=10)
    assert (turnover, cost) == (0.0, 0.0)
    turnover, _ = turnover_cost([1.0, 0.0], [0.0, 1.0], cost_rate_bps=0)
    assert turnover == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        turnover_cost([0.5, 0.5], [1.0, 0.0, 0.0])


def test_net_sharpe_proxy():
    assert net_sharpe_proxy(1.0, 10.0, 0.2, rebalances_per_year=12) == pytest.approx(0.94)
    assert net_sharpe_proxy(0.7, 0.0, 0.2) == 0.7
    with pytest.raises(UndefinedMetricError):
        net_sharpe_proxy(1.0, 10.0, 0.0)


def test_turnover_triangle_inequality(rng):
    for _ in range(200):
        w1, w2, w3 = rng.dirichlet(np.ones(6), size=3)
        t13, _ = turnover_cost(w1, w3)
        t12, _ = turnover_cost(w1, w2)
        t23, _ = turnover_cost(w2, w3)
        assert t13 <= t12 + t23 + 1e-12


# ---------- гиперобъём ----------


def test_single_point_box():
    assert hypervolume([_obj((1, 1, 1))], _obj((2, 3, 4))) == pytest.approx(6.0)


def test_dominated_point_adds_nothing():
    ref = _obj((2, 2, 2))
    alone = hypervolume([_obj((0, 0, 0))], ref)
    assert hypervolume([_obj((0, 0, 0)), _obj((1, 1, 1))], ref) == pytest.approx(alone)


def test_points_outside_reference_are_excluded(caplog):
    ref = _obj((2, 2, 2))
    with caplog.at_level(logging.WARNING, logger="app.evaluation"):
        hv = hypervolume([_obj((1, 1, 1)), _obj((3, 0, 0)), _obj((1, 2, 1))], ref)
    assert hv == pytest.approx(1.0)
    assert "excluded" in caplog.text


def test_empty_front_has_zero_volume():
    assert hypervolume([], _obj((1, 1, 1))) == 0.0


def test_matches_inclusion_exclusion(rng):
    ref = np.array([1.0, 1.0, 1.0])
    for _ in range(200):
        pts = rng.uniform(0.0, 0.95, size=(3, 3))
        expected = hypervolume_inclusion_exclusion(pts, ref)
        got = hypervolume([_obj(p) for p in pts], _obj(ref))
        assert got == pytest.approx(expected, abs=1e-9)


def test_larger_fronts_match_inclusion_exclusion(rng):
    ref = np.array([1.0, 1.0, 1.0])
    for _ in range(20):
        pts = rng.uniform(0.0, 0.95, size=(7, 3))
        got = hypervolume([_obj(p) for p in pts], _obj(ref))
        assert got == pytest.approx(hypervolume_inclusion_exclusion(pts, ref), abs=1e-9)


def test_objectives_are_oriented_to_minimization():
    # меньше дисперсия, больше доходность и ESG
    ref = Objectives(variance=0.05, ret=0.0, esg=40.0)
    good = Objectives(variance=0.01, ret=0.10, esg=60.0)
    assert hypervolume([good], ref) == pytest.approx(0.04 * 0.10 * 20.0)


def test_reference_is_padded_nadir():
    front_a = [_obj((0.0, 0.0, 0.0)), _obj((1.0, 2.0, 0.0))]
    front_b = [_obj((0.5, 1.0, 0.0))]
    ref = hypervolume_reference([front_a, front_b])
    np.testing.assert_allclose(ref.oriented(), [1.05, 2.1, 0.05])


def test_reference_needs_points():
    with pytest.raises(InvalidArgumentError):
        hypervolume_reference([[], []])


def test_adding_a_point_never_shrinks_the_volume(rng):
    ref = _obj((1.0, 1.0, 1.0))
    for _ in range(100):
        pts = rng.uniform(0.0, 0.95, size=(int(rng.integers(1, 8)), 3))
        before = hypervolume([_obj(p) for p in pts], ref)
        extra = rng.uniform(0.0, 0.95, size=3)
        after = hypervolume([_obj(p) for p in pts] + [_obj(extra)], ref)
        assert after >= before - 1e-12
