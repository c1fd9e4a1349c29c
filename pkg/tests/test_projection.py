import numpy as np
import pytest

from app.errors import InfeasibleConstraintsError, InvalidArgumentError
from app.projection import Portfolio, is_feasible, project_omega, project_simplex_box
from app.schemas import ConstraintSet
from tests.conftest import random_spd
from tests.oracles import grid_cell_tolerance, grid_minimum, qp_objective


# ---------- евклидова проекция ----------


def test_feasible_point_is_unchanged():
    w = project_simplex_box([0.5, 0.5], 0.0, 1.0)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)


def test_large_entry_clips_to_vertex():
    w = project_simplex_box([10.0, 0.0], 0.0, 1.0)
    np.testing.assert_allclose(w, [1.0, 0.0], atol=1e-12)


def test_three_asset_example_matches_grid():
    z = np.array([0.8, 0.6, 0.2])
    w = project_simplex_box(z, 0.0, 1.0)
    eye = np.eye(3)
    best = grid_minimum(z, eye, 0.0, 1.0)
    assert qp_objective(w, z, eye) <= best + 1e-12
    np.testing.assert_allclose(w, [0.6, 0.4, 0.0], atol=1e-9)


def test_empty_box_simplex_is_rejected():
    with pytest.raises(InfeasibleConstraintsError):
        project_simplex_box([0.2, 0.3], 0.6, 0.9)
    with pytest.raises(InfeasibleConstraintsError):
        project_simplex_box([0.2, 0.3, 0.1], 0.0, 0.3)


def test_nonpositive_tolerance_is_an_argument_error():
    with pytest.raises(InvalidArgumentError):
        project_simplex_box([0.2, 0.3], 0.0, 1.0, tol=0.0)


def test_translation_invariance(rng):
    for _ in range(50):
        z = rng.normal(size=5)
        a = rng.normal() * 10
        np.testing.assert_allclose(
            project_simplex_box(z + a, 0.05, 0.5),
            project_simplex_box(z, 0.05, 0.5),
            atol=1e-9,
        )


def test_idempotence(rng):
    for _ in range(50):
        z = rng.normal(size=6) * 3
        once = project_simplex_box(z, 0.02, 0.4)
        np.testing.assert_allclose(project_simplex_box(once, 0.02, 0.4), once, atol=2e-10)


def test_extreme_inputs_stay_feasible(rng):
    c = ConstraintSet(k=5, lower=0.05, upper=0.5)
    for scale in (1e-6, 1.0, 1e3, 1e6):
        z = rng.normal(size=5) * scale
        w = project_simplex_box(z, c.lower, c.upper)
        assert is_feasible(Portfolio(tuple(range(5)), w), c, 5)


# ---------- проекция в метрике Ω ----------


def test_identity_metric_reduces_to_euclidean(rng):
    for _ in range(50):
        z = rng.normal(size=4)
        w_omega, _ = project_omega(z, np.eye(4), 0.05, 0.6)
        np.testing.assert_allclose(w_omega, project_simplex_box(z, 0.05, 0.6), atol=1e-6)


def test_feasible_candidate_is_a_fixed_point():
    omega = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.02], [0.0, 0.02, 0.05]])
    z = np.array([0.2, 0.3, 0.5])
    w, report = project_omega(z, omega, 0.05, 0.6)
    np.testing.assert_allclose(w, z, atol=1e-10)
    assert report.objective_value == pytest.approx(0.0, abs=1e-15)
    assert report.kkt_residual >= 0.0


def test_two_asset_line_scan():
    omega = np.array([[0.04, 0.03], [0.03, 0.09]])
    z = np.array([0.9, 0.4])
    w, _ = project_omega(z, omega, 0.0, 1.0)
    t = np.linspace(0.0, 1.0, 1_000_001)
    ws = np.column_stack([t, 1.0 - t])
    d = ws - z
    vals = 0.5 * np.einsum("ij,jk,ik->i", d, omega, d)
    assert qp_objective(w, z, omega) <= vals.min() + 1e-12
    assert w[0] == pytest.approx(t[vals.argmin()], abs=2e-6)


def test_omega_never_loses_to_euclidean_in_its_metric(rng):
    for _ in range(100):
        k = int(rng.integers(2, 7))
        omega = random_spd(rng, k)
        z = rng.normal(size=k)
        w_omega, _ = project_omega(z, omega, 0.0, 0.8)
        w_euc = project_simplex_box(z, 0.0, 0.8)
        assert qp_objective(w_omega, z, omega) <= qp_objective(w_euc, z, omega) + 1e-12


def _ill_conditioned(rng, k):
    q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    return q @ np.diag(np.logspace(-4, 0, k)) @ q.T


def test_omega_projection_is_idempotent(rng):
    for i in range(300):
        k = int(rng.integers(2, 9))
        omega = random_spd(rng, k) if i % 2 else _ill_conditioned(rng, k)
        z = rng.normal(size=k) * 2
        once, _ = project_omega(z, omega, 0.02, 0.7)
        twice, report = project_omega(once, omega, 0.02, 0.7)
        np.testing.assert_allclose(twice, once, atol=1e-9)
        assert report.objective_value == pytest.approx(0.0, abs=1e-15)


def test_near_singular_matrix_is_regularized():
    v = np.array([1.0, 1.0, 1.0])
    omega = np.outer(v, v) * 0.04  # ранг 1
    w, report = project_omega([0.5, 0.3, 0.1], omega, 0.0, 1.0)
    assert report.regularized
    assert abs(w.sum() - 1.0) <= 1e-8


def test_asymmetric_input_is_symmetrized():
    omega = np.array([[0.04, 0.02], [0.0, 0.09]])
    sym = 0.5 * (omega + omega.T)
    w_a, _ = project_omega([0.9, 0.4], omega, 0.0, 1.0)
    w_s, _ = project_omega([0.9, 0.4], sym, 0.0, 1.0)
    np.testing.assert_allclose(w_a, w_s, atol=1e-12)


def test_linear_term_tilts_towards_rewarded_asset():
    omega = np.eye(2) * 0.04
    w0, _ = project_omega([0.5, 0.5], omega, 0.0, 1.0)
    w1, _ = project_omega([0.5, 0.5], omega, 0.0, 1.0, linear=[0.01, 0.0])
    assert w1[0] > w0[0]


def test_shape_mismatch_is_an_argument_error():
    with pytest.raises(InvalidArgumentError):
        project_omega([0.5, 0.5], np.eye(3), 0.0, 1.0)


# ---------- сверка с перебором по сетке ----------


def _random_bounds(rng, k):
    lower = float(rng.uniform(0.0, 0.9 / k))
    upper = float(rng.uniform(1.1 / k, 1.0))
    return round(lower, 4), round(upper, 4)


def test_projections_match_grid_oracle(rng):
    for trial in range(1000):
        k = 2 if trial % 2 == 0 else 3
        lower, upper = _random_bounds(rng, k)
        z = rng.normal(0.3, 0.6, size=k)
        omega = random_spd(rng, k)

        w_euc = project_simplex_box(z, lower, upper)
        eye = np.eye(k)
        best = grid_minimum(z, eye, lower, upper)
        got = qp_objective(w_euc, z, eye)
        assert got <= best + 1e-12
        assert best - got <= grid_cell_tolerance(w_euc, z, eye)

        w_om, _ = project_omega(z, omega, lower, upper)
        best = grid_minimum(z, omega, lower, upper)
        got = qp_objective(w_om, z, omega)
        assert got <= best + 1e-12
        assert best - got <= grid_cell_tolerance(w_om, z, omega)


# ---------- допустимость ----------


def test_equal_weight_pair_is_feasible():
    c = ConstraintSet(k=2, lower=0.02, upper=0.8)
    assert is_feasible(Portfolio((0, 1), [0.5, 0.5]), c, 2)


def test_budget_violation_is_named():
    c = ConstraintSet(k=2, lower=0.02, upper=0.8)
    res = is_feasible(Portfolio((0, 1), [0.5, 0.49]), c, 2)
    assert not res
    assert any(v.startswith("budget") for v in res.violations)


def test_cardinality_violation_is_named():
    c = ConstraintSet(k=2, lower=0.02, upper=0.8)
    res = is_feasible(Portfolio((0, 1, 2), [0.4, 0.3, 0.3]), c, 3)
    assert not res.ok
    assert any(v.startswith("cardinality") for v in res.violations)


def test_box_and_index_violations():
    c = ConstraintSet(k=3, lower=0.1, upper=0.5)
    res = is_feasible(Portfolio((2, 0, 9), [0.6, 0.35, 0.05]), c, 5)
    kinds = {v.split(":")[0] for v in res.violations}
    assert {"box", "index"} <= kinds
