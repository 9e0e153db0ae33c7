import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from skewfree.errors import DimensionMismatch
from skewfree.moments import SymTensor3, projected_norm_sq, rotate_tensor
from skewfree.rotation import (DescentConfig, DescentStatus, block_generator, block_rotation,
                               compute_phi, flow_derivative, gradient_flow_check,
                               minimize_projected_norm, orthogonality_error,
                               saddle_diagnostic, second_order_change, second_order_form)

from conftest import random_orthogonal, random_tensor


def grid_minimum(tensor, resolution=1e-4):
    """Brute-force min of the projected norm over 2x2 rotation angles (N=M=1)."""
    theta = np.arange(0.0, 2 * np.pi, resolution)
    c, s = np.cos(theta), np.sin(theta)
    q = tensor.dense
    # first row of [[c, -s], [s, c]]
    p = (c**3 * q[0, 0, 0] - 3 * c**2 * s * q[0, 0, 1] + 3 * c * s**2 * q[0, 1, 1]
         - s**3 * q[1, 1, 1])
    return float(np.min(p * p))


def fd_directional(tensor, n, direction, eps):
    def f(e):
        return projected_norm_sq(rotate_tensor(tensor, block_rotation(direction, e)), n)
    return (f(eps) - f(-eps)) / (2 * eps)


def stationary_instance(rng):
    """N=2, M=3 tensor with Phi = 0 exactly but a nonzero H-block."""
    n, m = 2, 3
    q = random_tensor(rng, n + m).dense.copy()
    a, b, c, d = rng.normal(size=4)
    hhh = np.array([[[a, b], [b, c]], [[b, c], [c, d]]])
    # symmetric 2x2 matrix orthogonal to both H slices
    slices = np.array([[a, b, c], [b, c, d]]) * [1, 2, 1]
    comp = np.linalg.svd(slices)[2][-1]
    cmat = np.array([[comp[0], comp[1]], [comp[1], comp[2]]])
    q[:n, :n, :n] = hhh
    for xi, w in enumerate(rng.normal(size=m)):
        block = w * cmat
        q[n + xi, :n, :n] = block
        q[:n, n + xi, :n] = block
        q[:n, :n, n + xi] = block
    return SymTensor3.from_dense(q)


def test_phi_of_zero_tensor():
    np.testing.assert_array_equal(compute_phi(SymTensor3.zeros(5), 2), np.zeros((2, 3)))


def test_phi_hand_contraction():
    t = SymTensor3.from_entries(2, {(0, 0, 0): 1.5, (1, 0, 0): -0.7})
    np.testing.assert_allclose(compute_phi(t, 1), [[1.5 * -0.7]])


def test_phi_requires_proper_split():
    with pytest.raises(DimensionMismatch):
        compute_phi(SymTensor3.zeros(3), 3)


def test_phi_matches_finite_difference_gradient(rng):
    t = random_tensor(rng, 5)
    phi = compute_phi(t, 2)
    direction = rng.normal(size=(2, 3))
    expected = -6 * np.sum(direction * phi)
    assert fd_directional(t, 2, direction, 1e-5) == pytest.approx(expected, rel=1e-5)


def test_block_rotation_of_zero_is_identity():
    np.testing.assert_array_equal(block_rotation(np.zeros((2, 3)), 0.4), np.eye(5))


def test_block_rotation_2x2_closed_form():
    theta = 0.83
    c, s = np.cos(theta), np.sin(theta)
    np.testing.assert_allclose(block_rotation([[theta]]), [[c, -s], [s, c]], atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_block_rotation_matches_expm(rng, n):
    m = n * (n + 1) // 2
    phi = rng.normal(size=(n, m))
    for omega in (1e-3, 0.3, 2.0):
        got = block_rotation(phi, omega)
        np.testing.assert_allclose(got, expm(block_generator(phi, omega)), rtol=0, atol=1e-12)
        assert orthogonality_error(got) <= 1e-12
        assert np.linalg.det(got) == pytest.approx(1.0, abs=1e-10)


def test_zero_h_block_needs_no_iterations(rng):
    q = random_tensor(rng, 5).dense.copy()
    q[:2, :2, :2] = 0.0
    state, outcome = minimize_projected_norm(SymTensor3.from_dense(q), 2)
    assert outcome.status is DescentStatus.CONVERGED
    assert outcome.iters == 0
    np.testing.assert_array_equal(state.A_total, np.eye(5))


@pytest.mark.parametrize("seed", range(8))
def test_one_dimensional_descent_matches_angle_grid(seed):
    t = random_tensor(np.random.default_rng(seed), 2)
    state, _ = minimize_projected_norm(t, 1)
    assert state.norm_sq == pytest.approx(grid_minimum(t), abs=1e-6)


def test_descent_is_monotone_orthogonal_and_norm_preserving(rng):
    t = random_tensor(rng, 9)
    state, outcome = minimize_projected_norm(t, 3)
    hist = np.array(outcome.history)
    assert np.all(np.diff(hist) <= 0)
    assert orthogonality_error(state.A_total) <= 1e-10
    assert state.Q_current.frobenius_norm() == pytest.approx(t.frobenius_norm(), rel=1e-8)
    np.testing.assert_allclose(rotate_tensor(t, state.A_total).packed, state.Q_current.packed,
                               atol=1e-10 * t.frobenius_norm())
    assert state.norm_sq == pytest.approx(projected_norm_sq(state.Q_current, 3), rel=1e-10)
    if outcome.status is DescentStatus.CONVERGED:
        assert outcome.final_rel_norm <= 1e-6


def test_max_iters_status(rng):
    t = random_tensor(rng, 5)
    _, outcome = minimize_projected_norm(t, 2, DescentConfig(max_iters=2))
    assert outcome.status is DescentStatus.MAX_ITERS
    assert outcome.iters == 2


def test_local_minimum_without_restarts_is_reported():
    # p(theta) = first-row cubic form; theta = 0 is a nonzero local minimum of p^2
    t = SymTensor3.from_entries(2, {(0, 0, 0): 1.0, (0, 1, 1): 1.0, (1, 1, 1): 0.3})
    _, stuck = minimize_projected_norm(t, 1, DescentConfig(restarts=0))
    assert stuck.status is DescentStatus.GRADIENT_VANISHED_NONZERO_NORM
    assert stuck.final_rel_norm == pytest.approx(1.0)
    state, freed = minimize_projected_norm(t, 1)
    assert freed.status is DescentStatus.CONVERGED
    assert state.norm_sq == pytest.approx(grid_minimum(t), abs=1e-6)


def test_progress_callback_every_hundred_iterations(rng):
    calls = []
    t = random_tensor(rng, 5)
    minimize_projected_norm(t, 2, DescentConfig(max_iters=250, tol_rel_norm=1e-300,
                                                restarts=0),
                            progress=lambda i, v: calls.append(i))
    assert all(i % 100 == 0 for i in calls)


def test_descent_is_reproducible(rng):
    t = random_tensor(rng, 5)
    a, _ = minimize_projected_norm(t, 2)
    b, _ = minimize_projected_norm(t, 2)
    np.testing.assert_array_equal(a.A_total, b.A_total)


@pytest.mark.parametrize("kwargs", [dict(shrink=1.0), dict(grow=0.9), dict(tol_grad=0.0),
                                    dict(step0=-1.0), dict(max_iters=-1)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DescentConfig(**kwargs)


def test_h_only_and_z_only_rotations_keep_objective(rng):
    t = random_tensor(rng, 5)
    before = projected_norm_sq(t, 2)
    h_only = np.eye(5)
    h_only[:2, :2] = random_orthogonal(rng, 2)
    z_only = np.eye(5)
    z_only[2:, 2:] = random_orthogonal(rng, 3)
    for a in (h_only, z_only):
        assert projected_norm_sq(rotate_tensor(t, a), 2) == pytest.approx(before, rel=1e-10)


def test_nondegenerate_stationary_point_has_zero_h_block(rng):
    weights = None
    for _ in range(5):
        t = random_tensor(rng, 5)
        state, outcome = minimize_projected_norm(t, 2, DescentConfig(tol_rel_norm=1e-12))
        q = state.Q_current.dense
        rows, cols = np.triu_indices(2)
        weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
        operator = q[2:, rows, cols] * weights
        if np.linalg.svd(operator, compute_uv=False)[-1] > 1e-3:
            assert np.abs(q[:2, :2, :2]).max() <= 1e-8
    assert weights is not None


def test_flow_check_is_zero_at_stationary_tensor(rng):
    q = random_tensor(rng, 5).dense.copy()
    q[:2, :2, :2] = 0.0
    assert gradient_flow_check(SymTensor3.from_dense(q), 2, 1e-3, 10) == 0.0


def test_flow_check_error_is_second_order(rng):
    t = random_tensor(rng, 5, scale=0.5)
    coarse = gradient_flow_check(t, 2, 1e-4, 100)
    fine = gradient_flow_check(t, 2, 5e-5, 100)
    assert coarse <= 1e-5
    assert 3.5 <= coarse / fine <= 4.5


def test_flow_derivative_matches_generator_action(rng):
    # dQ/dt = G.Q in every mode, with G the block generator of Phi
    t = random_tensor(rng, 6)
    g = block_generator(compute_phi(t, 3))
    q = t.dense
    expected = (np.einsum("ma,abc->mbc", g, q) + np.einsum("nb,abc->anc", g, q)
                + np.einsum("lc,abc->abl", g, q))
    np.testing.assert_allclose(flow_derivative(t, 3), expected, atol=1e-12)


def test_h_only_tensor_has_static_lifted_block(rng):
    q = np.zeros((5, 5, 5))
    q[:2, :2, :2] = random_tensor(rng, 2).dense
    deriv = flow_derivative(q, 2)
    np.testing.assert_array_equal(deriv[2:, 2:, 2:], 0.0)


def test_saddle_diagnostic_on_zero_tensor():
    report = saddle_diagnostic(SymTensor3.zeros(5), 2, trials=16, seed=0)
    assert not report.is_escapable


def test_zero_h_block_form_is_nonnegative(rng):
    q = random_tensor(rng, 5).dense.copy()
    q[:2, :2, :2] = 0.0
    q[2:, 2:, :2] = q[2:, :2, 2:] = q[:2, 2:, 2:] = 0.0
    t = SymTensor3.from_dense(q)
    form = second_order_form(t, 2).reshape(6, 6)
    assert np.linalg.eigvalsh(form).min() >= -1e-12
    assert not saddle_diagnostic(t, 2, trials=64, seed=1).is_escapable


def test_stationary_instance_is_stationary(rng):
    t = stationary_instance(rng)
    assert np.abs(compute_phi(t, 2)).max() <= 1e-12
    assert projected_norm_sq(t, 2) > 0.1


@pytest.mark.parametrize("seed", range(5))
def test_second_order_form_matches_second_difference(seed):
    rng = np.random.default_rng(seed)
    t = stationary_instance(rng)
    direction = rng.normal(size=(2, 3))
    eps = 1e-3

    def f(e):
        return projected_norm_sq(rotate_tensor(t, block_rotation(direction, e)), 2)

    second_diff = (f(eps) + f(-eps) - 2 * f(0.0)) / eps**2
    assert second_diff == pytest.approx(2 * second_order_change(t, 2, direction), rel=1e-4)


def test_saddle_diagnostic_picks_most_negative_direction(rng):
    t = stationary_instance(rng)
    report = saddle_diagnostic(t, 2, trials=32, seed=3)
    form = second_order_form(t, 2).reshape(6, 6)
    lowest = np.linalg.eigvalsh(form)[0]
    assert report.best_value == pytest.approx(lowest, rel=1e-10, abs=1e-14)
    assert report.is_escapable == (lowest < -1e-12 * t.frobenius_norm() ** 2)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3))
def test_first_order_change_with_richardson(seed, n):
    rng = np.random.default_rng(seed)
    m = n * (n + 1) // 2
    t = random_tensor(rng, n + m)
    direction = rng.normal(size=(n, m))
    expected = -6 * np.sum(direction * compute_phi(t, n))
    coarse = fd_directional(t, n, direction, 1e-4)
    fine = fd_directional(t, n, direction, 1e-5)
    scale = max(abs(expected), 1e-3 * t.frobenius_norm() ** 2)
    assert abs(fine - expected) <= 1e-5 * scale
    richardson = fine + (fine - coarse) / 99.0
    assert abs(richardson - expected) <= abs(fine - expected) + 1e-9 * scale
