import numpy as np
import pytest
from hypothesis import given, strategies as st

from qfit import linalg, problem as pb, stateprep as sp
from qfit.errors import ZeroRow


def test_discretize_single_entry():
    p = pb.normalize_problem([[0.0, -2.0, 0.0], [1.0, 1.0, 1.0], [1.0, 0.0, 2.0]], [1.0, 0.0, 0.0])
    row = sp.discretize_row(p, 0, 0.3)
    np.testing.assert_array_equal(row.phi, [0.0, -1.0, 0.0])


def test_discretize_equal_entries_hand_value():
    # d / gamma**2 = 8 buckets
    p = pb.normalize_problem([[1.0, 1.0], [1.0, -1.0]], [1.0, 0.0])
    row = sp.discretize_row(p, 0, 0.5)
    assert row.M == 8
    np.testing.assert_array_equal(row.bucket_sizes, [4, 4])
    np.testing.assert_allclose(row.phi, [1 / np.sqrt(2)] * 2, atol=1e-15)


def test_discretize_zero_row():
    p = pb.normalize_problem([[1.0], [0.0], [2.0]], [1.0, 0.0, 1.0])
    with pytest.raises(ZeroRow):
        sp.discretize_row(p, 1, 0.1)


@given(st.integers(1, 6), st.sampled_from([0.1, 0.05, 0.025]), st.integers(0, 2**32 - 1))
def test_discretize_invariants(d, gamma, seed):
    r = np.random.default_rng(seed)
    p = pb.normalize_problem(r.normal(size=(d + 2, d)) + 2 * np.eye(d + 2, d), r.normal(size=d + 2))
    row = sp.discretize_row(p, 0, gamma)
    assert row.M == int(np.ceil(d / gamma**2 - 1e-9))
    assert row.bucket_bounds[0] == 0 and row.bucket_bounds[-1] == row.M
    assert np.all(np.diff(row.bucket_bounds) >= 0)
    assert row.bucket_sizes.sum() == row.M
    assert np.linalg.norm(row.phi) == pytest.approx(1.0, abs=1e-12)
    exact = p.F[0] / np.linalg.norm(p.F[0])
    assert np.linalg.norm(row.phi - exact) <= 2 * gamma


def test_discretization_error_shrinks(rng):
    p = pb.normalize_problem(rng.normal(size=(30, 4)), rng.normal(size=30))
    errs = []
    for gamma in (0.1, 0.05, 0.025):
        exact = sp.normalized_rows(p)
        errs.append(np.max(np.linalg.norm(sp.normalized_rows(p, gamma) - exact, axis=1)))
    assert errs[0] > errs[1] > errs[2]


def test_F_state_equal_rows():
    p = pb.normalize_problem([[1.0], [1.0]], [1.0, 0.0])
    prep = sp.prepare_F_state(p, 0.1)
    assert prep.success_probability == pytest.approx(1.0)
    np.testing.assert_allclose(prep.state, [1 / np.sqrt(2)] * 2)


def test_F_state_success_formula(rng):
    p = pb.normalize_problem(rng.normal(size=(6, 2)), rng.normal(size=6))
    prep = sp.prepare_F_state(p, 0.01)
    rows = np.linalg.norm(p.F, axis=1)
    assert prep.success_probability == pytest.approx(np.sum(rows**2) / (p.n * p.beta**2))
    assert prep.success_probability >= prep.cost_model["success_lower_bound"] - 1e-12
    np.testing.assert_allclose(prep.state, p.F.ravel(), atol=1e-12)


def test_discretized_F_state_close(rng):
    p = pb.normalize_problem(rng.normal(size=(4, 2)), rng.normal(size=4))
    gamma = 0.05
    prep = sp.prepare_F_state(p, 1e-3, gamma=gamma)
    red = sp.reduced_rows(prep.state, 4, 2)
    assert linalg.trace_distance(red, p.F @ p.F.T) <= 1e-3 + 2 * (2 * gamma)
    assert prep.accuracy <= 2 * gamma


def test_sigma_matches_reduced_state(rng):
    p = pb.normalize_problem(rng.normal(size=(5, 3)), rng.normal(size=5))
    sigma = sp.prepare_sigma(p, 0.1).state
    red = sp.reduced_rows(sp.prepare_F_state(p, 0.1).state, 5, 3)
    np.testing.assert_allclose(sigma, red, atol=1e-10)
    w = np.linalg.eigvalsh(sigma)[-3:]
    np.testing.assert_allclose(w, p.spectral.singular_values**2, atol=1e-9)
    U = p.spectral.left_vectors
    np.testing.assert_allclose(sp.column_projector(sigma), U @ U.T, atol=1e-9)


def test_sigma_symmetric_cases():
    p = pb.normalize_problem(np.eye(4)[:, :2], [1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(np.linalg.eigvalsh(sp.prepare_sigma(p, 0.1).state)[-2:], [0.5, 0.5])
    q = pb.normalize_problem([[1.0], [2.0]], [1.0, 0.0])
    s = sp.prepare_sigma(q, 0.1).state
    assert np.trace(s @ s) == pytest.approx(1.0)


def test_y_state():
    p = pb.normalize_problem([[1.0], [1.0]], [1.0, 0.0])
    prep = sp.prepare_y_state(p, 0.1)
    assert prep.success_probability == pytest.approx(0.5)
    np.testing.assert_allclose(prep.state, [1.0, 0.0])
    q = pb.normalize_problem([[1.0], [2.0]], [1.0, -1.0])
    assert sp.prepare_y_state(q, 0.1).success_probability == pytest.approx(1.0)


def test_y_state_random(rng):
    p = pb.normalize_problem(rng.normal(size=(7, 2)), rng.normal(size=7))
    prep = sp.prepare_y_state(p, 0.1)
    np.testing.assert_allclose(prep.state, p.y, atol=1e-12)
    assert prep.success_probability == pytest.approx(1 / (p.n * p.zeta**2))


def test_tau_single_column():
    p = pb.normalize_problem([[1.0], [1.0]], [1.0, 0.0])
    tp = sp.prepare_tau(p, 1, 0.1).state
    w = np.array([1.0, 0.0, 1 / np.sqrt(2), 1 / np.sqrt(2)]) / np.sqrt(2)
    np.testing.assert_allclose(tp, np.outer(w, w), atol=1e-12)


def test_tau_spectrum(rng):
    p = pb.normalize_problem(rng.normal(size=(5, 3)), rng.normal(size=5))
    tp, tm = sp.tau_states(p)
    tau = sp.tau_operator(p)
    assert np.trace(tp) == pytest.approx(1.0) and np.trace(tm) == pytest.approx(1.0)
    assert np.trace(tau) == pytest.approx(0.0, abs=1e-10)
    s2 = p.spectral.singular_values**2
    expected = np.sort(np.concatenate([s2, -s2, np.zeros(2 * 5 - 6)]))
    np.testing.assert_allclose(np.linalg.eigvalsh(tau), expected, atol=1e-9)
    vals, W = sp.tau_eigensystem(p)
    np.testing.assert_allclose(tau @ W, W * vals, atol=1e-12)
    with pytest.raises(ValueError):
        sp.prepare_tau(p, 0, 0.1)
