import numpy as np
import pytest
from hypothesis import given, strategies as st

from qfit import hamsim as hs, linalg, primitives as pr
from qfit.errors import BudgetTooLarge, HypothesisViolated


def test_swap_exponential():
    np.testing.assert_allclose(hs.swap_exponential(3, 0.0), np.eye(9))
    np.testing.assert_allclose(hs.swap_exponential(2, np.pi / 2), 1j * hs.swap_operator(2), atol=1e-15)
    x = 0.37
    np.testing.assert_allclose(hs.swap_exponential(3, x), linalg.herm_exp(hs.swap_operator(3), x), atol=1e-10)
    U = hs.swap_exponential(3, x)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(9), atol=1e-10)


def test_dme_step_closed_form(rng):
    rho, sig = linalg.random_density(3, rng), linalg.random_density(3, rng)
    x = 0.4
    c, s = np.cos(x), np.sin(x)
    expected = c * c * sig + s * s * rho + 1j * c * s * (rho @ sig - sig @ rho)
    np.testing.assert_allclose(hs.dme_step(rho, x).apply(sig), expected, atol=1e-12)


def test_dme_step_examples(rng):
    sig = linalg.projector(linalg.basis(2, 0))
    x = 0.3
    out = hs.dme_step(linalg.maximally_mixed(2), x).apply(sig)
    assert linalg.trace_distance(out, sig) == pytest.approx(np.sin(x) ** 2 / 2)
    rho = linalg.random_density(2, rng)
    np.testing.assert_allclose(hs.dme_step(rho, 0.0).apply(sig), sig)
    np.testing.assert_allclose(hs.dme_step(rho, 0.5).apply(rho), rho, atol=1e-12)
    with pytest.raises(ValueError):
        hs.dme_step(rho, 1.5)


def test_dme_channel_is_valid(rng):
    hs.check_channel(hs.dme_step(linalg.random_density(3, rng), 0.2))
    hs.check_channel(hs.dme_simulate(linalg.random_density(2, rng), 1.3, 0.05))


def test_left_multiplier(rng):
    rho = linalg.random_density(3, rng)
    x = 0.2
    L = hs.dme_left_multiplier(rho, x)
    np.testing.assert_allclose(L, np.cos(x) * np.eye(3) + 1j * np.sin(x) * rho, atol=1e-12)


def test_dme_simulate_qubit_example():
    rho = linalg.projector(linalg.basis(2, 0))
    plus = linalg.projector(linalg.ket([1, 1]))
    ch = hs.dme_simulate(rho, 1.0, 0.01)
    U = linalg.herm_exp(rho, 1.0)
    assert linalg.trace_distance(ch.apply(plus), U @ plus @ U.conj().T) <= 0.01
    assert ch.copies_consumed == 400


def test_dme_simulate_zero_time_and_cap(rng):
    rho = linalg.random_density(2, rng)
    ch = hs.dme_simulate(rho, 0.0, 0.1)
    assert ch.copies_consumed == 0
    np.testing.assert_allclose(ch.superop, np.eye(4))
    with pytest.raises(BudgetTooLarge):
        hs.dme_simulate(rho, 100.0, 0.01)


def test_dme_simulate_error_and_subadditivity(rng):
    rho = linalg.random_density(2, rng)
    exact = hs.unitary_superop(linalg.herm_exp(rho, 1.0))
    errors = []
    for eps in (0.04, 0.02, 0.01):
        ch = hs.dme_simulate(rho, 1.0, eps)
        err = hs.channel_distance(ch.superop, exact, 2)
        assert err <= eps
        m = ch.copies_consumed
        step = hs.dme_step(rho, 1.0 / m).superop
        one = hs.unitary_superop(linalg.herm_exp(rho, 1.0 / m))
        assert err <= m * hs.channel_distance(step, one, 2) + 1e-12
        errors.append(err)
    assert errors[0] > errors[1] > errors[2]


def test_dme_robust(rng):
    rho = linalg.random_density(2, rng)
    t, eps = 1.0, 0.02
    delta = linalg.random_hermitian(2, rng)
    delta -= np.trace(delta) / 2 * np.eye(2)
    delta *= eps / (2 * t) / linalg.operator_norm(delta)
    approx = rho + delta
    if np.linalg.eigvalsh(approx).min() < 0:
        approx = rho - delta
    ch = hs.dme_simulate_robust(approx, rho, t, eps)
    exact = hs.unitary_superop(linalg.herm_exp(rho, t))
    assert hs.channel_distance(ch.superop, exact, 2) <= 2 * eps
    with pytest.raises(HypothesisViolated):
        hs.dme_simulate_robust(linalg.maximally_mixed(2), linalg.projector(linalg.basis(2, 0)), t, eps)
    same = hs.dme_simulate_robust(rho, rho, t, eps)
    np.testing.assert_allclose(same.superop, hs.dme_simulate(rho, t, eps).superop)


def test_step_error_quadratic(rng):
    from qfit.sweeps import dme_scaling
    out = dme_scaling(seed=3, pairs=5)
    assert abs(out["fit"]["slope"] - 2.0) <= 0.2


def test_suzuki_p_value():
    assert hs.suzuki_p(2) == pytest.approx(1 / (4 - 4 ** (1 / 3)))
    assert hs.suzuki_p(2) == pytest.approx(0.4145, abs=1e-4)


def test_suzuki_factors_sum():
    for k in (1, 2, 3):
        fac = hs.suzuki_factors(k, 0.7)
        assert sum(t for lab, t in fac if lab == "A") == pytest.approx(0.7)
        assert sum(t for lab, t in fac if lab == "B") == pytest.approx(0.7)
        assert all(a[0] != b[0] for a, b in zip(fac, fac[1:]))


def test_suzuki_commuting_exact():
    A = np.diag([0.3, -0.1, 0.5])
    B = np.diag([0.2, 0.4, -0.6])
    np.testing.assert_allclose(hs.suzuki_product(A, B, 1.3), linalg.herm_exp(A + B, 1.3), atol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_suzuki_order(k, rng):
    A, B = linalg.random_hermitian(3, rng), linalg.random_hermitian(3, rng)
    xs = [0.4, 0.2, 0.1] if k == 1 else [0.8, 0.4, 0.2]
    errs = [linalg.operator_norm(linalg.herm_exp(A + B, x) - hs.suzuki_product(A, B, x, k)) for x in xs]
    slope = np.polyfit(np.log(xs), np.log(errs), 1)[0]
    assert abs(slope - (2 * k + 1)) <= 0.4


def test_suzuki_compose_tau(rng):
    from qfit import problem as pb, stateprep as sp
    p = pb.normalize_problem(rng.normal(size=(3, 2)), rng.normal(size=3))
    tp, tm = sp.tau_states(p)
    exact = hs.unitary_superop(linalg.herm_exp(tp - tm, 1.0))
    ch = hs.suzuki_compose(tp, tm, 1.0, 1, 0.1)
    assert hs.channel_distance(ch.superop, exact, 6) <= 0.1
    assert ch.copies_consumed > 0
    with pytest.raises(BudgetTooLarge):
        hs.suzuki_compose(tp, tm, 1.0, 1, 0.1, cap=10)


def test_suzuki_compose_single_column():
    from qfit import problem as pb, stateprep as sp
    p = pb.normalize_problem([[1.0], [1.0]], [1.0, 0.0])
    tp, tm = sp.tau_states(p)
    assert np.abs(tp @ tm).max() < 1e-12
    ch = hs.suzuki_compose(tp, tm, 2.0, 1, 0.05)
    exact = hs.unitary_superop(linalg.herm_exp(tp - tm, 2.0))
    assert hs.channel_distance(ch.superop, exact, 4) <= 0.05


def test_battery_and_choi():
    states = hs.test_battery(3)
    assert len(states) == 3 + 2 * 3 + 1
    J = hs.choi_state(np.eye(9), 3)
    assert np.trace(J @ J).real == pytest.approx(1.0)


def test_ladder_matches_exact_phase_estimation(rng):
    rho = linalg.random_density(2, rng)
    w, V = np.linalg.eigh(rho)
    psi = 0.6 * V[:, 0] + 0.8 * V[:, 1]
    P = hs.ladder_pe_distribution(rho, np.outer(psi, psi.conj()), 16, 20000)
    exact = 0.36 * pr.pe_distribution(w[0], 16) + 0.64 * pr.pe_distribution(w[1], 16)
    np.testing.assert_allclose(P, exact, atol=5e-4)


@given(st.floats(-1, 1), st.integers(0, 2**32 - 1))
def test_dme_step_trace_preserving(x, seed):
    r = np.random.default_rng(seed)
    rho, sig = linalg.random_density(2, r), linalg.random_density(2, r)
    out = hs.dme_step(rho, x).apply(sig)
    assert abs(np.trace(out) - 1) <= 1e-9
    assert np.linalg.eigvalsh(out).min() >= -1e-9
