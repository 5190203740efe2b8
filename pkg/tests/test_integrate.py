import numpy as np
import pytest

from oracles import damped_mode
from robin_acoustic.integrate import (StepFailure, Stepper, decomposition_run, initial_data_A,
                                      random_state_A, random_state_R, simulate, step)
from robin_acoustic.mesh import build_mesh, norm_phase
from robin_acoustic.model import Problem, builtin
from robin_acoustic.operators import eigenpairs
from robin_acoustic.state import StateA, StateR


def test_initial_data_wiring():
    m = build_mesh(4)
    n = m.n_nodes
    z = initial_data_A(np.full(n, 2.0), np.zeros(n), np.zeros(2), np.array([0.4, -0.1]), 1.0, m)
    np.testing.assert_array_equal(z.gamma, [0.4, -0.1])
    z = initial_data_A(np.full(n, 2.0), np.zeros(n), np.zeros(2), np.zeros(2), 0.5, m)
    np.testing.assert_array_equal(z.gamma, [-1.0, -1.0])
    z = initial_data_A(np.full(n, 2.0), np.zeros(n), np.zeros(2), np.ones(2), 1e-12, m)
    np.testing.assert_allclose(z.gamma, -2.0, atol=1e-11)
    for eps in (0.0, -1.0):
        with pytest.raises(ValueError):
            initial_data_A(np.ones(n), np.zeros(n), np.zeros(2), np.zeros(2), eps, m)
    with pytest.raises(ValueError):
        initial_data_A(np.ones(n - 1), np.zeros(n), np.zeros(2), np.zeros(2), 0.5, m)


def test_zero_state_is_fixed(mesh32):
    out = step(Problem("R"), StateR.zeros(mesh32), 0.01, mesh32, builtin("cubic"))
    assert np.all(out.u == 0) and np.all(out.v == 0)
    out = step(Problem("A", 0.3), StateA.zeros(mesh32), 0.01, mesh32, builtin("cubic"))
    assert np.all(out.flat() == 0)


def test_step_rejects_bad_input(mesh32):
    with pytest.raises(ValueError):
        step(Problem("R"), StateR.zeros(mesh32), 0.0, mesh32, builtin("cubic"))
    bad = StateR(np.full(mesh32.n_nodes, np.nan), np.zeros(mesh32.n_nodes))
    with pytest.raises(ValueError):
        step(Problem("R"), bad, 0.01, mesh32, builtin("cubic"))


def test_random_states_have_target_norm(mesh32, rng):
    assert norm_phase("H0", random_state_R(mesh32, rng, 3.0), mesh32) == pytest.approx(3.0)
    z = random_state_A(mesh32, rng, 0.2, 0.5)
    assert norm_phase("Heps", z, mesh32, 0.2) == pytest.approx(0.5)


def _modal_error(dt, n=100):
    m = build_mesh(n)
    ev = eigenpairs(m, 1)
    w, lam = ev.eigenvectors[:, 0], ev.eigenvalues[0]
    rec = simulate(Problem("R"), StateR(w.copy(), np.zeros_like(w)), 1.0, dt, m, builtin("zero"),
                   stride=round(1 / dt))
    a = float(w @ (m.weights * rec.states[-1].u))
    exact = damped_mode(lam, 1.0)
    return abs(a - exact) / abs(exact)


def test_modal_oracle_second_order():
    e1, e2, e3 = (_modal_error(dt) for dt in (4e-3, 2e-3, 1e-3))
    assert e3 <= 1e-5
    assert np.log2(e1 / e2) >= 1.9 and np.log2(e2 / e3) >= 1.9


@pytest.mark.parametrize("problem,bnl", [
    (Problem("R"), None),
    (Problem("A", 1.0), None),
    (Problem("A", 0.05), builtin("bounded_sine", boundary=True, rho=0.8)),
])
@pytest.mark.parametrize("name", ["cubic", "cubic_minus_linear", "zero"])
def test_energy_balance_every_nonlinearity(problem, bnl, name, mesh32):
    nl = builtin(name, **({"lam": 0.5} if name == "cubic_minus_linear" else {}))
    r = np.random.default_rng(4)
    s0 = random_state_R(mesh32, r, 2.0) if problem.kind == "R" else random_state_A(mesh32, r, problem.eps, 2.0)
    rec = simulate(problem, s0, 1.0, 1e-2, mesh32, nl, bnl)
    assert np.max(np.abs(rec.balance_residuals)) <= 10 * 1e-11
    assert np.all(rec.dissipation >= 0)
    assert len(rec.balance_residuals) == 100
    assert np.all(np.diff(rec.times) > 0)


def test_energy_nonincreasing(mesh32, rng):
    rec = simulate(Problem("R"), random_state_R(mesh32, rng, 3.0), 10.0, 1e-2, mesh32,
                   builtin("cubic"), stride=10)
    assert np.all(np.diff(rec.energy_total) <= 1e-10)


def test_tolerance_sweep(mesh32):
    # Newton overshoots its tolerance, so the observable is the 10x-tol bound at each level
    r = np.random.default_rng(8)
    z0 = random_state_A(mesh32, r, 0.5, 3.0)
    worst = {}
    for tol in (1e-8, 1e-10, 1e-12):
        rec = simulate(Problem("A", 0.5), z0, 1.0, 1e-2, mesh32, builtin("cubic"), tol=tol)
        worst[tol] = np.max(np.abs(rec.balance_residuals))
        assert worst[tol] <= 10 * tol
    assert worst[1e-12] <= worst[1e-8]


def test_energy_constant_only_for_zero_state(mesh32, rng):
    nl = builtin("zero")
    n = mesh32.n_nodes
    u = random_state_R(mesh32, rng, 1.0).u
    rec = simulate(Problem("A", 1.0), StateA(u, np.zeros(n), np.zeros(2), np.zeros(2)), 0.01, 0.01,
                   mesh32, nl)
    assert rec.energy_total[1] < rec.energy_total[0]
    rec = simulate(Problem("A", 1.0), StateA.zeros(mesh32), 0.01, 0.01, mesh32, nl)
    assert rec.energy_total[1] == rec.energy_total[0] == 0.0


def test_eps_limit_reproduces_R(mesh32, rng):
    # with eps -> 0 and the wired initial data, gamma + Bu stays O(eps)
    phi = random_state_R(mesh32, rng, 1.0)
    rR = simulate(Problem("R"), phi, 0.5, 1e-2, mesh32, builtin("cubic"))
    z0 = initial_data_A(phi.u, phi.v, np.zeros(2), np.zeros(2), 1e-9, mesh32)
    rA = simulate(Problem("A", 1e-9), z0, 0.5, 1e-2, mesh32, builtin("cubic"))
    np.testing.assert_allclose(rA.states[-1].u, rR.states[-1].u, atol=1e-7)


def test_simulate_validation(mesh32):
    s = StateR.zeros(mesh32)
    with pytest.raises(ValueError):
        simulate(Problem("R"), s, 1.0, 0.3, mesh32, builtin("cubic"))
    with pytest.raises(ValueError):
        simulate(Problem("R"), s, -1.0, 0.1, mesh32, builtin("cubic"))
    with pytest.raises(ValueError):
        simulate(Problem("R"), s, 1.0, 0.1, mesh32, builtin("cubic"), stride=0)


def test_step_failure_carries_residual(mesh32, rng):
    phi = random_state_R(mesh32, rng, 50.0)
    with pytest.raises(StepFailure) as info:
        simulate(Problem("R"), phi, 1.0, 0.5, mesh32, builtin("cubic"), max_iter=1, tol=1e-14)
    assert info.value.residual > 0
    assert info.value.time == 0.0


def test_stride_sampling(mesh32, rng):
    rec = simulate(Problem("R"), random_state_R(mesh32, rng), 1.0, 0.01, mesh32, builtin("cubic"), stride=25)
    np.testing.assert_allclose(rec.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert len(rec.states) == len(rec.energies) == len(rec.norms) == 5
    assert rec.balance_residuals.size == 100


def test_decomposition_zero_data(mesh32):
    d = decomposition_run(StateA.zeros(mesh32), 0.5, 1.0, 0.5, 0.05, mesh32, builtin("cubic"))
    assert np.all(d.norm_k == 0) and np.all(d.norm_z == 0)


def test_decomposition_linear_case(mesh32, rng):
    z0 = random_state_A(mesh32, rng, 1.0, 1.0)
    d = decomposition_run(z0, 1.0, 0.0, 5.0, 0.05, mesh32, builtin("zero"), stride=10)
    assert np.all(d.norm_k == 0)
    np.testing.assert_allclose(d.norm_z, d.norm_full)
    assert d.norm_z[-1] < d.norm_z[0]


def test_decomposition_consistency(mesh32, rng):
    z0 = random_state_A(mesh32, rng, 0.5, 2.0)
    d = decomposition_run(z0, 0.5, 1.0, 2.0, 0.02, mesh32, builtin("cubic"), stride=5)
    assert d.residual <= 1e-8
    for full, k, z in zip(d.full, d.k_part, d.z_part):
        np.testing.assert_allclose((k + z).flat(), full.flat(), atol=1e-14)


def test_decomposition_rejects_small_beta(mesh32):
    with pytest.raises(ValueError):
        decomposition_run(StateA.zeros(mesh32), 1.0, 0.2, 1.0, 0.1, mesh32,
                          builtin("cubic_minus_linear", lam=0.5))


def test_stepper_split_join_roundtrip(mesh32, rng):
    st = Stepper(Problem("A", 0.4), mesh32, builtin("cubic"))
    z = random_state_A(mesh32, rng, 0.4)
    back = st.join(*st.split(z))
    np.testing.assert_array_equal(back.flat(), z.flat())
