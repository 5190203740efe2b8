"""The thirteen acceptance criteria, each printing one PASS/FAIL line."""
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from oracles import brute_semidist, damped_mode, robin_root
from robin_acoustic import cli
from robin_acoustic import dynamics as dyn
from robin_acoustic.integrate import (decomposition_run, initial_data_A, random_state_A,
                                      random_state_R, simulate)
from robin_acoustic.mesh import build_mesh, inner, norm_phase
from robin_acoustic.model import Problem, builtin
from robin_acoustic.operators import adjoint_defect, assemble, eigenpairs, gram
from robin_acoustic.state import StateR


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
        assert ok, detail
    return emit


def test_c01_energy_identity(report):
    m = build_mesh(200)
    nl = builtin("cubic")
    r = np.random.default_rng(101)
    worst = {}
    for problem in (Problem("R"), Problem("A", 1.0), Problem("A", 0.01)):
        s0 = random_state_R(m, r, 2.0) if problem.kind == "R" else random_state_A(m, r, problem.eps, 2.0)
        rec = simulate(problem, s0, 5.0, 1e-3, m, nl, tol=1e-11, stride=100)
        worst[str(problem)] = float(np.max(np.abs(rec.balance_residuals)))
    ok = max(worst.values()) <= 1e-9
    report(1, ok, "max balance residual " + ", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + " (<= 1e-9)")


def _modal_rel_error(dt, m, w, lam):
    rec = simulate(Problem("R"), StateR(w.copy(), np.zeros_like(w)), 1.0, dt, m, builtin("zero"),
                   stride=round(1.0 / dt))
    a = float(w @ (m.weights * rec.states[-1].u))
    exact = damped_mode(lam, 1.0)
    return abs(a - exact) / abs(exact)


def test_c02_modal_oracle(report):
    m = build_mesh(100)
    ev = eigenpairs(m, 1)
    w, lam = ev.eigenvectors[:, 0], ev.eigenvalues[0]
    e_coarse = _modal_rel_error(2e-4, m, w, lam)
    e_fine = _modal_rel_error(1e-4, m, w, lam)
    ratio = e_coarse / e_fine
    ok = e_fine <= 1e-5 and 3.5 <= ratio <= 4.5
    report(2, ok, f"rel. error {e_fine:.2e} at dt=1e-4 (<= 1e-5), halving ratio {ratio:.3f} (in [3.5, 4.5])")


def test_c03_poincare(report):
    m = build_mesh(200)
    lam = eigenpairs(m, 1).eigenvalues[0]
    r = np.random.default_rng(103)
    violations = 0
    for _ in range(1000):
        u = r.standard_normal(m.n_nodes)
        lhs = math.sqrt(inner("L2", u, u, m))
        rhs = math.sqrt((u @ (m.stiffness @ u) + inner("L2Gamma", u, u, m)) / lam)
        violations += lhs > rhs * (1 + 1e-8)
    k = robin_root()
    lam1000 = eigenpairs(build_mesh(1000), 1).eigenvalues[0]
    rel = abs(lam1000 - k * k) / (k * k)
    ok = violations == 0 and rel <= 1e-3
    report(3, ok, f"{violations} Poincare violations of 1000; lambda1={lam1000:.8f} vs root^2={k * k:.8f} "
                  f"(rel {rel:.1e} <= 1e-3)")


def test_c04_adjoints(report):
    m = build_mesh(32)
    d = {"R": adjoint_defect(assemble(m, "generator_R"), m)}
    for eps in (1.0, 0.5, 0.01):
        d[f"A({eps:g})"] = adjoint_defect(assemble(m, "generator_A", eps), m)
    ok = max(d.values()) <= 1e-10
    report(4, ok, "adjoint defects " + ", ".join(f"{k}={v:.1e}" for k, v in d.items()) + " (<= 1e-10)")


def test_c05_dissipativity(report):
    m = build_mesh(64)
    r = np.random.default_rng(105)
    GR, WR = assemble(m, "generator_R").matrix, gram(m, "H0")
    dR = 0.0
    for _ in range(50):
        y = r.standard_normal(2 * m.n_nodes)
        v = y[m.n_nodes:]
        dR = max(dR, abs((GR @ y) @ (WR @ y) + inner("L2", v, v, m)))
    dA = 0.0
    for eps in (1.0, 0.1):
        GA, WA = assemble(m, "generator_A", eps).matrix, gram(m, "Heps", eps)
        for _ in range(50):
            z = random_state_A(m, r, eps, float(r.uniform(0.1, 3)))
            y = z.flat()
            dA = max(dA, abs((GA @ y) @ (WA @ y) + inner("L2", z.v, z.v, m) + eps * z.gamma @ z.gamma))
    ok = max(dR, dA) <= 1e-10
    report(5, ok, f"dissipativity defects R={dR:.1e}, A={dA:.1e} (<= 1e-10)")


def test_c06_sqrt_eps_gap(report):
    m = build_mesh(100)
    r = np.random.default_rng(106)
    phi = random_state_R(m, r, 1.0)
    d0, d1 = np.array([0.3, -0.2]), np.array([0.5, 0.1])
    grid = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    entries = dyn.epsilon_sweep(grid, phi.u, phi.v, d0, d1, 2.0, 1e-3, m, builtin("cubic"),
                                stride=10, threads=4)
    eps = [e.eps for e in entries]
    parts, ok = [], True
    for mode, gaps in (("lifted", [e.sup_gap for e in entries]),
                       ("projected", [e.sup_gap_projected for e in entries])):
        fit = dyn.epsilon_sweep_fit(eps, gaps)
        mono = dyn.monotone_within(eps, gaps, 0.1)
        good = fit.rate >= 0.45 and fit.residual <= 0.3 and mono
        ok &= good
        parts.append(f"{mode}: rho={fit.rate:.3f} rms={fit.residual:.3f} monotone={mono}")
    report(6, ok, "; ".join(parts) + " (rho >= 0.45, rms <= 0.3)")


def test_c07_initial_gap(report):
    m = build_mesh(40)
    r = np.random.default_rng(107)
    worst = 0.0
    for eps in (1.0, 0.1):
        for _ in range(20):
            phi = random_state_R(m, r, float(r.uniform(0.1, 3)))
            d0, d1 = r.standard_normal((2, 2))
            g = dyn.trajectory_gap(phi.u, phi.v, d0, d1, eps, 1e-3, 1e-3, m, builtin("cubic"))
            s = d1 + phi.u[[0, -1]]
            exact = math.sqrt(eps * d0 @ d0 + eps ** 2 * s @ s)
            worst = max(worst, abs(g.lifted[0] - exact))
    report(7, worst <= 1e-12, f"max |gap(0) - closed form| = {worst:.1e} over 40 cases (<= 1e-12)")


def test_c08_lipschitz(report):
    m = build_mesh(50)
    r = np.random.default_rng(108)
    pairs = []
    for _ in range(10):
        x = random_state_R(m, r, 1.0)
        pairs.append((x, x + random_state_R(m, r, 1e-2)))
    res = dyn.lipschitz_fit(Problem("R"), pairs, 5.0, 1e-2, m, builtin("cubic"), stride=5)
    worst = max(float(np.max(rr / (np.exp(res.fit.rate * res.times) * (1 + 1e-6)))) for rr in res.ratios)
    w = eigenpairs(m, 1).eigenvectors[:, 0]
    lin_pairs = [(StateR(a * w, 0 * w), StateR(b * w, 0 * w)) for a, b in [(1.0, 1.5), (-0.5, 0.7)]]
    lin_pairs += pairs[:2]
    lin = dyn.lipschitz_fit(Problem("R"), lin_pairs, 5.0, 1e-2, m, builtin("zero"), stride=5)
    ok = worst <= 1.0 and lin.fit.rate <= 0
    report(8, ok, f"nu_hat={res.fit.rate:.3f}, max r/e^(nu t)(1+1e-6) = {worst:.6f} (<= 1); "
                  f"f=0 nu_hat={lin.fit.rate:.3f} (<= 0)")


def test_c09_absorbing(report):
    m = build_mesh(50)
    nl = builtin("cubic")
    r = np.random.default_rng(109)
    recs = []
    for _ in range(20):
        phi = random_state_R(m, r, float(r.uniform(0.2, 5.0)))
        recs.append(simulate(Problem("R"), phi, 50.0, 1e-2, m, nl, stride=10))
    radius = dyn.energy_radius(recs, 5.0)
    checks = [dyn.invariance_check(rec, radius) for rec in recs]
    entered = all(c.entry_index is not None for c in checks)
    violations = sum(c.violations for c in checks)
    R0 = dyn.radius_R(1.0, 1.0, 0.25, 0.1, 0.0, 0.1)
    t0 = dyn.entry_time_R(1.0, 1.0, 0.25, 0.0, 1.0)
    R1 = dyn.radius_A(1.0, 1.0, 0.1, 0.0, 0.0, 0.5)
    ok = entered and violations == 0 and (R0, t0, R1) == (2.0, 2.0, 2.0)
    report(9, ok, f"radius {radius:.4f}: all entered={entered}, post-entry violations={violations}; "
                  f"R0^2={R0}, t0={t0}, R1eps^2={R1}")


def test_c10_decomposition(report):
    m = build_mesh(50)
    nl = builtin("cubic")
    r = np.random.default_rng(110)
    parts, ok = [], True
    for eps in (1.0, 0.1):
        z0 = random_state_A(m, r, eps, 2.0)
        d = decomposition_run(z0, eps, 1.0, 50.0, 1e-2, m, nl, stride=10)
        fit = dyn.exp_attraction_fit(d.times, d.norm_z, t_min=5.0)
        runmax = np.maximum.accumulate(d.norm_k)
        half = runmax[np.searchsorted(d.times, 25.0)]
        settled = runmax[-1] <= half
        good = d.residual <= 1e-8 and -fit.rate < 0 and settled
        ok &= good
        parts.append(f"eps={eps:g}: residual={d.residual:.1e} slope={-fit.rate:.4f} chi-max settled={settled}")
    report(10, ok, "; ".join(parts))


def test_c11_semidist_and_dimension(report):
    m = build_mesh(3)
    nrm = lambda s: norm_phase("H0", s, m)
    r = np.random.default_rng(111)
    pool = [StateR(*r.standard_normal((2, 4))) for _ in range(6)]
    mismatches = cases = 0
    for na, nb in itertools.product(range(1, 7), repeat=2):
        for A in itertools.combinations(pool, na):
            for Bset in itertools.combinations(pool, nb):
                cases += 1
                mismatches += dyn.hausdorff_semidist(list(A), list(Bset), nrm) != brute_semidist(A, Bset, nrm)
    t = np.linspace(0, 1, 1000)
    seg = np.column_stack([t, 2 * t, -t]) / math.sqrt(6)
    d1 = dyn.box_counting_dim(seg, np.geomspace(3e-3, 3e-2, 20)).rate
    g = np.linspace(0, 1, 32)
    X, Y = np.meshgrid(g, g)
    lat = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])[:1000]
    d2 = dyn.box_counting_dim(lat, np.geomspace(0.025, 0.25, 20)).rate
    ok = mismatches == 0 and abs(d1 - 1) <= 0.2 and abs(d2 - 2) <= 0.3
    report(11, ok, f"{mismatches} mismatches in {cases} semidistance cases; segment dim {d1:.3f}, "
                   f"lattice dim {d2:.3f}")


def test_c12_transitivity(report):
    comp = dyn.transitivity_compose(2, 1, 3, 2, 4, 3)
    r = np.random.default_rng(112)
    bad = 0
    for _ in range(100):
        C, K, C1, a1, C2, a2 = r.uniform(1e-3, 1e2, 6)
        bad += not dyn.transitivity_compose(C, K, C1, a1, C2, a2)[1] < min(a1, a2)
    te = dyn.entry_time(Fraction(3, 4), Fraction(5, 6), Fraction(2, 9))
    ok = comp == (10, 1) and bad == 0 and te == Fraction(57, 8)
    report(12, ok, f"compose(2,1,3,2,4,3)={comp}; {bad}/100 rates not slower; entry time {te}")


def test_c13_determinism(report, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code = cli.main(["--out", str(out), "--seed", "13", "check"])
        outs.append((code, (out / "check.csv").read_bytes()))
    ok = outs[0][0] == outs[1][0] == 0 and outs[0][1] == outs[1][1]
    report(13, ok, f"check exit codes {outs[0][0]}, {outs[1][0]}; CSV byte-identical={outs[0][1] == outs[1][1]}")
