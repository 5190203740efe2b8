"""Semiflow-level experiments on top of the integrator.

Covers the maps between the two phase spaces, trajectory gaps and their
epsilon sweeps, Lipschitz and exponential-rate fits, the closed-form
absorbing radii and entry times, long-time point clouds, the Hausdorff
semidistance and a box-counting dimension estimate.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrate import (DEFAULT_TOL, StateA, StateR, TrajectoryRecord, initial_data_A,
                        simulate)
from .mesh import Mesh, check_boundary_field, norm_phase
from .model import BoundaryNonlinearity, Nonlinearity, Problem
from .operators import gram

__all__ = [
    "RateFit",
    "GapResult",
    "SweepEntry",
    "LipschitzResult",
    "AbsorbingSpec",
    "InvarianceResult",
    "Cloud",
    "project",
    "lift",
    "trajectory_gap",
    "initial_robin_defect",
    "epsilon_sweep",
    "epsilon_sweep_fit",
    "monotone_within",
    "lipschitz_fit",
    "radius_R",
    "entry_time_R",
    "radius_A",
    "entry_time_A",
    "absorbing_spec",
    "invariance_check",
    "energy_radius",
    "omega_cloud",
    "hausdorff_semidist",
    "box_counting_dim",
    "exp_attraction_fit",
    "transitivity_compose",
    "entry_time",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RateFit:
    """Least-squares line ``log y = log(prefactor) + rate * x``."""

    prefactor: float
    rate: float
    residual: float  # RMS of the log-space fit
    n_samples: int
    flag: str = ""

    def __post_init__(self):
        if self.n_samples < 3 and not self.flag:
            raise ValueError("a rate fit needs at least 3 samples")
        if not math.isfinite(self.residual):
            raise ValueError("fit residual is not finite")


def _line_fit(x, y):
    """Fit ``y = a + b x``; return ``(a, b, rms)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = math.sqrt(float(np.mean((a + b * x - y) ** 2)))
    return float(a), float(b), rms


# -- maps between phase spaces ---------------------------------------------

def project(zeta: StateA) -> StateR:
    """``Pi (u, v, delta, gamma) = (u, v)``."""
    return StateR(zeta.u.copy(), zeta.v.copy())


def lift(phi: StateR, mesh: Mesh | None = None) -> StateA:
    """``L (u, v) = (u, v, 0, -u|_Gamma)``."""
    return StateA(phi.u.copy(), phi.v.copy(), np.zeros(2), -np.array([phi.u[0], phi.u[-1]]))


# -- trajectory gaps --------------------------------------------------------

@dataclass
class GapResult:
    eps: float
    times: np.ndarray
    lifted: np.ndarray  # |S_eps zeta0 - L S_0 Pi zeta0| in H_eps
    projected: np.ndarray  # |Pi S_eps zeta0 - S_0 Pi zeta0| in H_0
    record_A: TrajectoryRecord | None = field(default=None, repr=False)
    record_R: TrajectoryRecord | None = field(default=None, repr=False)

    def sup(self, mode: str = "lifted") -> float:
        return float(np.max(self._series(mode)))

    def at_end(self, mode: str = "lifted") -> float:
        return float(self._series(mode)[-1])

    def _series(self, mode):
        if mode == "lifted":
            return self.lifted
        if mode == "projected":
            return self.projected
        raise ValueError(f"unknown gap mode {mode!r}")


def trajectory_gap(u0, u1, delta0, delta1, eps: float, T: float, dt: float, mesh: Mesh,
                   nl: Nonlinearity, bnl: BoundaryNonlinearity | None = None,
                   stride: int = 1, tol: float = DEFAULT_TOL,
                   record_R: TrajectoryRecord | None = None) -> GapResult:
    """Run (A) from ``initial_data_A(...)`` and (R) from its projection.

    Both gap series are returned; ``GapResult.sup(mode)`` gives the sup-gap
    for ``mode`` in ``{"lifted", "projected"}``.  A precomputed (R) record
    with the same ``T, dt, stride`` may be passed to skip that run.
    """
    zeta0 = initial_data_A(u0, u1, delta0, delta1, eps, mesh)
    rA = simulate(Problem("A", eps), zeta0, T, dt, mesh, nl, bnl, stride=stride, tol=tol)
    if record_R is None:
        record_R = simulate(Problem("R"), project(zeta0), T, dt, mesh, nl, stride=stride, tol=tol)
    elif len(record_R.states) != len(rA.states) or record_R.dt != dt:
        raise ValueError("precomputed Problem (R) record does not match the sampling")
    lifted = np.array([norm_phase("Heps", a - lift(b), mesh, eps)
                       for a, b in zip(rA.states, record_R.states)])
    projected = np.array([norm_phase("H0", project(a) - b, mesh)
                          for a, b in zip(rA.states, record_R.states)])
    return GapResult(eps, rA.times, lifted, projected, rA, record_R)


def initial_robin_defect(zeta0: StateA, u0, delta1, eps: float) -> np.ndarray:
    """``(d_n u + u) - eps (delta1 + u)`` on Gamma at ``t = 0``.

    The normal derivative is carried by ``gamma``, so this vanishes for
    data built by :func:`initial_data_A`.
    """
    tr = np.array([u0[0], u0[-1]], dtype=float)
    delta1 = check_boundary_field(delta1, "delta1")
    return zeta0.gamma + tr - eps * (delta1 + tr)


@dataclass(frozen=True)
class SweepEntry:
    eps: float
    sup_gap: float
    gap_at_T: float
    runtime: float
    sup_gap_projected: float
    gap_at_T_projected: float
    series: GapResult | None = field(default=None, repr=False, compare=False)


def epsilon_sweep(eps_values: Sequence[float], u0, u1, delta0, delta1, T: float, dt: float,
                  mesh: Mesh, nl: Nonlinearity, bnl: BoundaryNonlinearity | None = None,
                  stride: int = 1, tol: float = DEFAULT_TOL, threads: int = 1) -> list[SweepEntry]:
    """One gap run per epsilon; entries come back sorted by epsilon."""
    eps_values = sorted(float(e) for e in eps_values)
    if any(not (0 < e <= 1) for e in eps_values):
        raise ValueError("every eps must lie in (0, 1]")
    zeta_probe = initial_data_A(u0, u1, delta0, delta1, 1.0, mesh)
    rec_R = simulate(Problem("R"), project(zeta_probe), T, dt, mesh, nl, stride=stride, tol=tol)

    def job(eps):
        t0 = time.perf_counter()
        g = trajectory_gap(u0, u1, delta0, delta1, eps, T, dt, mesh, nl, bnl, stride, tol, rec_R)
        g.record_A = g.record_R = None
        return SweepEntry(eps, g.sup("lifted"), g.at_end("lifted"), time.perf_counter() - t0,
                          g.sup("projected"), g.at_end("projected"), g)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(job, eps_values))
    else:
        entries = [job(e) for e in eps_values]
    return sorted(entries, key=lambda e: e.eps)


def epsilon_sweep_fit(eps_values, gaps) -> RateFit:
    """Fit ``gap = M eps^rho`` in log-log space.

    Zero gaps are dropped with a warning.  Order of the input pairs does
    not matter.
    """
    pairs = sorted(zip(map(float, eps_values), map(float, gaps)))
    if len({e for e, _ in pairs}) < 4:
        raise ValueError("need at least 4 distinct eps values")
    if max(e for e, _ in pairs) / min(e for e, _ in pairs) < 100 * (1 - 1e-12):
        raise ValueError("eps values must span at least two decades")
    kept = [(e, g) for e, g in pairs if g > 0]
    if len(kept) < len(pairs):
        warnings.warn(f"dropped {len(pairs) - len(kept)} zero gaps from the fit", stacklevel=2)
    if len(kept) < 3:
        raise ValueError("fewer than 3 positive gaps survive")
    e, g = np.array(kept).T
    a, b, rms = _line_fit(np.log(e), np.log(g))
    return RateFit(math.exp(a), b, rms, len(kept))


def monotone_within(eps_values, gaps, band: float = 0.1) -> bool:
    """True if gaps are nondecreasing in eps up to a relative ``band``."""
    pairs = sorted(zip(eps_values, gaps))
    return all(g1 >= (1 - band) * g0 for (_, g0), (_, g1) in zip(pairs, pairs[1:]))


# -- Lipschitz dependence ---------------------------------------------------

@dataclass
class LipschitzResult:
    fit: RateFit  # fit.rate is nu_hat
    slope_max: float  # largest per-pair least-squares slope through the origin
    worst_violation: float  # max_t r(t) / exp(nu_hat t) - 1 (<= 0 means no violation)
    times: np.ndarray
    ratios: list[np.ndarray]


def lipschitz_fit(problem: Problem, pairs, T: float, dt: float, mesh: Mesh, nl: Nonlinearity,
                  bnl: BoundaryNonlinearity | None = None, stride: int = 1,
                  tol: float = DEFAULT_TOL) -> LipschitzResult:
    """Growth rate of ``r(t) = |S(t)x - S(t)y| / |x - y|`` over IC pairs.

    ``nu_hat`` is the larger of the steepest least-squares slope of
    ``log r`` against ``t`` and ``sup_t log r(t) / t``, so the envelope
    ``r(t) <= exp(nu_hat t)`` holds at every sample.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one IC pair")
    space = "H0" if problem.kind == "R" else "Heps"
    nrm = lambda s: norm_phase(space, s, mesh, problem.eps)
    ratios, slopes, env = [], [], []
    times = None
    for x, y in pairs:
        d0 = nrm(x - y)
        if d0 == 0:
            raise ValueError("identical initial conditions in a Lipschitz pair")
        rx = simulate(problem, x, T, dt, mesh, nl, bnl, stride=stride, tol=tol)
        ry = simulate(problem, y, T, dt, mesh, nl, bnl, stride=stride, tol=tol)
        times = rx.times
        r = np.array([nrm(a - b) for a, b in zip(rx.states, ry.states)]) / d0
        ratios.append(r)
        t, lr = times[1:], np.log(r[1:])
        slopes.append(float(t @ lr / (t @ t)))
        env.append(float(np.max(lr / t)))
    slope_max = max(slopes)
    nu = max(slope_max, max(env))
    all_r = np.concatenate([r[1:] for r in ratios])
    all_t = np.tile(times[1:], len(ratios))
    resid = math.sqrt(float(np.mean((np.log(all_r) - nu * all_t) ** 2)))
    worst = max(float(np.max(r / np.exp(nu * times))) for r in ratios) - 1.0
    return LipschitzResult(RateFit(1.0, nu, resid, all_r.size), slope_max, worst, times, ratios)


# -- absorbing sets ---------------------------------------------------------

def radius_R(C1, C2, eta, m0, kappa_f, iota) -> float:
    """Squared radius ``R_0^2(iota)`` of the absorbing ball for (R)."""
    s = (eta * kappa_f + iota) / m0
    return C2 / C1 * s ** 0.5 * (eta * kappa_f + 1 + s ** 1.5)


def entry_time_R(C2, R, eta, kappa_f, iota) -> float:
    return (C2 * R * (1 + R ** 3) + eta * kappa_f) / iota


def radius_A(C1, C2, m1, kappa_f, kappa_g, eps, iota=None) -> float:
    """Squared radius ``R_1eps^2(iota)``; ``iota=None`` uses ``iota = m1 eps``."""
    k = kappa_f + eps * kappa_g
    if iota is None:
        return C2 / C1 * (k + 1) ** 1.5 * (1 + (k + 1) ** 0.5)
    s = k + iota / (m1 * eps)
    return C2 / C1 * s ** 0.5 * (k + 1 + s ** 1.5)


def entry_time_A(C2, R, m1, kappa_f, kappa_g, eps, iota=None) -> float | None:
    """Entry time ``t_1eps(iota)``; ``iota=None`` uses the ``iota = m1 eps`` form.

    The latter divides by ``kappa_f + eps kappa_g``; ``None`` is returned
    when that vanishes.
    """
    k = kappa_f + eps * kappa_g
    if iota is not None:
        return (C2 * R * (1 + R ** 3) + k) / iota
    if k == 0:
        return None
    return (1 + C2 * R * (1 + R ** 3) / k) / (eps * m1)


@dataclass(frozen=True)
class AbsorbingSpec:
    radius: float
    entry_time: float | None  # None when undefined
    params: dict


def absorbing_spec(problem: Problem, R_data: float, *, C1: float = 0.25, C2: float = 1.0,
                   eta: float = 0.25, m0: float = 0.1, m1: float = 0.1, kappa_f: float = 0.0,
                   kappa_g: float = 0.0, iota: float | None = None) -> AbsorbingSpec:
    """Closed-form absorbing radius and entry time.

    For (R), ``iota`` defaults to ``m0``.  For (A), ``iota=None`` selects
    the epsilon-uniform choice ``iota = m1 eps``.
    """
    for name, val in (("C1", C1), ("C2", C2), ("m0", m0), ("m1", m1)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    if eta < 0 or kappa_f < 0 or kappa_g < 0 or R_data < 0:
        raise ValueError("eta, kappa_f, kappa_g and R must be nonnegative")
    if problem.kind == "R":
        iota = m0 if iota is None else iota
        if not iota > 0:
            raise ValueError("iota must be positive")
        r2 = radius_R(C1, C2, eta, m0, kappa_f, iota)
        t = entry_time_R(C2, R_data, eta, kappa_f, iota)
        params = dict(C1=C1, C2=C2, eta=eta, m0=m0, kappa_f=kappa_f, iota=iota, R=R_data)
    else:
        eps = problem.eps
        if iota is not None and not iota > 0:
            raise ValueError("iota must be positive")
        r2 = radius_A(C1, C2, m1, kappa_f, kappa_g, eps, iota)
        t = entry_time_A(C2, R_data, m1, kappa_f, kappa_g, eps, iota)
        params = dict(C1=C1, C2=C2, m1=m1, kappa_f=kappa_f, kappa_g=kappa_g, eps=eps,
                      iota=m1 * eps if iota is None else iota, R=R_data)
    return AbsorbingSpec(math.sqrt(r2), t, params)


@dataclass(frozen=True)
class InvarianceResult:
    entry_index: int | None
    entry_time: float | None
    violations: int


def invariance_check(trajectory, radius: float, times=None) -> InvarianceResult:
    """First sample inside ``radius`` and how many later samples leave it.

    ``trajectory`` is a :class:`TrajectoryRecord` or a plain norm series.
    """
    if isinstance(trajectory, TrajectoryRecord):
        norms, times = trajectory.norms, trajectory.times
    else:
        norms = np.asarray(trajectory, dtype=float)
    inside = np.flatnonzero(norms <= radius)
    if inside.size == 0:
        return InvarianceResult(None, None, 0)
    k = int(inside[0])
    bad = int(np.sum(norms[k + 1:] > radius * (1 + 1e-9)))
    return InvarianceResult(k, None if times is None else float(times[k]), bad)


def energy_radius(records: Sequence[TrajectoryRecord], t_cal: float) -> float:
    """Calibrated radius ``sqrt(max_k E_k(t_cal))``.

    For nonnegative potentials the phase-space norm squared is bounded by
    the energy, which never increases, so every trajectory stays inside
    this radius after ``t_cal``.
    """
    vals = []
    for rec in records:
        k = int(np.searchsorted(rec.times, t_cal - 1e-12))
        if k >= len(rec.times):
            raise ValueError("t_cal lies beyond the recorded horizon")
        vals.append(rec.energies[k].total)
    return math.sqrt(max(max(vals), 0.0))


# -- clouds, semidistance, dimension -----------------------------------------

@dataclass
class Cloud:
    points: list
    problem: Problem
    burn_in: float
    stride: int
    description: str = ""

    def __post_init__(self):
        if not self.points:
            raise ValueError("a cloud needs at least one point")
        kinds = {type(p) for p in self.points}
        if len(kinds) != 1:
            raise ValueError("cloud mixes state kinds")

    @property
    def eps(self):
        return self.problem.eps

    def __len__(self):
        return len(self.points)

    def norm(self, mesh: Mesh) -> Callable:
        space = "H0" if isinstance(self.points[0], StateR) else "Heps"
        return lambda s: norm_phase(space, s, mesh, self.problem.eps)

    def coordinates(self, mesh: Mesh) -> np.ndarray:
        """Points in coordinates where the phase-space norm is Euclidean."""
        if isinstance(self.points[0], StateR):
            W = gram(mesh, "H0")
        else:
            W = gram(mesh, "Heps", self.problem.eps)
        L = np.linalg.cholesky(W.toarray())
        X = np.array([p.flat() for p in self.points])
        return X @ L


def omega_cloud(problem: Problem, initial_states, burn_in: float, T: float, stride: int,
                dt: float, mesh: Mesh, nl: Nonlinearity, bnl: BoundaryNonlinearity | None = None,
                tol: float = DEFAULT_TOL, threads: int = 1, description: str = "") -> Cloud:
    """Pool the samples with ``t >= burn_in`` from every trajectory."""
    initial_states = list(initial_states)
    if not initial_states:
        raise ValueError("need at least one initial state")
    if not burn_in < T:
        raise ValueError("burn_in must be smaller than T")

    def job(s):
        rec = simulate(problem, s, T, dt, mesh, nl, bnl, stride=stride, tol=tol)
        return [st for t, st in zip(rec.times, rec.states) if t >= burn_in - 1e-12]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, initial_states))
    else:
        chunks = [job(s) for s in initial_states]
    pts = [p for c in chunks for p in c]
    if not pts:
        raise ValueError("no samples after burn-in; stride too large")
    return Cloud(pts, problem, burn_in, stride, description)


def hausdorff_semidist(A, B, norm: Callable) -> float:
    """``sup_{a in A} inf_{b in B} |a - b|`` by an exhaustive double loop.

    ``A`` and ``B`` are clouds or sequences of states of the same kind;
    ``norm`` maps a state difference to a nonnegative real.
    """
    A = A.points if isinstance(A, Cloud) else list(A)
    B = B.points if isinstance(B, Cloud) else list(B)
    if not A or not B:
        raise ValueError("both point sets must be nonempty")
    if type(A[0]) is not type(B[0]):
        raise TypeError("state kinds differ; lift or project one cloud first")
    worst = 0.0
    for a in A:
        best = math.inf
        for b in B:
            best = min(best, norm(a - b))
        worst = max(worst, best)
    return worst


def _farthest_point_order(X: np.ndarray) -> np.ndarray:
    n = len(X)
    order = np.empty(n, dtype=int)
    order[0] = 0
    d = np.linalg.norm(X - X[0], axis=1)
    for k in range(1, n):
        j = int(np.argmax(d))
        order[k] = j
        d = np.minimum(d, np.linalg.norm(X - X[j], axis=1))
    return order


def _greedy_cover(X: np.ndarray, order: np.ndarray, r: float) -> int:
    covered = np.zeros(len(X), dtype=bool)
    count = 0
    for j in order:
        if covered[j]:
            continue
        count += 1
        covered |= np.linalg.norm(X - X[j], axis=1) <= r
    return count


def box_counting_dim(cloud, radii, mesh: Mesh | None = None) -> RateFit:
    """Slope of ``ln mu(r)`` against ``-ln r`` with greedy ``r``-ball covers.

    ``cloud`` is a :class:`Cloud` (``mesh`` required) or an ``(N, d)``
    coordinate array with the Euclidean norm.
    """
    if isinstance(cloud, Cloud):
        if mesh is None:
            raise ValueError("mesh is required to embed a state cloud")
        X = cloud.coordinates(mesh)
    else:
        X = np.asarray(cloud, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size < 3 or radii[-1] / radii[0] < 10 * (1 - 1e-12) or radii[0] <= 0:
        raise ValueError("need at least 3 positive radii spanning a decade")
    if np.all(np.ptp(X, axis=0) == 0):
        return RateFit(1.0, 0.0, 0.0, radii.size, flag="degenerate")
    if len(X) < 10:
        raise ValueError("need at least 10 points")
    order = _farthest_point_order(X)
    counts = np.array([_greedy_cover(X, order, r) for r in radii])
    a, b, rms = _line_fit(-np.log(radii), np.log(counts))
    return RateFit(math.exp(a), b, rms, radii.size)


# -- exponential rates and appendix formulas ---------------------------------

def exp_attraction_fit(times, distances, t_min: float = 1.0) -> RateFit:
    """Fit ``d(t) = C exp(-omega t)`` on ``t >= t_min``; ``rate`` is ``omega``."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    keep = (t >= t_min) & (d > 0)
    if keep.sum() < 3:
        raise ValueError("fewer than 3 positive distances in the fit window")
    a, b, rms = _line_fit(t[keep], np.log(d[keep]))
    return RateFit(math.exp(a), -b, rms, int(keep.sum()))


def transitivity_compose(C, K, C1, alpha1, C2, alpha2):
    """Constants of the composed exponential attraction: ``(C', alpha')``."""
    if min(K, alpha1, alpha2) <= 0:
        raise ValueError("K and both rates must be positive")
    return C * C1 + C2, alpha1 * alpha2 / (K + alpha1 + alpha2)


def entry_time(r, R, iota):
    """Entry time ``(r + R) / iota`` of the differential-inequality lemma."""
    if not iota > 0:
        raise ValueError("iota must be positive")
    return (r + R) / iota
