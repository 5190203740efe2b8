"""Energy-exact time stepping for Problems (R) and (A).

Both problems are written as a damped second-order system in positions
``q`` and velocities ``p``::

    Mq p' = -Kq q - grad V(q) - Dq p + Jq p + load,    q' = p

with ``Mq, Kq, Dq`` symmetric and ``Jq`` skew.  For (R), ``q = u``; for
(A), ``q = (u, delta)`` and ``Jq`` holds the boundary coupling
``+B^T gamma`` / ``-B v``.  One step is the implicit midpoint rule with
``grad V`` replaced by its discrete gradient, so

    E^{n+1} - E^n + 2 dt pbar^T Dq pbar = 2 dt pbar^T residual

and the energy balance closes to the Newton tolerance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .mesh import Mesh, check_boundary_field, check_field, norm_phase
from .model import (BoundaryNonlinearity, EnergyBreakdown, Nonlinearity, Problem,
                    discrete_gradient, energy, shifted)
from .operators import eigenpairs
from .state import StateA, StateR

__all__ = [
    "StepFailure",
    "StateR",
    "StateA",
    "TrajectoryRecord",
    "DecompositionResult",
    "Stepper",
    "initial_data_A",
    "step",
    "simulate",
    "decomposition_run",
    "random_state_R",
    "random_state_A",
    "smooth_modes",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-11
DEFAULT_MAX_ITER = 50


class StepFailure(RuntimeError):
    """Newton did not converge; carries the last scaled residual."""

    def __init__(self, message: str, residual: float, time: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.time = time


def initial_data_A(u0, u1, delta0, delta1, eps: float, mesh: Mesh | None = None) -> StateA:
    """Acoustic initial data wired so that the eps -> 0 limit is Problem (R).

    ``delta(0) = delta0`` and ``delta_t(0) = eps delta1 - (1 - eps) u0|_Gamma``.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    if mesh is not None:
        check_field(u0, mesh, "u0")
        check_field(u1, mesh, "u1")
    delta0 = check_boundary_field(delta0, "delta0")
    delta1 = check_boundary_field(delta1, "delta1")
    trace = np.array([u0[0], u0[-1]])
    gamma0 = eps * delta1 - (1.0 - eps) * trace
    return StateA(u0.copy(), u1.copy(), delta0.copy(), gamma0)


@lru_cache(maxsize=32)
def _modes(n_cells: int, length: float, k: int) -> np.ndarray:
    from .mesh import build_mesh
    mesh = build_mesh(n_cells, length)
    return eigenpairs(mesh, min(k, mesh.n_nodes)).eigenvectors


def smooth_modes(mesh: Mesh, k: int = 8) -> np.ndarray:
    """First ``k`` discrete Robin eigenvectors as columns."""
    return _modes(mesh.n_cells, mesh.length, k)


def random_state_R(mesh: Mesh, rng: np.random.Generator, norm: float = 1.0,
                   n_modes: int = 8) -> StateR:
    """Smooth random state: uniform[-1, 1] coefficients on the first modes."""
    W = smooth_modes(mesh, n_modes)
    k = W.shape[1]
    phi = StateR(W @ rng.uniform(-1, 1, k), W @ rng.uniform(-1, 1, k))
    r = norm_phase("H0", phi, mesh)
    return StateR(phi.u * (norm / r), phi.v * (norm / r))


def random_state_A(mesh: Mesh, rng: np.random.Generator, eps: float, norm: float = 1.0,
                   n_modes: int = 8) -> StateA:
    W = smooth_modes(mesh, n_modes)
    k = W.shape[1]
    z = StateA(W @ rng.uniform(-1, 1, k), W @ rng.uniform(-1, 1, k),
               rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
    s = norm / norm_phase("Heps", z, mesh, eps)
    return StateA(z.u * s, z.v * s, z.delta * s, z.gamma * s)


class Stepper:
    """Implicit midpoint / discrete-gradient stepper for one problem on one mesh."""

    def __init__(self, problem: Problem, mesh: Mesh, nl: Nonlinearity,
                 bnl: BoundaryNonlinearity | None = None,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
        self.problem = problem
        self.mesh = mesh
        self.nl = nl
        self.bnl = bnl
        self.tol = tol
        self.max_iter = max_iter
        n = mesh.n_nodes
        K, M, B = mesh.stiffness, mesh.mass, mesh.trace_matrix
        if problem.kind == "R":
            self.Mq = M.tocsr()
            self.Kq = (K + M + mesh.boundary_mass).tocsr()
            self.Dq = M.tocsr()
            self.Jq = sparse.csr_matrix((n, n))
            self.mdiag = mesh.weights.copy()
        else:
            eps = problem.eps
            I2 = sparse.identity(2)
            self.Mq = sparse.block_diag([M, I2], format="csr")
            self.Kq = sparse.block_diag([K + M, eps * I2], format="csr")
            self.Dq = sparse.block_diag([M, eps * I2], format="csr")
            self.Jq = sparse.bmat([[sparse.csr_matrix((n, n)), B.T],
                                   [-B, sparse.csr_matrix((2, 2))]], format="csr")
            self.mdiag = np.concatenate([mesh.weights, np.ones(2)])
        self._dt = None

    # -- packing ---------------------------------------------------------
    def split(self, state):
        if self.problem.kind == "R":
            return state.u, state.v
        return np.concatenate([state.u, state.delta]), np.concatenate([state.v, state.gamma])

    def join(self, q, p):
        if self.problem.kind == "R":
            return StateR(q, p)
        n = self.mesh.n_nodes
        return StateA(q[:n], p[:n], q[n:], p[n:])

    # -- potential -------------------------------------------------------
    def grad_bar(self, new, old, nl=None):
        """Discrete gradient of the potential, weighted by quadrature."""
        nl = self.nl if nl is None else nl
        n = self.mesh.n_nodes
        out = self.mesh.weights * discrete_gradient(nl, new[:n], old[:n])
        if self.problem.kind == "A":
            eps = self.problem.eps
            gb = np.zeros(2) if self.bnl is None else eps * discrete_gradient(self.bnl, new[n:], old[n:])
            out = np.concatenate([out, gb])
        return out

    def _hess_mid(self, mid, nl):
        n = self.mesh.n_nodes
        d = self.mesh.weights * nl.fprime(mid[:n])
        if self.problem.kind == "A":
            eps = self.problem.eps
            gb = np.zeros(2) if self.bnl is None else eps * self.bnl.fprime(mid[n:])
            d = np.concatenate([d, gb])
        return d

    def _linear_part(self, dt):
        if self._dt != dt:
            self._dt = dt
            self._L = (2.0 / dt ** 2) * self.Mq + (self.Dq - self.Jq) / dt + 0.5 * self.Kq
            self._L = self._L.tocsc()
        return self._L

    def momentum_residual(self, Q, q, p, dt, nl=None, load=None):
        """Force-form residual of the momentum equation for the guess ``Q``."""
        L = self._linear_part(dt)
        r = L @ (Q - q) - (2.0 / dt) * (self.Mq @ p) + self.Kq @ q + self.grad_bar(Q, q, nl)
        if load is not None:
            r = r - load
        return r

    def scaled(self, r, dt) -> float:
        """``dt * |M^{-1/2} r|``: a velocity-sized residual norm."""
        return dt * math.sqrt(float(np.dot(r, r / self.mdiag)))

    def advance(self, q, p, dt, nl=None, load=None):
        """Solve one step; returns ``(q_new, p_new, iterations, scaled residual)``."""
        nl = self.nl if nl is None else nl
        L = self._linear_part(dt)
        Q = q + dt * p
        r = self.momentum_residual(Q, q, p, dt, nl, load)
        res = self.scaled(r, dt)
        it = 0
        while res > self.tol:
            if it >= self.max_iter:
                raise StepFailure(f"Newton did not converge in {self.max_iter} iterations "
                                  f"(residual {res:.3e})", res)
            J = L + sparse.diags(0.5 * self._hess_mid(0.5 * (Q + q), nl))
            dQ = spsolve(J.tocsc(), r)
            lam = 1.0
            while True:
                Qt = Q - lam * dQ
                rt = self.momentum_residual(Qt, q, p, dt, nl, load)
                rest = self.scaled(rt, dt)
                if rest < res or lam < 1e-4:
                    break
                lam *= 0.5
            Q, r, res = Qt, rt, rest
            it += 1
            if not np.all(np.isfinite(Q)):
                raise StepFailure("non-finite Newton iterate", float("inf"))
        P = 2.0 * (Q - q) / dt - p
        return Q, P, it, res

    def step(self, state, dt):
        q, p = self.split(state)
        Q, P, _, _ = self.advance(q, p, dt)
        return self.join(Q, P)

    def energy(self, state) -> EnergyBreakdown:
        return energy(self.problem, state, self.mesh, self.nl, self.bnl)

    def dissipation(self, pbar) -> float:
        """``2 |v|^2 (+ 2 eps |gamma|^2_Gamma)`` at the midpoint velocity."""
        return 2.0 * float(pbar @ (self.Dq @ pbar))

    def norm(self, state) -> float:
        if self.problem.kind == "R":
            return norm_phase("H0", state, self.mesh)
        return norm_phase("Heps", state, self.mesh, self.problem.eps)


def step(problem: Problem, state, dt: float, mesh: Mesh, nl: Nonlinearity,
         bnl: BoundaryNonlinearity | None = None, tol: float = DEFAULT_TOL,
         max_iter: int = DEFAULT_MAX_ITER):
    if not dt > 0:
        raise ValueError("dt must be positive")
    state.validate(mesh)
    return Stepper(problem, mesh, nl, bnl, tol, max_iter).step(state, dt)


@dataclass
class TrajectoryRecord:
    problem: Problem
    dt: float
    times: np.ndarray
    states: list
    energies: list[EnergyBreakdown]
    norms: np.ndarray
    balance_residuals: np.ndarray  # one per step
    dissipation: np.ndarray  # one per step, at the midpoint
    newton_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def energy_total(self) -> np.ndarray:
        return np.array([e.total for e in self.energies])


def _n_steps(T, dt):
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    n = round(T / dt)
    if abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def simulate(problem: Problem, state0, T: float, dt: float, mesh: Mesh, nl: Nonlinearity,
             bnl: BoundaryNonlinearity | None = None, stride: int = 1,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> TrajectoryRecord:
    """Step from ``state0`` to time ``T``, sampling every ``stride`` steps.

    The balance residual of step ``k`` is
    ``E^{k+1} - E^k + dt * dissipation^{k+1/2}``.
    """
    nsteps = _n_steps(T, dt)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    state0.validate(mesh)
    st = Stepper(problem, mesh, nl, bnl, tol, max_iter)
    q, p = st.split(state0)
    E = st.energy(state0)
    times, states, energies, norms = [0.0], [state0], [E], [st.norm(state0)]
    balance = np.empty(nsteps)
    diss = np.empty(nsteps)
    iters = np.empty(nsteps, dtype=int)
    for k in range(nsteps):
        try:
            Q, P, it, _ = st.advance(q, p, dt)
        except StepFailure as exc:
            exc.time = k * dt
            raise
        new = st.join(Q, P)
        En = st.energy(new)
        diss[k] = st.dissipation((Q - q) / dt)
        balance[k] = En.total - E.total + dt * diss[k]
        iters[k] = it
        q, p, E = Q, P, En
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            states.append(new)
            energies.append(En)
            norms.append(st.norm(new))
    return TrajectoryRecord(problem, dt, np.array(times), states, energies,
                            np.array(norms), balance, diss, iters)


@dataclass
class DecompositionResult:
    times: np.ndarray
    full: list  # zeta(t)
    k_part: list  # chi(t), zero initial data
    z_part: list  # xi(t) = zeta(t) - chi(t)
    norm_full: np.ndarray
    norm_k: np.ndarray
    norm_z: np.ndarray
    residual: float  # max scaled residual of the xi-system over all steps


def decomposition_run(zeta0: StateA, eps: float, beta: float, T: float, dt: float,
                      mesh: Mesh, nl: Nonlinearity, stride: int = 1,
                      tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> DecompositionResult:
    """Split a Problem (A) trajectory (with ``g = 0``) into decaying and bounded parts.

    ``chi = (w, w_t, theta, theta_t)`` solves the system with ``psi(s) =
    f(s) + beta s``, right-hand side ``beta u(t)`` and zero data;
    ``xi = zeta - chi`` should then solve the homogeneous system driven by
    ``psi(u) - psi(w)`` with data ``zeta0``.  The reported residual is that
    of the xi-system evaluated on the stored discrete states.
    """
    if nl.ell2 is None:
        raise ValueError("nonlinearity must declare ell2 for the decomposition")
    if beta < nl.ell2:
        raise ValueError(f"beta={beta} must be >= ell2={nl.ell2}")
    nsteps = _n_steps(T, dt)
    problem = Problem("A", eps)
    zeta0.validate(mesh)
    st = Stepper(problem, mesh, nl, None, tol, max_iter)
    psi = shifted(nl, beta)
    n = mesh.n_nodes
    q, p = st.split(zeta0)
    qc, pc = np.zeros_like(q), np.zeros_like(p)
    times, full, kp, zp = [0.0], [zeta0], [StateA.zeros(mesh)], [zeta0]
    worst = 0.0
    for k in range(nsteps):
        Q, P, _, _ = st.advance(q, p, dt)
        load = np.zeros_like(q)
        load[:n] = beta * mesh.weights * 0.5 * (Q[:n] + q[:n])
        Qc, Pc, _, _ = st.advance(qc, pc, dt, nl=psi, load=load)
        # residual of the xi-system: linear part on xi plus psi(u) - psi(w)
        qx, px, Qx = q - qc, p - pc, Q - Qc
        Px = P - Pc
        L = st._linear_part(dt)
        coupling = st.grad_bar(Q, q, psi) - st.grad_bar(Qc, qc, psi)
        r = L @ (Qx - qx) - (2.0 / dt) * (st.Mq @ px) + st.Kq @ qx + coupling
        kin = (Qx - qx) / dt - 0.5 * (Px + px)
        worst = max(worst, st.scaled(r, dt), float(np.max(np.abs(kin))) * dt)
        q, p, qc, pc = Q, P, Qc, Pc
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            z = st.join(Q, P)
            c = st.join(Qc, Pc)
            full.append(z)
            kp.append(c)
            zp.append(z - c)
    nrm = lambda s: norm_phase("Heps", s, mesh, eps)
    return DecompositionResult(
        np.array(times), full, kp, zp,
        np.array([nrm(s) for s in full]), np.array([nrm(s) for s in kp]),
        np.array([nrm(s) for s in zp]), worst,
    )
