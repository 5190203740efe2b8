"""Nonlinearities, energy functionals and the Lyapunov functional E0."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh, inner, norm_phase
from .state import StateA, StateR

__all__ = [
    "Problem",
    "Nonlinearity",
    "BoundaryNonlinearity",
    "EnergyBreakdown",
    "E0Result",
    "builtin",
    "energy",
    "lyapunov_E0",
    "calibrate_c2",
    "verify_assumptions",
    "discrete_gradient",
    "shifted",
]

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Problem:
    """``Problem("R")`` or ``Problem("A", eps)``."""

    kind: str
    eps: float | None = None

    def __post_init__(self):
        if self.kind == "R":
            if self.eps is not None:
                raise ValueError("Problem R takes no eps")
        elif self.kind == "A":
            if self.eps is None or not (0.0 < self.eps <= 1.0):
                raise ValueError(f"eps must lie in (0, 1], got {self.eps!r}")
        else:
            raise ValueError(f"unknown problem {self.kind!r}")

    def __str__(self):
        return "R" if self.kind == "R" else f"A(eps={self.eps:g})"


@dataclass(frozen=True)
class Nonlinearity:
    """Interior nonlinearity ``f`` with ``F(0) = 0`` and its constants.

    ``ell`` bounds ``|f'(s)| <= ell (1 + s^2)``; ``mu0`` and ``kappa_f``
    give ``2 int F(xi) >= -(1 - mu0) |xi|_1^2 - kappa_f``; ``ell1`` and
    ``ell2`` are the regularity constants ``|f''| <= ell1 (1 + |s|)`` and
    ``f' >= -ell2`` (``None`` when not declared).
    """

    name: str
    f: Func
    fprime: Func
    F: Func
    ell: float
    mu0: float
    kappa_f: float
    ell1: float | None = None
    ell2: float | None = None
    params: dict = field(default_factory=dict)
    dgrad: Callable | None = field(default=None, repr=False)


@dataclass(frozen=True)
class BoundaryNonlinearity:
    """Boundary nonlinearity ``g`` with ``|g'| <= rho`` and lower-bound constants."""

    name: str
    f: Func
    fprime: Func
    F: Func
    rho: float
    mu1: float
    kappa_g: float
    params: dict = field(default_factory=dict)
    dgrad: Callable | None = field(default=None, repr=False)

    # aliases matching the usual notation
    @property
    def g(self) -> Func:
        return self.f

    @property
    def G(self) -> Func:
        return self.F


def builtin(name: str, boundary: bool = False, **params):
    """Look up a catalog nonlinearity.

    Interior names: ``cubic``, ``cubic_minus_linear`` (param ``lam`` in
    [0, 1)), ``zero``.  Boundary names (``boundary=True``): ``zero``,
    ``bounded_sine`` (param ``rho >= 0``).
    """
    if boundary:
        if name == "zero":
            z = np.zeros_like
            return BoundaryNonlinearity("zero", z, z, z, rho=0.0, mu1=1.0, kappa_g=0.0,
                                        dgrad=lambda a, b: np.zeros_like(a))
        if name == "bounded_sine":
            rho = float(params.get("rho", 1.0))
            if not rho >= 0:
                raise ValueError(f"rho must be >= 0, got {rho}")
            return BoundaryNonlinearity(
                "bounded_sine",
                lambda s: rho * np.sin(s),
                lambda s: rho * np.cos(s),
                lambda s: rho * (1.0 - np.cos(s)),
                rho=rho, mu1=1.0, kappa_g=0.0, params={"rho": rho},
                # (G(a) - G(b)) / (a - b) = rho sin(mid) sinc(half-difference)
                dgrad=lambda a, b: rho * np.sin(0.5 * (a + b)) * np.sinc((a - b) / (2 * np.pi)),
            )
        raise ValueError(f"unknown boundary nonlinearity {name!r}")

    if name == "cubic":
        return Nonlinearity(
            "cubic",
            lambda s: s ** 3,
            lambda s: 3.0 * s ** 2,
            lambda s: 0.25 * s ** 4,
            ell=3.0, mu0=1.0, kappa_f=0.0, ell1=6.0, ell2=0.0,
            dgrad=lambda a, b: 0.25 * (a * a + b * b) * (a + b),
        )
    if name == "cubic_minus_linear":
        lam = float(params.get("lam", 0.5))
        if not (0.0 <= lam < 1.0):
            raise ValueError(f"lam must lie in [0, 1), got {lam}")
        # 2F(s) = s^4/2 - lam s^2 >= -lam s^2, hence mu0 = 1 - lam, kappa_f = 0
        return Nonlinearity(
            "cubic_minus_linear",
            lambda s: s ** 3 - lam * s,
            lambda s: 3.0 * s ** 2 - lam,
            lambda s: 0.25 * s ** 4 - 0.5 * lam * s ** 2,
            ell=3.0, mu0=1.0 - lam, kappa_f=0.0, ell1=6.0, ell2=lam,
            params={"lam": lam},
            dgrad=lambda a, b: 0.25 * (a * a + b * b) * (a + b) - 0.5 * lam * (a + b),
        )
    if name == "zero":
        z = np.zeros_like
        return Nonlinearity("zero", z, z, z, ell=0.0, mu0=1.0, kappa_f=0.0, ell1=0.0, ell2=0.0,
                            dgrad=lambda a, b: np.zeros_like(a))
    raise ValueError(f"unknown nonlinearity {name!r}")


@dataclass(frozen=True)
class EnergyBreakdown:
    quadratic: float
    potential: float
    boundary_potential: float

    @property
    def total(self) -> float:
        return self.quadratic + self.potential + self.boundary_potential


def energy(problem: Problem, state, mesh: Mesh, nl: Nonlinearity,
           bnl: BoundaryNonlinearity | None = None) -> EnergyBreakdown:
    """Bracketed energy of either problem.

    R: ``|phi|_H0^2 + 2 int F(u)``.
    A: ``|zeta|_Heps^2 + 2 int F(u) + 2 eps int_Gamma G(delta)``.
    """
    pot = 2.0 * float(np.dot(mesh.weights, nl.F(np.asarray(state.u, dtype=float))))
    if problem.kind == "R":
        if not isinstance(state, StateR):
            raise TypeError("Problem R needs a StateR")
        return EnergyBreakdown(norm_phase("H0", state, mesh) ** 2, pot, 0.0)
    if not isinstance(state, StateA):
        raise TypeError("Problem A needs a StateA")
    eps = problem.eps
    bpot = 0.0 if bnl is None else 2.0 * eps * float(np.sum(bnl.F(state.delta)))
    return EnergyBreakdown(norm_phase("Heps", state, mesh, eps) ** 2, pot, bpot)


@dataclass(frozen=True)
class E0Result:
    value: float
    lower: float
    upper: float

    @property
    def violated(self) -> bool:
        return not (self.lower <= self.value <= self.upper)


def _e0_value(phi: StateR, mesh: Mesh, nl: Nonlinearity, mu0: float) -> float:
    return (norm_phase("H0", phi, mesh) ** 2
            + 2.0 * mu0 * inner("L2", phi.u, phi.v, mesh)
            + 2.0 * float(np.dot(mesh.weights, nl.F(phi.u))))


def lyapunov_E0(phi: StateR, mesh: Mesh, nl: Nonlinearity,
                c1: float = 0.25, c2: float = 1.0, mu0: float | None = None) -> E0Result:
    """``E0 = |phi|^2 + 2 mu0 <u, v> + 2 int F(u)`` with its sandwich bounds.

    Bounds are ``c1 |phi|^2 - kappa_f`` and ``c2 |phi| (1 + |phi|^3)``.
    """
    mu0 = nl.mu0 if mu0 is None else mu0
    val = _e0_value(phi, mesh, nl, mu0)
    r = norm_phase("H0", phi, mesh)
    return E0Result(val, c1 * r * r - nl.kappa_f, c2 * r * (1.0 + r ** 3))


def calibrate_c2(mesh: Mesh, nl: Nonlinearity, rng: np.random.Generator,
                 n_samples: int = 200, margin: float = 1.5,
                 norm_range: tuple[float, float] = (1e-3, 10.0)) -> float:
    """``margin`` times the largest ``E0 / (|phi| (1 + |phi|^3))`` on a random scan.

    Directions are smooth random states; norms are log-uniform in
    ``norm_range``.
    """
    from .integrate import random_state_R  # local: integrate imports this module

    worst = 0.0
    lo, hi = np.log(norm_range[0]), np.log(norm_range[1])
    for _ in range(n_samples):
        target = float(np.exp(rng.uniform(lo, hi)))
        phi = random_state_R(mesh, rng, target)
        r = norm_phase("H0", phi, mesh)
        worst = max(worst, _e0_value(phi, mesh, nl, nl.mu0) / (r * (1.0 + r ** 3)))
    return margin * worst


def verify_assumptions(nl, rng: np.random.Generator | None = None,
                       mesh: Mesh | None = None, grid=None) -> dict[str, bool]:
    """Scan the declared constants of a catalog nonlinearity.

    Checks ``F' = f`` by central differences, the growth bound on ``f'``
    (``|g'| <= rho`` for boundary terms) and, when a mesh is given, the
    lower bound ``2 int F >= -(1 - mu0) |xi|_1^2 - kappa_f`` on random fields.
    """
    s = np.linspace(-10.0, 10.0, 2001) if grid is None else np.asarray(grid, dtype=float)
    hstep = 1e-5
    fd = (nl.F(s + hstep) - nl.F(s - hstep)) / (2 * hstep)
    scale = np.maximum(1.0, np.abs(nl.f(s)))
    out = {"antiderivative": bool(np.all(np.abs(fd - nl.f(s)) <= 1e-6 * scale))}
    if isinstance(nl, BoundaryNonlinearity):
        out["growth"] = bool(np.all(np.abs(nl.fprime(s)) <= nl.rho + 1e-12))
        out["lower_bound"] = bool(np.all(2 * nl.F(s) >= -(1 - nl.mu1) * s * s - nl.kappa_g - 1e-12))
        return out
    out["growth"] = bool(np.all(np.abs(nl.fprime(s)) <= nl.ell * (1 + s * s) + 1e-12))
    if mesh is not None:
        rng = np.random.default_rng(0) if rng is None else rng
        ok = True
        for _ in range(100):
            xi = rng.uniform(-1, 1) * 3.0 * rng.standard_normal() * np.cos(
                rng.uniform(0, 4 * math.pi) * mesh.x + rng.uniform(0, 2 * math.pi))
            lhs = 2.0 * float(np.dot(mesh.weights, nl.F(xi)))
            rhs = -(1.0 - nl.mu0) * inner("H1", xi, xi, mesh) - nl.kappa_f
            ok &= lhs >= rhs - 1e-12
        out["lower_bound"] = bool(ok)
    return out


def discrete_gradient(nl, new: np.ndarray, old: np.ndarray, threshold: float = 1e-12) -> np.ndarray:
    """Nodewise ``(F(new) - F(old)) / (new - old)``.

    Uses the nonlinearity's cancellation-free formula when it has one;
    otherwise the plain quotient with ``f`` at the midpoint wherever
    ``|new - old| < threshold``.
    """
    if nl.dgrad is not None:
        return nl.dgrad(new, old)
    d = new - old
    small = np.abs(d) < threshold
    safe = np.where(small, 1.0, d)
    q = (nl.F(new) - nl.F(old)) / safe
    return np.where(small, nl.f(0.5 * (new + old)), q)


def shifted(nl: Nonlinearity, beta: float) -> Nonlinearity:
    """``psi(s) = f(s) + beta s`` with antiderivative ``F(s) + beta s^2 / 2``."""
    base = nl.dgrad
    return Nonlinearity(
        f"{nl.name}+{beta:g}s",
        lambda s: nl.f(s) + beta * s,
        lambda s: nl.fprime(s) + beta,
        lambda s: nl.F(s) + 0.5 * beta * s * s,
        ell=nl.ell + beta, mu0=nl.mu0, kappa_f=nl.kappa_f,
        ell1=nl.ell1, ell2=None if nl.ell2 is None else max(nl.ell2 - beta, 0.0),
        params={**nl.params, "beta": beta},
        dgrad=None if base is None else (lambda a, b: base(a, b) + 0.5 * beta * (a + b)),
    )
