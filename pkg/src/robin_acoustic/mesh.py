"""Uniform 1D mesh on (0, L) and the inner products of both phase spaces.

The boundary is the two endpoints, so L2(Gamma) is a plain sum over the
nodes ``0`` and ``n_nodes - 1``.  The L2(Omega) product uses lumped
(trapezoid) weights and the gradient is piecewise constant on cells, which
gives symmetric matrices and an exact discrete integration by parts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

__all__ = [
    "Mesh",
    "build_mesh",
    "inner",
    "norm_phase",
    "check_field",
    "check_boundary_field",
]


@dataclass(frozen=True)
class Mesh:
    """Uniform grid with ``n_cells + 1`` nodes on ``[0, length]``."""

    n_cells: int
    length: float
    x: np.ndarray = field(repr=False, compare=False)
    weights: np.ndarray = field(repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def boundary_indices(self) -> tuple[int, int]:
        return (0, self.n_nodes - 1)

    def trace(self, u: np.ndarray) -> np.ndarray:
        """Boundary values ``u|_Gamma`` as a length-2 array."""
        return np.array([u[0], u[-1]], dtype=float)

    @cached_property
    def mass(self) -> sparse.dia_matrix:
        """Lumped mass matrix ``M = diag(weights)``."""
        return sparse.diags(self.weights)

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """Matrix of ``<grad a, grad b>`` (cellwise constant gradient)."""
        n = self.n_nodes
        main = np.full(n, 2.0 / self.h)
        main[0] = main[-1] = 1.0 / self.h
        off = np.full(n - 1, -1.0 / self.h)
        return sparse.diags([off, main, off], [-1, 0, 1], format="csr")

    @cached_property
    def trace_matrix(self) -> sparse.csr_matrix:
        """The 2 x n trace operator ``B`` with ``B u = u|_Gamma``."""
        n = self.n_nodes
        return sparse.csr_matrix(([1.0, 1.0], ([0, 1], [0, n - 1])), shape=(2, n))

    @cached_property
    def boundary_mass(self) -> sparse.csr_matrix:
        """``B^T B``: the L2(Gamma) form pulled back to nodal fields."""
        return (self.trace_matrix.T @ self.trace_matrix).tocsr()


def build_mesh(n_cells: int, length: float = 1.0) -> Mesh:
    if int(n_cells) != n_cells or n_cells < 2:
        raise ValueError(f"n_cells must be an integer >= 2, got {n_cells!r}")
    if not math.isfinite(length) or length <= 0:
        raise ValueError(f"length must be finite and positive, got {length!r}")
    n_cells = int(n_cells)
    length = float(length)
    h = length / n_cells
    x = np.linspace(0.0, length, n_cells + 1)
    w = np.full(n_cells + 1, h)
    w[0] = w[-1] = 0.5 * h
    x.setflags(write=False)
    w.setflags(write=False)
    return Mesh(n_cells, length, x, w)


def check_field(a, mesh: Mesh, name: str = "field") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (mesh.n_nodes,):
        raise ValueError(f"{name} has shape {a.shape}, expected ({mesh.n_nodes},)")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def check_boundary_field(a, name: str = "boundary field") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (2,):
        raise ValueError(f"{name} has shape {a.shape}, expected (2,)")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def inner(kind: str, a, b, mesh: Mesh) -> float:
    """Inner product of two nodal (or boundary) arrays.

    Parameters
    ----------
    kind : {"L2", "H1", "L2Gamma"}
        ``L2`` and ``H1`` take nodal fields; ``L2Gamma`` takes either
        length-2 boundary arrays or nodal fields (their traces are used).
    """
    if kind == "L2":
        a, b = check_field(a, mesh, "a"), check_field(b, mesh, "b")
        return float(np.dot(mesh.weights * a, b))
    if kind == "H1":
        a, b = check_field(a, mesh, "a"), check_field(b, mesh, "b")
        da = np.diff(a) / mesh.h
        db = np.diff(b) / mesh.h
        return float(mesh.h * np.dot(da, db) + np.dot(mesh.weights * a, b))
    if kind == "L2Gamma":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"mismatched shapes {a.shape} and {b.shape}")
        if a.shape == (mesh.n_nodes,):
            a, b = mesh.trace(a), mesh.trace(b)
        a, b = check_boundary_field(a, "a"), check_boundary_field(b, "b")
        return float(a[0] * b[0] + a[1] * b[1])
    raise ValueError(f"unknown inner product kind {kind!r}")


def norm_phase(space: str, state, mesh: Mesh, eps: float | None = None) -> float:
    """Phase-space norm of a state.

    ``space="H0"`` expects a state with ``u, v`` and returns
    ``sqrt(|u|_1^2 + |u|_Gamma^2 + |v|^2)``.  ``space="Heps"`` expects
    ``u, v, delta, gamma`` and returns
    ``sqrt(|u|_1^2 + |v|^2 + eps |delta|_Gamma^2 + |gamma|_Gamma^2)``;
    note the trace of ``u`` is not part of this norm.
    """
    u, v = state.u, state.v
    sq = inner("H1", u, u, mesh) + inner("L2", v, v, mesh)
    if space == "H0":
        sq += inner("L2Gamma", u, u, mesh)
    elif space == "Heps":
        if eps is None or not (0.0 < eps <= 1.0):
            raise ValueError(f"eps must lie in (0, 1], got {eps!r}")
        sq += eps * inner("L2Gamma", state.delta, state.delta, mesh)
        sq += inner("L2Gamma", state.gamma, state.gamma, mesh)
    else:
        raise ValueError(f"unknown phase space {space!r}")
    return math.sqrt(max(sq, 0.0))
