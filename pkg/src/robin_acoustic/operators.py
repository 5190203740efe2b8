"""Discrete Robin Laplacian, the generators R and A_eps, and their adjoints.

State vectors are stacked as ``[u, v]`` for Problem (R) and
``[u, v, delta, gamma]`` for Problem (A).  Generators are returned as
sparse matrices acting on those stacks; everything that takes a weak-form
inverse uses the lumped mass, so ``M^{-1}`` is diagonal.

The acoustic coupling ``delta_t = d_n u`` is never differenced: the flux
term left by integrating the Laplacian by parts is replaced by ``gamma``,
which enters the ``v`` row through ``M^{-1} B^T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, sparse

from .mesh import Mesh

__all__ = [
    "EigenSolverError",
    "RobinLaplacian",
    "Generator",
    "EigenResult",
    "assemble",
    "gram",
    "eigenpairs",
    "adjoint_defect",
    "expected_adjoint",
    "dump_triplets",
]


class EigenSolverError(RuntimeError):
    pass


def _check_eps(eps) -> float:
    if eps is None or not (0.0 < float(eps) <= 1.0):
        raise ValueError(f"eps must lie in (0, 1], got {eps!r}")
    return float(eps)


@dataclass(frozen=True)
class RobinLaplacian:
    """Bilinear form ``<grad u, grad w> + <u, w>_Gamma`` and the lumped mass."""

    stiffness: sparse.csr_matrix
    mass: sparse.dia_matrix

    def __matmul__(self, u):
        return self.stiffness @ u

    def form(self, a, b) -> float:
        return float(a @ (self.stiffness @ b))


@dataclass(frozen=True)
class Generator:
    matrix: sparse.csr_matrix
    label: str
    eps: float | None = None

    def __matmul__(self, y):
        return self.matrix @ y

    def apply(self, state):
        return type(state).from_flat(self.matrix @ state.flat())


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray

    @property
    def poincare_constant(self) -> float:
        return 1.0 / math.sqrt(self.eigenvalues[0])


def _blocks(mesh: Mesh):
    n = mesh.n_nodes
    I = sparse.identity(n, format="csr")
    Minv = sparse.diags(1.0 / mesh.weights)
    K, M, B = mesh.stiffness, mesh.mass, mesh.trace_matrix
    return n, I, Minv, K, M, B


def _generator_R(mesh: Mesh) -> sparse.csr_matrix:
    n, I, Minv, K, M, B = _blocks(mesh)
    S = K + M + mesh.boundary_mass
    return sparse.bmat([[None, I], [-Minv @ S, -I]], format="csr")


def _generator_A(mesh: Mesh, eps: float) -> sparse.csr_matrix:
    n, I, Minv, K, M, B = _blocks(mesh)
    I2 = sparse.identity(2, format="csr")
    Z = sparse.csr_matrix((2, 2))
    return sparse.bmat(
        [
            [sparse.csr_matrix((n, n)), I, None, None],
            [-Minv @ (K + M), -I, None, Minv @ B.T],
            [None, None, Z, I2],
            [None, -B, -eps * I2, -eps * I2],
        ],
        format="csr",
    )


def assemble(mesh: Mesh, kind: str, eps: float | None = None):
    """Assemble ``robin_laplacian``, ``generator_R`` or ``generator_A``."""
    if kind == "robin_laplacian":
        return RobinLaplacian((mesh.stiffness + mesh.boundary_mass).tocsr(), mesh.mass)
    if kind == "generator_R":
        return Generator(_generator_R(mesh), "R")
    if kind == "generator_A":
        eps = _check_eps(eps)
        return Generator(_generator_A(mesh, eps), "A", eps)
    raise ValueError(f"unknown operator kind {kind!r}")


def gram(mesh: Mesh, space: str, eps: float | None = None) -> sparse.csr_matrix:
    """Gram matrix ``W`` with ``<x, y> = x^T W y`` on stacked states."""
    K, M = mesh.stiffness, mesh.mass
    if space == "H0":
        return sparse.block_diag([K + M + mesh.boundary_mass, M], format="csr")
    if space == "Heps":
        eps = _check_eps(eps)
        I2 = sparse.identity(2)
        return sparse.block_diag([K + M, M, eps * I2, I2], format="csr")
    raise ValueError(f"unknown phase space {space!r}")


def eigenpairs(mesh: Mesh, k: int = 1) -> EigenResult:
    """Smallest ``k`` eigenpairs of ``(K + B^T B) w = lambda M w``.

    The lumped mass is diagonal, so the pencil is reduced to a symmetric
    tridiagonal matrix and handed to LAPACK's tridiagonal solver.
    """
    if not (1 <= k <= mesh.n_nodes):
        raise ValueError(f"k must lie in [1, {mesh.n_nodes}], got {k}")
    A = (mesh.stiffness + mesh.boundary_mass).tocsr()
    s = 1.0 / np.sqrt(mesh.weights)
    d = A.diagonal() * s * s
    e = A.diagonal(1) * s[:-1] * s[1:]
    try:
        lam, y = linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"tridiagonal eigensolve failed: {exc}") from exc
    w = y * s[:, None]
    # Robin modes never vanish at x=0, so this pins the sign
    w *= np.where(w[0] < 0, -1.0, 1.0)
    res = np.array([
        np.linalg.norm(A @ w[:, j] - lam[j] * (mesh.weights * w[:, j])) for j in range(k)
    ])
    bad = res > 1e-10 * np.maximum(lam, 1.0)
    if np.any(bad) or np.any(lam <= 0):
        raise EigenSolverError(f"eigenpairs failed the residual check: {res}")
    return EigenResult(lam, w, res)


def expected_adjoint(mesh: Mesh, gen: Generator) -> sparse.csr_matrix:
    """Direct discretization of the adjoint block pattern.

    For R the adjoint is ``-[[0, 1], [Delta_R - 1, 1]]``.  For A_eps it is
    ``-[[0,1,0,0], [Delta-1,1,0,0], [0,0,0,1], [0,-1,-eps,eps]]`` where the
    Laplacian's boundary flux in the adjoint domain is the fourth component
    (``d_n chi = xi``).
    """
    n, I, Minv, K, M, B = _blocks(mesh)
    if gen.label == "R":
        S = K + M + mesh.boundary_mass
        return sparse.bmat([[None, -I], [Minv @ S, -I]], format="csr")
    eps = gen.eps
    I2 = sparse.identity(2, format="csr")
    Z = sparse.csr_matrix((2, 2))
    return sparse.bmat(
        [
            [sparse.csr_matrix((n, n)), -I, None, None],
            [Minv @ (K + M), -I, None, -Minv @ B.T],
            [None, None, Z, -I2],
            [None, B, eps * I2, -eps * I2],
        ],
        format="csr",
    )


def adjoint_defect(gen: Generator, mesh: Mesh) -> float:
    """Frobenius norm of ``W^{-1} G^T W - expected`` for the right Gram ``W``."""
    W = gram(mesh, "H0") if gen.label == "R" else gram(mesh, "Heps", gen.eps)
    W = W.toarray()
    G = gen.matrix.toarray()
    if np.linalg.cond(W) > 1e14:
        raise AssertionError("Gram matrix is numerically singular")
    adj = np.linalg.solve(W, G.T @ W)
    return float(np.linalg.norm(adj - expected_adjoint(mesh, gen).toarray()))


def dump_triplets(matrix, path) -> Path:
    """Write ``row col value`` lines for every stored nonzero."""
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    path = Path(path)
    with path.open("w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
    return path
