"""Phase-space points for both problems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, check_boundary_field, check_field

__all__ = ["StateR", "StateA"]


@dataclass(frozen=True)
class StateR:
    """``phi = (u, u_t)`` in H0."""

    u: np.ndarray
    v: np.ndarray

    def validate(self, mesh: Mesh) -> "StateR":
        check_field(self.u, mesh, "u")
        check_field(self.v, mesh, "v")
        return self

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])

    @classmethod
    def from_flat(cls, y: np.ndarray) -> "StateR":
        n = y.size // 2
        return cls(y[:n].copy(), y[n:].copy())

    @classmethod
    def zeros(cls, mesh: Mesh) -> "StateR":
        n = mesh.n_nodes
        return cls(np.zeros(n), np.zeros(n))

    def __sub__(self, other: "StateR") -> "StateR":
        return StateR(self.u - other.u, self.v - other.v)

    def __add__(self, other: "StateR") -> "StateR":
        return StateR(self.u + other.u, self.v + other.v)


@dataclass(frozen=True)
class StateA:
    """``zeta = (u, u_t, delta, delta_t)`` in H_eps.

    ``delta`` and ``gamma`` are length-2 arrays (one value per endpoint).
    """

    u: np.ndarray
    v: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray

    def validate(self, mesh: Mesh) -> "StateA":
        check_field(self.u, mesh, "u")
        check_field(self.v, mesh, "v")
        check_boundary_field(self.delta, "delta")
        check_boundary_field(self.gamma, "gamma")
        return self

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u, self.v, self.delta, self.gamma])

    @classmethod
    def from_flat(cls, y: np.ndarray) -> "StateA":
        n = (y.size - 4) // 2
        return cls(y[:n].copy(), y[n:2 * n].copy(), y[2 * n:2 * n + 2].copy(), y[2 * n + 2:].copy())

    @classmethod
    def zeros(cls, mesh: Mesh) -> "StateA":
        n = mesh.n_nodes
        return cls(np.zeros(n), np.zeros(n), np.zeros(2), np.zeros(2))

    def __sub__(self, other: "StateA") -> "StateA":
        return StateA(self.u - other.u, self.v - other.v,
                      self.delta - other.delta, self.gamma - other.gamma)

    def __add__(self, other: "StateA") -> "StateA":
        return StateA(self.u + other.u, self.v + other.v,
                      self.delta + other.delta, self.gamma + other.gamma)
