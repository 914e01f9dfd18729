"""Chebyshev nodes on [0, 1], barycentric interpolation, and Hermite time tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline


def chebyshev_lobatto(m: int) -> np.ndarray:
    """``m`` Chebyshev extreme points mapped to [0, 1], increasing, endpoints exact."""
    k = np.arange(m)
    x = 0.5 * (1.0 - np.cos(np.pi * k / (m - 1)))
    x[0], x[-1] = 0.0, 1.0
    return x


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    m = nodes.size
    w = np.ones(m)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def interpolation_matrix(nodes: np.ndarray, x) -> np.ndarray:
    """Matrix ``B`` with ``B @ values(nodes) = values(x)`` for Chebyshev-Lobatto nodes."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = barycentric_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        c = w / diff
        B = c / c.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    B[rows] = exact[rows].astype(float)
    return B


def differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    w = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    Dm = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(Dm, 0.0)
    np.fill_diagonal(Dm, -Dm.sum(axis=1))
    return Dm


@dataclass(frozen=True)
class TimeField:
    """Values and time derivatives on a time grid, evaluated by cubic Hermite interpolation.

    ``values`` and ``derivs`` have shape ``(len(t),) + trailing``.
    """

    t: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.t, self.values, self.derivs, axis=0))

    @property
    def shape(self):
        return self.values.shape[1:]

    def __call__(self, t, nu: int = 0):
        return self._spline(np.asarray(t, dtype=float), nu)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    @classmethod
    def zeros(cls, t, shape, dtype=complex):
        z = np.zeros((len(t),) + tuple(shape), dtype=dtype)
        return cls(np.asarray(t, float), z, z.copy())

    def __mul__(self, c):
        return TimeField(self.t, self.values * c, self.derivs * c)

    __rmul__ = __mul__

    def __add__(self, other):
        return TimeField(self.t, self.values + other.values, self.derivs + other.derivs)
