"""Stretched layer coordinates and the map from (x, t, eps) to the extended variables."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicHermiteSpline

from .errors import NumericalError, SpecificationError
from .spectral import SpatialSpectrum, SpectralData


def _spatial(spectral) -> SpatialSpectrum:
    return spectral.spatial if isinstance(spectral, SpectralData) else spectral


def _inv_sqrt(lam):
    # principal branch; Re sqrt(lam) > 0 whenever Re lam > 0
    return 1.0 / np.sqrt(np.asarray(lam, dtype=complex))


@dataclass(frozen=True)
class StretchMap:
    """Layer coordinates ``phi[i, l]`` for mode ``i`` and wall ``l`` (0: x=0, 1: x=1).

    ``phi[i, 0](x)`` integrates ``1/sqrt(lam_i)`` from 0 to x and
    ``phi[i, 1](x)`` from x to 1, so both vanish at their own wall and have
    nonnegative real part inside the interval.
    """

    nodes: np.ndarray
    values: np.ndarray  # (m, n, 2)
    spatial: SpatialSpectrum = field(repr=False)
    epsilon: float | None = None
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        slopes = self._slope(self.nodes)
        object.__setattr__(self, "_interp", CubicHermiteSpline(self.nodes, self.values, slopes, axis=0))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def _slope(self, x):
        r = _inv_sqrt(self.spatial.lam_at(x))
        return np.stack([r, -r], axis=-1)

    def phi(self, x):
        return self._interp(np.asarray(x, dtype=float))

    def dphi(self, x):
        """Exact first derivative ``+-1/sqrt(lam_i(x))``."""
        return self._slope(np.asarray(x, dtype=float))

    def d2phi(self, x):
        x = np.asarray(x, dtype=float)
        lam = self.spatial.lam_at(x).astype(complex)
        dlam = self.spatial.lam_at(x, 1)
        r = -0.5 * dlam * lam ** -1.5
        return np.stack([r, -r], axis=-1)

    def with_epsilon(self, epsilon: float) -> "StretchMap":
        if not 0.0 < epsilon < 1.0:
            raise SpecificationError(f"epsilon must lie in (0, 1), got {epsilon}")
        return replace(self, epsilon=float(epsilon))

    def xi(self, x, epsilon: float | None = None):
        eps = self.epsilon if epsilon is None else epsilon
        if eps is None:
            raise SpecificationError("stretch map has no epsilon; call with_epsilon first")
        return self.phi(x) / eps**1.5


def build_stretch_map(spectral, epsilon: float | None = None, quad_tol: float = 1e-10,
                      initial_nodes: int = 33, max_nodes: int = 4097) -> StretchMap:
    """Tabulate the layer coordinates by adaptive quadrature.

    The tabulation is refined by doubling until Hermite interpolation at the
    midpoints agrees with direct quadrature to ``quad_tol``.

    Raises:
        NumericalError: quadrature fails to converge, or the tabulation
            cannot reach ``quad_tol`` within ``max_nodes``.
    """
    if not 0.0 < quad_tol <= 1e-4:
        raise SpecificationError(f"quad_tol must lie in (0, 1e-4], got {quad_tol}")
    sp = _spatial(spectral)
    if np.any(sp.lam.real <= 0.0):
        raise SpecificationError("layer coordinates need Re lambda > 0")
    n = sp.n

    def integrand(s, i):
        return complex(_inv_sqrt(sp.lam_at(s)[i]))

    def integral(a, b, i, wall):
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                val, err = quad(integrand, a, b, args=(i,), complex_func=True,
                                epsabs=0.1 * quad_tol, epsrel=0.0, limit=200)
            except IntegrationWarning as exc:
                raise NumericalError(f"quadrature for layer coordinate i={i}, l={wall + 1} failed: {exc}") from exc
        return val

    def tabulate(nodes):
        vals = np.zeros((nodes.size, n, 2), dtype=complex)
        for i in range(n):
            pieces = np.array([integral(a, b, i, 0) for a, b in zip(nodes[:-1], nodes[1:])])
            cum = np.concatenate([[0.0], np.cumsum(pieces)])
            vals[:, i, 0] = cum
            vals[:, i, 1] = cum[-1] - cum
            vals[-1, i, 1] = 0.0
        return vals

    m = initial_nodes
    while True:
        nodes = np.linspace(0.0, 1.0, m)
        smap = StretchMap(nodes, tabulate(nodes), sp, epsilon)
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        direct = np.empty((mids.size, n), dtype=complex)
        for i in range(n):
            direct[:, i] = [integral(a, b, i, 0) for a, b in zip(nodes[:-1], mids)]
        direct += smap.values[:-1, :, 0]
        if np.abs(smap.phi(mids)[:, :, 0] - direct).max() < quad_tol:
            return smap
        if 2 * m - 1 > max_nodes:
            raise NumericalError("layer-coordinate tabulation did not reach the requested tolerance")
        m = 2 * m - 1


@dataclass(frozen=True)
class RegularizedPoint:
    x: float
    t: float
    epsilon: float
    xi: np.ndarray  # (n, 2)
    tau: float
    mu: np.ndarray  # (n,)
    exp_mu: np.ndarray  # (n,)


def stretched_time(t, epsilon: float):
    """``tau = ln((t + eps)/eps)/eps``."""
    return np.log1p(np.asarray(t, dtype=float) / epsilon) / epsilon


def exp_mu(t, epsilon: float, beta0):
    """``((t + eps)/eps)**beta_j(0)`` with the principal complex power; shape ``t.shape + (n,)``."""
    ratio = 1.0 + np.asarray(t, dtype=float) / epsilon
    return np.power(ratio[..., None].astype(complex), np.asarray(beta0, dtype=complex))


def regularize(point, smap: StretchMap, spectral) -> RegularizedPoint:
    """Stretched coordinates of a physical point ``(x, t)``."""
    x, t = (float(v) for v in point)
    eps = smap.epsilon
    if eps is None:
        raise SpecificationError("stretch map has no epsilon; call with_epsilon first")
    beta0 = spectral.temporal.beta0
    s = np.log1p(t / eps)
    return RegularizedPoint(
        x=x,
        t=t,
        epsilon=eps,
        xi=smap.xi(x),
        tau=s / eps,
        mu=beta0 * s,
        exp_mu=exp_mu(t, eps, beta0),
    )
