"""Smooth eigen-decompositions of A(x) and D(t) with biorthogonal adjoints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from ._linalg import adjoint_system, inner, track_eigensystem
from .errors import SpecificationError
from .problem import ProblemSpec

DEGENERACY_TOL = 1e-8


def _check_grid(grid, lo, hi, label):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise SpecificationError(f"{label} grid needs at least two samples")
    if np.any(np.diff(grid) <= 0):
        raise SpecificationError(f"{label} grid must be strictly increasing")
    if grid[0] < lo - 1e-14 or grid[-1] > hi + 1e-14:
        raise SpecificationError(f"{label} grid leaves [{lo}, {hi}]")
    return grid


def _spline(grid, values):
    return CubicSpline(grid, values, axis=0)


@dataclass(frozen=True)
class SpatialSpectrum:
    """Eigen-fields of A(x): ``A b_i = lam_i b_i`` and adjoints with ``(b_i, b*_j) = delta_ij``.

    Arrays are indexed ``[sample, ...]``; eigenvectors are stored as columns.
    """

    x: np.ndarray
    lam: np.ndarray
    b: np.ndarray
    b_star: np.ndarray
    _splines: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        sp = {
            "lam": _spline(self.x, self.lam),
            "b": _spline(self.x, self.b),
            "b_star": _spline(self.x, self.b_star),
        }
        object.__setattr__(self, "_splines", sp)

    @property
    def n(self) -> int:
        return self.lam.shape[1]

    def lam_at(self, x, nu: int = 0):
        return self._splines["lam"](x, nu)

    def b_at(self, x, nu: int = 0):
        return self._splines["b"](x, nu)

    def b_star_at(self, x):
        return self._splines["b_star"](x)

    def self_coupling(self, x):
        """``(b_i'(x), b*_i(x))`` for every mode, shape ``x.shape + (n,)``."""
        db = self.b_at(x, 1)
        bs = self.b_star_at(x)
        return np.einsum("...ki,...ki->...i", db, bs.conj())


@dataclass(frozen=True)
class TemporalSpectrum:
    """Eigen-fields of D(t) and the coupling ``alpha[k, i, r] = (psi_i'(t_k), psi*_r(t_k))``."""

    t: np.ndarray
    beta: np.ndarray
    psi: np.ndarray
    psi_star: np.ndarray
    dpsi: np.ndarray
    alpha: np.ndarray
    _splines: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        sp = {
            name: _spline(self.t, getattr(self, name))
            for name in ("beta", "psi", "psi_star", "alpha")
        }
        object.__setattr__(self, "_splines", sp)

    @property
    def n(self) -> int:
        return self.beta.shape[1]

    @property
    def beta0(self) -> np.ndarray:
        return self.beta[0]

    def beta_at(self, t, nu: int = 0):
        return self._splines["beta"](t, nu)

    def psi_at(self, t):
        return self._splines["psi"](t)

    def psi_star_at(self, t):
        return self._splines["psi_star"](t)

    def alpha_at(self, t, nu: int = 0):
        return self._splines["alpha"](t, nu)


@dataclass(frozen=True)
class SpectralData:
    spatial: SpatialSpectrum
    temporal: TemporalSpectrum
    gamma: np.ndarray
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        x, t = self.spatial.x, self.temporal.t
        interp = RegularGridInterpolator((x, t), self.gamma, method="linear")
        object.__setattr__(self, "_interp", interp)

    @property
    def n(self) -> int:
        return self.spatial.n

    def gamma_at(self, x, t):
        """Bilinear interpolation of the tabulated ``gamma[i, r]``."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        pts = np.stack([x.ravel(), t.ravel()], axis=-1)
        return self._interp(pts).reshape(x.shape + self.gamma.shape[2:])


def decompose_spatial(spec: ProblemSpec, x_grid) -> SpatialSpectrum:
    """Continued eigenpairs of ``A(x)`` on ``x_grid`` with rescaled adjoints.

    Raises:
        DegeneracyError: two eigenvalues closer than 1e-8 at some sample.
    """
    x = _check_grid(x_grid, 0.0, 1.0, "x")
    mats = spec.A(x)
    lam, b = track_eigensystem(mats, x, DEGENERACY_TOL, what="matrix A(x)", coord="x")
    return SpatialSpectrum(x, lam, b, adjoint_system(mats, lam, b))


def decompose_temporal(spec: ProblemSpec, t_grid) -> TemporalSpectrum:
    """Continued eigenpairs of ``D(t)`` and the coupling matrix alpha.

    ``psi'`` is approximated by second-order differences on ``t_grid``
    (central inside, one-sided at the ends).
    """
    t = _check_grid(t_grid, 0.0, spec.T, "t")
    mats = spec.D(t)
    beta, psi = track_eigensystem(mats, t, DEGENERACY_TOL, what="matrix D(t)", coord="t")
    psi_star = adjoint_system(mats, beta, psi)
    if t.size >= 3:
        dpsi = np.gradient(psi, t, axis=0, edge_order=2)
    else:
        dpsi = np.gradient(psi, t, axis=0)
    # alpha[k, i, r] = (psi_i', psi*_r) = sum_m dpsi[k, m, i] conj(psi_star[k, m, r])
    alpha = np.einsum("kmi,kmr->kir", dpsi, psi_star.conj())
    return TemporalSpectrum(t, beta, psi, psi_star, dpsi, alpha)


def coupling_gamma(spatial: SpatialSpectrum, temporal: TemporalSpectrum, spec: ProblemSpec) -> SpectralData:
    """Tabulate ``gamma[x, t, i, r] = (D(t) b_i(x), b*_r(x))`` and bundle the spectra."""
    Dm = spec.D(temporal.t)
    Db = np.einsum("tpq,xqi->xtpi", Dm, spatial.b)
    gamma = np.einsum("xtpi,xpr->xtir", Db, spatial.b_star.conj())
    return SpectralData(spatial, temporal, gamma)


def gamma_exact(spec: ProblemSpec, spatial: SpatialSpectrum, x, t):
    """Direct recomputation of gamma at scattered points (no tabulation)."""
    b = spatial.b_at(x)
    bs = spatial.b_star_at(x)
    Db = np.einsum("...pq,...qi->...pi", spec.D(t), b)
    return np.einsum("...pi,...pr->...ir", Db, bs.conj())


def decompose(spec: ProblemSpec, x_grid, t_grid) -> SpectralData:
    spatial = decompose_spatial(spec, x_grid)
    temporal = decompose_temporal(spec, t_grid)
    return coupling_gamma(spatial, temporal, spec)


def spectral_residuals(spec: ProblemSpec, data: SpectralData) -> dict:
    """Worst eigen-residual (relative to the matrix norm) and biorthonormality defect."""
    sp, tp = data.spatial, data.temporal
    A = spec.A(sp.x)
    D = spec.D(tp.t)
    nA = np.maximum(np.linalg.norm(A, ord=2, axis=(1, 2)), 1.0)
    nD = np.maximum(np.linalg.norm(D, ord=2, axis=(1, 2)), 1.0)
    resA = np.linalg.norm(A @ sp.b - sp.b * sp.lam[:, None, :], axis=1).max(axis=1) / nA
    resD = np.linalg.norm(D @ tp.psi - tp.psi * tp.beta[:, None, :], axis=1).max(axis=1) / nD
    eye = np.eye(sp.n)
    bio_x = np.abs(np.swapaxes(sp.b_star.conj(), 1, 2) @ sp.b - eye).max()
    bio_t = np.abs(np.swapaxes(tp.psi_star.conj(), 1, 2) @ tp.psi - eye).max()
    return {
        "eig_x": float(resA.max()),
        "eig_t": float(resD.max()),
        "biorth_x": float(bio_x),
        "biorth_t": float(bio_t),
    }


__all__ = [
    "SpatialSpectrum",
    "TemporalSpectrum",
    "SpectralData",
    "decompose_spatial",
    "decompose_temporal",
    "coupling_gamma",
    "gamma_exact",
    "decompose",
    "spectral_residuals",
    "inner",
]
