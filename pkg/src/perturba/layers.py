"""Half-line heat profiles used by the boundary-layer parts of each term.

Profiles are functions ``p(xi, tau)`` on ``xi >= 0, tau >= 0``. The erfc
profile carries unit boundary data; the convolution profile solves the
inhomogeneous problem with zero boundary and initial data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, erfcx

from .errors import NumericalError, SpecificationError

_SQRT_PI = np.sqrt(np.pi)
# exp(-w^2) < 1e-14 beyond this
_W_CUT = 5.7


def _check_domain(xi, tau):
    xi_r = np.real(xi)
    if np.any(np.asarray(xi_r) < 0) or np.any(np.asarray(tau) < 0):
        raise SpecificationError("layer profiles are defined for xi >= 0 and tau >= 0")


def _similarity(xi, tau):
    """``z = xi / (2 sqrt(tau))``; +inf (or a large multiple of xi) where tau = 0."""
    xi = np.asarray(xi)
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = xi / (2.0 * np.sqrt(tau))
    at0 = np.broadcast_to(tau == 0.0, np.broadcast(xi, tau).shape)
    if np.any(at0):
        z = np.array(np.broadcast_to(z, at0.shape), dtype=np.result_type(z, float))
        xb = np.broadcast_to(xi, at0.shape)
        # xi > 0 at tau = 0 maps to z = inf; xi = 0 to z = 0
        z[at0] = np.where(xb[at0] == 0, 0.0, np.inf)
    return z


def erfc_profile(xi, tau):
    """``erfc(xi / (2 sqrt(tau)))`` with the continuous extension at ``tau = 0``.

    At ``tau = 0`` the value is 0 for ``xi > 0`` and 1 at ``xi = 0``. Complex
    ``xi`` (complex layer coordinates) is accepted provided ``Re xi >= 0``.

    Raises:
        SpecificationError: negative ``xi`` or ``tau``.
    """
    _check_domain(xi, tau)
    z = _similarity(xi, tau)
    if np.iscomplexobj(z):
        out = np.where(np.isinf(z.real), 0.0, erfc(np.where(np.isinf(z.real), 0.0, z)))
    else:
        out = erfc(z)
    return out[()] if isinstance(out, np.ndarray) else out


def ierfc(z):
    """First repeated integral of erfc: ``exp(-z^2)/sqrt(pi) - z erfc(z)``."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return np.exp(-z * z) / _SQRT_PI - z * erfc(z)
    # erfcx form avoids cancellation for large z
    zz = np.where(np.isinf(z), 0.0, z)
    out = np.exp(-zz * zz) * (1.0 / _SQRT_PI - zz * erfcx(zz))
    return np.where(np.isinf(z), 0.0, out)


def convolution_profile(xi, tau):
    """Closed form of the zero-data solution driven by the erfc source.

    Solves ``J_tau - J_xixi = erfc(xi / (2 sqrt(tau)))`` with ``J(0, tau) = 0``
    and ``J(xi, 0) = 0``; equals ``xi sqrt(tau) ierfc(xi / (2 sqrt(tau)))``.
    """
    _check_domain(xi, tau)
    tau = np.asarray(tau, dtype=float)
    z = _similarity(xi, tau)
    fin = np.isfinite(np.real(z))
    zf = np.where(fin, z, 0.0)
    out = np.where(fin, 2.0 * tau * zf * ierfc(zf), 0.0)
    return out[()] if isinstance(out, np.ndarray) else out


def heat_convolution(xi: float, tau: float, source: Callable[[float, float], float],
                     tol: float = 1e-10) -> float:
    """Half-line Dirichlet heat convolution of ``source`` by nested quadrature.

    Uses the image kernel and the substitution ``sigma = sqrt(tau - s)``
    which removes the endpoint singularity; the spatial variable is rescaled
    around the Gaussian peaks and truncated where the kernel drops below
    1e-14.

    Args:
        xi: layer coordinate, ``xi >= 0``.
        tau: stretched time, ``tau >= 0``.
        source: callable ``source(eta, s)``.
        tol: absolute tolerance passed to both quadratures.

    Raises:
        NumericalError: the quadrature reports non-convergence.
    """
    _check_domain(xi, tau)
    xi, tau = float(xi), float(tau)
    if xi == 0.0 or tau == 0.0:
        return 0.0

    def inner(sigma):
        if sigma == 0.0:
            return 0.0
        s = tau - sigma * sigma
        lo1 = max(-xi / (2 * sigma), -_W_CUT)
        a, _ = quad(lambda w: source(xi + 2 * sigma * w, s) * np.exp(-w * w), lo1, _W_CUT,
                    epsabs=tol, epsrel=0.0, limit=200)
        lo2 = xi / (2 * sigma)
        b = 0.0
        if lo2 < _W_CUT:
            b, _ = quad(lambda w: source(2 * sigma * w - xi, s) * np.exp(-w * w), lo2, _W_CUT,
                        epsabs=tol, epsrel=0.0, limit=200)
        return 2.0 * sigma * (a - b)

    val, err = quad(inner, 0.0, np.sqrt(tau), epsabs=tol, epsrel=0.0, limit=200, full_output=1)[:2]
    if not np.isfinite(val) or err > 1e3 * tol + 1e-8:
        raise NumericalError(f"heat convolution did not converge at xi={xi}, tau={tau} (err {err:.2e})")
    return val / _SQRT_PI


@dataclass(frozen=True)
class LayerProfile:
    """Shape descriptor of one layer amplitude.

    ``kind`` is ``"erfc"`` or ``"erfc_plus_convolution"``; in the latter case
    the profile is ``erfc + source_weight * J`` where ``J`` is the
    convolution profile with the erfc source.
    """

    kind: str = "erfc"
    amplitude: str = ""
    source: str | None = None

    def __post_init__(self):
        if self.kind not in ("erfc", "erfc_plus_convolution"):
            raise SpecificationError(f"unknown profile kind {self.kind!r}")

    def __call__(self, xi, tau, boundary_weight=1.0, source_weight=1.0):
        out = boundary_weight * erfc_profile(xi, tau)
        if self.kind == "erfc_plus_convolution":
            out = out + source_weight * convolution_profile(xi, tau)
        return out


@dataclass(frozen=True)
class DecayCheck:
    c_fit: float
    c_refined: float
    drift: float
    passed: bool


def _decay_constant(profile, xi, tau):
    X, Tau = np.meshgrid(xi, tau, indexing="ij")
    vals = np.abs(np.asarray(profile(X, Tau), dtype=complex))
    with np.errstate(divide="ignore"):
        logs = np.log(vals) + X**2 / (8.0 * Tau)
    logs = logs[vals > 0]
    if logs.size == 0:
        return 0.0
    with np.errstate(over="ignore"):
        return float(np.exp(logs.max()))


def decay_grid(level: int, xi_max: float = 8.0, tau_max: float = 1.0, base: int = 64):
    """Grid for the decay check; each level doubles the counts and halves the smallest tau."""
    m = base * 2**level
    xi = np.linspace(0.0, xi_max, m + 1)
    tau = np.geomspace(tau_max / (base * 2**level), tau_max, m)
    return xi, tau


def check_decay_bound(profile, xi_max: float = 8.0, tau_max: float = 1.0, level: int = 0,
                      drift_tol: float = 0.10) -> DecayCheck:
    """Smallest ``c`` with ``|p| <= c exp(-xi^2/(8 tau))`` on a grid and on its refinement.

    Passes when both constants are finite and differ by less than
    ``drift_tol`` relative to the refined value.
    """
    c0 = _decay_constant(profile, *decay_grid(level, xi_max, tau_max))
    c1 = _decay_constant(profile, *decay_grid(level + 1, xi_max, tau_max))
    if c1 == 0.0 and c0 == 0.0:
        return DecayCheck(0.0, 0.0, 0.0, True)
    finite = np.isfinite(c0) and np.isfinite(c1)
    drift = abs(c1 - c0) / abs(c1) if finite and c1 != 0 else np.inf
    return DecayCheck(c0, c1, drift, bool(finite and drift < drift_tol))
