"""Order-by-order construction of the expansion terms.

Every term has an interior part (coefficients against the temporal
eigenvectors, with and without the factors exp(mu_j)) and boundary-layer
parts at both walls (coefficients against the spatial eigenvectors times
erfc or convolution profiles). Interior coefficients solve degenerate ODEs
in t; layer amplitudes are boundary data carried into the interval by a
closed-form transport factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ._grids import TimeField, chebyshev_lobatto, differentiation_matrix, interpolation_matrix
from .errors import (
    AssemblyError,
    AssumptionError,
    DegeneracyError,
    SpecificationError,
    UnsupportedOrderError,
)
from .layers import LayerProfile, convolution_profile, erfc_profile
from .problem import ProblemSpec, validate_assumptions
from .regularization import StretchMap, build_stretch_map, exp_mu, stretched_time
from .spectral import SpectralData, SpatialSpectrum, decompose

K_MAX = 3
ASSEMBLY_TOL = 1e-6
# layer coefficients below this are treated as absent
LAYER_TOL = 1e-10
# relative size of g(0) tolerated at a degenerate component
REGULARITY_TOL = 1e-7


# -- degenerate ODE ----------------------------------------------------------

def _one_sided_derivative(arr, h):
    """Third-order forward difference at the first sample along axis 0."""
    return (-11.0 * arr[0] + 18.0 * arr[1] - 9.0 * arr[2] + 2.0 * arr[3]) / (6.0 * h)


def _trapezoid(t, M, g, y0, dy0):
    """Implicit trapezoidal steps for ``y' = (g - M y)/t`` from the startup values."""
    nt = t.size
    n = M.shape[-1]
    eye = np.eye(n)
    y = np.empty((nt,) + y0.shape, dtype=complex)
    dy = np.empty_like(y)
    y[0], dy[0] = y0, dy0
    for m in range(nt - 1):
        h = t[m + 1] - t[m]
        a = 0.5 * h / t[m + 1]
        lhs = eye + a * M[m + 1]
        rhs = y[m] + 0.5 * h * dy[m] + a * g[m + 1]
        y[m + 1] = np.linalg.solve(lhs, rhs.T).T
        dy[m + 1] = (g[m + 1] - y[m + 1] @ M[m + 1].T) / t[m + 1]
    return y, dy


def solve_degenerate_ode(t, M, g, y_degenerate=None, what: str = "interior ODE") -> TimeField:
    """Bounded solution of ``t y' + M(t) y = g(t)`` on a uniform grid.

    ``M(0)`` must be diagonal. Components with a nonzero diagonal entry start
    from the algebraic value ``g_k(0)/M_kk(0)``; components with a zero entry
    take their value from ``y_degenerate`` and need ``g_k(0) = 0`` for a
    bounded smooth solution. ``y'(0)`` follows from the differentiated
    equation at t = 0. Two trapezoidal sweeps (step h and 2h) are combined by
    Richardson extrapolation.

    Args:
        t: uniform grid starting at 0 with an even number of intervals.
        M: ``(len(t), n, n)`` coefficient matrices.
        g: ``(len(t), batch, n)`` right-hand sides.
        y_degenerate: ``(batch, n)`` starting values, read only at the
            degenerate components.
        what: label used in error messages.

    Returns:
        TimeField on ``t[::2]`` with values and derivatives of shape
        ``(batch, n)``.

    Raises:
        DegeneracyError: singular startup matrix, order-one resonance, or a
            nonzero right-hand side at a degenerate component.
    """
    t = np.asarray(t, dtype=float)
    M = np.asarray(M, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if t[0] != 0.0 or (t.size - 1) % 2 or t.size < 9:
        raise SpecificationError("degenerate ODE grid must start at 0 with an even number (>= 8) of intervals")
    h = t[1] - t[0]
    if np.abs(np.diff(t) - h).max() > 1e-9 * h:
        raise SpecificationError("degenerate ODE grid must be uniform")
    n = M.shape[-1]
    M0 = M[0]
    if np.abs(M0 - np.diag(np.diag(M0))).max() > 1e-10 * (1.0 + np.abs(M0).max()):
        raise DegeneracyError(f"{what}: coefficient matrix is not diagonal at t=0")
    m0 = np.diag(M0)
    degenerate = np.abs(m0) < 1e-8
    scale = 1.0 + np.abs(g).max()
    y0 = np.zeros(g.shape[1:], dtype=complex)
    if np.any(degenerate):
        if y_degenerate is None:
            raise DegeneracyError(f"{what}: zero startup coefficient at component(s) {np.flatnonzero(degenerate)}")
        bad = np.abs(g[0][:, degenerate]).max()
        if bad > REGULARITY_TOL * scale:
            raise DegeneracyError(
                f"{what}: right-hand side does not vanish at t=0 on a degenerate component "
                f"(|g(0)| = {bad:.3e}); the bounded solution has a logarithmic term"
            )
        y0[:, degenerate] = np.asarray(y_degenerate)[:, degenerate]
    nd = ~degenerate
    y0[:, nd] = g[0][:, nd] / m0[nd]
    lhs = np.eye(n) + M0
    if np.abs(np.linalg.det(lhs)) < 1e-10 * max(1.0, np.abs(lhs).max()) ** n:
        raise DegeneracyError(f"{what}: resonant startup, I + M(0) is singular")
    dM0 = _one_sided_derivative(M, h)
    dg0 = _one_sided_derivative(g, h)
    dy0 = np.linalg.solve(lhs, (dg0 - y0 @ dM0.T).T).T

    fine, _ = _trapezoid(t, M, g, y0, dy0)
    coarse, _ = _trapezoid(t[::2], M[::2], g[::2], y0, dy0)
    y = (4.0 * fine[::2] - coarse) / 3.0
    tc = t[::2]
    Mc, gc = M[::2], g[::2]
    dy = np.empty_like(y)
    dy[0] = dy0
    dy[1:] = (gc[1:] - np.einsum("tbn,tmn->tbm", y[1:], Mc[1:])) / tc[1:, None, None]
    return TimeField(tc, y, dy)


# -- shared context ----------------------------------------------------------

@dataclass(frozen=True)
class TransportFactor:
    """Closed-form solution of the amplitude transport equation with unit wall data.

    ``G[..., i, l](x) = (lam_i(x)/lam_i(w_l))**(1/4) * exp(-int_{w_l}^x (b_i', b*_i) ds)``
    with walls ``w_0 = 0`` and ``w_1 = 1``.
    """

    spatial: SpatialSpectrum
    _kappa_int: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        kappa = self.spatial.self_coupling(self.spatial.x)
        object.__setattr__(self, "_kappa_int", CubicSpline(self.spatial.x, kappa, axis=0).antiderivative())

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        loglam = np.log(self.spatial.lam_at(x).astype(complex))
        K = self._kappa_int(x)
        out = []
        for wall in (0.0, 1.0):
            l0 = np.log(self.spatial.lam_at(wall).astype(complex))
            out.append(np.exp(0.25 * (loglam - l0) - (K - self._kappa_int(wall))))
        return np.stack(out, axis=-1)

    def coefficient(self, x):
        """``(b_i', b*_i)``, the coupling that enters the transport equation."""
        return self.spatial.self_coupling(x)


@dataclass(frozen=True)
class ExpansionGrid:
    """Interior tabulation: Chebyshev nodes in x, uniform fine/coarse grids in t."""

    x: np.ndarray
    t_fine: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.t_fine[::2]

    @classmethod
    def build(cls, T: float, nx: int = 33, nt: int = 512):
        if nx < 5 or nt < 8:
            raise SpecificationError("expansion grid needs nx >= 5 and nt >= 8")
        return cls(chebyshev_lobatto(nx), np.linspace(0.0, T, 2 * nt + 1))


@dataclass
class ExpansionContext:
    spec: ProblemSpec
    grid: ExpansionGrid
    spectral: SpectralData
    stretch: StretchMap
    transport: TransportFactor

    @classmethod
    def build(cls, spec: ProblemSpec, nx: int = 33, nt: int = 512, n_spatial: int = 513):
        grid = ExpansionGrid.build(spec.T, nx, nt)
        spectral = decompose(spec, np.linspace(0.0, 1.0, n_spatial), grid.t_fine)
        stretch = build_stretch_map(spectral)
        return cls(spec, grid, spectral, stretch, TransportFactor(spectral.spatial))

    # fine-grid coefficient tables
    @property
    def beta(self):
        return self.spectral.temporal.beta

    @property
    def beta0(self):
        return self.spectral.temporal.beta0

    @property
    def alpha_T(self):
        return np.swapaxes(self.spectral.temporal.alpha, 1, 2)

    def gamma_exact(self, x, t):
        """``gamma[p, m, i, r]`` at times ``t`` (p) and points ``x`` (m) from the exact D(t)."""
        sp = self.spectral.spatial
        b = sp.b_at(x)
        bs = sp.b_star_at(x)
        Dt = self.spec.D(np.asarray(t, float))
        return np.einsum("mcr,pce,mei->pmir", bs.conj(), Dt, b)


# -- right-hand sides --------------------------------------------------------

@dataclass(frozen=True)
class InteriorForcing:
    """Right-hand sides of the interior ODEs at one order, on the fine time grid.

    ``v[t, x, i]`` drives the non-exponential coefficients and ``c[t, x, i, j]``
    the coefficients of ``exp(mu_j)``.
    """

    k: int
    t: np.ndarray
    v: np.ndarray
    c: np.ndarray


def _project(vec, psi_star):
    # (vec, psi*_i) for vec[t, x, m], psi_star[t, m, i]
    return np.einsum("txm,tmi->txi", vec, psi_star.conj())


def _lx_projection(ctx: ExpansionContext, t, values):
    """Projection of ``A(x) d_xx (sum_r w_r psi_r)`` onto the psi* basis; ``values[t, x, r, ...]``."""
    tp = ctx.spectral.temporal
    psi, psi_s = tp.psi_at(t), tp.psi_star_at(t)
    A = ctx.spec.A(ctx.grid.x)
    Dx = differentiation_matrix(ctx.grid.x)
    wxx = np.einsum("yx,tx...->ty...", Dx @ Dx, values)
    Q = np.einsum("tci,xce,ter->txir", psi_s.conj(), A, psi)
    return np.einsum("txir,txr...->txi...", Q, wxx)


def interior_forcing(k: int, ctx: ExpansionContext, terms) -> InteriorForcing:
    """Known part of the order-(k+2) solvability condition, which fixes the interior of u_k.

    ``v = f_i delta_k0 - [v_{k-2}' + alpha^T v_{k-2}] + (L_x v_{k-4})_i`` and the
    analogous expression for the exponential coefficients.
    """
    t = ctx.grid.t_fine
    nx, n = ctx.grid.x.size, ctx.spec.n
    tp = ctx.spectral.temporal
    gv = np.zeros((t.size, nx, n), dtype=complex)
    gc = np.zeros((t.size, nx, n, n), dtype=complex)
    if k == 0:
        X, Tt = np.meshgrid(ctx.grid.x, t)
        gv += _project(ctx.spec.f(X, Tt), tp.psi_star)
    aT = ctx.alpha_T
    if k >= 2:
        lo = terms[k - 2]
        v, dv = lo.V(t), lo.V(t, 1)
        gv -= dv + np.einsum("tir,txr->txi", aT, v)
        c, dc = lo.C_hat(t), lo.C_hat(t, 1)
        gc -= dc + np.einsum("tir,txrj->txij", aT, c)
    if k >= 4:
        lo = terms[k - 4]
        gv += _lx_projection(ctx, t, lo.V(t))
        gc += _lx_projection(ctx, t, lo.C_hat(t))
    return InteriorForcing(k, t, gv, gc)


# -- interior solves ---------------------------------------------------------

def _v_matrix(ctx: ExpansionContext):
    t = ctx.grid.t_fine
    return t[:, None, None] * ctx.alpha_T - np.einsum("ti,ij->tij", ctx.beta, np.eye(ctx.spec.n))


def _c_matrix(ctx: ExpansionContext, j: int):
    t = ctx.grid.t_fine
    shift = ctx.beta0[j] - ctx.beta
    return t[:, None, None] * ctx.alpha_T + np.einsum("ti,ij->tij", shift, np.eye(ctx.spec.n))


def solve_interior_V(k: int, ctx: ExpansionContext, rhs: InteriorForcing) -> TimeField:
    """Bounded solution of ``t[v' + alpha^T v] - beta v = rhs.v`` for every x node."""
    return solve_degenerate_ode(ctx.grid.t_fine, _v_matrix(ctx), rhs.v, what=f"order-{k} vector coefficients")


def solve_c_column(ctx: ExpansionContext, k: int, j: int, g_col, diag_start, p=0.0) -> TimeField:
    """Column ``j`` of the exponential coefficients ``c = c_hat - p e_j`` for a trial value ``p``.

    ``g_col[t, x, i]`` is the forcing of column j and ``diag_start[x]`` the
    starting value of ``c_hat_jj``.
    """
    M = _c_matrix(ctx, j)
    p = np.asarray(p, dtype=complex)
    g = g_col - (p[..., None] * M[:, None, :, j] if p.ndim else p * M[:, None, :, j])
    start = np.zeros(g.shape[1:], dtype=complex)
    start[:, j] = diag_start - p
    return solve_degenerate_ode(ctx.grid.t_fine, M, g, start, what=f"order-{k} exponential coefficients, column {j}")


@dataclass(frozen=True)
class CPSolution:
    C: TimeField
    P: np.ndarray
    regularity_slope: np.ndarray
    regularity_defect: np.ndarray


def _regularity(ctx, j, field_col, p):
    # -(c_hat' + alpha^T c_hat)_jj at t = 0, with c_hat = c + p e_j
    y0 = field_col.values[0].copy()
    y0[:, j] += p
    aT0 = ctx.alpha_T[0]
    return -(field_col.derivs[0][:, j] + y0 @ aT0[j])


def solve_interior_CP(k: int, ctx: ExpansionContext, rhs: InteriorForcing, V: TimeField,
                      h_proj=None) -> CPSolution:
    """Exponential coefficients and the diagonal shift P at order k.

    Off-diagonal entries start from ``g_ij(0)/(beta_j(0) - beta_i(0))``;
    diagonal entries start from ``delta_k0 h_i - v_i(x,0) - sum_{j != i} c_ij(x,0)``.
    Each column is solved for the trial shifts p = 0 and p = 1, and the shift
    is chosen from the linear regularity condition of the order k+2
    equation. That condition depends on ``c + p`` only, so its slope in p
    vanishes; the solver then keeps p = 0 and reports the remaining defect.
    """
    n = ctx.spec.n
    nx = ctx.grid.x.size
    g = rhs.c
    b0 = ctx.beta0
    c0 = np.zeros((nx, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            if i != j:
                c0[:, i, j] = g[0, :, i, j] / (b0[j] - b0[i])
    diag = -V.values[0].copy()
    if h_proj is not None:
        diag += h_proj
    diag -= c0.sum(axis=2) - np.einsum("xii->xi", c0)

    t = ctx.grid.t
    vals = np.zeros((t.size, nx, n, n), dtype=complex)
    ders = np.zeros_like(vals)
    P = np.zeros((nx, n), dtype=complex)
    slope = np.zeros((nx, n), dtype=complex)
    defect = np.zeros((nx, n), dtype=complex)
    for j in range(n):
        probe0 = solve_c_column(ctx, k, j, g[..., j], diag[:, j], 0.0)
        probe1 = solve_c_column(ctx, k, j, g[..., j], diag[:, j], 1.0)
        r0 = _regularity(ctx, j, probe0, 0.0)
        r1 = _regularity(ctx, j, probe1, 1.0)
        s = r1 - r0
        scale = 1.0 + np.abs(r0).max()
        pj = np.where(np.abs(s) > 1e-8 * scale, -r0 / np.where(s == 0, 1, s), 0.0)
        vals[..., j] = probe0.values + pj[None, :, None] * (probe1.values - probe0.values)
        ders[..., j] = probe0.derivs + pj[None, :, None] * (probe1.derivs - probe0.derivs)
        P[:, j] = pj
        slope[:, j] = s
        defect[:, j] = r0 + s * pj
    return CPSolution(TimeField(t, vals, ders), P, slope, defect)


# -- layers ------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSource:
    """Separable source coefficient ``G_i(x) [a(t) + gamma_ii(x, t) b(t)]`` of one wall.

    Trailing shape is ``(n,)`` for the plain layers and ``(n, n)`` for the
    layers multiplied by ``exp(mu_j)``.
    """

    wall: int
    a: TimeField
    b: TimeField

    def max_abs(self) -> float:
        return max(self.a.max_abs(), self.b.max_abs())

    def evaluate(self, ctx: ExpansionContext, x, t):
        G = ctx.transport(x)[..., self.wall]  # (m, n)
        gam = np.einsum("pmii->pmi", ctx.gamma_exact(x, t))  # (p, m, n)
        a, b = self.a(t), self.b(t)
        if a.ndim == 2:
            return G[None] * (a[:, None, :] + gam * b[:, None, :])
        return G[None, :, :, None] * (a[:, None] + gam[..., None] * b[:, None])


@dataclass(frozen=True)
class RhsDecomposition:
    """Right-hand side of ``T_0 u_k = h_k`` split by structure.

    ``interior_v`` and ``interior_c`` are the psi*-projections of the smooth
    parts on the coarse time grid and the x nodes (they vanish when the
    lower orders satisfy their solvability conditions). ``layer_d`` and
    ``layer_omega`` hold one separable erfc-profile source per wall, or None.
    """

    k: int
    interior_v: np.ndarray
    interior_c: np.ndarray
    layer_d: tuple
    layer_omega: tuple


def _t1_interior(ctx, term, t):
    v, dv = term.V(t), term.V(t, 1)
    tp = ctx.spectral.temporal
    aT = np.swapaxes(tp.alpha_at(t), 1, 2)
    beta = tp.beta_at(t)
    tv = t[:, None, None] * (dv + np.einsum("tir,txr->txi", aT, v)) - beta[:, None, :] * v
    c, dc = term.C_hat(t), term.C_hat(t, 1)
    shift = ctx.beta0[None, None, :] - beta[:, :, None]
    tc = t[:, None, None, None] * (dc + np.einsum("tir,txrj->txij", aT, c)) + shift[:, None] * c
    return tv, tc


def _dt_interior(ctx, term, t):
    aT = np.swapaxes(ctx.spectral.temporal.alpha_at(t), 1, 2)
    v, dv = term.V(t), term.V(t, 1)
    c, dc = term.C_hat(t), term.C_hat(t, 1)
    return dv + np.einsum("tir,txr->txi", aT, v), dc + np.einsum("tir,txrj->txij", aT, c)


def _nonseparable_check(ctx, term, k, t):
    """Raise when a lower-order layer would feed a source that is not separable."""
    n = ctx.spec.n
    x = ctx.grid.x
    if n == 1:
        return
    off = ~np.eye(n, dtype=bool)
    gam = np.abs(ctx.gamma_exact(x, t))  # (p, m, i, r)
    G = np.abs(ctx.transport(x))  # (m, n, 2)
    for wall in (0, 1):
        d = np.abs(term.d[wall].values)  # (p, n)
        w = np.abs(term.omega[wall].values).max(axis=2)  # (p, n)
        amp = (d + w)[:, None, :, None] * G[None, :, :, wall, None]
        if (gam * amp)[..., off].max(initial=0.0) > LAYER_TOL:
            raise UnsupportedOrderError(
                f"order {k}: layer of order {term.k} couples into other modes through D(t); "
                "the source is not separable"
            )


def _lxi_check(ctx, term, k):
    n = ctx.spec.n
    if not term.has_layers:
        return
    if any(s is not None and s.max_abs() > LAYER_TOL for s in term.d_source + term.omega_source):
        raise UnsupportedOrderError(f"order {k}: convolution layers of order {term.k} would need a nested profile")
    if n == 1:
        return
    x = ctx.grid.x
    sp = ctx.spectral.spatial
    db = sp.b_at(x, 1)
    bs = sp.b_star_at(x)
    cross = np.abs(np.einsum("mci,mcr->mir", db, bs.conj()))  # (b_i', b*_r)
    lam = np.abs(sp.lam_at(x))
    dphi = np.abs(ctx.stretch.dphi(x))  # (m, n, 2)
    G = np.abs(ctx.transport(x))
    off = ~np.eye(n, dtype=bool)
    for wall in (0, 1):
        amp = np.abs(term.d[wall].values).max(axis=0) + np.abs(term.omega[wall].values).max(axis=(0, 2))
        coef = 2.0 * dphi[:, :, wall, None] * lam[:, None, :] * cross * (G[:, :, wall] * amp)[:, :, None]
        if coef[:, off].max(initial=0.0) > LAYER_TOL:
            raise UnsupportedOrderError(
                f"order {k}: layer of order {term.k} has a cross-mode transport source; not separable"
            )


def build_rhs(k: int, ctx: ExpansionContext, terms) -> RhsDecomposition:
    """Decompose ``h_k = f delta_k2 - T_1 u_{k-2} - d_t u_{k-4} + L_xi u_{k-3} + L_x u_{k-6}``.

    Raises:
        UnsupportedOrderError: a lower-order layer would produce a source that
            is not of the separable erfc form.
    """
    if k < 0:
        raise SpecificationError("order must be nonnegative")
    if len(terms) < k:
        raise SpecificationError(f"order {k} needs terms 0..{k - 1}")
    t = ctx.grid.t
    x = ctx.grid.x
    n, nx = ctx.spec.n, x.size
    iv = np.zeros((t.size, nx, n), dtype=complex)
    ic = np.zeros((t.size, nx, n, n), dtype=complex)
    layer_d = [None, None]
    layer_o = [None, None]
    tp = ctx.spectral.temporal
    if k == 2:
        X, Tt = np.meshgrid(x, t)
        iv += _project(ctx.spec.f(X, Tt), tp.psi_star_at(t))
    if k >= 2:
        lo = terms[k - 2]
        tv, tc = _t1_interior(ctx, lo, t)
        iv -= tv
        ic -= tc
        if lo.has_layers:
            if any(s is not None and s.max_abs() > LAYER_TOL for s in lo.d_source + lo.omega_source):
                raise UnsupportedOrderError(f"order {k}: nested convolution profiles are not supported")
            _nonseparable_check(ctx, lo, k, t)
            for wall in (0, 1):
                d = lo.d[wall]
                a = TimeField(t, -t[:, None] * d.derivs, -(d.derivs + t[:, None] * d(t, 2)))
                layer_d[wall] = LayerSource(wall, a, d)
                om = lo.omega[wall]
                b0 = ctx.beta0[None, None, :]
                av = -t[:, None, None] * om.derivs - b0 * om.values
                ad = -(om.derivs + t[:, None, None] * om(t, 2)) - b0 * om.derivs
                layer_o[wall] = LayerSource(wall, TimeField(t, av, ad), om)
    if k >= 3:
        _lxi_check(ctx, terms[k - 3], k)
    if k >= 4:
        lo = terms[k - 4]
        dv, dc = _dt_interior(ctx, lo, t)
        iv -= dv
        ic -= dc
        if lo.has_layers:
            raise UnsupportedOrderError(f"order {k}: time derivative of order-{k - 4} layers is not separable")
    if k >= 6:
        lo = terms[k - 6]
        iv += _lx_projection(ctx, t, lo.V(t))
        ic += _lx_projection(ctx, t, lo.C_hat(t))
        if lo.has_layers:
            raise UnsupportedOrderError(f"order {k}: L_x of order-{k - 6} layers is not separable")
    return RhsDecomposition(k, iv, ic, tuple(layer_d), tuple(layer_o))


@dataclass(frozen=True)
class LayerAmplitudes:
    """Wall values of the layer amplitudes; x-dependence is the transport factor."""

    d: tuple  # per wall, TimeField (p, n)
    omega: tuple  # per wall, TimeField (p, n, n)

    def d_at(self, ctx: ExpansionContext, wall: int, x, t):
        return ctx.transport(x)[None, :, :, wall] * self.d[wall](t)[:, None, :]

    def omega_at(self, ctx: ExpansionContext, wall: int, x, t):
        return ctx.transport(x)[None, :, :, wall, None] * self.omega[wall](t)[:, None]


def transport_amplitudes(k: int, ctx: ExpansionContext, V: TimeField, C_hat: TimeField) -> LayerAmplitudes:
    """Layer amplitudes cancelling the interior part at both walls.

    ``d_i(w, t) = -sum_r v_r(w, t) (psi_r(t), b*_i(w))`` and
    ``omega_ij(w, t) = -sum_r c_rj(w, t) (psi_r(t), b*_i(w))``.
    """
    t = ctx.grid.t
    tp = ctx.spectral.temporal
    psi = tp.psi[::2]
    dpsi = tp.dpsi[::2]
    d_out, o_out = [], []
    for wall, idx in ((0, 0), (1, -1)):
        bs = ctx.spectral.spatial.b_star_at(float(ctx.grid.x[idx]))
        proj = np.einsum("tmr,mi->tri", psi, bs.conj())
        dproj = np.einsum("tmr,mi->tri", dpsi, bs.conj())
        v, dv = V.values[:, idx], V.derivs[:, idx]
        d = -np.einsum("tr,tri->ti", v, proj)
        dd = -(np.einsum("tr,tri->ti", dv, proj) + np.einsum("tr,tri->ti", v, dproj))
        c, dc = C_hat.values[:, idx], C_hat.derivs[:, idx]
        o = -np.einsum("trj,tri->tij", c, proj)
        do = -(np.einsum("trj,tri->tij", dc, proj) + np.einsum("trj,tri->tij", c, dproj))
        d_out.append(TimeField(t, d, dd))
        o_out.append(TimeField(t, o, do))
    return LayerAmplitudes(tuple(d_out), tuple(o_out))


# -- terms -------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticTerm:
    """One term of the expansion.

    ``V`` holds the vector coefficients, ``C`` the exponential coefficients
    without the diagonal shift ``P`` (so ``C + diag(P)`` enters the term),
    ``d``/``omega`` the wall values of the erfc-layer amplitudes and
    ``d_source``/``omega_source`` the coefficients of the convolution
    profiles.
    """

    k: int
    V: TimeField
    C: TimeField
    P: np.ndarray
    d: tuple
    omega: tuple
    d_source: tuple
    omega_source: tuple
    profiles: dict
    residuals: dict
    regularity_defect: np.ndarray

    def C_hat(self, t, nu: int = 0):
        c = self.C(t, nu)
        if nu == 0:
            c = c.copy()
            idx = np.arange(self.P.shape[1])
            c[..., idx, idx] += self.P[None]
        return c

    @property
    def has_layers(self) -> bool:
        amps = [f.max_abs() for f in self.d + self.omega]
        amps += [s.max_abs() for s in self.d_source + self.omega_source if s is not None]
        return max(amps, default=0.0) > LAYER_TOL


def _boundary_residuals(ctx, V, C_hat_vals, amps, h_vals, k):
    t = ctx.grid.t
    tp = ctx.spectral.temporal
    psi = tp.psi[::2]
    res = {}
    for wall, idx in ((0, 0), (1, -1)):
        b = ctx.spectral.spatial.b_at(float(ctx.grid.x[idx]))
        plain = np.einsum("ti,tci->tc", V.values[:, idx], psi) + amps.d[wall].values @ b.T
        expo = np.einsum("tij,tci->tcj", C_hat_vals[:, idx], psi) + np.einsum("tij,ci->tcj", amps.omega[wall].values, b)
        res[f"wall{wall}"] = float(max(np.abs(plain).max(), np.abs(expo).max()))
    start = V.values[0] + C_hat_vals[0].sum(axis=2)
    u0 = start @ tp.psi[0].T
    if k == 0:
        u0 = u0 - h_vals
    res["initial"] = float(np.abs(u0[1:-1]).max(initial=0.0))
    return res


def assemble_term(k: int, ctx: ExpansionContext, V: TimeField, cp: CPSolution, amps: LayerAmplitudes,
                  rhs: RhsDecomposition, check: bool = True) -> AsymptoticTerm:
    """Bundle the parts of u_k and verify its wall and initial conditions.

    Raises:
        AssemblyError: a wall or initial residual exceeds 1e-6.
    """
    idx = np.arange(ctx.spec.n)
    C_hat_vals = cp.C.values.copy()
    C_hat_vals[..., idx, idx] += cp.P[None]
    h_vals = ctx.spec.h(ctx.grid.x)
    res = _boundary_residuals(ctx, V, C_hat_vals, amps, h_vals, k)
    if check:
        worst = max(res.values())
        if not np.isfinite(worst) or worst > ASSEMBLY_TOL:
            raise AssemblyError(f"order {k}: boundary/initial residual {worst:.3e} exceeds {ASSEMBLY_TOL}")
    profiles = {}
    for wall in (0, 1):
        src = rhs.layer_d[wall]
        kind = "erfc_plus_convolution" if src is not None and src.max_abs() > 0 else "erfc"
        for i in range(ctx.spec.n):
            profiles[("d", wall, i)] = LayerProfile(kind, f"d[k={k},wall={wall},i={i}]",
                                                    None if kind == "erfc" else "erfc")
    return AsymptoticTerm(
        k=k,
        V=V,
        C=cp.C,
        P=cp.P,
        d=amps.d,
        omega=amps.omega,
        d_source=rhs.layer_d,
        omega_source=rhs.layer_omega,
        profiles=profiles,
        residuals=res,
        regularity_defect=cp.regularity_defect,
    )


# -- driver ------------------------------------------------------------------

@dataclass
class Expansion:
    """Terms ``u_0 .. u_K`` of the expansion; independent of epsilon."""

    ctx: ExpansionContext
    terms: list

    @property
    def order(self) -> int:
        return len(self.terms) - 1

    @property
    def spec(self) -> ProblemSpec:
        return self.ctx.spec

    def evaluate_term(self, k: int, x, t, epsilon: float):
        """Values of u_k at the tensor grid ``t`` x ``x``; shape ``(len(t), len(x), n)``."""
        ctx = self.ctx
        term = self.terms[k]
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        B = interpolation_matrix(ctx.grid.x, x)
        tp = ctx.spectral.temporal
        psi = tp.psi_at(t)
        em = exp_mu(t, epsilon, ctx.beta0)
        v = np.einsum("mX,pXi->pmi", B, term.V(t))
        c = np.einsum("mX,pXij->pmij", B, term.C_hat(t))
        inner = v + np.einsum("pmij,pj->pmi", c, em)
        out = np.einsum("pmi,pci->pmc", inner, psi)
        if not term.has_layers:
            return out
        sp = ctx.spectral.spatial
        b = sp.b_at(x)
        xi = ctx.stretch.phi(x) / epsilon**1.5  # (m, n, 2)
        tau = stretched_time(t, epsilon)
        amps = LayerAmplitudes(term.d, term.omega)
        for wall in (0, 1):
            E = erfc_profile(xi[None, :, :, wall], tau[:, None, None])
            coef = amps.d_at(ctx, wall, x, t) + np.einsum("pmij,pj->pmi", amps.omega_at(ctx, wall, x, t), em)
            layer = coef * E
            ds, os = term.d_source[wall], term.omega_source[wall]
            if ds is not None and ds.max_abs() > 0:
                J = convolution_profile(xi[None, :, :, wall], tau[:, None, None])
                scoef = ds.evaluate(ctx, x, t) + np.einsum("pmij,pj->pmi", os.evaluate(ctx, x, t), em)
                layer = layer + scoef * J
            out = out + np.einsum("pmi,mci->pmc", layer, b)
        return out


def build_expansion(spec: ProblemSpec, order: int = 1, nx: int = 33, nt: int = 512, n_spatial: int = 513,
                    check: bool = True, validate: bool = True) -> Expansion:
    """Construct ``u_0 .. u_order``.

    Raises:
        AssumptionError: the problem violates a standing assumption.
        SpecificationError: ``order`` outside ``0 .. K_MAX``.
        DegeneracyError, UnsupportedOrderError, AssemblyError: see the
            individual stages.
    """
    if not 0 <= order <= K_MAX:
        raise SpecificationError(f"order must lie in 0..{K_MAX}, got {order}")
    if validate:
        report = validate_assumptions(spec)
        if not report.passed:
            raise AssumptionError(f"assumption(s) {', '.join(report.failed())} violated", report)
    ctx = ExpansionContext.build(spec, nx, nt, n_spatial)
    h_proj = np.einsum("xm,mi->xi", spec.h(ctx.grid.x), ctx.spectral.temporal.psi_star[0].conj())
    terms: list[AsymptoticTerm] = []
    for k in range(order + 1):
        forcing = interior_forcing(k, ctx, terms)
        V = solve_interior_V(k, ctx, forcing)
        cp = solve_interior_CP(k, ctx, forcing, V, h_proj if k == 0 else None)
        idx = np.arange(spec.n)
        c_vals = cp.C.values.copy()
        c_vals[..., idx, idx] += cp.P[None]
        amps = transport_amplitudes(k, ctx, V, TimeField(cp.C.t, c_vals, cp.C.derivs))
        rhs = build_rhs(k, ctx, terms)
        terms.append(assemble_term(k, ctx, V, cp, amps, rhs, check))
    return Expansion(ctx, terms)
