"""Direct finite-difference solver on a layer-adapted mesh.

Central second differences in x on a piecewise-uniform mesh refined at both
walls, and a theta scheme in t on a mesh that is uniform in ``ln(1 + t/eps)``
near t = 0 and graded beyond.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .errors import NumericalError, SpecificationError
from .problem import ProblemSpec
from .series import GridField

SCHEMES = {"implicit_euler": 1.0, "crank_nicolson": 0.5}


@dataclass(frozen=True)
class LayerMesh:
    x_nodes: np.ndarray
    t_nodes: np.ndarray
    sigma_x: float
    sigma_t: float
    epsilon: float

    @property
    def N_x(self) -> int:
        return self.x_nodes.size - 1

    @property
    def N_t(self) -> int:
        return self.t_nodes.size - 1


def layer_width_constant(spec: ProblemSpec, samples: int = 65) -> float:
    """``2 / min_i Re(1/sqrt(lam_i(x)))`` over a uniform sample of x."""
    lam = np.linalg.eigvals(spec.A(np.linspace(0.0, 1.0, samples)))
    rate = np.real(1.0 / np.sqrt(lam.astype(complex))).min()
    if rate <= 0:
        raise SpecificationError("layer width needs Re lambda > 0")
    return 2.0 / rate


def build_mesh(epsilon: float, N_x: int, N_t: int, T: float, c0: float = 2.0, c1: float = 2.0) -> LayerMesh:
    """Piecewise-uniform x mesh and layer-graded t mesh.

    The x mesh puts N_x/4 intervals in each wall region of width
    ``min(1/4, c0 eps^{3/2} ln(1/eps))`` and N_x/2 in between. The t mesh
    puts N_t/2 intervals uniform in ``s = ln(1 + t/eps)`` on
    ``[0, min(T/2, c1 eps ln(1/eps))]`` and N_t/2 uniform in s beyond, so the
    outer part is geometrically graded in t. Doubling both counts nests the
    meshes.

    Raises:
        SpecificationError: counts below 16 or not divisible by 4.
    """
    for count, label in ((N_x, "N_x"), (N_t, "N_t")):
        if not isinstance(count, (int, np.integer)) or count < 16 or count % 4:
            raise SpecificationError(f"{label} must be an integer >= 16 divisible by 4, got {count!r}")
    if not 0.0 < epsilon < 1.0:
        raise SpecificationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not T > 0:
        raise SpecificationError("T must be positive")
    log_inv = np.log(1.0 / epsilon)
    sx = min(0.25, c0 * epsilon**1.5 * log_inv)
    q = N_x // 4
    x = np.concatenate([
        np.linspace(0.0, sx, q + 1),
        np.linspace(sx, 1.0 - sx, 2 * q + 1)[1:],
        np.linspace(1.0 - sx, 1.0, q + 1)[1:],
    ])
    x[-1] = 1.0
    st = min(0.5 * T, c1 * epsilon * log_inv)
    half = N_t // 2
    s_mid = np.log1p(st / epsilon)
    s_end = np.log1p(T / epsilon)
    s = np.concatenate([np.linspace(0.0, s_mid, half + 1), np.linspace(s_mid, s_end, half + 1)[1:]])
    t = epsilon * np.expm1(s)
    t[0], t[half], t[-1] = 0.0, st, T
    return LayerMesh(x, t, sx, st, float(epsilon))


def _second_difference(x):
    """Three-point second difference on the interior nodes of a nonuniform mesh."""
    h = np.diff(x)
    hl, hr = h[:-1], h[1:]
    lower = 2.0 / (hl * (hl + hr))
    upper = 2.0 / (hr * (hl + hr))
    diag = -(lower + upper)
    m = x.size - 2
    return sps.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], shape=(m, m), format="csr")


def solve_reference(spec: ProblemSpec, epsilon: float, mesh: LayerMesh, scheme: str = "implicit_euler",
                    startup_steps: int = 2) -> GridField:
    """March ``(eps + t) u_t = eps^2 A u_xx + D u + f`` from ``u(x, 0) = h``.

    Args:
        spec: problem data.
        epsilon: small parameter; must match ``mesh.epsilon``.
        mesh: mesh from ``build_mesh``.
        scheme: ``"implicit_euler"`` or ``"crank_nicolson"``. Crank-Nicolson
            starts with ``startup_steps`` implicit Euler steps to damp the
            stiff modes of the initial data.

    Raises:
        NumericalError: a step's linear solve breaks down or produces
            non-finite values.
    """
    if scheme not in SCHEMES:
        raise SpecificationError(f"unknown scheme {scheme!r}; use one of {sorted(SCHEMES)}")
    if abs(mesh.epsilon - epsilon) > 1e-15 * epsilon:
        raise SpecificationError("mesh was built for a different epsilon")
    n = spec.n
    x, t = mesh.x_nodes, mesh.t_nodes
    xi = x[1:-1]
    m = xi.size
    lap = _second_difference(x)
    A = spec.A(xi)
    # block (a, b) of the spatial operator is eps^2 diag(A_ab(x)) lap
    K = sps.bmat(
        [[sps.diags(epsilon**2 * A[:, a, b]) @ lap for b in range(n)] for a in range(n)],
        format="csr",
    ).astype(complex)
    eye_m = sps.identity(m, format="csr")
    eye = sps.identity(n * m, format="csc", dtype=complex)

    def operator(tk):
        return K + sps.kron(sps.csr_matrix(spec.D(np.array([tk]))[0]), eye_m, format="csr")

    def forcing(tk):
        return spec.f(xi, np.full(m, tk)).T.reshape(-1)

    u = np.zeros((x.size, t.size, n), dtype=complex)
    u[:, 0] = spec.h(x)
    u[0, 0] = u[-1, 0] = 0.0
    cur = u[1:-1, 0].T.reshape(-1)
    L_prev = operator(t[0])
    f_prev = forcing(t[0])
    base = SCHEMES[scheme]
    for k in range(t.size - 1):
        dt = t[k + 1] - t[k]
        theta = 1.0 if (scheme == "crank_nicolson" and k < startup_steps) else base
        L_next = operator(t[k + 1])
        f_next = forcing(t[k + 1])
        w_next = theta * dt / (epsilon + t[k + 1])
        w_prev = (1.0 - theta) * dt / (epsilon + t[k])
        rhs = cur + w_next * f_next
        if w_prev:
            rhs = rhs + w_prev * (L_prev @ cur + f_prev)
        try:
            lu = splu((eye - w_next * L_next).tocsc())
            cur = lu.solve(rhs)
        except RuntimeError as exc:
            raise NumericalError(f"linear solve failed at time step {k + 1}: {exc}") from exc
        if not np.all(np.isfinite(cur)):
            raise NumericalError(f"non-finite solution at time step {k + 1}")
        u[1:-1, k + 1] = cur.reshape(n, m).T
        L_prev, f_prev = L_next, f_next
    meta = {
        "epsilon": float(epsilon),
        "provenance": "reference",
        "scheme": scheme,
        "N_x": int(mesh.N_x),
        "N_t": int(mesh.N_t),
        "problem": spec.name,
    }
    return GridField(x, t, u, meta)
