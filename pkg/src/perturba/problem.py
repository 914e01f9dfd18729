"""Problem definition for (eps + t) u_t - eps^2 A(x) u_xx - D(t) u = f.

A problem is the quintuple (A, D, f, h, T) on (0, 1) x (0, T] together with a
list of small parameters. Coefficient fields are normally polynomial-entry
matrices and vectors (the JSON problem format), but any callable with the
same array contract is accepted so manufactured problems can be built in
code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ._linalg import track_eigensystem
from .errors import DegeneracyError, SpecificationError

MAX_DEGREE = 8


def _coef(value) -> complex:
    if isinstance(value, bool):
        raise SpecificationError(f"invalid coefficient {value!r}")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError as exc:
            raise SpecificationError(f"invalid coefficient {value!r}") from exc
    raise SpecificationError(f"invalid coefficient {value!r}")


def _dump_coef(c: complex):
    c = complex(c)
    if c.imag == 0.0:
        return c.real
    return repr(c).strip("()")


def parse_epsilon(value) -> float:
    """Accept a float or a rational string such as ``"1/64"``."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise SpecificationError(f"invalid epsilon {value!r}") from exc
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise SpecificationError(f"invalid epsilon {value!r}")


class PolyMatrix:
    """Square matrix with polynomial entries in one variable."""

    def __init__(self, entries):
        rows = list(entries)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise SpecificationError("matrix field must be square and non-empty")
        deg = 0
        for r in rows:
            for p in r:
                if len(p) == 0:
                    raise SpecificationError("empty polynomial in matrix field")
                deg = max(deg, len(p) - 1)
        if deg > MAX_DEGREE:
            raise SpecificationError(f"polynomial degree {deg} exceeds {MAX_DEGREE}")
        c = np.zeros((deg + 1, n, n), dtype=complex)
        for i, r in enumerate(rows):
            for j, p in enumerate(r):
                c[: len(p), i, j] = [_coef(a) for a in p]
        self.coeffs = c
        self.n = n

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.broadcast_to(self.coeffs[-1], s.shape + (self.n, self.n)).astype(complex)
        for ck in self.coeffs[-2::-1]:
            out = out * s[..., None, None] + ck
        return out

    def derivative(self) -> "PolyMatrix":
        c = self.coeffs
        if c.shape[0] == 1:
            d = np.zeros_like(c)
        else:
            d = c[1:] * np.arange(1, c.shape[0])[:, None, None]
        return PolyMatrix(np.moveaxis(d, 0, -1).tolist())

    def to_json(self):
        return [[[_dump_coef(a) for a in self.coeffs[:, i, j]] for j in range(self.n)] for i in range(self.n)]


class PolyVector:
    """Vector field with polynomial components in one variable."""

    def __init__(self, comps):
        comps = list(comps)
        if not comps or any(len(p) == 0 for p in comps):
            raise SpecificationError("vector field must have non-empty polynomial components")
        deg = max(len(p) for p in comps) - 1
        if deg > MAX_DEGREE:
            raise SpecificationError(f"polynomial degree {deg} exceeds {MAX_DEGREE}")
        c = np.zeros((deg + 1, len(comps)), dtype=complex)
        for i, p in enumerate(comps):
            c[: len(p), i] = [_coef(a) for a in p]
        self.coeffs = c
        self.n = len(comps)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.broadcast_to(self.coeffs[-1], s.shape + (self.n,)).astype(complex)
        for ck in self.coeffs[-2::-1]:
            out = out * s[..., None] + ck
        return out

    def to_json(self):
        return [[_dump_coef(a) for a in self.coeffs[:, i]] for i in range(self.n)]


class Poly2Vector:
    """Vector field of two variables; component ``i`` is ``sum c[i][p][q] x^p t^q``."""

    def __init__(self, comps):
        comps = [np.asarray([[_coef(a) for a in row] for row in m], dtype=complex) for m in comps]
        if not comps:
            raise SpecificationError("vector field must be non-empty")
        for m in comps:
            if m.ndim != 2 or m.size == 0:
                raise SpecificationError("poly2 component must be a non-empty coefficient matrix")
            if max(m.shape) - 1 > MAX_DEGREE:
                raise SpecificationError(f"polynomial degree exceeds {MAX_DEGREE}")
        dx = max(m.shape[0] for m in comps)
        dt = max(m.shape[1] for m in comps)
        c = np.zeros((len(comps), dx, dt), dtype=complex)
        for i, m in enumerate(comps):
            c[i, : m.shape[0], : m.shape[1]] = m
        self.coeffs = c
        self.n = len(comps)

    def __call__(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        out = np.zeros(x.shape + (self.n,), dtype=complex)
        xp = np.ones_like(x)
        for p in range(self.coeffs.shape[1]):
            tq = np.ones_like(t)
            for q in range(self.coeffs.shape[2]):
                out += (xp * tq)[..., None] * self.coeffs[:, p, q]
                tq = tq * t
            xp = xp * x
        return out

    def to_json(self):
        return [[[_dump_coef(a) for a in row] for row in self.coeffs[i]] for i in range(self.n)]


@dataclass(frozen=True)
class ProblemSpec:
    """Problem data.

    ``A(x)`` and ``D(t)`` map an array of shape ``s`` to ``s + (n, n)``;
    ``f(x, t)`` maps broadcastable arrays to ``shape + (n,)``; ``h(x)`` maps
    to ``s + (n,)``.
    """

    n: int
    A: Callable
    D: Callable
    f: Callable
    h: Callable
    T: float = 1.0
    epsilons: tuple = ()
    name: str = "problem"

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise SpecificationError(f"system dimension must be a positive integer, got {self.n!r}")
        if not self.T > 0:
            raise SpecificationError(f"time horizon must be positive, got {self.T!r}")
        eps = tuple(float(e) for e in self.epsilons)
        if any(not 0.0 < e < 1.0 for e in eps):
            raise SpecificationError("epsilon values must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise SpecificationError("epsilon values must be strictly decreasing")
        object.__setattr__(self, "epsilons", eps)
        n = self.n
        checks = (
            ("A", lambda: self.A(np.array([0.0, 1.0])), (2, n, n)),
            ("D", lambda: self.D(np.array([0.0, self.T])), (2, n, n)),
            ("f", lambda: self.f(np.array([0.0, 1.0]), np.array([0.0, self.T])), (2, n)),
            ("h", lambda: self.h(np.array([0.0, 1.0])), (2, n)),
        )
        for label, fn, shape in checks:
            try:
                val = np.asarray(fn())
            except SpecificationError:
                raise
            except Exception as exc:  # noqa: BLE001 - user callables may raise anything
                raise SpecificationError(f"field {label} cannot be evaluated: {exc}") from exc
            if val.shape != shape:
                raise SpecificationError(f"field {label} has shape {val.shape[1:]}, expected {shape[1:]}")

    @property
    def polynomial(self) -> bool:
        return (
            isinstance(self.A, PolyMatrix)
            and isinstance(self.D, PolyMatrix)
            and isinstance(self.f, Poly2Vector)
            and isinstance(self.h, PolyVector)
        )

    def scaled(self, factor) -> "ProblemSpec":
        """Same operator with ``f`` and ``h`` multiplied by ``factor``."""
        f0, h0 = self.f, self.h
        return ProblemSpec(
            self.n,
            self.A,
            self.D,
            lambda x, t: factor * f0(x, t),
            lambda x: factor * h0(x),
            self.T,
            self.epsilons,
            self.name,
        )

    def to_json(self) -> dict:
        if not self.polynomial:
            raise SpecificationError("only polynomial problems can be serialized")
        return {
            "name": self.name,
            "n": int(self.n),
            "T": float(self.T),
            "A": self.A.to_json(),
            "D": self.D.to_json(),
            "f": self.f.to_json(),
            "h": self.h.to_json(),
            "epsilons": [float(e) for e in self.epsilons],
        }


def problem_from_dict(doc: dict) -> ProblemSpec:
    if not isinstance(doc, dict):
        raise SpecificationError("problem document must be a JSON object")
    missing = [k for k in ("n", "T", "A", "D", "f", "h") if k not in doc]
    if missing:
        raise SpecificationError(f"problem document lacks {', '.join(missing)}")
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SpecificationError("n must be a positive integer")
    try:
        A = PolyMatrix(doc["A"])
        D = PolyMatrix(doc["D"])
        f = Poly2Vector(doc["f"])
        h = PolyVector(doc["h"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecificationError):
            raise
        raise SpecificationError(f"malformed polynomial data: {exc}") from exc
    for label, dim in (("A", A.n), ("D", D.n), ("f", f.n), ("h", h.n)):
        if dim != n:
            raise SpecificationError(f"field {label} has dimension {dim}, expected {n}")
    T = doc["T"]
    if isinstance(T, bool) or not isinstance(T, (int, float)):
        raise SpecificationError("T must be a number")
    eps = tuple(parse_epsilon(e) for e in doc.get("epsilons", []))
    return ProblemSpec(n, A, D, f, h, float(T), eps, str(doc.get("name", "problem")))


def load_problem(path) -> ProblemSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SpecificationError(f"cannot read problem file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecificationError(f"problem file {path} is not valid JSON: {exc}") from exc
    return problem_from_dict(doc)


# -- presets -----------------------------------------------------------------

_BUMP = [[0, 0], [1, 1], [-1, -1]]  # x(1-x)(1+t)
_DEFAULT_EPS = ["1/16", "1/32", "1/64", "1/128", "1/256"]

_PRESETS: dict[str, tuple[str, dict]] = {
    "scalar-const": (
        "n=1, A=1, D=-1, f=x(1-x)(1+t), h=x(1-x)(1+2x)",
        {"n": 1, "T": 1.0, "A": [[[1]]], "D": [[[-1]]], "f": [_BUMP], "h": [[0, 1, 1, -2]]},
    ),
    "scalar-var-lambda": (
        "n=1, A=(1+x)^2, D=-1-t^2, f=x(1-x)(2-t), h=4x(1-x)",
        {
            "n": 1,
            "T": 1.0,
            "A": [[[1, 2, 1]]],
            "D": [[[-1, 0, -1]]],
            "f": [[[0, 0], [2, -1], [-2, 1]]],
            "h": [[0, 4, -4]],
        },
    ),
    "coupled-2x2": (
        "n=2, A=[[2+x,1],[0,1]], D=R(t)diag(-1,-2.5)R(t)^-1 with R=[[1,t],[0,1]], boundary-compatible f, h",
        {
            "n": 2,
            "T": 1.0,
            "A": [[[2, 1], [1]], [[0], [1]]],
            "D": [[[-1], [0, -1.5]], [[0], [-2.5]]],
            "f": [_BUMP, [[0, 0], [2, -1], [-2, 1]]],
            "h": [[0, 1, -1], [0, 1, 0, -1]],
        },
    ),
    "complex-2x2": (
        "n=2, A=[[2+x/2,-1],[1,2]] (eigenvalues 2+x/4 +- i sqrt(1-x^2/16)), D=[[-1,t/2],[0,-2.5]]",
        {
            "n": 2,
            "T": 1.0,
            "A": [[[2, 0.5], [-1]], [[1], [2]]],
            "D": [[[-1], [0, 0.5]], [[0], [-2.5]]],
            "f": [[[0], [1], [-1]], [[0]]],
            "h": [[0], [0, 1, -1]],
        },
    ),
    "scalar-forced": (
        "n=1, A=1, D=-1, f=1, h=x(1-x); forcing does not vanish at x=0,1 so boundary layers appear",
        {"n": 1, "T": 1.0, "A": [[[1]]], "D": [[[-1]]], "f": [[[1]]], "h": [[0, 1, -1]]},
    ),
}


def preset_names() -> list[str]:
    return list(_PRESETS)


def preset_description(name: str) -> str:
    return _PRESETS[name][0]


def preset(name: str) -> ProblemSpec:
    try:
        _, doc = _PRESETS[name]
    except KeyError:
        raise SpecificationError(f"unknown preset {name!r}; known: {', '.join(_PRESETS)}") from None
    return problem_from_dict(dict(doc, name=name, epsilons=_DEFAULT_EPS))


# -- assumption checks -------------------------------------------------------

@dataclass
class ConditionResult:
    name: str
    passed: bool
    margin: float
    point: Any = None
    message: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "margin": float(self.margin),
            "point": None if self.point is None else float(self.point),
            "message": self.message,
            "details": {k: float(v) for k, v in self.details.items()},
        }


@dataclass
class AssumptionReport:
    conditions: dict[str, ConditionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.passed]

    def __getitem__(self, key) -> ConditionResult:
        return self.conditions[str(key)]

    def to_dict(self):
        return {
            "passed": self.passed,
            "failed": self.failed(),
            "conditions": {k: c.to_dict() for k, c in self.conditions.items()},
        }


DEGENERACY_TOL = 1e-8


def _sorted_eigvals(mats):
    w = np.linalg.eigvals(mats)
    return np.take_along_axis(w, np.lexsort((w.imag, w.real), axis=-1), axis=-1)


def _tracked_eigvals(mats, coords):
    try:
        vals, _ = track_eigensystem(mats, coords, degeneracy_tol=0.0)
    except DegeneracyError:  # pragma: no cover - tol 0 never raises
        vals = _sorted_eigvals(mats)
    return vals


def validate_assumptions(spec: ProblemSpec, grid_density: int = 64) -> AssumptionReport:
    """Check the standing assumptions on a uniform grid of ``grid_density`` points.

    Besides conditions 1-4, a ``startup`` entry checks beta_i(0) != 0 and the
    absence of an order-one resonance beta_i(0) - beta_j(0) = 1; the interior
    solves divide by these quantities.
    """
    if grid_density < 16:
        raise SpecificationError("grid_density must be at least 16")
    xs = np.linspace(0.0, 1.0, grid_density)
    ts = np.linspace(0.0, spec.T, grid_density)
    n = spec.n
    res: dict[str, ConditionResult] = {}

    res["1"] = ConditionResult(
        "smoothness",
        True,
        0.0,
        message="polynomial entries" if spec.polynomial else "user-supplied fields assumed smooth",
    )

    A = spec.A(xs)
    if A.shape != (grid_density, n, n):
        raise SpecificationError("A(x) is not an n x n matrix field")
    lam = _tracked_eigvals(A, xs)
    re_min_idx = np.unravel_index(np.argmin(lam.real), lam.shape)
    min_re = float(lam.real[re_min_idx])
    if n > 1:
        gaps = np.abs(lam[:, :, None] - lam[:, None, :])
        gaps[:, np.arange(n), np.arange(n)] = np.inf
        gi = np.unravel_index(np.argmin(gaps), gaps.shape)
        min_gap, gap_x = float(gaps[gi]), xs[gi[0]]
    else:
        min_gap, gap_x = np.inf, None
    ok_re = min_re > 0.0
    ok_gap = min_gap > DEGENERACY_TOL
    if not ok_re:
        msg, margin, pt = "eigenvalue of A with non-positive real part", min_re, xs[re_min_idx[0]]
    elif not ok_gap:
        msg, margin, pt = "eigenvalues of A not distinct", min_gap, gap_x
    else:
        msg, margin, pt = "", min(min_re, min_gap), None
    res["2"] = ConditionResult(
        "spectrum of A",
        ok_re and ok_gap,
        margin,
        pt,
        msg,
        {"min_re_lambda": min_re, "min_gap": min_gap},
    )

    Dm = spec.D(ts)
    if Dm.shape != (grid_density, n, n):
        raise SpecificationError("D(t) is not an n x n matrix field")
    beta = _tracked_eigvals(Dm, ts)
    bi = np.unravel_index(np.argmax(beta.real), beta.shape)
    max_re = float(beta.real[bi])
    if n > 1:
        cross = np.abs(beta[0][None, :, None] - beta[:, None, :])
        cross[:, np.arange(n), np.arange(n)] = np.inf
        ci = np.unravel_index(np.argmin(cross), cross.shape)
        min_cross, cross_t = float(cross[ci]), ts[ci[0]]
    else:
        min_cross, cross_t = np.inf, None
    ok_sign = max_re <= 1e-12
    ok_cross = min_cross > DEGENERACY_TOL
    if not ok_sign:
        msg, pt = "eigenvalue of D with positive real part", ts[bi[0]]
    elif not ok_cross:
        msg, pt = "beta_i(0) coincides with beta_j(t) for some i != j", cross_t
    else:
        msg, pt = "", None
    res["3"] = ConditionResult(
        "spectrum of D",
        ok_sign and ok_cross,
        max_re,
        pt,
        msg,
        {"max_re_beta": max_re, "min_cross_gap": min_cross},
    )

    h = spec.h(np.array([0.0, 1.0]))
    mis = float(np.linalg.norm(h[0]) + np.linalg.norm(h[1]))
    res["4"] = ConditionResult(
        "compatibility h(0)=h(1)=0",
        mis <= 1e-12,
        mis,
        None,
        "" if mis <= 1e-12 else "initial data does not vanish at the boundary",
    )

    b0 = beta[0]
    min_abs = float(np.min(np.abs(b0)))
    if n > 1:
        diff = b0[:, None] - b0[None, :]
        reso = float(np.min(np.abs(diff - 1.0)))
    else:
        reso = np.inf
    ok_start = min_abs > DEGENERACY_TOL and reso > DEGENERACY_TOL
    res["startup"] = ConditionResult(
        "beta_i(0) != 0, no order-one resonance",
        ok_start,
        min_abs,
        0.0,
        "" if ok_start else ("beta_i(0) = 0" if min_abs <= DEGENERACY_TOL else "beta_i(0) - beta_j(0) = 1"),
        {"min_abs_beta0": min_abs, "resonance_gap": reso},
    )
    return AssumptionReport(res)
