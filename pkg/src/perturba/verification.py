"""Remainder measurement, order fitting, and report rendering."""

from __future__ import annotations

import csv
import io
import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import PerturbaError, SpecificationError
from .iteration import K_MAX, build_expansion
from .problem import ProblemSpec
from .reference import build_mesh, layer_width_constant, solve_reference
from .series import GridField, evaluate_partial_sum, format_float

REPORT_SCHEMA = "perturba.convergence/1"
ORDER_TOLERANCE = 0.3
FLOOR_FACTOR = 4.0


def _match_indices(sub, full, tol=1e-13):
    idx = np.searchsorted(full, sub)
    idx = np.clip(idx, 0, full.size - 1)
    left = np.clip(idx - 1, 0, full.size - 1)
    best = np.where(np.abs(full[left] - sub) < np.abs(full[idx] - sub), left, idx)
    if np.all(np.abs(full[best] - sub) <= tol * max(1.0, np.abs(full).max())):
        return best
    return None


def align(ref: GridField, x, t) -> np.ndarray:
    """Values of ``ref`` on the grid ``x`` x ``t``: exact node pick-out when possible, bilinear otherwise.

    Raises:
        SpecificationError: the target grid leaves the domain of ``ref``.
    """
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    ix, it = _match_indices(x, ref.x_nodes), _match_indices(t, ref.t_nodes)
    if ix is not None and it is not None:
        return ref.values[np.ix_(ix, it)]
    pad = 1e-12
    if (x.min() < ref.x_nodes[0] - pad or x.max() > ref.x_nodes[-1] + pad
            or t.min() < ref.t_nodes[0] - pad or t.max() > ref.t_nodes[-1] + pad):
        raise SpecificationError("grid domains do not match")
    interp = RegularGridInterpolator((ref.x_nodes, ref.t_nodes), ref.values, method="linear")
    X, Tt = np.meshgrid(np.clip(x, ref.x_nodes[0], ref.x_nodes[-1]),
                        np.clip(t, ref.t_nodes[0], ref.t_nodes[-1]), indexing="ij")
    return interp(np.stack([X, Tt], axis=-1))


def error_norm(asym: GridField, ref: GridField) -> float:
    """``max`` over the asymptotic grid of the Euclidean norm of ``ref - asym``.

    Raises:
        SpecificationError: different epsilon in the metadata, different
            dimension, or grids whose domains do not match.
    """
    ea, er = asym.meta.get("epsilon"), ref.meta.get("epsilon")
    if ea is not None and er is not None and abs(ea - er) > 1e-15 * max(ea, er):
        raise SpecificationError(f"fields belong to different epsilon ({ea} vs {er})")
    if asym.n != ref.n:
        raise SpecificationError("fields have different dimensions")
    other = align(ref, asym.x_nodes, asym.t_nodes)
    return float(np.linalg.norm(other - asym.values, axis=-1).max())


def fit_order(epsilons, errors) -> tuple[float, float]:
    """Least-squares fit of ``ln E = ln c + s ln eps``; returns ``(s, c)``."""
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.size < 2 or np.any(err <= 0):
        raise SpecificationError("order fit needs at least two positive errors")
    s, lnc = np.polyfit(np.log(eps), np.log(err), 1)
    return float(s), float(np.exp(lnc))


def local_orders(epsilons, errors) -> list:
    eps = np.asarray(epsilons, float)
    err = np.asarray(errors, float)
    out = [None]
    for k in range(1, eps.size):
        out.append(float(np.log(err[k] / err[k - 1]) / np.log(eps[k] / eps[k - 1])))
    return out


def order_improvement_threshold(epsilons, errors_low, errors_high):
    """Largest epsilon from which on (all smaller samples included) the higher order is no worse.

    Returns None when the higher order is worse at the smallest epsilon.
    """
    eps = np.asarray(epsilons, float)
    order = np.argsort(eps)
    lo = np.asarray(errors_low, float)[order]
    hi = np.asarray(errors_high, float)[order]
    threshold = None
    for k in range(eps.size):
        if hi[k] <= lo[k]:
            threshold = float(eps[order][k])
        else:
            break
    return threshold


@dataclass(frozen=True)
class MeshParams:
    N_x: int = 128
    N_t: int = 1024
    scheme: str = "crank_nicolson"
    stride: int = 4
    check_floor: bool = True
    c1: float = 2.0


@dataclass
class ConvergenceReport:
    order: int
    epsilons: list
    errors: list
    slope: float
    constant: float
    target: float
    passed: bool
    decreasing: bool
    floors: list = field(default_factory=list)
    floor_ratio: float | None = None
    local_orders: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    problem: str = ""
    tolerance: float = ORDER_TOLERANCE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = REPORT_SCHEMA
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConvergenceReport":
        d = dict(d)
        if d.pop("schema", REPORT_SCHEMA) != REPORT_SCHEMA:
            raise SpecificationError("unknown report schema")
        return cls(**d)


def _threads(requested=None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("PERTURBA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise SpecificationError(f"PERTURBA_THREADS must be an integer, got {env!r}") from exc
    return 1


def summarize(order: int, epsilons, errors, floors=(), runtime=None, problem: str = "",
              tolerance: float = ORDER_TOLERANCE) -> ConvergenceReport:
    """Fit the order and decide pass/fail for given per-epsilon errors."""
    eps = [float(e) for e in epsilons]
    err = [float(e) for e in errors]
    if len(eps) < 4:
        raise SpecificationError("a convergence study needs at least 4 epsilon values")
    target = 0.5 * (order + 1)
    notes = []
    if min(err) <= 0:
        slope, c = float("inf"), 0.0
        notes.append("zero error encountered; fit skipped")
    else:
        slope, c = fit_order(eps, err)
    decreasing = all(b < a for a, b in zip(err, err[1:]))
    floor_ratio = None
    if floors:
        worst = max(floors)
        floor_ratio = float(min(err) / worst) if worst > 0 else float("inf")
        for e, E, fl in zip(eps, err, floors):
            if E < FLOOR_FACTOR * fl:
                notes.append(f"error at eps={e!r} is within {FLOOR_FACTOR}x of the reference floor")
    passed = bool(np.isfinite(slope) and slope >= target - tolerance and decreasing)
    return ConvergenceReport(
        order=order,
        epsilons=eps,
        errors=err,
        slope=slope,
        constant=c,
        target=target,
        passed=passed,
        decreasing=decreasing,
        floors=[float(f) for f in floors],
        floor_ratio=floor_ratio,
        local_orders=local_orders(eps, err) if min(err) > 0 else [None] * len(eps),
        runtime=dict(runtime or {}),
        warnings=notes,
        problem=problem,
        tolerance=tolerance,
    )


def _reference_pair(spec, eps, mp: MeshParams, c0):
    mesh = build_mesh(eps, mp.N_x, mp.N_t, spec.T, c0, mp.c1)
    ref = solve_reference(spec, eps, mesh, mp.scheme)
    fine = None
    if mp.check_floor:
        mesh2 = build_mesh(eps, 2 * mp.N_x, 2 * mp.N_t, spec.T, c0, mp.c1)
        fine = solve_reference(spec, eps, mesh2, mp.scheme)
    return ref, fine


def reference_solutions(spec: ProblemSpec, epsilons, mesh: MeshParams = MeshParams(), threads=None) -> dict:
    """Reference solves (and their doubled-mesh controls) keyed by epsilon."""
    c0 = layer_width_constant(spec)

    def run(eps):
        try:
            return eps, _reference_pair(spec, eps, mesh, c0)
        except PerturbaError as exc:
            raise type(exc)(f"reference solve at eps={eps!r}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=_threads(threads)) as pool:
        return dict(pool.map(run, [float(e) for e in epsilons]))


def convergence_study(spec: ProblemSpec, n: int, epsilons=None, mesh: MeshParams = MeshParams(),
                      error_provider: Callable[[float], float] | None = None, expansion=None,
                      references: dict | None = None, threads=None) -> ConvergenceReport:
    """Remainder ``u_ref - u_eps,n`` for each epsilon and the fitted order.

    Args:
        spec: problem.
        n: truncation order, ``0 <= n <= K_MAX``.
        epsilons: at least 4 values, each at most half the previous one;
            defaults to ``spec.epsilons``.
        mesh: reference mesh and evaluation stride (the asymptotic grid is
            every ``stride``-th reference node).
        error_provider: replaces the whole pipeline by ``E(eps)`` (test seam).
        expansion: prebuilt expansion to reuse.
        references: prebuilt ``reference_solutions`` output to reuse.
        threads: cap on concurrent reference solves; defaults to
            ``PERTURBA_THREADS`` or 1.
    """
    eps = [float(e) for e in (spec.epsilons if epsilons is None else epsilons)]
    if len(eps) < 4:
        raise SpecificationError("a convergence study needs at least 4 epsilon values")
    if any(b > 0.5 * a * (1 + 1e-12) for a, b in zip(eps, eps[1:])):
        raise SpecificationError("epsilon values must decrease by a factor of at least 2")
    if not 0 <= n <= K_MAX:
        raise SpecificationError(f"order must lie in 0..{K_MAX}")
    start = time.perf_counter()
    if error_provider is not None:
        errors = [float(error_provider(e)) for e in eps]
        return summarize(n, eps, errors, runtime={"total_s": time.perf_counter() - start}, problem=spec.name)

    t0 = time.perf_counter()
    if expansion is None or expansion.order < n:
        expansion = build_expansion(spec, order=n)
    t_exp = time.perf_counter() - t0
    t0 = time.perf_counter()
    if references is None:
        references = reference_solutions(spec, eps, mesh, threads)
    t_ref = time.perf_counter() - t0
    errors, floors = [], []
    for e in eps:
        ref, fine = references[e]
        xs, ts = ref.x_nodes[:: mesh.stride], ref.t_nodes[:: mesh.stride]
        asym = evaluate_partial_sum(expansion, n, e, xs, ts)
        errors.append(error_norm(asym, ref))
        if fine is not None:
            coarse = GridField(xs, ts, ref.values[:: mesh.stride, :: mesh.stride], ref.meta)
            floors.append(error_norm(coarse, fine))
    runtime = {"expansion_s": t_exp, "reference_s": t_ref, "total_s": time.perf_counter() - start}
    report = summarize(n, eps, errors, floors, runtime, spec.name)
    for w in report.warnings:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    return report


# -- rendering ---------------------------------------------------------------

def _svg(report: ConvergenceReport) -> str:
    le = np.log10(report.epsilons)
    lE = np.log10(report.errors)
    guide = lE[0] + report.target * (le - le[0])
    lo_x, hi_x = le.min(), le.max()
    lo_y, hi_y = min(lE.min(), guide.min()), max(lE.max(), guide.max())
    W, H, pad = 400.0, 300.0, 30.0

    def px(a):
        return pad + (a - lo_x) / ((hi_x - lo_x) or 1.0) * (W - 2 * pad)

    def py(b):
        return H - pad - (b - lo_y) / ((hi_y - lo_y) or 1.0) * (H - 2 * pad)

    def pts(xs, ys):
        return " ".join(f"{px(a):.3f},{py(b):.3f}" for a, b in zip(xs, ys))

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:g}" height="{H:g}" viewBox="0 0 {W:g} {H:g}">\n'
        f"  <!-- log10(epsilon) vs log10(error); order {report.order}, slope {report.slope:.6f} -->\n"
        f'  <polyline id="error" fill="none" stroke="black" points="{pts(le, lE)}"/>\n'
        f'  <polyline id="target" fill="none" stroke="gray" stroke-dasharray="4 3" '
        f'points="{pts(le, guide)}"/>\n'
        "</svg>\n"
    )


def emit_report(report: ConvergenceReport, fmt: str = "json", sink=None, include_runtime: bool = True) -> str:
    """Render a report as ``csv``, ``json`` or ``svg`` (``svg-plot-data``) and optionally write it.

    Timings are the only nondeterministic fields; ``include_runtime=False``
    drops them so repeated runs give identical bytes.

    Raises:
        SpecificationError: unknown format.
        OSError: the sink cannot be written.
    """
    fmt = {"svg-plot-data": "svg"}.get(fmt, fmt)
    if fmt == "json":
        d = report.to_dict()
        if not include_runtime:
            d["runtime"] = {}
        doc = json.dumps(d, indent=2, sort_keys=True, allow_nan=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "error", "local_order"])
        for e, E, lo in zip(report.epsilons, report.errors, report.local_orders):
            w.writerow([format_float(e), format_float(E), "" if lo is None else format_float(lo)])
        doc = buf.getvalue()
    elif fmt == "svg":
        doc = _svg(report)
    else:
        raise SpecificationError(f"unknown report format {fmt!r}")
    if sink is not None:
        Path(sink).write_text(doc, encoding="utf-8")
    return doc
