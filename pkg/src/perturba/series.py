"""Partial sums of the expansion on tensor (x, t) grids, and grid-field IO."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SpecificationError
from .problem import ProblemSpec

SCHEMA = "perturba.gridfield/1"


def format_float(v: float) -> str:
    """Shortest round-trip representation, so outputs are byte-stable."""
    return repr(float(v))


def _sibling(stem, ext: str) -> Path:
    # appended rather than substituted: stems such as "eps0.0625" contain dots
    stem = Path(stem)
    return stem.with_name(stem.name + ext)


@dataclass
class GridField:
    """Vector samples ``values[ix, it, :]`` on the tensor grid ``x_nodes`` x ``t_nodes``."""

    x_nodes: np.ndarray
    t_nodes: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x_nodes = np.asarray(self.x_nodes, dtype=float)
        self.t_nodes = np.asarray(self.t_nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3 or self.values.shape[:2] != (self.x_nodes.size, self.t_nodes.size):
            raise SpecificationError(
                f"field values of shape {self.values.shape} do not match the "
                f"{self.x_nodes.size} x {self.t_nodes.size} grid"
            )
        for nodes, label in ((self.x_nodes, "x"), (self.t_nodes, "t")):
            if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
                raise SpecificationError(f"{label} nodes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise SpecificationError("field contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[2]

    def header(self) -> dict:
        meta = {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.meta.items()}
        return {
            "schema": SCHEMA,
            "n": int(self.n),
            "nx": int(self.x_nodes.size),
            "nt": int(self.t_nodes.size),
            "meta": meta,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["x", "t"]
        for i in range(self.n):
            cols += [f"re_u{i}", f"im_u{i}"]
        w.writerow(cols)
        for ix, x in enumerate(self.x_nodes):
            for it, t in enumerate(self.t_nodes):
                row = [format_float(x), format_float(t)]
                for v in self.values[ix, it]:
                    row += [format_float(v.real), format_float(v.imag)]
                w.writerow(row)
        return buf.getvalue()

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` and ``<stem>.json`` (the header)."""
        csv_path, json_path = _sibling(stem, ".csv"), _sibling(stem, ".json")
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        json_path.write_text(json.dumps(self.header(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return csv_path, json_path

    @classmethod
    def load(cls, stem) -> "GridField":
        head = json.loads(_sibling(stem, ".json").read_text(encoding="utf-8"))
        if head.get("schema") != SCHEMA:
            raise SpecificationError(f"unknown grid-field schema {head.get('schema')!r}")
        data = np.loadtxt(_sibling(stem, ".csv"), delimiter=",", skiprows=1, ndmin=2)
        nx, nt, n = head["nx"], head["nt"], head["n"]
        x = data[::nt, 0]
        t = data[:nt, 1]
        vals = (data[:, 2::2] + 1j * data[:, 3::2]).reshape(nx, nt, n)
        return cls(x, t, vals, head.get("meta", {}))


def default_x_nodes(m: int = 129) -> np.ndarray:
    """Chebyshev-clustered nodes on [0, 1] (dense near both walls)."""
    k = np.arange(m)
    x = 0.5 * (1.0 - np.cos(np.pi * k / (m - 1)))
    x[0], x[-1] = 0.0, 1.0
    return x


def default_t_nodes(epsilon: float, T: float, m: int = 129) -> np.ndarray:
    """Nodes uniform in ``ln(1 + t/eps)``, i.e. geometric clustering at t = 0."""
    s = np.linspace(0.0, np.log1p(T / epsilon), m)
    t = epsilon * np.expm1(s)
    t[-1] = T
    return t


def evaluate_partial_sum(expansion, n: int, epsilon: float, x_nodes=None, t_nodes=None) -> GridField:
    """``sum_{k<=n} eps^{k/2} u_k`` restricted to the physical variables.

    Args:
        expansion: result of ``build_expansion`` holding at least n+1 terms.
        n: truncation order.
        epsilon: small parameter.
        x_nodes, t_nodes: evaluation grid; clustered defaults when omitted.
    """
    if n < 0 or n > expansion.order:
        raise SpecificationError(f"expansion holds orders 0..{expansion.order}, requested {n}")
    if not 0.0 < epsilon < 1.0:
        raise SpecificationError(f"epsilon must lie in (0, 1), got {epsilon}")
    spec = expansion.spec
    x = default_x_nodes() if x_nodes is None else np.asarray(x_nodes, dtype=float)
    t = default_t_nodes(epsilon, spec.T) if t_nodes is None else np.asarray(t_nodes, dtype=float)
    total = np.zeros((t.size, x.size, spec.n), dtype=complex)
    for k in range(n + 1):
        total += epsilon ** (0.5 * k) * expansion.evaluate_term(k, x, t, epsilon)
    meta = {"epsilon": float(epsilon), "order": int(n), "provenance": "asymptotic", "problem": spec.name}
    return GridField(x, t, np.swapaxes(total, 0, 1), meta)


def boundary_residuals(fld: GridField, spec: ProblemSpec) -> tuple[float, float, float]:
    """Max-norm residuals of ``u(x,0) - h(x)``, ``u(0,t)`` and ``u(1,t)``.

    Raises:
        SpecificationError: the grid lacks the boundary nodes.
    """
    x, t = fld.x_nodes, fld.t_nodes
    if x[0] != 0.0 or x[-1] != 1.0 or t[0] != 0.0:
        raise SpecificationError("boundary residuals need nodes at x=0, x=1 and t=0")
    init = np.linalg.norm(fld.values[:, 0, :] - spec.h(x), axis=-1).max()
    left = np.linalg.norm(fld.values[0], axis=-1).max()
    right = np.linalg.norm(fld.values[-1], axis=-1).max()
    return float(init), float(left), float(right)
