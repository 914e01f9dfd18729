"""Command-line front end.

Exit status: 0 success, 1 verification did not pass, 2 bad configuration,
3 violated assumptions, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssumptionError, PerturbaError, SpecificationError
from .iteration import K_MAX, build_expansion
from .problem import (
    ProblemSpec,
    load_problem,
    parse_epsilon,
    preset,
    preset_description,
    preset_names,
    validate_assumptions,
)
from .reference import build_mesh, layer_width_constant, solve_reference
from .series import evaluate_partial_sum
from .verification import MeshParams, convergence_study, emit_report

SCHEMA_TAG = "perturba/1"
COMMANDS = ("validate", "expand", "solve-ref", "verify", "presets")


@dataclass
class RunConfig:
    command: str
    problem: str | None = None
    preset: str | None = None
    order: int = 0
    epsilons: tuple | None = None
    N_x: int = 128
    N_t: int = 1024
    scheme: str = "crank_nicolson"
    out: Path | None = None
    formats: tuple = ("json",)
    grid_density: int = 64
    threads: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise SpecificationError(f"unknown command {self.command!r}")
        if self.command != "presets" and (self.problem is None) == (self.preset is None):
            raise SpecificationError("give exactly one of --problem or --preset")
        if not 0 <= self.order <= K_MAX:
            raise SpecificationError(f"order must lie in 0..{K_MAX}")
        bad = set(self.formats) - {"json", "csv", "svg"}
        if bad:
            raise SpecificationError(f"unknown format(s) {sorted(bad)}")


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load(config: RunConfig) -> ProblemSpec:
    spec = preset(config.preset) if config.preset else load_problem(config.problem)
    if config.epsilons is not None:
        spec = ProblemSpec(spec.n, spec.A, spec.D, spec.f, spec.h, spec.T, tuple(config.epsilons), spec.name)
    return spec


def _write(out: Path | None, name: str, text: str):
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def _require_valid(spec, density):
    report = validate_assumptions(spec, density)
    if not report.passed:
        raise AssumptionError(f"assumption(s) {', '.join(report.failed())} violated", report)


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    if config.command == "presets":
        lines = [f"{name}\t{preset_description(name)}\n" for name in preset_names()]
        _write(config.out and Path(config.out), "presets.txt", "".join(lines))
        return 0

    spec = _load(config)
    out = Path(config.out) if config.out else None

    if config.command == "validate":
        report = validate_assumptions(spec, config.grid_density)
        doc = {"schema": SCHEMA_TAG, "kind": "assumptions", "problem": spec.name, **report.to_dict()}
        _write(out, "assumptions.json", _json_dump(doc))
        if not report.passed:
            sys.stderr.write(f"assumption(s) violated: {', '.join(report.failed())}\n")
            return AssumptionError.exit_code
        return 0

    if not spec.epsilons:
        raise SpecificationError("no epsilon values; pass --epsilons")
    _require_valid(spec, config.grid_density)

    if config.command == "expand":
        exp = build_expansion(spec, order=config.order, validate=False)
        terms = []
        for term in exp.terms:
            terms.append({
                "k": term.k,
                "max_abs_V": float(np.abs(term.V.values).max()),
                "max_abs_C": float(np.abs(term.C.values).max()),
                "max_abs_P": float(np.abs(term.P).max()),
                "has_layers": bool(term.has_layers),
                "residuals": {k: float(v) for k, v in sorted(term.residuals.items())},
                "max_regularity_defect": float(np.abs(term.regularity_defect).max()),
            })
        fields = []
        for eps in spec.epsilons:
            fld = evaluate_partial_sum(exp, config.order, eps)
            stem = f"asymptotic_n{config.order}_eps{eps!r}"
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                fld.save(out / stem)
            fields.append(stem)
        doc = {"schema": SCHEMA_TAG, "kind": "expansion", "problem": spec.name, "order": config.order,
               "terms": terms, "fields": fields}
        _write(out, "expansion.json", _json_dump(doc))
        return 0

    if config.command == "solve-ref":
        c0 = layer_width_constant(spec)
        stems = []
        for eps in spec.epsilons:
            mesh = build_mesh(eps, config.N_x, config.N_t, spec.T, c0)
            fld = solve_reference(spec, eps, mesh, config.scheme)
            stem = f"reference_eps{eps!r}"
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                fld.save(out / stem)
            stems.append(stem)
        doc = {"schema": SCHEMA_TAG, "kind": "reference", "problem": spec.name, "scheme": config.scheme,
               "N_x": config.N_x, "N_t": config.N_t, "fields": stems}
        _write(out, "reference.json", _json_dump(doc))
        return 0

    # verify
    mesh = MeshParams(N_x=config.N_x, N_t=config.N_t, scheme=config.scheme)
    report = convergence_study(spec, config.order, spec.epsilons, mesh, threads=config.threads)
    for fmt in config.formats:
        doc = emit_report(report, fmt, include_runtime=False)
        _write(out, f"convergence.{fmt}", doc)
    sys.stderr.write(
        f"order {report.order}: slope {report.slope:.4f} (target {report.target}), "
        f"{'PASS' if report.passed else 'FAIL'}\n"
    )
    return 0 if report.passed else 1


def _epsilons(text: str) -> tuple:
    try:
        return tuple(parse_epsilon(e) for e in text.split(",") if e.strip())
    except SpecificationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perturba", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def problem_args(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--problem", help="problem JSON file")
        g.add_argument("--preset", help="bundled problem name (see 'presets')")
        sp.add_argument("--out", type=Path, help="output directory (stdout when omitted)")
        sp.add_argument("--grid-density", type=int, default=64)

    sp = sub.add_parser("presets", help="list bundled problems")
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("validate", help="check the standing assumptions")
    problem_args(sp)

    for name, helptext in (("expand", "build the expansion and evaluate partial sums"),
                           ("solve-ref", "run the finite-difference reference solver"),
                           ("verify", "measure the remainder and fit its order")):
        sp = sub.add_parser(name, help=helptext)
        problem_args(sp)
        sp.add_argument("--epsilons", type=_epsilons, help="comma-separated, e.g. 1/16,1/32")
        if name != "solve-ref":
            sp.add_argument("--order", type=int, default=0)
        if name != "expand":
            sp.add_argument("--nx", type=int, default=128)
            sp.add_argument("--nt", type=int, default=1024)
            sp.add_argument("--scheme", choices=["implicit_euler", "crank_nicolson"],
                            default="crank_nicolson" if name == "verify" else "implicit_euler")
        if name == "verify":
            sp.add_argument("--format", default="json", help="comma-separated subset of json,csv,svg")
            sp.add_argument("--threads", type=int)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=ns.command,
        problem=getattr(ns, "problem", None),
        preset=getattr(ns, "preset", None),
        order=getattr(ns, "order", 0),
        epsilons=getattr(ns, "epsilons", None),
        N_x=getattr(ns, "nx", 128),
        N_t=getattr(ns, "nt", 1024),
        scheme=getattr(ns, "scheme", "crank_nicolson"),
        out=getattr(ns, "out", None),
        formats=tuple(f.strip() for f in getattr(ns, "format", "json").split(",") if f.strip()),
        grid_density=getattr(ns, "grid_density", 64),
        threads=getattr(ns, "threads", None),
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2, matching the config class
        return int(exc.code or 0)
    try:
        return run(config_from_args(ns))
    except PerturbaError as exc:
        sys.stderr.write(f"perturba: {type(exc).__name__}: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
