"""Command-line entry point.

Exit codes: 0 success or PASSED, 1 verification failure or probe violation,
2 input error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixtures
from .calibration import CalibrationError, CalibrationField, SamplingConfig, build_calibration, verify_calibration
from .competitors import MODES, RejectionBudgetExceeded, minimality_probe
from .energy import InvalidCompetitor, PolygonalPartition, QuadratureConfig, l1_distance, same_trace, \
    verify_energy_identity
from .geometry import InvalidNetwork, segment_distance
from .io import dumps, read_json
from .partition import FlatPartition, NoAdmissibleScales, audit_scales, find_localization_scales, \
    validate_flat_partition
from .stationarity import BUILTIN_FIELDS, BumpField, NonGenericRadius, UnstableProbe, builtin_field, \
    classify_point, euler_lagrange_terms, monotonicity_profile, probe_points
from .svg import field_svg, partition_svg
from .tensions import MalformedTensions, NotAdmissible, SurfaceTensionMatrix, check_strict_triangle, \
    embed_simplex, gram_matrix

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    inputs: list = field(default_factory=list)
    h: float | None = None
    fd_h: float | None = None
    kappas: tuple = (0.2, 0.1, 0.05)
    seed: int = 0
    trials: int = 100
    output: str | None = None
    plot: bool = False
    threads: int = 1

    def check(self):
        for name in ("h", "fd_h"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise InputError(f"--{name.replace('_', '-')} must be positive")
        if any(not k > 0 for k in self.kappas):
            raise InputError("kappa values must be positive")
        if self.trials < 0:
            raise InputError("--trials must be non-negative")
        if self.threads < 1:
            raise InputError("--threads must be at least 1")
        for path in self.inputs:
            if path is not None and not Path(path).is_file():
                raise InputError(f"no such file: {path}")
        return self


# ------------------------------------------------------------------ helpers

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _point(text: str) -> np.ndarray:
    v = _floats(text)
    if len(v) != 2:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}")
    return np.array(v)


def _radii(text: str) -> list[float]:
    """Either r1,r2,... or r1..r2:n (n evenly spaced values)."""
    if ".." in text:
        try:
            span, n = text.split(":")
            lo, hi = (float(t) for t in span.split(".."))
            n = int(n)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected r1..r2:n, got {text!r}") from exc
        if n < 1 or not 0 < lo <= hi:
            raise argparse.ArgumentTypeError(f"bad radius range {text!r}")
        return list(np.linspace(lo, hi, n)) if n > 1 else [lo]
    return _floats(text)


def _load(path):
    try:
        return read_json(path)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def _partition(path, cls=FlatPartition):
    return cls.from_json(_load(path))


def _field(path) -> CalibrationField:
    obj = _load(path)
    if "partition" not in obj:
        raise InputError(f"{path}: not a calibration field file")
    return CalibrationField.from_json(obj)


def _emit(obj, out: str | None):
    text = dumps(obj)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_svg(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("CALIBNET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise InputError(f"CALIBNET_THREADS must be an integer, got {env!r}") from exc
    return 1


# ----------------------------------------------------------------- commands

def cmd_tensions_check(args) -> int:
    RunConfig("tensions check", [args.file]).check()
    sigma = SurfaceTensionMatrix.from_json(_load(args.file))
    out = {"P": sigma.P, "sigma": sigma.sigma, "gram_eigenvalues": np.linalg.eigvalsh(gram_matrix(sigma)),
           "triangle_violations": check_strict_triangle(sigma)}
    try:
        emb = embed_simplex(sigma)
    except NotAdmissible as exc:
        out.update({"admissible": False, "reason": str(exc)})
        _emit(out, args.output)
        return EXIT_FAIL
    out.update({"admissible": True, "points": emb.points, "max_distance_error": emb.max_distance_error})
    _emit(out, args.output)
    return EXIT_OK


def cmd_partition_validate(args) -> int:
    RunConfig("partition validate", [args.file]).check()
    rep = validate_flat_partition(_partition(args.file, PolygonalPartition))
    _emit(rep, args.output)
    return EXIT_OK if rep.valid else EXIT_FAIL


def cmd_partition_scales(args) -> int:
    RunConfig("partition scales", [args.file], seed=args.seed).check()
    p = _partition(args.file)
    rep = validate_flat_partition(p)
    if not rep.valid:
        _emit({"status": "FAILED", "validation": rep}, args.output)
        return EXIT_FAIL
    try:
        s = find_localization_scales(p)
    except NoAdmissibleScales as exc:
        _emit({"status": "FAILED", "reason": str(exc)}, args.output)
        return EXIT_FAIL
    audit = audit_scales(p, s, n=args.audit, seed=args.seed)
    _emit({"status": "PASSED" if not audit else "FAILED", "scales": s, "features": p.features,
           "audit_violations": audit}, args.output)
    return EXIT_OK if not audit else EXIT_FAIL


def cmd_partition_plot(args) -> int:
    RunConfig("partition plot", [args.file], output=args.output, plot=True).check()
    p = _partition(args.file, PolygonalPartition)
    scales = None
    if not args.no_dumbbell:
        fp = FlatPartition(p.domain, p.tensions, p.vertices, p.segments)
        if validate_flat_partition(fp).valid:
            try:
                scales = find_localization_scales(fp)
                p = fp
            except NoAdmissibleScales:
                scales = None
    _emit_svg(partition_svg(p, scales), args.output)
    return EXIT_OK


def cmd_calibration_build(args) -> int:
    RunConfig("calibration build", [args.file]).check()
    p = _partition(args.file)
    fault = None
    if args.fault_phase is not None:
        vec = args.fault_vector or [0.5, 0.0]
        if len(vec) != 2:
            raise InputError("--fault-vector needs two components")
        fault = (args.fault_phase, np.asarray(vec, float))
    fld = build_calibration(p, delta_prime=args.delta_prime, fault=fault)
    _emit(fld.to_json(), args.output)
    return EXIT_OK


def cmd_calibration_verify(args) -> int:
    cfg = RunConfig("calibration verify", [args.field], fd_h=args.fd_h, kappas=tuple(args.kappa),
                    seed=args.seed).check()
    if args.grid_h is not None and not args.grid_h > 0:
        raise InputError("--grid-h must be positive")
    fld = _field(args.field)
    sampling = SamplingConfig(grid_h=args.grid_h, fd_h=cfg.fd_h, kappas=cfg.kappas,
                              n_outside=args.n_outside, seed=cfg.seed)
    rep = verify_calibration(fld, sampling)
    _emit(rep, args.output)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_calibration_plot(args) -> int:
    RunConfig("calibration plot", [args.field], output=args.output, plot=True).check()
    fld = _field(args.field)
    phases = args.phases or None
    if phases and any(not 1 <= i <= fld.partition.P for i in phases):
        raise InputError(f"phases must lie in 1..{fld.partition.P}")
    _emit_svg(field_svg(fld, n_grid=args.grid, phases=phases), args.output)
    return EXIT_OK


def _energy(args, identity: bool) -> int:
    RunConfig("energy", [args.competitor, args.reference, args.field], h=args.h, fd_h=args.fd_h).check()
    p = _partition(args.reference)
    q = PolygonalPartition.from_json(_load(args.competitor))
    errs = q.validation_errors()
    if errs:
        raise InputError("competitor is not a valid polygonal partition: " + "; ".join(errs))
    if not q.domain.same_as(p.domain):
        raise InputError("competitor and reference live on different domains")
    if not same_trace(q, p):
        raise InputError("competitor does not share the reference boundary trace")
    fld = _field(args.field) if args.field else build_calibration(p)
    quad = QuadratureConfig(h=args.h, fd_h=args.fd_h, rule=args.rule)
    rep = verify_energy_identity(q, fld, quad)
    out = rep.to_json()
    out["l1_distance"] = {str(i): v for i, v in sorted(l1_distance(q, p).items())}
    if identity:
        rhs = rep.E_reference + rep.relative_energy + rep.bulk_term + rep.boundary_term
        out["breakdown"] = {"lhs": rep.E_competitor, "rhs": rhs, "E_reference": rep.E_reference,
                            "relative_energy": rep.relative_energy, "bulk_term": rep.bulk_term,
                            "boundary_term": rep.boundary_term, "residual": rep.identity_residual}
        if args.tol is not None:
            ok = rep.identity_residual <= args.tol
            out["status"] = "PASSED" if ok else "FAILED"
            _emit(out, args.output)
            return EXIT_OK if ok else EXIT_FAIL
    _emit(out, args.output)
    return EXIT_OK


def cmd_energy_eval(args) -> int:
    return _energy(args, identity=False)


def cmd_energy_identity(args) -> int:
    return _energy(args, identity=True)


def _auto_radius(p, x) -> float:
    """Probe radius small enough to see only the features through x."""
    x = np.asarray(x, float)
    A, B, _ = p.seg_arrays
    dists = [float(p.domain.dist_to_boundary(x[None])[0])]
    dists += [d for d in (float(np.linalg.norm(v - x)) for v in p.vertices) if d > 1e-9]
    dists += [d for d in (float(segment_distance(x[None], A[k], B[k])[0][0]) for k in range(len(A))) if d > 1e-9]
    return min(0.4 * min(dists), 0.1 * p.domain.radius)


def cmd_stationarity_classify(args) -> int:
    RunConfig("stationarity classify", [args.file]).check()
    if args.r is not None and not args.r > 0:
        raise InputError("--r must be positive")
    p = _partition(args.file, PolygonalPartition)
    if args.points == "auto":
        pts = probe_points(p)
    else:
        raw = _load(args.points)
        try:
            pts = [np.asarray(v, float).reshape(2) for v in raw]
        except (TypeError, ValueError) as exc:
            raise InputError(f"{args.points}: expected a list of [x, y] points") from exc
    results, stationary = [], True
    for x in pts:
        r = args.r if args.r is not None else _auto_radius(p, x)
        try:
            c = classify_point(p, x, r)
        except (NonGenericRadius, UnstableProbe) as exc:
            results.append({"point": x, "r": r, "label": "UNRESOLVED", "reason": str(exc)})
            stationary = False
            continue
        results.append(c.to_json())
        stationary &= c.label != "NON_STATIONARY"
    _emit({"status": "PASSED" if stationary else "FAILED", "points": results}, args.output)
    return EXIT_OK if stationary else EXIT_FAIL


def _eta(spec: str, domain):
    if spec.startswith("builtin:"):
        return builtin_field(spec.split(":", 1)[1], domain)
    obj = _load(spec)
    try:
        return BumpField(str(obj.get("name", "file")), tuple(float(c) for c in obj["center"]),
                         float(obj["rho"]), tuple(float(c) for c in obj["direction"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{spec}: expected {{center, rho, direction}}") from exc


def cmd_stationarity_el(args) -> int:
    RunConfig("stationarity el-residual", [args.file]).check()
    p = _partition(args.file, PolygonalPartition)
    specs = [f"builtin:{n}" for n in BUILTIN_FIELDS] if args.eta == "builtin:all" else [args.eta]
    rows, ok = [], True
    for spec in specs:
        eta = _eta(spec, p.domain)
        terms = euler_lagrange_terms(p, eta)
        res = abs(terms["quadrature"])
        ok &= res <= args.tol
        rows.append({"eta": spec, "residual": res, **terms})
    _emit({"status": "PASSED" if ok else "FAILED", "tol": args.tol, "fields": rows}, args.output)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_stationarity_monotonicity(args) -> int:
    RunConfig("stationarity monotonicity", [args.file]).check()
    p = _partition(args.file, PolygonalPartition)
    prof = monotonicity_profile(p, args.center, args.radii, tol=args.tol)
    _emit({"status": "PASSED" if prof.nondecreasing else "FAILED", **prof.to_json()}, args.output)
    return EXIT_OK if prof.nondecreasing else EXIT_FAIL


def cmd_probe(args) -> int:
    cfg = RunConfig("probe", [args.file, args.field], seed=args.seed, trials=args.trials,
                    threads=_threads(args)).check()
    p = _partition(args.file)
    fld = _field(args.field) if args.field else build_calibration(p)
    r_bar = fld.scales.r_bar
    if args.amplitude is not None:
        if any(not a > 0 for a in args.amplitude):
            raise InputError("--amplitude values must be positive")
        sched = list(args.amplitude)
    else:
        sched = [f * r_bar for f in args.amplitude_factor]
    quad = QuadratureConfig(h=args.h) if args.identity else None
    rep = minimality_probe(p, fld, cfg.trials, sched, cfg.seed, args.modes, args.refinement,
                           identity_quad=quad, threads=cfg.threads)
    _emit(rep, args.output)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_fixture(args) -> int:
    name = args.fixture
    if name == "hexagon":
        if not 0 < args.rho < args.outer_radius:
            raise InputError("--rho must lie in (0, outer radius)")
        p = fixtures.hexagon_network(args.rho, args.outer_radius)
    elif name == "diameter":
        p = fixtures.diameter(args.radius)
    elif name == "junction":
        p = fixtures.skewed_junction(tuple(args.angles)) if args.angles else fixtures.symmetric_junction()
    elif name == "cross":
        p = fixtures.cross()
    else:
        if len(args.angles) != len(args.phases):
            raise InputError("--angles and --phases need the same length")
        p = fixtures.star(args.angles, args.phases)
    _emit(p.to_json(), args.output)
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _out(sp, help_="output path (default: standard output)"):
    sp.add_argument("-o", "--output", help=help_)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="calibnet", description="Local calibrations for planar multiphase networks.")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads for independent trials (default: CALIBNET_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tensions", help="surface tension matrices").add_subparsers(dest="action", required=True)
    sp = t.add_parser("check", help="admissibility and simplex embedding")
    sp.add_argument("file")
    _out(sp)
    sp.set_defaults(func=cmd_tensions_check)

    pt = sub.add_parser("partition", help="flat partitions").add_subparsers(dest="action", required=True)
    sp = pt.add_parser("validate", help="check the regular flat partition conditions")
    sp.add_argument("file")
    _out(sp)
    sp.set_defaults(func=cmd_partition_validate)
    sp = pt.add_parser("scales", help="admissible localization scales")
    sp.add_argument("file")
    sp.add_argument("--audit", type=int, default=1000, help="random audit samples")
    sp.add_argument("--seed", type=int, default=0)
    _out(sp)
    sp.set_defaults(func=cmd_partition_scales)
    sp = pt.add_parser("plot", help="SVG of the partition and its dumbbell neighbourhood")
    sp.add_argument("file")
    sp.add_argument("--no-dumbbell", action="store_true")
    _out(sp, "SVG output path")
    sp.set_defaults(func=cmd_partition_plot)

    c = sub.add_parser("calibration", help="local paired calibrations").add_subparsers(dest="action", required=True)
    sp = c.add_parser("build", help="construct the calibration field")
    sp.add_argument("file")
    sp.add_argument("--delta-prime", type=float, default=None)
    sp.add_argument("--fault-phase", type=int, default=None, help="inject a constant defect into this phase")
    sp.add_argument("--fault-vector", type=_floats, default=None)
    _out(sp)
    sp.set_defaults(func=cmd_calibration_build)
    sp = c.add_parser("verify", help="sample the calibration properties")
    sp.add_argument("field")
    sp.add_argument("--grid-h", type=float, default=None)
    sp.add_argument("--fd-h", type=float, default=None)
    sp.add_argument("--kappa", type=_floats, default=[0.2, 0.1, 0.05])
    sp.add_argument("--n-outside", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    _out(sp)
    sp.set_defaults(func=cmd_calibration_verify)
    sp = c.add_parser("plot", help="SVG arrow glyphs of the field")
    sp.add_argument("field")
    sp.add_argument("--grid", type=int, default=41)
    sp.add_argument("--phases", type=lambda s: [int(v) for v in _floats(s)], default=None)
    _out(sp, "SVG output path")
    sp.set_defaults(func=cmd_calibration_plot)

    e = sub.add_parser("energy", help="competitor energies").add_subparsers(dest="action", required=True)
    for name, fn, help_ in (("eval", cmd_energy_eval, "energy report"),
                            ("identity", cmd_energy_identity, "energy identity with breakdown")):
        sp = e.add_parser(name, help=help_)
        sp.add_argument("competitor")
        sp.add_argument("--reference", required=True)
        sp.add_argument("--field", default=None)
        sp.add_argument("--h", type=float, default=None, help="bulk quadrature cell size")
        sp.add_argument("--fd-h", type=float, default=None)
        sp.add_argument("--rule", choices=("node", "midpoint"), default="node")
        if name == "identity":
            sp.add_argument("--tol", type=float, default=None, help="fail if the residual exceeds this")
        _out(sp)
        sp.set_defaults(func=fn)

    s = sub.add_parser("stationarity", help="stationarity diagnostics").add_subparsers(dest="action", required=True)
    sp = s.add_parser("classify", help="classify probe points")
    sp.add_argument("file")
    sp.add_argument("--points", default="auto", help="'auto' or a JSON file of [x, y] points")
    sp.add_argument("--r", type=float, default=None, help="probe radius (default: per point)")
    _out(sp)
    sp.set_defaults(func=cmd_stationarity_classify)
    sp = s.add_parser("el-residual", help="first variation against test fields")
    sp.add_argument("file")
    sp.add_argument("--eta", default="builtin:all",
                    help="builtin:<name>, builtin:all or a JSON file; builtins: " + ", ".join(BUILTIN_FIELDS))
    sp.add_argument("--tol", type=float, default=1e-8)
    _out(sp)
    sp.set_defaults(func=cmd_stationarity_el)
    sp = s.add_parser("monotonicity", help="length ratio profile on concentric circles")
    sp.add_argument("file")
    sp.add_argument("--center", type=_point, required=True)
    sp.add_argument("--radii", type=_radii, required=True, help="r1,r2,... or r1..r2:n")
    sp.add_argument("--tol", type=float, default=1e-9)
    _out(sp)
    sp.set_defaults(func=cmd_stationarity_monotonicity)

    sp = sub.add_parser("probe", help="same-trace minimality probe")
    sp.add_argument("file")
    sp.add_argument("--field", default=None)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--amplitude", type=_floats, default=None, help="absolute amplitudes")
    sp.add_argument("--amplitude-factor", type=_floats, default=[0.01, 0.02, 0.05, 0.1],
                    help="amplitudes as multiples of r_bar")
    sp.add_argument("--modes", type=lambda v: v.split(","), default=None, help=",".join(MODES))
    sp.add_argument("--refinement", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--identity", action="store_true", help="also record the energy identity residual")
    sp.add_argument("--h", type=float, default=None)
    _out(sp)
    sp.set_defaults(func=cmd_probe)

    f = sub.add_parser("fixtures", help="write a fixture partition").add_subparsers(dest="fixture", required=True)
    sp = f.add_parser("hexagon")
    sp.add_argument("--rho", type=float, default=0.6)
    sp.add_argument("--outer-radius", type=float, default=2.0)
    _out(sp)
    sp = f.add_parser("diameter")
    sp.add_argument("--radius", type=float, default=1.0)
    _out(sp)
    sp = f.add_parser("junction")
    sp.add_argument("--angles", type=_floats, default=None, help="three ray angles in degrees")
    _out(sp)
    sp = f.add_parser("cross")
    _out(sp)
    sp = f.add_parser("star")
    sp.add_argument("--angles", type=_floats, required=True, help="ray angles in degrees")
    sp.add_argument("--phases", type=lambda s: [int(v) for v in _floats(s)], required=True,
                    help="phase of the sector after each ray")
    _out(sp)
    for name in ("hexagon", "diameter", "junction", "cross", "star"):
        f.choices[name].set_defaults(func=cmd_fixture)
    return ap


INPUT_ERRORS = (InputError, InvalidNetwork, MalformedTensions, InvalidCompetitor, CalibrationError,
                RejectionBudgetExceeded, NonGenericRadius, UnstableProbe, ValueError, OSError)


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"calibnet: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
