"""Command-line front end.

Exit codes
----------
0   success (check: basis condition holds; realize/verify: residual below tolerance)
1   realize/verify: residual above tolerance or more than 10% of grid points failed;
    trace: the flow stopped early
2   check: Frobenius condition fails
3   check: only the orthogonal-basis condition fails; realize: refused (use --force)
64  configuration or parse error
"""

import argparse
import os
import sys

import numpy as np

from . import _io, catalog
from .dsl import FieldSpec, compile_field, compile_scalar
from .errors import ExprSyntaxError, FlowError, PreconditionFailed, RealizabilityError
from .fields import Box, check_conditions
from .flows import FlowDirection, integrate_flow

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_FROBENIUS = 2
EXIT_BASIS = 3
EXIT_CONFIG = 64

DEFAULT_BOX = (-1.0, 1.0, -1.0, 1.0, -1.0, 1.0)
DEFAULT_TOL = 5e-6
FAIL_FRACTION = 0.10


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text, n, what):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{what}: expected {n} comma-separated numbers, got {text!r}")
    if len(vals) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {len(vals)}")
    return vals


def _threads(args):
    if getattr(args, "threads", None):
        n = args.threads
    elif os.environ.get("REALIZER_THREADS"):
        try:
            n = int(os.environ["REALIZER_THREADS"])
        except ValueError:
            raise ConfigError("REALIZER_THREADS must be an integer")
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ConfigError("thread count must be positive")
    return n


def _entry_params(args):
    params = {}
    for key in ("f", "g", "h", "v", "alpha"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    return params


def resolve_field(args):
    """Return ``(entry, field)``; ``entry`` is None for user-supplied fields.

    Without any field option the sinh example is used.
    """
    example = getattr(args, "example", None)
    text = getattr(args, "field", None)
    if example and text:
        raise ConfigError("give either --example or --field, not both")
    if text:
        if os.path.isfile(text):
            with open(text, encoding="utf-8") as fh:
                spec = FieldSpec.from_json(fh.read())
            name = os.path.basename(text)
        else:
            spec = FieldSpec.from_tuple_text(text)
            name = text
        return None, compile_field(spec, name=name)
    try:
        entry = catalog.get(example or "sinh", **_entry_params(args))
    except TypeError as exc:
        raise ConfigError(f"example {example!r} does not take these parameters: {exc}")
    return entry, entry.field


def _box(args, entry):
    if getattr(args, "box", None):
        b = _floats(args.box, 6, "--box")
        if not all(lo < hi for lo, hi in zip(b[0::2], b[1::2])):
            raise ConfigError("--box: each lower bound must be below its upper bound")
        return Box.from_bounds(b)
    if entry is not None and entry.region is not None:
        return entry.region
    return Box.from_bounds(DEFAULT_BOX)


def _anchor(args, entry):
    if getattr(args, "anchor", None):
        return _floats(args.anchor, 3, "--anchor")
    return entry.anchor if entry is not None else (0.0, 0.0, 0.0)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _config(args, **extra):
    cfg = {"command": args.command}
    for key in ("example", "field", "f", "g", "h", "v", "alpha", "box", "grid",
                "normalization", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg.update(extra)
    return cfg


# ------------------------------------------------------------------ commands

def cmd_check(args):
    entry, field = resolve_field(args)
    box = _box(args, entry)
    if args.tol <= 0 or args.samples < 1:
        raise ConfigError("--tol must be positive and --samples at least 1")
    rep = check_conditions(field, box, n_samples=args.samples, tol=args.tol)
    _emit(_io.dumps({"config": _config(args), "report": rep.to_dict()}), args.out)
    if not rep.frobenius_ok:
        return EXIT_FROBENIUS
    return EXIT_OK if rep.basis_ok else EXIT_BASIS


def cmd_realize(args):
    from .realizer import ReconstructedW, sigma_grid_csv, verify_residuals
    entry, field = resolve_field(args)
    box = _box(args, entry)
    if args.grid < 2 or args.h_step <= 0 or args.tol <= 0:
        raise ConfigError("--grid must be at least 2, --fd-step and --tol positive")
    threads = _threads(args)
    cond = check_conditions(field, box)
    if not cond.basis_ok and not args.force:
        sys.stderr.write("refusing: the orthogonal-basis condition fails on the box "
                         f"(min |j| = {cond.min_j_norm:.3g}, min |curl j| = "
                         f"{cond.min_curl_norm:.3g}); rerun with --force\n")
        return EXIT_BASIS
    w_src = ReconstructedW(field, _anchor(args, entry), args.normalization)
    rep, pts, w, ok = verify_residuals(field, w_src, box, args.grid, args.h_step,
                                       threads=threads, return_grid=True)
    failed = [[float(v) for v in p] for p in pts[~ok]]
    if args.out:
        _emit(sigma_grid_csv(pts, w), args.out)
    body = {"config": _config(args, fd_step=args.h_step, tol=args.tol,
                              anchor=list(_anchor(args, entry)), force=args.force),
            "conditions": {"frobenius_ok": cond.frobenius_ok, "basis_ok": cond.basis_ok},
            "residual": rep.to_dict(), "failed_points": failed}
    if not args.out:
        body["grid"] = [{"point": list(p), "w": float(wi), "sigma": float(np.exp(wi))}
                        for p, wi in zip(pts, w)]
    _emit(_io.dumps(body), args.report)
    if len(failed) > FAIL_FRACTION * len(pts):
        return EXIT_FAIL
    return EXIT_OK if rep.max_residual < args.tol else EXIT_FAIL


def cmd_verify(args):
    from .realizer import verify_residuals
    entry, field = resolve_field(args)
    box = _box(args, entry)
    if args.sigma:
        expr = compile_scalar(args.sigma)
        w_src = lambda p: np.log(expr(p))
    elif entry is not None and entry.closed_form_sigma is not None:
        w_src = entry.log_sigma
    else:
        raise ConfigError("no conductivity: give --sigma or an example with a closed form")
    rep = verify_residuals(field, w_src, box, args.grid, args.h_step, threads=_threads(args))
    cfg = _config(args, fd_step=args.h_step, tol=args.tol, sigma=args.sigma)
    _emit(_io.dumps({"config": cfg, "residual": rep.to_dict()}), args.out)
    if rep.n_failed > FAIL_FRACTION * rep.n_points:
        return EXIT_FAIL
    return EXIT_OK if rep.max_residual < args.tol else EXIT_FAIL


def cmd_periodic(args):
    from .periodic import (DIVERGING, boundedness_scan, periodic_certificate,
                           torus_verdict)
    entry, field = resolve_field(args)
    if not field.is_periodic:
        raise PreconditionFailed(f"field {field.name!r} is not periodic")
    cell = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    cond = check_conditions(field, cell)
    horizons = tuple(2.0 ** k for k in range(int(np.log2(args.horizon)) + 1))
    scan = boundedness_scan(field, horizons=horizons, cap=args.cap)
    cert = None
    if (scan.verdict != DIVERGING and entry is not None
            and entry.closed_form_sigma is not None and entry.expected.get("sigma_periodic")):
        cert = periodic_certificate(field, entry.log_sigma)
    report = torus_verdict(field, scan, cond, cert)
    if args.csv:
        _emit(scan.to_csv(), args.csv)
    body = {"config": _config(args, horizon=args.horizon, cap=args.cap),
            "torus": report.to_dict(),
            "certificate": None if cert is None else {"ok": cert[0], **cert[1]},
            "scan": scan.to_dict()}
    _emit(_io.dumps(body), args.out)
    return EXIT_OK


def cmd_trace(args):
    entry, field = resolve_field(args)
    start = _floats(args.start, 3, "--start") if args.start else _anchor(args, entry)
    try:
        traj = integrate_flow(field, FlowDirection.parse(args.dir), start, args.t)
    except FlowError as exc:
        sys.stderr.write(f"flow stopped: {exc}\n")
        return EXIT_FAIL
    _emit(traj.to_csv(), args.out)
    return EXIT_OK


def cmd_planar(args):
    from .planar import (PlanarPotential, hitting_time, planar_periodic_verdict,
                         planar_residual)
    pot = PlanarPotential.from_expression(args.v, periodic=args.periodic)
    box = _floats(args.box, 4, "--box")
    body = {"config": _config(args, level=args.level, fd_step=args.h_step, periodic=args.periodic)}
    if args.start:
        rec = hitting_time(pot, _floats(args.start, 2, "--start"), args.level)
        body["hitting"] = {"start": list(rec.start), "tau": rec.tau,
                           "endpoint": list(rec.endpoint), "w_v": rec.w_v}
    res = planar_residual(pot, box, args.grid, args.h_step, level=args.level)
    body["residual"] = res.to_dict()
    if args.periodic:
        body["verdict"] = planar_periodic_verdict(pot, level=args.level).to_dict()
    _emit(_io.dumps(body), args.out)
    return EXIT_OK if res.max_residual < args.tol else EXIT_FAIL


def cmd_examples(args):
    if args.action == "list":
        rows = [{"name": e.name, "description": e.description} for e in catalog.catalog()]
        _emit(_io.dumps({"examples": rows}), args.out)
        return EXIT_OK
    if not args.name:
        raise ConfigError("examples show needs a name")
    e = catalog.get(args.name, **_entry_params(args))
    body = {"name": e.name, "description": e.description,
            "expected": {k: v for k, v in e.expected.items() if not callable(v)},
            "anchor": list(e.anchor),
            "region": list(e.region.bounds) if e.region is not None else None,
            "periodic": list(e.field.periodic),
            "closed_form_sigma": e.closed_form_sigma is not None,
            "closed_form_w": e.closed_form_w is not None,
            "verified": e.verified}
    if e.closed_form_sigma is not None:
        body["sigma_at_anchor"] = float(np.ravel(e.closed_form_sigma(
            np.array([e.anchor])))[0])
    _emit(_io.dumps(body), args.out)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_field_args(p):
    g = p.add_argument_group("field source (default: --example sinh)")
    g.add_argument("--example", help=f"catalog entry: {', '.join(catalog.names())}")
    g.add_argument("--field", help="'(jx, jy, jz)' expressions or a JSON field file")
    g.add_argument("--f", help="fgh: f(x) expression")
    g.add_argument("--g", help="fgh: g(y) expression")
    g.add_argument("--h", dest="h", help="fgh: h(z) expression")
    g.add_argument("--v", help="planar: potential v(x, y)")
    g.add_argument("--alpha", help="planar: alpha(z)")


def _add_common(p, grid=True):
    p.add_argument("--box", help="x0,x1,y0,y1,z0,z1 (default: example region or [-1,1]^3)")
    if grid:
        p.add_argument("--grid", type=int, default=11, help="points per axis (default 11)")
        p.add_argument("--fd-step", dest="h_step", type=float, default=1e-3,
                       help="finite-difference step (default 1e-3)")
        p.add_argument("--tol", type=float, default=DEFAULT_TOL,
                       help="residual tolerance (default 5e-6)")
        p.add_argument("--threads", type=int,
                       help="worker threads (default: REALIZER_THREADS or CPU count)")
    p.add_argument("--seed", type=int, default=0,
                   help="recorded in the output; every sampler is deterministic")
    p.add_argument("--out", help="output path (default stdout)")


def build_parser():
    parser = _Parser(prog="isorealize",
                     description="Isotropic conductivity realization of current fields.",
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog=__doc__.split("\n", 2)[2])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="Frobenius and orthogonal-basis conditions")
    _add_field_args(p)
    _add_common(p, grid=False)
    p.add_argument("--samples", type=int, default=512, help="Halton samples (default 512)")
    p.add_argument("--tol", type=float, default=1e-6, help="Frobenius tolerance")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("realize", help="reconstruct sigma on a grid and verify it")
    _add_field_args(p)
    _add_common(p)
    p.add_argument("--anchor", help="x,y,z anchor of the triple flow")
    p.add_argument("--normalization", default="standard", choices=["standard", "tilde"])
    p.add_argument("--force", action="store_true", help="run even if the basis check fails")
    p.add_argument("--report", help="residual report path (default stdout); "
                   "--out then receives the x,y,z,w,sigma CSV")
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("verify", help="residual check of a given conductivity")
    _add_field_args(p)
    _add_common(p)
    p.add_argument("--sigma", help="conductivity expression (default: the example's)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("periodic", help="realizability in the torus")
    _add_field_args(p)
    _add_common(p, grid=False)
    p.add_argument("--horizon", type=float, default=256.0, help="largest T (default 256)")
    p.add_argument("--cap", type=float, default=50.0, help="divergence cap on I(T)")
    p.add_argument("--csv", help="write the (T, I) series here")
    p.set_defaults(func=cmd_periodic)

    p = sub.add_parser("trace", help="export one trajectory as CSV")
    _add_field_args(p)
    p.add_argument("--dir", default="D1", help="D1, D2, D3 or D3Tilde")
    p.add_argument("--start", help="x,y,z (default: example anchor)")
    p.add_argument("--t", type=float, default=1.0, help="signed end time")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("planar", help="planar construction for j = alpha(z) rot grad v")
    p.add_argument("--v", default="x + 0.05*sin(2*pi*(x + y))")
    p.add_argument("--box", default="0,1,0,1", help="x0,x1,y0,y1 (default unit square)")
    p.add_argument("--grid", type=int, default=11)
    p.add_argument("--fd-step", dest="h_step", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--level", type=float, default=0.0, help="reference level of v")
    p.add_argument("--start", help="x,y: also report the hitting time from here")
    p.add_argument("--periodic", action="store_true",
                   help="treat grad v as periodic and report the boundedness verdict")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_planar)

    p = sub.add_parser("examples", help="list or show catalog entries")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.add_argument("--f")
    p.add_argument("--g")
    p.add_argument("--h", dest="h")
    p.add_argument("--v")
    p.add_argument("--alpha")
    p.add_argument("--out")
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PreconditionFailed, ExprSyntaxError, KeyError, ValueError,
            OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"isorealize {args.command}: error: {msg}\n")
        return EXIT_CONFIG
    except RealizabilityError as exc:
        sys.stderr.write(f"isorealize {args.command}: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
