"""``flab`` command-line entry point.

Exit codes: 0 all checks pass, 1 a check fails, 2 a hypothesis could not be
verified, 3 evaluation or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .complex_engine import complex_tensors
from .geodesic import GeodesicControl, integrate_geodesic
from .harness import SUITES, run_suite, verify_diameter, verify_laplacian_comparison
from .metric import MetricError, Sampling, load_metric
from .partials import EvalPoint, eval_partials
from .real_engine import real_tensors
from .report import emit, to_jsonable
from .volume import MonteCarloConfig, volume_ratio

EXIT = {"pass": 0, "fail": 1, "hypothesis unverified": 2, "error": 3}


def _vector(text):
    """Parse a JSON list or comma-separated numbers into a float array."""
    text = text.strip()
    vals = json.loads(text) if text.startswith("[") else [float(t) for t in text.split(",")]
    return np.asarray(vals, dtype=float)


def _radii(text):
    """``a:b:k`` (k evenly spaced values) or a comma-separated list."""
    if ":" in text:
        a, b, k = text.split(":")
        return np.round(np.linspace(float(a), float(b), int(k)), 12)
    return np.asarray([float(t) for t in text.split(",")])


def _threads():
    raw = os.environ.get("FLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"FLAB_THREADS must be an integer, got {raw!r}")


def _write(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _finish(report, args):
    fmt = getattr(args, "format", "json")
    text = emit(report, fmt)
    _write(text, getattr(args, "out", None))
    print(f"{report.check} {report.metric}: {report.status} "
          f"(max residual {report.max_residual:.3e}, tol {report.tolerance:g})", file=sys.stderr)
    return EXIT[report.status]


def _metric(args):
    return load_metric(args.metric, args.n)


def cmd_check(args):
    spec = _metric(args)
    report = run_suite(args.suite, spec, Sampling(seed=args.seed, count=args.samples), args.tol)
    if args.dump_jets:
        rng = np.random.default_rng(args.seed)
        from .metric import sample_points

        x, y = sample_points(spec, rng, 1)
        table = eval_partials(spec, EvalPoint(x[0], y[0]))
        with open(args.dump_jets, "w") as fh:
            json.dump(to_jsonable(table.to_dict()), fh, indent=2, sort_keys=True)
    return _finish(report, args)


def cmd_geodesic(args):
    spec = _metric(args)
    x0 = _vector(args.from_)
    y0 = _vector(args.dir)
    path = integrate_geodesic(spec, x0, y0, args.len, GeodesicControl(), normalize=True)
    if not len(path.kept):
        print("geodesic left the chart", file=sys.stderr)
        return 3
    _write(path.to_csv(0, args.samples), args.out)
    ts = np.linspace(0, args.len, 50)
    print(f"speed drift {np.max(path.speed_residual(ts)):.2e}, frame drift "
          f"{np.max(path.frame_drift(ts)):.2e}", file=sys.stderr)
    return 0


def cmd_compare(args):
    spec = _metric(args)
    if args.kind == "laplacian":
        radii = _radii(args.radii) if args.radii else None
        report = verify_laplacian_comparison(spec, args.lam, radii, directions=args.directions,
                                             seed=args.seed)
    elif args.kind == "diameter":
        report = verify_diameter(spec, args.lam, count=args.directions, seed=args.seed)
    else:
        radii = _radii(args.radii) if args.radii else (0.3, 0.6, 0.9)
        cfg = MonteCarloConfig(directions=args.directions, radial=args.radial, seed=args.seed,
                               workers=_threads())
        _, report = volume_ratio(spec, args.lam, radii=radii, measure=args.measure, config=cfg)
    return _finish(report, args)


def cmd_tensors(args):
    spec = _metric(args)
    at = json.loads(args.at)
    p = EvalPoint(np.asarray(at["x"], float), np.asarray(at["y"], float))
    out = {
        "schema": "flab.tensors/1",
        "metric": spec.label(),
        "version": __version__,
        "real": real_tensors(spec, p.x, p.y).to_dict(),
        "complex": complex_tensors(spec, p.x, p.y).to_dict(),
    }
    _write(json.dumps(to_jsonable(out), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="flab", description="Complex Finsler geometry laboratory.")
    ap.add_argument("--version", action="version", version=f"flab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--metric", required=True, help="catalog name or JSON metric file")
        p.add_argument("--n", type=int, default=None, help="complex dimension")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output file (default stdout)")

    c = sub.add_parser("check", help="run an identity suite")
    c.add_argument("suite", choices=SUITES)
    common(c)
    c.add_argument("--samples", type=int, default=100)
    c.add_argument("--tol", type=float, default=None)
    c.add_argument("--format", choices=("json", "csv"), default="json")
    c.add_argument("--dump-jets", default=None, metavar="FILE",
                   help="write the full partial-derivative table at the first sample")
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("geodesic", help="integrate one geodesic and print CSV")
    common(g)
    g.add_argument("--from", dest="from_", required=True, help="start point, real 2n-vector")
    g.add_argument("--dir", required=True, help="initial direction, real 2n-vector")
    g.add_argument("--len", type=float, required=True)
    g.add_argument("--samples", type=int, default=101)
    g.set_defaults(func=cmd_geodesic)

    m = sub.add_parser("compare", help="comparison-theorem verifications")
    m.add_argument("kind", choices=("laplacian", "diameter", "volume"))
    common(m)
    m.add_argument("--lambda", dest="lam", type=float, required=True)
    m.add_argument("--radii", default=None, help="a:b:k or comma list")
    m.add_argument("--directions", type=int, default=None)
    m.add_argument("--radial", type=int, default=1000)
    m.add_argument("--measure", choices=("riemannian_det", "busemann_hausdorff"),
                   default="riemannian_det")
    m.add_argument("--format", choices=("json", "csv", "plotdata"), default="json")
    m.set_defaults(func=cmd_compare)

    t = sub.add_parser("tensors", help="dump real and complex tensor sets at a point")
    common(t)
    t.add_argument("--at", required=True, help='JSON {"x": [...], "y": [...]}')
    t.set_defaults(func=cmd_tensors)
    return ap


_DEFAULT_DIRECTIONS = {"laplacian": 8, "diameter": 50, "volume": 1000}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "kind", None) and args.directions is None:
        args.directions = _DEFAULT_DIRECTIONS[args.kind]
    try:
        return args.func(args)
    except (MetricError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"flab: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
