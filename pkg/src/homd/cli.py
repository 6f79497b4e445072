"""Command line front end: ``homd info | add-noise | denoise | metrics``.

Exit codes: 0 success, 2 I/O or parse failure, 3 numeric failure, 4 usage.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import CountMismatch, FieldError, MeshError, ParseError, SolverError
from .filtering import FilterConfig, filter_normals
from .mesh import mean_edge_length
from .meshio import load_mesh, save_mesh
from .metrics import add_gaussian_noise, e_v2, msae, quality_metrics
from .vertex import UpdateConfig, sun_update, update_vertices

EXIT_OK, EXIT_IO, EXIT_NUMERIC, EXIT_USAGE = 0, 2, 3, 4

logger = logging.getLogger("homd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(kind):
    def conv(text):
        try:
            x = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not x > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return x

    return conv


def _nonnegative(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return x


def _emit(report, as_json, lines):
    if as_json:
        print(json.dumps(report, sort_keys=True))
    else:
        print("\n".join(lines))


# commands ---------------------------------------------------------------------

def cmd_info(args):
    mesh = load_mesh(args.path)
    d_global, d_local = quality_metrics(mesh)
    report = {
        "path": str(args.path),
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "edges": mesh.n_edges,
        "d_global": d_global,
        "d_local": d_local,
        "mean_edge_length": mean_edge_length(mesh),
    }
    _emit(report, args.json, [
        f"{'mesh':<24}{'V':>10}{'T':>10}{'D_global':>14}{'D_local':>14}{'mean edge':>14}",
        f"{os.path.basename(str(args.path)):<24}{mesh.n_vertices:>10}{mesh.n_faces:>10}"
        f"{d_global:>14.6g}{d_local:>14.6g}{report['mean_edge_length']:>14.6g}",
    ])
    return EXIT_OK


def cmd_add_noise(args):
    mesh = load_mesh(args.input)
    sigma = args.level * mean_edge_length(mesh)
    noisy = add_gaussian_noise(mesh, args.level, seed=args.seed)
    save_mesh(args.output, noisy)
    report = {"level": args.level, "sigma": sigma, "seed": args.seed, "output": str(args.output)}
    _emit(report, args.json, [f"sigma = {sigma:.9g} (level {args.level:g} x mean edge)"])
    return EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def cmd_denoise(args):
    mesh = load_mesh(args.input)
    try:
        fcfg = FilterConfig(
            alpha=args.alpha, r_p=args.rp, eps=args.eps, max_iter=args.max_iter,
            cg_max=args.cg_max, use_dynamic_weights=args.weights == "on",
            regularizer=args.regularizer,
        )
        vcfg = UpdateConfig(eta=args.eta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    start = time.perf_counter()
    N, state = filter_normals(mesh, mesh.face_normals, fcfg)
    if args.vertex_method == "bfgs":
        result = update_vertices(mesh, N, vcfg)
    else:
        result = sun_update(mesh, N, iters=args.sun_iters)
    seconds = time.perf_counter() - start
    if not np.all(np.isfinite(result.vertices)):
        raise SolverError("vertex update produced non-finite coordinates")

    save_mesh(args.output, (result.vertices, mesh.triangles))
    if args.trace:
        _write_csv(args.trace, ["iter", "energy", "delta_n"], [
            (i + 1, repr(e), repr(d)) for i, (e, d) in enumerate(zip(state.energy_trace, state.delta_trace))
        ])
    if args.vertex_trace:
        _write_csv(args.vertex_trace, ["iter", "energy"], [
            (i, repr(e)) for i, e in enumerate(result.energy_trace)
        ])
    report = {
        "filter_iterations": state.k,
        "filter_converged": state.converged,
        "vertex_method": args.vertex_method,
        "vertex_iterations": result.iterations,
        "foldovers": result.foldover_count,
        "seconds": seconds,
        "output": str(args.output),
    }
    _emit(report, args.json, [
        f"filter: {state.k} iterations ({'converged' if state.converged else 'iteration cap'})",
        f"vertices ({args.vertex_method}): {result.iterations} iterations, "
        f"{result.foldover_count} foldovers",
        f"time: {seconds:.3f} s",
    ])
    return EXIT_OK


def cmd_metrics(args):
    result = load_mesh(args.result)
    clean = load_mesh(args.clean)
    try:
        m = msae(result.face_normals, clean.face_normals)
    except CountMismatch as exc:
        raise UsageError(str(exc)) from None
    ev = e_v2(result, clean)
    method = args.method or os.path.splitext(os.path.basename(str(args.result)))[0]
    report = {"method": method, "msae": m, "e_v2": ev, "seconds": args.seconds}
    secs = "-" if args.seconds is None else f"{args.seconds:.2f}"
    _emit(report, args.json, [
        f"{'method':<20}{'MSAE (1e-3)':>14}{'E_v,2 (1e-3)':>14}{'seconds':>10}",
        f"{method:<20}{m * 1e3:>14.4f}{ev * 1e3:>14.4f}{secs:>10}",
    ])
    return EXIT_OK


# parser -------------------------------------------------------------------------

_DENOISE_HELP = """\
alpha weighs fidelity to the noisy normals and rp is the splitting penalty.
Neither has a universal default. Larger alpha keeps more detail (and noise);
smaller alpha smooths more. Sweep alpha over a few values at fixed rp and
keep the best result; on a unit-scale cube with 0.15 x mean edge noise,
--alpha 100 --rp 3 works well.
"""


def build_parser():
    parser = _Parser(prog="homd", description="Feature-preserving mesh denoising.")
    parser.add_argument("--threads", type=_positive(int), default=None,
                        help="BLAS/OpenMP thread cap (default: $HOMD_THREADS, else library default)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="mesh statistics and quality ratios")
    p.add_argument("path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("add-noise", help="add Gaussian noise in random directions")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--level", type=_nonnegative, required=True,
                   help="standard deviation as a multiple of the mean edge length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("denoise", help="filter normals, then update vertices",
                       epilog=_DENOISE_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--alpha", type=_positive(float), required=True, help="fidelity weight")
    p.add_argument("--rp", type=_positive(float), required=True, help="penalty parameter")
    p.add_argument("--eta", type=_positive(float), default=1e-3, help="vertex fidelity weight")
    p.add_argument("--eps", type=_positive(float), default=1e-4, help="normal change tolerance")
    p.add_argument("--max-iter", type=_positive(int), default=100)
    p.add_argument("--cg-max", type=_positive(int), default=10)
    p.add_argument("--weights", choices=("on", "off"), default="on", help="dynamic weights")
    p.add_argument("--regularizer", choices=("ho", "lap"), default="ho")
    p.add_argument("--vertex-method", choices=("bfgs", "sun"), default="bfgs")
    p.add_argument("--sun-iters", type=_positive(int), default=50)
    p.add_argument("--trace", help="CSV of filter iterations: iter,energy,delta_n")
    p.add_argument("--vertex-trace", help="CSV of vertex update iterations: iter,energy")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("metrics", help="MSAE and E_v,2 of a result against a clean mesh")
    p.add_argument("result")
    p.add_argument("clean")
    p.add_argument("--method", help="row label (default: result file name)")
    p.add_argument("--seconds", type=_nonnegative, help="run time to report alongside")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)
    return parser


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("HOMD_THREADS")
    if not env:
        return None
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"HOMD_THREADS must be a positive integer, got {env!r}") from None
    if n < 1:
        raise UsageError(f"HOMD_THREADS must be a positive integer, got {env!r}")
    return n


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        with threadpool_limits(limits=_threads(args)):
            return args.func(args)
    except UsageError as exc:
        print(f"homd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError, MeshError) as exc:
        print(f"homd: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FieldError, ValueError) as exc:
        # unsupported extensions and mismatched inputs
        print(f"homd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, FloatingPointError) as exc:
        print(f"homd: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
