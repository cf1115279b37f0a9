"""Command-line interface: ``generate``, ``unmix``, ``eval``, ``bench``, ``replay``.

Every command that writes files drops a ``manifest.json`` next to them
holding the full configuration, input/output hashes and timings. ``replay``
re-runs a manifest into a new directory and compares output hashes.

Exit codes: 0 success, 2 bad arguments, 3 input/output error, 4 solver
failure (1 is used by ``replay`` when outputs differ).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bregman import HISTORY_FIELDS
from .kernels import NonPSDGramError, gram, parse_kernel
from .metrics import evaluate
from .pipeline import ALL_METHODS, benchmark, split_method, summarize, unmix
from .pixelwise import DEFAULT_MU, PixelModel
from .qp import QpError, set_stderr_trace
from .scene import (
    SceneFormatError,
    load_abundances,
    load_cube,
    load_endmembers,
    save_abundances,
    save_cube,
    save_endmembers,
)
from .synth import (
    MODELS,
    PATTERNS,
    AbundanceFieldSpec,
    MixtureSpec,
    band_subsample_index,
    make_scene,
)

log = logging.getLogger("kunmix")

EXIT_OK, EXIT_DIFF, EXIT_ARGS, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3, 4
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Invalid combination of otherwise well-formed flags."""


# --------------------------------------------------------------------------
# argument parsing


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _snr(text):
    value = float(text)
    if math.isnan(value) or value == -math.inf:
        raise argparse.ArgumentTypeError(f"expected a number or 'inf', got {text}")
    return value


def _kernel(text):
    try:
        parse_kernel(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _csv_list(choices):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(
                f"invalid choice(s) {', '.join(bad) or text!r}; choose from {', '.join(choices)}")
        return items
    return parse


def _add_solver_flags(p, method=True):
    if method:
        p.add_argument("--method", choices=ALL_METHODS, default="skhype")
    p.add_argument("--mu", type=_positive_float, default=DEFAULT_MU,
                   help="kernel trade-off (default %(default)s)")
    p.add_argument("--eta", type=_nonneg_float, default=None,
                   help="spatial weight (default 0.3 kernel, 0.03 linear)")
    p.add_argument("--zeta0", type=_positive_float, default=1.0)
    p.add_argument("--max-iter", type=_positive_int, default=10)
    p.add_argument("--tol", type=_nonneg_float, default=1e-5)
    p.add_argument("--adapt-zeta", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--kernel", type=_kernel, default="poly", help="poly | gaussian[:sigma]")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default $UNMIX_THREADS or 1)")
    p.add_argument("--skip-bad-pixels", action="store_true",
                   help="replace failed pixels by 1/R instead of aborting")
    p.add_argument("--qp-trace", action="store_true",
                   help="print per-iteration QP objectives to stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="kunmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scene")
    p.add_argument("--pattern", choices=PATTERNS, default="patches")
    p.add_argument("--w", type=_positive_int, default=50)
    p.add_argument("--h", type=_positive_int, default=50)
    p.add_argument("--r", type=_positive_int, default=5, help="number of endmembers")
    p.add_argument("--model", choices=MODELS, default="bilinear")
    p.add_argument("--pnmm-exponent", type=_positive_float, default=0.7)
    p.add_argument("--snr", type=_snr, default=20.0, help="dB, or 'inf' for no noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patch-size", type=_positive_int, default=None,
                   help="patch side for --pattern patches (default min(10, w, h))")
    p.add_argument("--corr-length", type=_nonneg_float, default=5.0)
    p.add_argument("--endmembers", help="library CSV (default: bundled library)")
    p.add_argument("--bands", type=_positive_int, default=None,
                   help="keep k bands at a uniform stride")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("unmix", help="estimate abundances of a cube")
    p.add_argument("--cube", required=True, help="HSC cube")
    p.add_argument("--endmembers", required=True, help="endmember CSV (L x R)")
    _add_solver_flags(p)
    p.add_argument("--bands", type=_positive_int, default=None,
                   help="keep k bands at a uniform stride")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("eval", help="compare estimated and true abundances")
    p.add_argument("--truth", required=True, help="true abundance CSV")
    p.add_argument("--est", required=True, help="estimated abundance CSV")
    p.add_argument("--cube", help="cube for the reconstruction error")
    p.add_argument("--endmembers", help="endmember CSV for the reconstruction error")
    p.add_argument("--betas", help="kernel coefficients CSV written by unmix")
    p.add_argument("--kernel", type=_kernel, default="poly")
    p.add_argument("--bands", type=_positive_int, default=None)
    p.add_argument("--output-dir", help="also write report.json here")

    p = sub.add_parser("bench", help="method x model x seed sweep")
    p.add_argument("--seeds", type=_positive_int, default=5, help="seeds 0 .. n-1")
    p.add_argument("--methods", type=_csv_list(ALL_METHODS), default=list(ALL_METHODS))
    p.add_argument("--models", type=_csv_list(MODELS), default=["bilinear", "pnmm"])
    p.add_argument("--pattern", choices=PATTERNS, default="patches")
    p.add_argument("--w", type=_positive_int, default=50)
    p.add_argument("--h", type=_positive_int, default=50)
    p.add_argument("--r", type=_positive_int, default=5)
    p.add_argument("--bands", type=_positive_int, default=50)
    p.add_argument("--snr", type=_snr, default=20.0)
    p.add_argument("--endmembers", help="library CSV (default: bundled library)")
    _add_solver_flags(p, method=False)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--output-dir", required=True)
    return parser


# --------------------------------------------------------------------------
# helpers


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("UNMIX_THREADS")
    if env is None:
        return 1
    try:
        value = int(env)
    except ValueError:
        raise UsageError(f"UNMIX_THREADS must be a positive integer, got {env!r}") from None
    if value < 1:
        raise UsageError(f"UNMIX_THREADS must be a positive integer, got {env!r}")
    return value


def _config(args):
    """JSON-safe copy of the parsed flags, with input paths made absolute."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    for key in ("cube", "endmembers", "truth", "est", "betas"):
        if cfg.get(key):
            cfg[key] = str(Path(cfg[key]).resolve())
    cfg.pop("output_dir", None)
    return cfg


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return str(obj)


def _finite(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_manifest(out_dir, command, config, inputs, outputs, reproducible, extra=None):
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": config,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {name: _sha256(out_dir / name) for name in outputs},
        "reproducible": list(reproducible),
    }
    manifest.update(extra or {})
    with open(out_dir / MANIFEST, "w") as fh:
        json.dump(_finite(manifest), fh, indent=2, default=_json_default)
        fh.write("\n")
    return manifest


def _prepare_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_scene(args):
    cube = load_cube(args.cube)
    M = load_endmembers(args.endmembers)
    if args.bands is not None:
        if args.bands > cube.bands:
            raise UsageError(f"--bands {args.bands} exceeds the cube's {cube.bands} bands")
        idx = band_subsample_index(cube.bands, args.bands)
        cube = cube.subsample_bands(idx)
        if M.shape[0] != len(idx):
            M = M[idx]
    if M.shape[0] != cube.bands:
        raise UsageError(f"endmembers have {M.shape[0]} bands, cube has {cube.bands}")
    return cube, M


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# --------------------------------------------------------------------------
# commands


def cmd_generate(args):
    if args.r < 2:
        raise UsageError("--r must be at least 2")
    patch = args.patch_size or min(10, args.w, args.h)
    field = AbundanceFieldSpec(pattern=args.pattern, w=args.w, h=args.h, R=args.r,
                               patch_size=patch, corr_length=args.corr_length,
                               seed=args.seed)
    mixture = MixtureSpec(model=args.model, pnmm_exponent=args.pnmm_exponent,
                          snr_db=args.snr, seed=args.seed)
    library = load_endmembers(args.endmembers) if args.endmembers else None
    if library is not None and args.r > library.shape[1]:
        raise UsageError(f"library has {library.shape[1]} spectra, --r {args.r} requested")
    if args.dry_run:
        print(json.dumps({"command": "generate", "valid": True, "config": _config(args)}))
        return EXIT_OK
    t0 = time.perf_counter()
    cube, clean, A, M = make_scene(field, mixture, library=library, bands=args.bands)
    out = _prepare_dir(args.output_dir)
    save_cube(cube, out / "cube.hsc")
    save_cube(clean, out / "clean.hsc")
    save_abundances(A, out / "abundances_true.csv", args.w, args.h, sum_to_one=True)
    save_endmembers(M, out / "endmembers.csv")
    outputs = ["cube.hsc", "clean.hsc", "abundances_true.csv", "endmembers.csv"]
    write_manifest(out, "generate", _config(args),
                   [args.endmembers] if args.endmembers else [], outputs, outputs,
                   {"seconds": time.perf_counter() - t0})
    log.info("wrote %s", ", ".join(outputs))
    return EXIT_OK


def cmd_unmix(args):
    threads = _threads(args)
    base, spatial = split_method(args.method)
    kernel = parse_kernel(args.kernel)
    PixelModel(base, args.mu)
    cube, M = _load_scene(args)
    if M.shape[1] < 2:
        raise UsageError("need at least two endmembers")
    if args.dry_run:
        if PixelModel(base).kernel:
            gram(kernel, M)
        print(json.dumps({"command": "unmix", "valid": True, "bands": cube.bands,
                          "pixels": cube.n_pixels, "endmembers": M.shape[1],
                          "config": _config(args)}))
        return EXIT_OK
    set_stderr_trace(args.qp_trace)
    res = unmix(cube, M, args.method, mu=args.mu, eta=args.eta, zeta0=args.zeta0,
                kernel=kernel, max_outer=args.max_iter, tol=args.tol,
                adapt_zeta=args.adapt_zeta, threads=threads,
                skip_bad_pixels=args.skip_bad_pixels)
    out = _prepare_dir(args.output_dir)
    model = PixelModel(base, args.mu)
    save_abundances(res.A, out / "abundances.csv", cube.w, cube.h,
                    sum_to_one=model.sum_to_one, pgm_dir=out / "maps")
    outputs = ["abundances.csv"] + [f"maps/abundance_{i:02d}.pgm" for i in range(M.shape[1])]
    _write_csv(out / "history.csv", HISTORY_FIELDS,
               [[repr(v) for v in rec.as_row()] for rec in res.history])
    outputs.append("history.csv")
    if res.betas is not None:
        np.savetxt(out / "betas.csv", res.betas, delimiter=",", fmt="%.17g")
        outputs.append("betas.csv")
    # the objective column is deterministic, timings live only in the manifest
    write_manifest(out, "unmix", _config(args) | {"threads": threads},
                   [args.cube, args.endmembers], outputs, outputs, {
                       "seconds": res.seconds,
                       "ms_per_pixel": 1e3 * res.seconds / cube.n_pixels,
                       "converged": res.converged,
                       "iterations": res.iterations,
                       "bad_pixels": res.bad_pixels,
                       "max_violation": res.max_violation,
                       "spatial": spatial,
                   })
    if res.bad_pixels:
        log.warning("%d pixel(s) failed and were set to 1/R", len(res.bad_pixels))
    log.info("%s: %d iterations, converged=%s, %.3f ms/pixel", args.method,
             res.iterations, res.converged, 1e3 * res.seconds / cube.n_pixels)
    return EXIT_OK


def cmd_eval(args):
    A_true = load_abundances(args.truth)
    A_est = load_abundances(args.est)
    if A_true.shape != A_est.shape:
        raise UsageError(f"truth is {A_true.shape[0]}x{A_true.shape[1]}, "
                         f"estimate is {A_est.shape[0]}x{A_est.shape[1]}")
    Y = M = K = betas = None
    if (args.cube is None) != (args.endmembers is None):
        raise UsageError("--cube and --endmembers go together")
    if args.cube:
        cube, M = _load_scene(args)
        Y = cube.data
        if args.betas:
            betas = np.loadtxt(args.betas, delimiter=",", ndmin=2)
            if betas.shape != Y.shape:
                raise UsageError(f"betas are {betas.shape}, cube is {Y.shape}")
            K = gram(parse_kernel(args.kernel), M)
    seconds = None
    manifest = Path(args.est).resolve().parent / MANIFEST
    if manifest.exists():
        try:
            seconds = float(json.loads(manifest.read_text())["seconds"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError):
            seconds = None
    report = evaluate(A_true, A_est, Y=Y, M=M, K=K, betas=betas, seconds=seconds).to_dict()
    text = json.dumps(report, indent=2)
    print(text)
    if args.output_dir:
        out = _prepare_dir(args.output_dir)
        (out / "report.json").write_text(text + "\n")
        inputs = [p for p in (args.truth, args.est, args.cube, args.endmembers, args.betas) if p]
        write_manifest(out, "eval", _config(args), inputs, ["report.json"], [])
    return EXIT_OK


def cmd_bench(args):
    threads = _threads(args)
    kernel = parse_kernel(args.kernel)
    if args.r < 2:
        raise UsageError("--r must be at least 2")
    library = load_endmembers(args.endmembers) if args.endmembers else None
    if args.dry_run:
        print(json.dumps({"command": "bench", "valid": True,
                          "runs": len(args.methods) * len(args.models) * args.seeds,
                          "config": _config(args)}))
        return EXIT_OK
    set_stderr_trace(args.qp_trace)
    opts = dict(mu=args.mu, eta=args.eta, zeta0=args.zeta0, kernel=kernel,
                max_outer=args.max_iter, tol=args.tol, adapt_zeta=args.adapt_zeta,
                threads=threads, skip_bad_pixels=args.skip_bad_pixels)

    def progress(row):
        log.info("%-8s %-8s seed %d  rmse %.4f  %.3f ms/pixel", row.method, row.model,
                 row.seed, row.rmse, row.ms_per_pixel)

    t0 = time.perf_counter()
    rows = benchmark(args.methods, args.models, range(args.seeds), w=args.w, h=args.h,
                     R=args.r, bands=args.bands, snr_db=args.snr, pattern=args.pattern,
                     library=library, unmix_opts=opts, progress=progress)
    table = summarize(rows, args.methods, args.models)
    out = _prepare_dir(args.output_dir)
    header = ["method"]
    for model in args.models:
        header += [f"{model}_rmse_mean", f"{model}_rmse_std", f"{model}_ms_per_pixel"]
    body = []
    for method in args.methods:
        line = [method]
        for model in args.models:
            line += [f"{v:.6g}" for v in table[method, model]]
        body.append(line)
    _write_csv(out / "bench.csv", header, body)
    _write_csv(out / "bench_runs.csv",
               ["method", "model", "seed", "rmse", "ms_per_pixel", "iterations"],
               [[r.method, r.model, r.seed, repr(r.rmse), f"{r.ms_per_pixel:.6g}", r.iterations]
                for r in rows])
    write_manifest(out, "bench", _config(args) | {"threads": threads},
                   [args.endmembers] if args.endmembers else [],
                   ["bench.csv", "bench_runs.csv"], [],
                   {"seconds": time.perf_counter() - t0})
    print(_format_table(header, body))
    return EXIT_OK


def _format_table(header, body):
    widths = [max(len(str(c)) for c in col) for col in zip(header, *body)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in [header] + body]
    return "\n".join(lines)


COMMANDS = {"generate": cmd_generate, "unmix": cmd_unmix, "eval": cmd_eval, "bench": cmd_bench}


def cmd_replay(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        command, config = manifest["command"], dict(manifest["config"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"{args.manifest}: not a run manifest") from exc
    if command not in COMMANDS:
        raise SceneFormatError(f"{args.manifest}: cannot replay command {command!r}")
    for path, digest in manifest.get("inputs", {}).items():
        if _sha256(path) != digest:
            log.warning("input %s changed since the manifest was written", path)
    ns = argparse.Namespace(**config)
    ns.output_dir = args.output_dir
    ns.command = command
    status = COMMANDS[command](ns)
    if status != EXIT_OK:
        return status
    out = Path(args.output_dir)
    differ = [name for name in manifest.get("reproducible", [])
              if _sha256(out / name) != manifest["outputs"][name]]
    checked = len(manifest.get("reproducible", []))
    if differ:
        print(f"replay: {len(differ)} of {checked} outputs differ: {', '.join(differ)}")
        return EXIT_DIFF
    print(f"replay: {checked} outputs identical")
    return EXIT_OK


# --------------------------------------------------------------------------


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ARGS
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    handler = cmd_replay if args.command == "replay" else COMMANDS[args.command]
    try:
        return handler(args)
    except (UsageError, NonPSDGramError) as exc:
        print(f"kunmix: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (OSError, SceneFormatError) as exc:
        print(f"kunmix: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QpError as exc:
        print(f"kunmix: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"kunmix: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    finally:
        set_stderr_trace(False)


if __name__ == "__main__":
    sys.exit(main())
