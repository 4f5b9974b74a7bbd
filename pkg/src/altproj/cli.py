"""Command-line front end.

Exit codes: 0 success/converged, 1 usage or input error, 2 non-convergence,
3 tangential or inconclusive angle classification.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment, hankel as hk, tangent, toy
from .driver import DriverConfig, NonFiniteIterateError, alternate_project, write_step_norms_csv

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_TANGENTIAL = 0, 1, 2, 3

log = logging.getLogger("altproj")


class InputError(Exception):
    pass


def _driver_from_args(args) -> DriverConfig:
    return DriverConfig(max_iter=args.max_iter, step_tol=args.tol)


def _read_signal(path: str) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            return hk.read_signal_csv(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_fit(args) -> int:
    prefix = Path(args.out)
    if not prefix.parent.exists():
        raise InputError(f"output directory {prefix.parent} does not exist")
    f = _read_signal(args.input)
    n = hk.signal_size(f)
    if not 1 <= args.rank < n:
        raise InputError(f"rank must satisfy 1 <= k < n; got k={args.rank} with n={n} "
                         f"(signal length {len(f)})")
    g_inf, trace = hk.fit_exponentials(f, args.rank, _driver_from_args(args))

    with open(f"{prefix}.fitted.csv", "w", newline="") as fh:
        hk.write_signal_csv(g_inf, fh)
    with open(f"{prefix}.trace.csv", "w", newline="") as fh:
        write_step_norms_csv(trace, fh)
    log.info("termination=%s after %d steps", trace.termination, trace.num_steps)
    try:
        model = hk.recover_nodes(g_inf, args.rank)
    except hk.RankError:
        # an unconverged iterate need not have rank k
        if trace.converged:
            raise
        model = None
    if model is not None:
        Path(f"{prefix}.model.json").write_text(model.to_json() + "\n")
    if not trace.converged:
        print(f"not converged: {trace.termination} after {trace.num_steps} steps", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _load_bases(path: str):
    """Tangent spaces given as spanning vectors: {"ambient_dim", "t1", "t2", "tcap"}."""
    doc = json.loads(Path(path).read_text())
    d = int(doc["ambient_dim"])

    def basis(key):
        vecs = [np.asarray(v, dtype=float) for v in doc.get(key, [])]
        for v in vecs:
            if v.shape != (d,):
                raise InputError(f"{key}: vector of length {v.size}, expected {d}")
        return tangent.SubspaceBasis.from_points(vecs, shape=(d,), is_complex=False)

    return basis("t1"), basis("t2"), basis("tcap"), d


def cmd_angle(args) -> int:
    if args.bases:
        T1, T2, Tc, d = _load_bases(args.bases)
        report = tangent.classify_point(T1, T2, Tc, d)
    else:
        if args.model:
            try:
                model = hk.ExpModel.from_json(Path(args.model).read_text())
            except OSError as exc:
                raise InputError(f"cannot read {args.model}: {exc.strerror}") from None
        else:
            if args.rank is None:
                raise InputError("--signal requires --rank")
            model = hk.recover_nodes(_read_signal(args.signal), args.rank)
        report = tangent.classify_model(model)
    print(report.to_json())
    return EXIT_OK if report.non_tangential else EXIT_TANGENTIAL


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InputError(f"bad start point {text!r}; expected comma-separated numbers") from None


def cmd_demo(args) -> int:
    parts = toy.example_parts(args.example)
    start = _parse_point(args.start)
    if start.size != parts.dim:
        raise InputError(f"example {args.example} lives in R^{parts.dim}; start has {start.size} coordinates")
    config = DriverConfig(max_iter=args.max_iter, step_tol=args.tol)
    trace = alternate_project(start, toy.make_example(args.example), config)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["k"] + [f"x{i + 1}" for i in range(parts.dim)] + ["step_norm"])
    for k, b in zip(trace.iterate_indices, trace.iterates):
        step = trace.step_norms[k - 1] if k > 0 else float("nan")
        writer.writerow([k] + [repr(float(v)) for v in b] + [repr(step)])
    print(f"termination={trace.termination}", file=sys.stderr)
    return EXIT_OK if trace.converged else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    out = Path(args.out)
    try:
        doc = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config}: invalid JSON ({exc})") from None
    try:
        cfg = experiment.config_from_dict(doc, seed=args.seed)
    except ValueError as exc:
        raise InputError(f"invalid sweep config: {exc}") from None
    out.mkdir(parents=True, exist_ok=True)
    result = experiment.run_sweep(cfg, jobs=args.jobs)
    (out / "sweep.csv").write_text(result.sweep_csv())
    (out / "summary.csv").write_text(result.summary_csv())
    sys.stdout.write(result.summary_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="altproj", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def driver_flags(sp, max_iter=5000):
        sp.add_argument("--tol", type=float, default=None,
                        help="absolute step tolerance (default 1e-12*(1+||start||))")
        sp.add_argument("--max-iter", type=int, default=max_iter, help="iteration budget")

    fit = sub.add_parser("fit", help="approximate a signal by a sum of k exponentials")
    fit.add_argument("--input", required=True, help="signal CSV (index, re, im)")
    fit.add_argument("--rank", type=int, required=True, help="number of exponentials k")
    fit.add_argument("--out", required=True, help="output prefix for .fitted.csv, .model.json, .trace.csv")
    driver_flags(fit)
    fit.set_defaults(func=cmd_fit)

    angle = sub.add_parser("angle", help="angle and tangency report at an intersection point")
    src = angle.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="exponential model JSON")
    src.add_argument("--signal", help="signal CSV; nodes are recovered with --rank")
    src.add_argument("--bases", help="JSON with spanning vectors ambient_dim, t1, t2, tcap")
    angle.add_argument("--rank", type=int, help="rank used with --signal")
    angle.set_defaults(func=cmd_angle)

    demo = sub.add_parser("demo", help="run one of the toy examples and print the trace")
    demo.add_argument("--example", type=int, choices=(1, 3, 4), required=True)
    demo.add_argument("--start", required=True, help="start point, e.g. 1,0")
    driver_flags(demo, max_iter=1000)
    demo.set_defaults(func=cmd_demo)

    sweep = sub.add_parser("sweep", help="noise-level sweep of the exponential fit")
    sweep.add_argument("--config", required=True, help="sweep config JSON (see docs/sweep-config.schema.json)")
    sweep.add_argument("--out", required=True, help="directory for sweep.csv and summary.csv")
    sweep.add_argument("--seed", type=int, required=True, help="base seed of the random streams")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    sweep.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as non-convergence
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except tangent.InconclusiveClassificationError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_TANGENTIAL
    except (InputError, hk.AmbiguousTruncationError, NonFiniteIterateError,
            ValueError, KeyError) as exc:
        # RankError, DegenerateModelError and ProjectionError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
