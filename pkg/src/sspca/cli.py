"""Command-line interface.

Exit status: 0 on success, 1 on usage or input errors, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .groups import DIAGONAL, AXIS, GridSpec, format_groups, make_halfspace_groups, make_singletons, read_groups
from .pipeline import (
    DEFAULT_K,
    DEFAULT_LOG2_LAMBDA,
    DEFAULT_RANKS,
    CVGrid,
    LabeledDataset,
    cross_validate,
    cross_validate_raw_knn,
    generate_planted,
)
from .regularizer import Partition
from .solver import NumericalError, SolverConfig, encode, fit

log = logging.getLogger("sspca")

EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_dims(text: str, ndim: int) -> tuple[int, ...]:
    try:
        dims = tuple(int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}") from None
    if len(dims) != ndim or any(d < 1 for d in dims):
        raise UsageError(f"expected {ndim} positive extents like {'x'.join(['8'] * ndim)}, got {text!r}")
    return dims


def _int_list(text: str) -> tuple[int, ...]:
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if ":" in chunk:
            a, b, *step = (int(x) for x in chunk.split(":"))
            out.extend(range(a, b + 1, step[0] if step else 1))
        elif chunk:
            out.append(int(chunk))
    return tuple(out)


def parse_cv_grid(text: str | None) -> CVGrid:
    """``"k=1,3,5;log2lambda=4:18:2;r=10:70:10"`` (ranges inclusive); missing keys keep defaults."""
    vals = {"k": DEFAULT_K, "log2lambda": DEFAULT_LOG2_LAMBDA, "r": DEFAULT_RANKS}
    if text and text.strip() != "default":
        for part in text.split(";"):
            if not part.strip():
                continue
            key, sep, body = part.partition("=")
            key = key.strip().lower()
            if not sep or key not in vals:
                raise UsageError(f"bad --cv-grid entry {part!r}; keys are k, log2lambda, r")
            try:
                vals[key] = _int_list(body)
            except ValueError:
                raise UsageError(f"bad --cv-grid values {body!r}") from None
    try:
        return CVGrid(vals["k"], vals["log2lambda"], vals["r"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _partition(text: str | None, r: int) -> Partition:
    if not text:
        return Partition.singletons(r)
    try:
        if text.isdigit():
            return Partition.blocks(r, int(text))
        return Partition.parse(text, r)
    except ValueError as exc:
        raise UsageError(f"bad --partition {text!r}: {exc}") from None


def _require(path):
    if path is None or not Path(path).exists():
        raise UsageError(f"input file not found: {path}")
    return path


def _config(args, rank) -> SolverConfig:
    if not 0 < args.alpha < 2:
        raise UsageError(f"--alpha must lie in (0, 2), got {args.alpha}")
    if getattr(args, "lam", 0.0) < 0:
        raise UsageError("--lambda must be nonnegative")
    try:
        return SolverConfig(
            rank=rank,
            lam=getattr(args, "lam", 0.0),
            alpha=args.alpha,
            epsilon=args.eps,
            tu=args.tu,
            tv=args.tv,
            stop_tol=args.tol,
            max_iter=args.max_iter,
            nonneg=args.nonneg,
            coeff_norm=args.coeff_norm,
            seed=args.seed,
            restarts=getattr(args, "restarts", 1),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _groups_for(args, p):
    if args.groups:
        return read_groups(_require(args.groups), p)
    if getattr(args, "grid_2d", None):
        return make_halfspace_groups(GridSpec(parse_dims(args.grid_2d, 2)))
    raise UsageError("one of --groups or --grid-2d is required")


def cmd_fit(args):
    X = formats.load_matrix(_require(args.data))
    gs = _groups_for(args, X.shape[1])
    cfg = _config(args, args.rank)
    part = _partition(args.partition, args.rank)
    res = fit(X, gs, part, cfg)
    formats.save_model(res.model, args.out, res.etas if args.save_eta else None)
    trace_path = args.trace or f"{args.out}.trace.csv"
    formats.save_trace(trace_path, res.trace, timing=not args.no_timing)
    log.info("objective %.8g after %d iterations (converged=%s)", res.objective, len(res.trace) - 1, res.converged)


def cmd_encode(args):
    model = formats.load_model(_require(args.model))
    X = formats.load_matrix(_require(args.data))
    info = model.info
    cfg = SolverConfig(
        rank=model.rank,
        stop_tol=args.tol,
        max_iter=args.max_iter,
        tu=args.tu,
        nonneg=bool(info.get("nonneg", False)),
        coeff_norm=info.get("coeff_norm", "l2"),
    )
    formats.save_matrix(args.out, encode(X, model.V, cfg))


def cmd_evaluate(args):
    X = formats.load_matrix(_require(args.data))
    labels = formats.load_labels(_require(args.labels))
    if labels.size != X.shape[0]:
        raise UsageError(f"{labels.size} labels for {X.shape[0]} rows")
    grid = GridSpec(parse_dims(args.grid_2d, 2)) if args.grid_2d else None
    gs = _groups_for(args, X.shape[1])
    cvgrid = parse_cv_grid(args.cv_grid)
    cfg = _config(args, cvgrid.rank_candidates[0])
    data = LabeledDataset(X, labels, grid)
    res = cross_validate(data, gs, cvgrid, cfg, n_folds=args.folds, part_size=args.partition_size, seed=args.seed)
    base = cross_validate_raw_knn(data, cvgrid.k_candidates, n_folds=args.folds, seed=args.seed)

    lines = ["method,k,log2_lambda,r,fold,accuracy"]
    for k, e, r, f, acc in res.fold_scores:
        lines.append(f"sspca,{k},{e},{r},{f},{acc!r}")
    for k, _, _, f, acc in base.fold_scores:
        lines.append(f"raw-knn,{k},,,{f},{acc!r}")
    formats.atomic_write(f"{args.out}.csv", "\n".join(lines) + "\n")

    k, lam, r = res.best
    summary = [
        f"grid points: {len(cvgrid)} (k x log2(lambda) x r = "
        f"{len(cvgrid.k_candidates)} x {len(cvgrid.log2_lambda_candidates)} x {len(cvgrid.rank_candidates)})",
        f"folds: {args.folds}",
        f"best sspca: k={k} lambda={lam!r} r={r} mean accuracy={res.best_score:.6f}",
        f"best raw k-NN: k={base.best[0]} mean accuracy={base.best_score:.6f}",
    ]
    formats.atomic_write(f"{args.out}.txt", "\n".join(summary) + "\n")
    print("\n".join(summary))


def cmd_gen_groups(args):
    chosen = [x for x in (args.grid_1d, args.grid_2d, args.grid_3d, args.singletons) if x is not None]
    if len(chosen) != 1:
        raise UsageError("exactly one of --grid-1d, --grid-2d, --grid-3d, --singletons is required")
    if args.singletons is not None:
        if args.singletons < 1:
            raise UsageError("--singletons needs a positive count")
        gs = make_singletons(args.singletons)
    else:
        if args.grid_1d is not None:
            dims = (args.grid_1d,)
        elif args.grid_2d is not None:
            dims = parse_dims(args.grid_2d, 2)
        else:
            dims = parse_dims(args.grid_3d, 3)
        orient = {AXIS, DIAGONAL} if args.diagonals else {AXIS}
        gs = make_halfspace_groups(GridSpec(dims, frozenset(orient)))
    text = format_groups(gs)
    if args.out:
        formats.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_gen_data(args):
    grid = GridSpec(parse_dims(args.grid_2d, 2))
    clean = generate_planted(grid, args.rank, args.n, 0.0, args.seed, nonneg=args.nonneg)
    sd = args.noise * float(np.sqrt(np.mean(clean.X**2)))
    planted = generate_planted(grid, args.rank, args.n, sd, args.seed, nonneg=args.nonneg)
    formats.save_matrix(args.out_data, planted.X)
    if args.out_labels:
        formats.save_labels(args.out_labels, planted.data.labels)
    if args.out_dictionary:
        formats.save_matrix(args.out_dictionary, planted.V_true)


def cmd_render(args):
    model = formats.load_model(_require(args.model))
    grid = GridSpec(parse_dims(args.grid_2d, 2))
    try:
        paths = formats.render_dictionary(model, grid, args.out_prefix)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for p in paths:
        print(p)


def _solver_flags(sp, with_lambda=True):
    sp.add_argument("--alpha", type=float, default=0.5, help="quasi-norm exponent in (0, 2)")
    if with_lambda:
        sp.add_argument("--lambda", dest="lam", type=float, default=0.0, help="regularization weight")
    sp.add_argument("--tu", type=int, default=3, help="BCD sweeps over U per iteration")
    sp.add_argument("--tv", type=int, default=3, help="BCD sweeps over V per iteration")
    sp.add_argument("--eps", type=float, default=None, help="absolute eta smoothing (default: scale-relative)")
    sp.add_argument("--tol", type=float, default=1e-3, help="relative objective decrease to stop")
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument("--nonneg", action="store_true", help="nonnegative U and V")
    sp.add_argument("--coeff-norm", choices=("l2", "l1"), default="l2")
    sp.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sspca", description="Structured sparse PCA / dictionary learning")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("fit", help="learn a dictionary")
    sp.add_argument("--data", required=True, help="CSV, rows are observations")
    sp.add_argument("--groups", help="groups file (G<id>: j:w ...)")
    sp.add_argument("--grid-2d", help="build half-space groups for an HxW grid instead of --groups")
    sp.add_argument("--rank", type=int, required=True)
    _solver_flags(sp)
    sp.add_argument("--partition", help='classes like "1,2;3", or a class size')
    sp.add_argument("--restarts", type=int, default=1)
    sp.add_argument("--out", required=True, help="model file")
    sp.add_argument("--trace", help="trace CSV (default: <out>.trace.csv)")
    sp.add_argument("--no-timing", action="store_true", help="omit the elapsed column from the trace")
    sp.add_argument("--save-eta", action="store_true", help="store the final eta block in the model")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("encode", help="encode data on a fitted dictionary")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=1000)
    sp.add_argument("--tu", type=int, default=3)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("evaluate", help="cross-validated k-NN on learned representations")
    sp.add_argument("--data", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--grid-2d", help="HxW grid (half-space groups unless --groups)")
    sp.add_argument("--groups")
    sp.add_argument("--cv-grid", default="default",
                    help='e.g. "k=1,3,5;log2lambda=4:18:2;r=10:70:10"; "default" is the full grid')
    _solver_flags(sp, with_lambda=False)
    sp.add_argument("--partition-size", type=int, default=1)
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--out", required=True, help="output prefix for <out>.csv and <out>.txt")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("gen-groups", help="write a groups file")
    sp.add_argument("--grid-1d", type=int)
    sp.add_argument("--grid-2d")
    sp.add_argument("--grid-3d")
    sp.add_argument("--singletons", type=int)
    sp.add_argument("--diagonals", action="store_true", help="add pi/4 half-spaces")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen_groups)

    sp = sub.add_parser("gen-data", help="write synthetic planted data")
    sp.add_argument("--grid-2d", required=True)
    sp.add_argument("--rank", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--noise", type=float, default=0.05, help="noise sd relative to the signal RMS")
    sp.add_argument("--nonneg", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-data", required=True)
    sp.add_argument("--out-labels")
    sp.add_argument("--out-dictionary")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("render", help="write dictionary elements as PGM images")
    sp.add_argument("--model", required=True)
    sp.add_argument("--grid-2d", required=True)
    sp.add_argument("--out-prefix", required=True)
    sp.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"sspca: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ValueError, OSError) as exc:
        print(f"sspca: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
