"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from contextlib import nullcontext

import numpy as np

from ..entropy import TruncationPolicy, deterministic_truncation, entropy_estimate
from ..errors import ConfigError, ConvergenceError, DomainError, EstimateUndefinedError, PrecisionError
from ..partition import BinaryPath, PartitionSpec, cell_bounds, decode_array, encode
from ..tree import DENSE_DEPTH_LIMIT, PosteriorTree, PriorSchedule, build_count_tree, predictive_masses, sample_density
from .config import KINDS, ExperimentConfig
from .experiments import run_experiment, summarize
from .report import write_report

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
#: default grid depth for ``fit`` when the sample does not ask for less
FIT_DEFAULT_DEPTH = 10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_sample(path: str, dimension: int | None) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read sample {path}: {exc}") from None
    if data.size == 0:
        data = data.reshape(0, dimension or 1)
    if dimension is not None and data.shape[1] != dimension:
        raise UsageError(f"sample has {data.shape[1]} column(s), expected {dimension}")
    return data


def _posterior(args) -> PosteriorTree:
    prior = PriorSchedule.parse(args.prior)
    if getattr(args, "input", None):
        x = _read_sample(args.input, args.dimension)
        spec = PartitionSpec(x.shape[1])
        return PosteriorTree(prior, build_count_tree(x, spec))
    return PosteriorTree(prior, build_count_tree(np.zeros((0, args.dimension or 1)),
                                                 PartitionSpec(args.dimension or 1)))


def _open_out(path):
    return open(path, "w", newline="") if path and path != "-" else nullcontext(sys.stdout)


def _grid_rows(depth: int, spec: PartitionSpec):
    codes = np.arange(1 << depth, dtype=np.uint64)
    lo, hi = decode_array(codes, depth, spec)
    return codes, lo, hi


def cmd_fit(args) -> int:
    post = _posterior(args)
    depth = args.depth or min(deterministic_truncation(max(post.n, 1)), FIT_DEFAULT_DEPTH)
    if depth > DENSE_DEPTH_LIMIT:
        raise UsageError(f"--depth {depth} exceeds the dense limit {DENSE_DEPTH_LIMIT}")
    masses = predictive_masses(post, depth)
    codes, lo, hi = _grid_rows(depth, post.spec)
    p = post.spec.dimension
    with _open_out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path"] + [f"lower_{c}" for c in range(p)] + [f"upper_{c}" for c in range(p)] + ["density"])
        for i, code in enumerate(codes.tolist()):
            w.writerow([str(BinaryPath(depth, code))] + [repr(float(v)) for v in lo[i]] + [repr(float(v)) for v in hi[i]]
                       + [repr(float(np.ldexp(masses[i], depth)))])
    return EXIT_OK


def cmd_entropy(args) -> int:
    x = _read_sample(args.input, args.dimension)
    spec = PartitionSpec(x.shape[1])
    counts = build_count_tree(x, spec)
    policy = TruncationPolicy.parse(args.policy, args.tail_tol)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        est = entropy_estimate(counts, PriorSchedule.parse(args.prior), policy)
    if args.bits:
        est = est.in_bits()
    d = est.to_dict()
    d["variance"] = d["posterior_variance"]
    d["level"] = d["truncation_level"]
    d["units"] = "bits" if args.bits else "nats"
    d["prior"] = args.prior
    d["policy"] = str(policy)
    print(json.dumps(d, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sample(args) -> int:
    post = _posterior(args)
    depth = args.depth
    if depth > DENSE_DEPTH_LIMIT:
        raise UsageError(f"--depth {depth} exceeds the dense limit {DENSE_DEPTH_LIMIT}")
    codes, _, _ = _grid_rows(depth, post.spec)
    paths = [str(BinaryPath(depth, c)) for c in codes.tolist()]
    seeds = np.random.SeedSequence(args.seed).generate_state(args.draws, dtype=np.uint32)
    with _open_out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "path", "density"])
        for k, s in enumerate(seeds.tolist()):
            dens = sample_density(post, depth, seed=int(s))
            for path, v in zip(paths, dens.densities().tolist()):
                w.writerow([k, path, repr(v)])
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config, kind=args.kind)
        overrides = {}
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.plot:
            overrides["plot"] = True
        if overrides:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    rows = run_experiment(cfg)
    summary = summarize(cfg, rows)
    paths = write_report(cfg, rows, summary, args.output_dir)
    for key in sorted(paths):
        print(f"{key}: {paths[key]}")
    return EXIT_OK


def cmd_partition(args) -> int:
    try:
        coords = [float(v) for v in args.point.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse point {args.point!r}") from None
    spec = PartitionSpec(len(coords))
    path = encode(coords, args.depth, spec)
    print(str(path))
    print(str(cell_bounds(path, spec)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polyatree", description="Polya tree density and entropy estimation on [0,1]^p.")
    seeded = _Parser(add_help=False)
    seeded.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, needs_input):
        p.add_argument("--input", required=needs_input, help="headerless CSV, one observation per row")
        p.add_argument("--dimension", type=int, default=None, help="expected number of columns")
        p.add_argument("--prior", default="exp:c=1,beta=3", help="e.g. exp:c=1,beta=3 or poly:c=1,rho=3")

    p = sub.add_parser("fit", parents=[seeded], help="predictive density on a dyadic grid as CSV")
    common(p, True)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("entropy", parents=[seeded], help="entropy estimate as JSON")
    common(p, True)
    p.add_argument("--policy", default="auto", help="auto, max-impact, deterministic or fixed:<level>")
    p.add_argument("--tail-tol", type=float, default=1e-12)
    p.add_argument("--bits", action="store_true", help="report in bits instead of nats")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("sample", parents=[seeded], help="draw prior or posterior densities as CSV")
    common(p, False)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--draws", type=int, default=1)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", help="run an experiment config")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None, help="overrides the config and the environment")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("partition", parents=[seeded], help="encode a point and print its cell")
    p.add_argument("--point", required=True, help="comma-separated coordinates")
    p.add_argument("--depth", type=int, required=True)
    p.set_defaults(func=cmd_partition)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"polyatree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, PrecisionError, FloatingPointError) as exc:
        print(f"polyatree: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, EstimateUndefinedError, ConfigError, ValueError) as exc:
        print(f"polyatree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
