"""Command-line interface.

Commands: entropy, gs, mnnd, frechet, select, gen, loop, analyze.

Exit codes are a stable contract:
  0  success
  2  I/O problems (missing files, malformed content)
  3  violated data preconditions (too few points, dimension mismatch)
  4  configuration problems (bad flags, contradictory settings)
  5  numeric failures at runtime

All result JSON goes to stdout and carries a schema_version field;
progress and error text go to stderr. The analyze command maps a
mismatched compare (a precondition everywhere else) to exit 4, because
there the mismatch is an operator mistake in what was asked for.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import looper
from .errors import (
    CollapseLabError,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    EmptyDatasetError,
    FormatError,
    InsufficientPointsError,
    InternalError,
    NumericalError,
)
from .generators import GeneratorSpec, fit, sample
from .metrics import (
    frechet_gaussian_distance,
    generalization_score,
    kl_entropy,
    mnnd,
    moment_summary,
)
from .selection import SelectionPolicy, run_policy
from .tensorset import (
    DistanceMetric,
    FeatureMap,
    apply_feature_map,
    load_pointset,
    save_pointset,
)

EXIT_IO = 2
EXIT_PRECONDITION = 3
EXIT_CONFIG = 4
EXIT_NUMERIC = 5


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as configuration errors."""

    def error(self, message):
        raise ConfigError(message)


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def parse_feature(text: str) -> FeatureMap:
    if text == "identity":
        return FeatureMap.identity()
    if text.startswith("randproj:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"expected randproj:DIM:SEED, got {text!r}")
        try:
            return FeatureMap.random_projection(int(parts[1]), int(parts[2]))
        except ValueError:
            raise ConfigError(f"expected integer dim and seed in {text!r}") from None
    raise ConfigError(f"unknown feature map {text!r} (expected identity or randproj:DIM:SEED)")


def parse_generator(text: str) -> GeneratorSpec:
    parts = text.split(":")
    kind = parts[0]
    try:
        if kind == "gaussian" and len(parts) == 1:
            return GeneratorSpec(kind="gaussian")
        if kind == "gmm" and 2 <= len(parts) <= 4:
            components = int(parts[1])
            max_iters = int(parts[2]) if len(parts) >= 3 else 200
            tol = float(parts[3]) if len(parts) == 4 else 1e-8
            return GeneratorSpec(kind="gmm", components=components, max_iters=max_iters, tol=tol)
        if kind == "bootstrap" and len(parts) == 2:
            return GeneratorSpec(kind="bootstrap", sigma=float(parts[1]))
    except ValueError:
        raise ConfigError(f"malformed generator spec {text!r}") from None
    raise ConfigError(
        f"unknown generator spec {text!r} (expected gaussian, gmm:K[:MAXITERS[:TOL]], or bootstrap:SIGMA)"
    )


def parse_selection(text: str, metric: DistanceMetric) -> SelectionPolicy | None:
    if text == "none":
        return None
    if text == "greedy":
        return SelectionPolicy(kind="greedy", metric=metric)
    if text == "random":
        return SelectionPolicy(kind="random", metric=metric)
    if text.startswith("threshold"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"threshold selection needs threshold:TAU0:ALPHA, got {text!r}")
        try:
            return SelectionPolicy(
                kind="threshold_decay", metric=metric, tau0=float(parts[1]), alpha=float(parts[2])
            )
        except ValueError:
            raise ConfigError(f"malformed threshold selection {text!r}") from None
    raise ConfigError(f"unknown selection {text!r} (expected none, greedy, random, or threshold:TAU0:ALPHA)")


def _metric_for(args) -> DistanceMetric:
    return DistanceMetric(feature_map=parse_feature(args.feature))


def _load(args, attr="input"):
    return load_pointset(getattr(args, attr), args.format)


def cmd_entropy(args) -> int:
    ps = _load(args)
    report = kl_entropy(ps, args.gamma, _metric_for(args))
    _emit(
        {
            "schema_version": looper.SCHEMA_VERSION,
            "estimate": report.estimate,
            "gamma": report.gamma,
            "duplicate_count": report.duplicate_count,
            "log_distance_sum": report.log_distance_sum,
            "size": report.size,
            "dim": report.dim,
        }
    )
    return 0


def cmd_gs(args) -> int:
    generated = _load(args)
    training = load_pointset(args.training, args.format)
    value = generalization_score(generated, training, _metric_for(args))
    _emit({"schema_version": looper.SCHEMA_VERSION, "gs": value})
    return 0


def cmd_mnnd(args) -> int:
    ps = _load(args)
    value = mnnd(ps, _metric_for(args))
    _emit({"schema_version": looper.SCHEMA_VERSION, "mnnd": value})
    return 0


def cmd_frechet(args) -> int:
    fmap = parse_feature(args.feature)
    a = moment_summary(apply_feature_map(_load(args), fmap))
    b = moment_summary(apply_feature_map(load_pointset(args.other, args.format), fmap))
    value = frechet_gaussian_distance(a, b)
    _emit({"schema_version": looper.SCHEMA_VERSION, "frechet": value})
    return 0


def cmd_select(args) -> int:
    chosen = [flag for flag, on in (("--greedy", args.greedy), ("--random", args.random)) if on]
    if args.threshold is not None:
        chosen.append("--threshold")
    if len(chosen) != 1:
        raise ConfigError(f"exactly one selection policy flag is required, got {chosen or 'none'}")
    metric = _metric_for(args)
    if args.greedy:
        policy = SelectionPolicy(kind="greedy", seed=args.seed, metric=metric, initial_index=args.start_index)
    elif args.random:
        policy = SelectionPolicy(kind="random", seed=args.seed, metric=metric)
    else:
        if len(args.threshold) != 2:
            raise ConfigError("--threshold requires two values: TAU0 ALPHA (there is no default tau0)")
        policy = SelectionPolicy(
            kind="threshold_decay",
            seed=args.seed,
            metric=metric,
            tau0=args.threshold[0],
            alpha=args.threshold[1],
            initial_index=args.start_index,
        )
    pool = _load(args)
    result = run_policy(pool, args.n, policy)
    if args.out:
        save_pointset(pool.rows(result.indices), args.out, args.format)
    doc = {
        "schema_version": looper.SCHEMA_VERSION,
        "indices": [int(i) for i in result.indices],
        "source_proportions": result.source_proportions,
    }
    if result.final_threshold is not None:
        doc["final_threshold"] = result.final_threshold
        doc["passes"] = result.passes
    _emit(doc)
    return 0


def cmd_gen(args) -> int:
    training = _load(args)
    spec = parse_generator(args.generator)
    fit_seed = looper.derive_seed(args.seed, 0, looper.ROLE_FIT)
    sample_seed = looper.derive_seed(args.seed, 0, looper.ROLE_SAMPLE)
    generator = fit(
        GeneratorSpec(
            kind=spec.kind,
            seed=fit_seed,
            components=spec.components,
            max_iters=spec.max_iters,
            tol=spec.tol,
            sigma=spec.sigma,
        ),
        training,
    )
    out = sample(generator, args.m, sample_seed).with_sources(args.tag_iteration)
    save_pointset(out, args.out, args.format)
    _emit(
        {
            "schema_version": looper.SCHEMA_VERSION,
            "written": str(args.out),
            "count": out.size,
            "dim": out.dim,
        }
    )
    return 0


_CONFIG_KEYS = (
    "paradigm",
    "iterations",
    "train_size",
    "generator",
    "selection",
    "generation_multiplier",
    "metric",
    "gamma",
    "master_seed",
    "pool_cap",
    "feature",
)


def load_config_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _build_loop_config(args) -> looper.LoopConfig:
    file_values = load_config_file(args.config) if args.config else {}

    def pick(key, flag_value, default=None):
        if flag_value is not None:
            return flag_value
        if key in file_values:
            return file_values[key]
        return default

    paradigm = pick("paradigm", args.paradigm)
    iterations = pick("iterations", args.iterations)
    train_size = pick("train_size", args.train_size)
    generator = pick("generator", args.generator)
    for name, value in (("paradigm", paradigm), ("iterations", iterations),
                        ("train_size", train_size), ("generator", generator)):
        if value is None:
            raise ConfigError(f"loop requires {name} (flag or config file)")
    try:
        iterations = int(iterations)
        train_size = int(train_size)
        gamma = int(pick("gamma", args.gamma, 1))
        master_seed = int(pick("master_seed", args.seed, 0))
        pool_cap = int(pick("pool_cap", args.pool_cap, 1_000_000))
    except ValueError as exc:
        raise ConfigError(f"malformed integer in loop config: {exc}") from None
    mult = pick("generation_multiplier", args.generation_multiplier)
    if mult is not None:
        try:
            mult = float(mult)
        except ValueError:
            raise ConfigError(f"malformed generation_multiplier {mult!r}") from None
    metric_kind = pick("metric", args.metric, "euclidean")
    fmap = parse_feature(pick("feature", args.feature, "identity"))
    metric = DistanceMetric(kind=metric_kind, feature_map=fmap)
    selection = parse_selection(pick("selection", args.selection, "none"), metric)
    return looper.LoopConfig(
        paradigm=paradigm,
        iterations=iterations,
        train_size=train_size,
        generator=parse_generator(generator),
        selection=selection,
        generation_multiplier=mult,
        metric=metric,
        gamma=gamma,
        master_seed=master_seed,
        pool_cap=pool_cap,
    )


def cmd_loop(args) -> int:
    config = _build_loop_config(args)
    real = load_pointset(args.real, args.format)
    sys.stderr.write(
        f"loop: paradigm={config.paradigm} iterations={config.iterations} "
        f"train_size={config.train_size} generator={config.generator.kind} "
        f"selection={config.selection.kind if config.selection else 'none'} "
        f"seed={config.master_seed}\n"
    )

    def progress(rec):
        sys.stderr.write(
            f"[iter {rec.iteration}/{config.iterations}] entropy={rec.entropy.estimate:.6f} "
            f"gs={rec.gs_value:.6f} mnnd={rec.mnnd_value:.6f} duplicates={rec.duplicate_count}\n"
        )

    trace = looper.run_loop(config, real, progress=progress)
    json_path = Path(f"{args.out}.json")
    csv_path = Path(f"{args.out}.csv")
    json_path.write_text(looper.trace_to_json(trace, canonical=args.canonical))
    csv_path.write_text(looper.trace_to_csv(trace))
    _emit(
        {
            "schema_version": looper.SCHEMA_VERSION,
            "trace_json": str(json_path),
            "trace_csv": str(csv_path),
            "iterations": config.iterations,
        }
    )
    return 0


def _read_trace(path) -> looper.LoopTrace:
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        return looper.trace_from_json(text)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a trace file ({exc})") from None


def cmd_analyze(args) -> int:
    if args.mode == "compare":
        if len(args.traces) != 2:
            raise ConfigError(f"compare needs exactly 2 trace files, got {len(args.traces)}")
        try:
            summary = looper.compare_traces(_read_trace(args.traces[0]), _read_trace(args.traces[1]))
        except DimensionError as exc:
            # Mismatched traces are an operator mistake here, not a data problem.
            raise ConfigError(str(exc)) from None
        _emit(looper.comparison_doc(summary))
        return 0
    traces = [_read_trace(p) for p in args.traces]
    if not traces:
        raise ConfigError("correlate needs at least one trace file")
    _emit(looper.correlation_doc(looper.correlate_trace(traces)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="collapselab", description="Entropy tracking and data selection for self-consuming loops.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--input", required=True, help="input dataset path")
        p.add_argument("--format", choices=("csv", "rawbin"), default="csv")
        p.add_argument("--feature", default="identity", help="identity or randproj:DIM:SEED")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("entropy", help="nearest-neighbor entropy of a dataset")
    common(p, seed=False)
    p.add_argument("--gamma", type=int, default=1)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("gs", help="generalization score of generated points against a training set")
    common(p, seed=False)
    p.add_argument("--training", required=True, help="training dataset path")
    p.set_defaults(func=cmd_gs)

    p = sub.add_parser("mnnd", help="mean nearest-neighbor distance within a dataset")
    common(p, seed=False)
    p.set_defaults(func=cmd_mnnd)

    p = sub.add_parser("frechet", help="Frechet Gaussian distance between two datasets")
    common(p, seed=False)
    p.add_argument("--other", required=True, help="second dataset path")
    p.set_defaults(func=cmd_frechet)

    p = sub.add_parser("select", help="select a subset of a candidate pool")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--random", action="store_true")
    p.add_argument("--threshold", nargs="*", type=float, default=None, metavar=("TAU0", "ALPHA"))
    p.add_argument("--start-index", type=int, default=None, help="pin the initial pick")
    p.add_argument("--out", default=None, help="write the selected subset here (input's format)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("gen", help="fit a generator and sample from it")
    common(p)
    p.add_argument("--generator", required=True, help="gaussian, gmm:K[:MAXITERS[:TOL]], or bootstrap:SIGMA")
    p.add_argument("--m", type=int, required=True, help="number of points to sample")
    p.add_argument("--tag-iteration", type=int, default=1, help="source tag for sampled rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("loop", help="run a self-consuming training loop")
    p.add_argument("--real", required=True, help="real dataset path")
    p.add_argument("--format", choices=("csv", "rawbin"), default="csv")
    p.add_argument("--config", default=None, help="key=value file mirroring the loop config")
    p.add_argument("--paradigm", choices=("replace", "accumulate", "accumulate_subsample"), default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None, dest="train_size")
    p.add_argument("--generator", default=None)
    p.add_argument("--selection", default=None, help="none, greedy, random, or threshold:TAU0:ALPHA")
    p.add_argument("--generation-multiplier", type=float, default=None, dest="generation_multiplier")
    p.add_argument("--metric", choices=("euclidean", "sqeuclidean"), default=None)
    p.add_argument("--feature", default=None, help="identity or randproj:DIM:SEED")
    p.add_argument("--gamma", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--pool-cap", type=int, default=None, dest="pool_cap")
    p.add_argument("--canonical", action="store_true", help="omit timestamp/host for byte-stable output")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.json and PREFIX.csv")
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("analyze", help="compare two traces or correlate entropy with log GS")
    p.add_argument("--mode", choices=("compare", "correlate"), required=True)
    p.add_argument("traces", nargs="*", help="trace JSON files")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (FormatError, EmptyDatasetError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except (InsufficientPointsError, DomainError, DimensionError, DegenerateInputError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PRECONDITION
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except (NumericalError, InternalError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        # Non-finite data is rejected at load time with the stock ValueError.
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except CollapseLabError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())
