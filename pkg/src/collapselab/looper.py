"""Self-consuming training-loop harness.

One iteration n: fit the generator on the current training set D_n, sample
a generation G_n (tagged syn n), build the candidate pool for the chosen
paradigm, and select the next training set D_{n+1}. The record written for
iteration n measures D_{n+1} (entropy, MNND, covariance trace, Frechet
distance to the real reference, origin mix) plus the generalization score
of G_n against D_n. Models are refit from scratch every iteration; nothing
carries over except data.

Paradigms:
  replace               D_{n+1} comes from G_n alone.
  accumulate            D_{n+1} is the whole pool: real data plus every
                        generation so far (capped, hard error beyond).
  accumulate_subsample  D_{n+1} is a fixed-size subset of that pool
                        (random when no selection policy is given).

Per-iteration seeds derive from master_seed via SplitMix64:
seed = splitmix64(master_seed ^ (iteration * GOLDEN) ^ role), with role
constants fit=1, sample=2, select=3.
"""

from __future__ import annotations

import dataclasses
import json
import math
import platform
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    InsufficientPointsError,
    NumericalError,
)
from .generators import GeneratorSpec, fit, sample
from .metrics import (
    EntropyReport,
    MomentSummary,
    frechet_gaussian_distance,
    generalization_score,
    kl_entropy,
    mnnd,
    moment_summary,
    pearson,
)
from .selection import SelectionPolicy, run_policy, select_random
from .tensorset import (
    DistanceMetric,
    FeatureMap,
    PointSet,
    apply_feature_map,
)

SCHEMA_VERSION = 1

_PARADIGMS = ("replace", "accumulate", "accumulate_subsample")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
ROLE_FIT = 1
ROLE_SAMPLE = 2
ROLE_SELECT = 3


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, iteration: int, role: int) -> int:
    return splitmix64((master_seed ^ ((iteration * _GOLDEN) & _MASK64) ^ role) & _MASK64)


@dataclass(frozen=True)
class LoopConfig:
    paradigm: str
    iterations: int
    train_size: int
    generator: GeneratorSpec
    selection: SelectionPolicy | None = None
    generation_multiplier: float | None = None
    metric: DistanceMetric = DistanceMetric()
    gamma: int = 1
    master_seed: int = 0
    pool_cap: int = 1_000_000

    def __post_init__(self) -> None:
        if self.paradigm not in _PARADIGMS:
            raise ConfigError(f"unknown paradigm {self.paradigm!r}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.train_size < 1:
            raise ConfigError(f"train_size must be >= 1, got {self.train_size}")
        if self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.generation_multiplier is not None and not self.generation_multiplier > 0.0:
            raise ConfigError(f"generation_multiplier must be positive, got {self.generation_multiplier}")
        if self.pool_cap < 1:
            raise ConfigError(f"pool_cap must be >= 1, got {self.pool_cap}")
        if self.paradigm == "accumulate" and self.selection is not None:
            raise ConfigError("accumulate trains on the full pool; a selection policy is contradictory")

    def effective_multiplier(self) -> float:
        if self.generation_multiplier is not None:
            return float(self.generation_multiplier)
        return 2.0 if (self.paradigm == "replace" and self.selection is not None) else 1.0


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    entropy: EntropyReport
    gs_value: float
    mnnd_value: float
    trace_cov: float
    frechet_to_real: float
    source_proportions: dict[str, float]
    duplicate_count: int


@dataclass(frozen=True, eq=False)
class LoopTrace:
    config: LoopConfig
    records: tuple[IterationRecord, ...]
    real_reference: MomentSummary


def run_loop(config: LoopConfig, real_data: PointSet, progress=None) -> LoopTrace:
    n = config.train_size
    if real_data.size < n:
        raise InsufficientPointsError(f"need at least {n} real points, got {real_data.size}")
    if real_data.size and int(real_data.sources.max()) != 0:
        raise ConfigError("real_data must be tagged real (source code 0) throughout")
    if config.paradigm in ("accumulate", "accumulate_subsample"):
        final_pool = real_data.size + config.iterations * n
        if final_pool > config.pool_cap:
            raise ConfigError(
                f"pool would grow to {final_pool} points, beyond the cap of {config.pool_cap}"
            )

    mult = config.effective_multiplier()
    fmap = config.metric.feature_map
    real_ref = moment_summary(apply_feature_map(real_data, fmap))

    current = real_data if config.paradigm == "accumulate" else real_data.rows(np.arange(n))
    generations: list[PointSet] = []
    records: list[IterationRecord] = []

    for it in range(1, config.iterations + 1):
        try:
            fit_seed = derive_seed(config.master_seed, it, ROLE_FIT)
            sample_seed = derive_seed(config.master_seed, it, ROLE_SAMPLE)
            select_seed = derive_seed(config.master_seed, it, ROLE_SELECT)

            gen = fit(dataclasses.replace(config.generator, seed=fit_seed), current)
            g_size = math.ceil(mult * n) if config.paradigm == "replace" else n
            generation = sample(gen, g_size, sample_seed).with_sources(it)
            gs_value = generalization_score(generation, current, config.metric)

            if config.paradigm == "replace":
                pool = generation
            else:
                generations.append(generation)
                pool = PointSet.concat([real_data] + generations)

            if config.paradigm == "accumulate":
                nxt = pool
            elif config.selection is not None:
                policy = dataclasses.replace(config.selection, seed=select_seed)
                nxt = pool.rows(run_policy(pool, n, policy).indices)
            elif config.paradigm == "accumulate_subsample":
                nxt = pool.rows(select_random(pool, n, select_seed).indices)
            else:
                nxt = pool

            entropy = kl_entropy(nxt, config.gamma, config.metric)
            mnnd_value = mnnd(nxt, config.metric)
            moments = moment_summary(apply_feature_map(nxt, fmap))
            frechet = frechet_gaussian_distance(moments, real_ref)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc

        record = IterationRecord(
            iteration=it,
            entropy=entropy,
            gs_value=gs_value,
            mnnd_value=mnnd_value,
            trace_cov=moments.trace_cov,
            frechet_to_real=frechet,
            source_proportions=nxt.proportions(),
            duplicate_count=entropy.duplicate_count,
        )
        records.append(record)
        if progress is not None:
            progress(record)
        current = nxt

    return LoopTrace(config=config, records=tuple(records), real_reference=real_ref)


# --- comparison and correlation -------------------------------------------

_DELTA_METRICS = ("entropy", "gs", "mnnd", "frechet_real")


@dataclass(frozen=True)
class ComparisonSummary:
    """Per-iteration deltas (a - b) and a sign summary per metric."""

    iterations: int
    deltas: dict[str, tuple[float, ...]]
    mean_delta: dict[str, float]
    dominance: dict[str, str]


def _record_value(record: IterationRecord, key: str) -> float:
    if key == "entropy":
        return record.entropy.estimate
    if key == "gs":
        return record.gs_value
    if key == "mnnd":
        return record.mnnd_value
    return record.frechet_to_real


def compare_traces(a: LoopTrace, b: LoopTrace) -> ComparisonSummary:
    if len(a.records) != len(b.records):
        raise DimensionError(f"traces of length {len(a.records)} vs {len(b.records)} are not comparable")
    if a.config.paradigm != b.config.paradigm:
        raise DimensionError(
            f"traces of paradigm {a.config.paradigm!r} vs {b.config.paradigm!r} are not comparable"
        )
    deltas: dict[str, tuple[float, ...]] = {}
    mean_delta: dict[str, float] = {}
    dominance: dict[str, str] = {}
    for key in _DELTA_METRICS:
        ds = tuple(_record_value(ra, key) - _record_value(rb, key) for ra, rb in zip(a.records, b.records))
        deltas[key] = ds
        mean_delta[key] = sum(ds) / len(ds)
        pos = sum(1 for d in ds if d > 0)
        neg = sum(1 for d in ds if d < 0)
        if pos and not neg:
            dominance[key] = "a"
        elif neg and not pos:
            dominance[key] = "b"
        elif not pos and not neg:
            dominance[key] = "tie"
        else:
            dominance[key] = "mixed"
    return ComparisonSummary(
        iterations=len(a.records), deltas=deltas, mean_delta=mean_delta, dominance=dominance
    )


@dataclass(frozen=True)
class CorrelationReport:
    """Pearson r between entropy and log generalization score."""

    r: float
    point_count: int
    excluded_count: int


def correlate_trace(traces) -> CorrelationReport:
    if isinstance(traces, LoopTrace):
        traces = [traces]
    entropies: list[float] = []
    log_gs: list[float] = []
    excluded = 0
    for trace in traces:
        for rec in trace.records:
            if rec.gs_value == 0.0:
                excluded += 1
                continue
            entropies.append(rec.entropy.estimate)
            log_gs.append(math.log(rec.gs_value))
    if len(entropies) < 3:
        raise InsufficientPointsError(
            f"correlation needs at least 3 records with nonzero scores, got {len(entropies)}"
        )
    return CorrelationReport(r=pearson(entropies, log_gs), point_count=len(entropies), excluded_count=excluded)


# --- serialization ----------------------------------------------------------


def _feature_map_doc(fmap: FeatureMap) -> dict:
    if fmap.kind == "identity":
        return {"kind": "identity"}
    if fmap.kind == "randproj":
        return {"kind": "randproj", "target_dim": fmap.target_dim, "seed": fmap.seed}
    return {
        "kind": "whiten",
        "mean": [float(v) for v in fmap.mean],
        "transform": [[float(v) for v in row] for row in fmap.transform],
    }


def _feature_map_from_doc(doc: dict) -> FeatureMap:
    kind = doc["kind"]
    if kind == "identity":
        return FeatureMap.identity()
    if kind == "randproj":
        return FeatureMap.random_projection(doc["target_dim"], doc["seed"])
    return FeatureMap.affine_whitening(doc["mean"], doc["transform"])


def _metric_doc(metric: DistanceMetric) -> dict:
    return {"kind": metric.kind, "feature_map": _feature_map_doc(metric.feature_map)}


def _metric_from_doc(doc: dict) -> DistanceMetric:
    return DistanceMetric(kind=doc["kind"], feature_map=_feature_map_from_doc(doc["feature_map"]))


def _config_doc(config: LoopConfig) -> dict:
    gen = config.generator
    gen_doc = {"kind": gen.kind, "seed": gen.seed}
    if gen.kind == "gmm":
        gen_doc.update(components=gen.components, max_iters=gen.max_iters, tol=gen.tol)
    if gen.kind == "bootstrap":
        gen_doc.update(sigma=gen.sigma)
    sel = config.selection
    sel_doc = None
    if sel is not None:
        sel_doc = {"kind": sel.kind, "seed": sel.seed, "metric": _metric_doc(sel.metric)}
        if sel.kind == "threshold_decay":
            sel_doc.update(tau0=sel.tau0, alpha=sel.alpha)
        if sel.initial_index is not None:
            sel_doc.update(initial_index=sel.initial_index)
    return {
        "paradigm": config.paradigm,
        "iterations": config.iterations,
        "train_size": config.train_size,
        "generator": gen_doc,
        "selection": sel_doc,
        "generation_multiplier": config.effective_multiplier(),
        "metric": _metric_doc(config.metric),
        "gamma": config.gamma,
        "master_seed": config.master_seed,
        "pool_cap": config.pool_cap,
    }


def _config_from_doc(doc: dict) -> LoopConfig:
    gd = doc["generator"]
    gen = GeneratorSpec(
        kind=gd["kind"],
        seed=gd.get("seed", 0),
        components=gd.get("components", 1),
        max_iters=gd.get("max_iters", 200),
        tol=gd.get("tol", 1e-8),
        sigma=gd.get("sigma", 0.0),
    )
    sd = doc.get("selection")
    sel = None
    if sd is not None:
        sel = SelectionPolicy(
            kind=sd["kind"],
            seed=sd.get("seed", 0),
            metric=_metric_from_doc(sd["metric"]),
            tau0=sd.get("tau0"),
            alpha=sd.get("alpha"),
            initial_index=sd.get("initial_index"),
        )
    return LoopConfig(
        paradigm=doc["paradigm"],
        iterations=doc["iterations"],
        train_size=doc["train_size"],
        generator=gen,
        selection=sel,
        generation_multiplier=doc.get("generation_multiplier"),
        metric=_metric_from_doc(doc["metric"]),
        gamma=doc.get("gamma", 1),
        master_seed=doc.get("master_seed", 0),
        pool_cap=doc.get("pool_cap", 1_000_000),
    )


def _record_doc(rec: IterationRecord) -> dict:
    ent = rec.entropy
    return {
        "iteration": rec.iteration,
        "entropy": {
            "estimate": ent.estimate,
            "gamma": ent.gamma,
            "duplicate_count": ent.duplicate_count,
            "log_distance_sum": ent.log_distance_sum,
            "size": ent.size,
            "dim": ent.dim,
        },
        "gs": rec.gs_value,
        "mnnd": rec.mnnd_value,
        "trace_cov": rec.trace_cov,
        "frechet_real": rec.frechet_to_real,
        "source_proportions": rec.source_proportions,
        "duplicate_count": rec.duplicate_count,
    }


def _record_from_doc(doc: dict) -> IterationRecord:
    ed = doc["entropy"]
    entropy = EntropyReport(
        estimate=ed["estimate"],
        gamma=ed["gamma"],
        duplicate_count=ed["duplicate_count"],
        log_distance_sum=ed["log_distance_sum"],
        size=ed["size"],
        dim=ed["dim"],
    )
    return IterationRecord(
        iteration=doc["iteration"],
        entropy=entropy,
        gs_value=doc["gs"],
        mnnd_value=doc["mnnd"],
        trace_cov=doc["trace_cov"],
        frechet_to_real=doc["frechet_real"],
        source_proportions=dict(doc["source_proportions"]),
        duplicate_count=doc["duplicate_count"],
    )


def trace_to_json(trace: LoopTrace, canonical: bool = False) -> str:
    """Serialize a trace; canonical mode drops the timestamp and host so
    that identical runs produce identical bytes."""
    doc: dict = {"schema_version": SCHEMA_VERSION}
    if not canonical:
        doc["timestamp"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        doc["host"] = platform.node()
    doc["config"] = _config_doc(trace.config)
    doc["real_reference"] = {
        "mean": [float(v) for v in trace.real_reference.mean],
        "covariance": [[float(v) for v in row] for row in trace.real_reference.covariance],
        "trace_cov": trace.real_reference.trace_cov,
    }
    doc["records"] = [_record_doc(r) for r in trace.records]
    return json.dumps(doc, indent=2) + "\n"


def trace_from_json(text: str) -> LoopTrace:
    doc = json.loads(text)
    rr = doc["real_reference"]
    mean = np.asarray(rr["mean"], dtype=np.float64)
    cov = np.asarray(rr["covariance"], dtype=np.float64)
    mean.setflags(write=False)
    cov.setflags(write=False)
    real_ref = MomentSummary(mean=mean, covariance=cov, trace_cov=rr["trace_cov"])
    return LoopTrace(
        config=_config_from_doc(doc["config"]),
        records=tuple(_record_from_doc(r) for r in doc["records"]),
        real_reference=real_ref,
    )


def trace_to_csv(trace: LoopTrace) -> str:
    """Flat per-iteration table; syn fraction columns run 1..iterations,
    padded with zeros where an origin is absent."""
    n_iter = trace.config.iterations
    cols = ["iteration", "entropy", "duplicates", "gs", "mnnd", "trace_cov", "frechet_real", "frac_real"]
    cols += [f"frac_syn_{i}" for i in range(1, n_iter + 1)]
    lines = [",".join(cols)]
    for rec in trace.records:
        props = rec.source_proportions
        row = [
            str(rec.iteration),
            repr(rec.entropy.estimate),
            str(rec.duplicate_count),
            repr(rec.gs_value),
            repr(rec.mnnd_value),
            repr(rec.trace_cov),
            repr(rec.frechet_to_real),
            repr(props.get("real", 0.0)),
        ]
        row += [repr(props.get(f"syn{i}", 0.0)) for i in range(1, n_iter + 1)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def comparison_doc(summary: ComparisonSummary) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "iterations": summary.iterations,
        "deltas": {k: list(v) for k, v in summary.deltas.items()},
        "mean_delta": dict(summary.mean_delta),
        "dominance": dict(summary.dominance),
    }


def correlation_doc(report: CorrelationReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "r": report.r,
        "point_count": report.point_count,
        "excluded_count": report.excluded_count,
    }
