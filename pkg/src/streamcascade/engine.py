"""Datasets, synthetic generators, streaming workers and experiment harness.

A worker owns one partition and one cascade state, feeds the partition
through in batches and never looks back at earlier batches.  Parallel runs
split a seeded shuffle of the dataset into contiguous partitions, run the
workers on threads with no shared mutable state and merge their confusion
counts at the end.
"""
from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit, logit

from streamcascade.core import (
    Batch,
    ConfusionCounts,
    Metrics,
    QualityTargets,
    Route,
    ScoredRecord,
    ThresholdPair,
    compute_metrics,
)
from streamcascade.gamcal import GamCalState, gamcal_step
from streamcascade.supg import ResidualStrategy, SupgItState, supg_base_step, supg_it_step, supg_sp_step

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "run_id", "algorithm", "param_name", "param_value", "seed", "W",
    "precision", "recall", "f_beta", "delegation", "oracle_calls",
]
TRAJECTORY_COLUMNS = ["run_id", "batch", "tau_low", "tau_high", "delegation_so_far"]
DATASET_COLUMNS = ["id", "proxy_score", "oracle_label"]


class DatasetFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# per-record quantiles


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def record_quantiles(seed: int, ids) -> np.ndarray:
    """Uniform(0, 1) quantile per record, a pure function of ``(seed, id)``."""
    ids = np.asarray(ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.full(ids.shape, np.uint64(seed % 2**64)))
        z = _splitmix64(key ^ _splitmix64(ids))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Dataset:
    """Columnar dataset; ``labels`` are the hidden oracle labels."""

    ids: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    quantiles: np.ndarray
    name: str = "dataset"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.ids.size
        if not (self.scores.size == self.labels.size == self.quantiles.size == n):
            raise ValueError("dataset columns differ in length")
        if n and np.any((self.scores < 0) | (self.scores > 1)):
            raise ValueError("proxy scores must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.ids.size)

    def __getitem__(self, sl) -> "Dataset":
        return replace(
            self, ids=self.ids[sl], scores=self.scores[sl],
            labels=self.labels[sl], quantiles=self.quantiles[sl],
        )

    @property
    def positive_rate(self) -> float:
        return float(self.labels.mean()) if len(self) else 0.0

    @property
    def records(self) -> list[ScoredRecord]:
        return [
            ScoredRecord(int(i), float(s), int(y), float(q))
            for i, s, y, q in zip(self.ids, self.scores, self.labels, self.quantiles)
        ]

    def batch(self, sl=slice(None)) -> Batch:
        return Batch(self.ids[sl], self.scores[sl], self.quantiles[sl])

    def with_quantiles(self, seed: int) -> "Dataset":
        return replace(self, quantiles=record_quantiles(seed, self.ids))

    @classmethod
    def from_arrays(cls, scores, labels, ids=None, seed: int = 0, name: str = "dataset", params=None):
        scores = np.asarray(scores, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        ids = np.arange(scores.size, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        return cls(ids, scores, labels, record_quantiles(seed, ids), name, dict(params or {}))


class LabelOracle:
    """Ground-truth lookup standing in for the expensive model.  Counts calls."""

    def __init__(self, dataset: Dataset):
        self._lookup = dict(zip(dataset.ids.tolist(), dataset.labels.tolist()))
        if np.array_equal(dataset.ids, np.arange(len(dataset))):
            self._dense = dataset.labels
        else:
            self._dense = None
        self.calls = 0

    def __call__(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        self.calls += int(ids.size)
        if self._dense is not None:
            return self._dense[ids]
        try:
            return np.array([self._lookup[i] for i in ids.tolist()], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"oracle has no label for record {exc.args[0]}") from None


def load_dataset(path, fmt: Optional[str] = None, seed: int = 0) -> Dataset:
    """Read ``id,proxy_score,oracle_label`` rows from CSV or JSONL.

    ``id`` is optional (row order is used when absent).  Quantiles are derived
    from ``seed``.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in ("csv", "jsonl"):
        raise DatasetFormatError(f"unsupported dataset format {fmt!r}")
    rows = []
    with path.open(newline="") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            missing = {"proxy_score", "oracle_label"} - set(reader.fieldnames or [])
            if missing:
                raise DatasetFormatError(f"{path}: missing column(s) {sorted(missing)}")
            for lineno, row in enumerate(reader, start=2):
                rows.append((lineno, row))
        else:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rows.append((lineno, json.loads(line)))
                except json.JSONDecodeError as exc:
                    raise DatasetFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    ids, scores, labels = [], [], []
    for k, (lineno, row) in enumerate(rows):
        try:
            rid = int(row["id"]) if row.get("id") not in (None, "") else k
            score = float(row["proxy_score"])
            label = int(row["oracle_label"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: malformed row ({exc})") from None
        if not 0.0 <= score <= 1.0 or math.isnan(score):
            raise DatasetFormatError(f"{path}:{lineno}: proxy_score {score} outside [0, 1]")
        if label not in (0, 1):
            raise DatasetFormatError(f"{path}:{lineno}: oracle_label must be 0 or 1, got {label}")
        ids.append(rid)
        scores.append(score)
        labels.append(label)
    if len(set(ids)) != len(ids):
        raise DatasetFormatError(f"{path}: duplicate record ids")
    if ids and (min(ids) != 0 or max(ids) != len(ids) - 1):
        raise DatasetFormatError(f"{path}: record ids must be dense 0..{len(ids) - 1}")
    return Dataset.from_arrays(scores, labels, ids=ids, seed=seed, name=path.stem)


def save_dataset(dataset: Dataset, path, fmt: Optional[str] = None) -> None:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    with path.open("w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh)
            w.writerow(DATASET_COLUMNS)
            for i, s, y in zip(dataset.ids.tolist(), dataset.scores.tolist(), dataset.labels.tolist()):
                w.writerow([i, repr(s), y])
        elif fmt == "jsonl":
            for i, s, y in zip(dataset.ids.tolist(), dataset.scores.tolist(), dataset.labels.tolist()):
                fh.write(json.dumps({"id": i, "proxy_score": s, "oracle_label": y}) + "\n")
        else:
            raise DatasetFormatError(f"unsupported dataset format {fmt!r}")


# ---------------------------------------------------------------------------
# synthetic data


class SyntheticKind(str, enum.Enum):
    BIMODAL_OVERLAP = "bimodal"
    S_SHAPE_MISCALIBRATED = "miscalibrated"
    EXTREME_IMBALANCE = "imbalanced"


@dataclass(frozen=True)
class SyntheticSpec:
    kind: SyntheticKind = SyntheticKind.BIMODAL_OVERLAP
    n: int = 10_000
    positive_rate: float = 0.4
    overlap: float = 0.4
    miscalibration_strength: float = 1.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", SyntheticKind(self.kind))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError("positive_rate must lie in (0, 1)")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap must lie in [0, 1]")
        if self.miscalibration_strength < 0:
            raise ValueError("miscalibration_strength must be non-negative")


def bimodal_beta_params(overlap: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Beta parameters ``((a1, b1), (a0, b0))`` for positives and negatives.

    Class means sit at ``0.5 +/- 0.25 (1 - overlap)``; the concentration
    ``a + b = 2 + 18 (1 - overlap)`` shrinks as overlap grows, so the classes
    both move together and widen.  ``overlap = 1`` gives two identical
    Beta(1, 1) classes.
    """
    shift = 0.25 * (1.0 - overlap)
    conc = 2.0 + 18.0 * (1.0 - overlap)
    m1, m0 = 0.5 + shift, 0.5 - shift
    return (m1 * conc, (1 - m1) * conc), (m0 * conc, (1 - m0) * conc)


def generate_bimodal(spec: SyntheticSpec, rng: Optional[np.random.Generator] = None) -> Dataset:
    """Labels ~ Bernoulli(positive_rate); scores from one Beta per class."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    labels = (rng.random(spec.n) < spec.positive_rate).astype(np.int64)
    (a1, b1), (a0, b0) = bimodal_beta_params(spec.overlap)
    scores = np.where(labels == 1, rng.beta(a1, b1, spec.n), rng.beta(a0, b0, spec.n))
    return Dataset.from_arrays(
        scores, labels, seed=spec.seed, name=spec.kind.value, params=_spec_params(spec)
    )


def s_shape_distortion(p, strength: float):
    """Over-confident distortion ``sigmoid((1 + strength) logit(p))``.

    Strictly increasing on [0, 1]; the identity when ``strength = 0``.
    """
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return expit((1.0 + strength) * logit(p))


def generate_miscalibrated(spec: SyntheticSpec, rng: Optional[np.random.Generator] = None) -> Dataset:
    """True probability ``p* ~ U(0, 1)``, label ~ Bernoulli(p*), score = S(p*)."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    p = rng.random(spec.n)
    labels = (rng.random(spec.n) < p).astype(np.int64)
    scores = s_shape_distortion(p, spec.miscalibration_strength)
    return Dataset.from_arrays(
        scores, labels, seed=spec.seed, name=spec.kind.value, params=_spec_params(spec)
    )


def generate(spec: SyntheticSpec, rng: Optional[np.random.Generator] = None) -> Dataset:
    """Dispatch on ``spec.kind``.  The imbalanced kind is the bimodal
    generator at whatever (small) ``positive_rate`` is requested."""
    if spec.kind is SyntheticKind.S_SHAPE_MISCALIBRATED:
        return generate_miscalibrated(spec, rng)
    return generate_bimodal(spec, rng)


def _spec_params(spec: SyntheticSpec) -> dict:
    d = asdict(spec)
    d["kind"] = spec.kind.value
    return d


# ---------------------------------------------------------------------------
# runs


class Algorithm(str, enum.Enum):
    SUPG_IT = "supg_it"
    SUPG_SP = "supg_sp"
    SUPG_BASE = "supg_base"
    GAMCAL = "gamcal"
    PROXY_ONLY = "proxy_only"
    ORACLE_ONLY = "oracle_only"


@dataclass(frozen=True)
class RunConfig:
    algorithm: Algorithm = Algorithm.SUPG_IT
    batch_size: int = 512
    sub_batch: int = 64
    workers: int = 1
    seed: int = 0
    # SUPG family
    t_p: float = 0.8
    t_r: float = 0.8
    delta: float = 0.2
    rho: float = 0.1
    eta: float = 0.5
    clip_delta: float = 0.05
    residual: ResidualStrategy = ResidualStrategy.DELEGATE_ALL
    # calibration cascade
    alpha: float = 0.5
    beta: float = 1.0
    lam: float = 0.1
    n_min: int = 5
    calibrator: str = "laplace"

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "residual", ResidualStrategy(self.residual))
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sub_batch < 1:
            raise ValueError("sub_batch must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def targets(self) -> QualityTargets:
        return QualityTargets(self.t_p, self.t_r, self.delta)


@dataclass(frozen=True)
class TrajectoryPoint:
    batch: int
    thresholds: ThresholdPair
    delegation_so_far: float
    uncertain_fraction: float
    oracle_calls: int


@dataclass
class RunReport:
    metrics: Metrics
    counts: ConfusionCounts
    oracle_calls: int
    n: int
    threshold_trajectory: list = field(default_factory=list)
    per_worker: list = field(default_factory=list)
    per_worker_counts: list = field(default_factory=list)
    worker_trajectories: list = field(default_factory=list)
    retrain_events: list = field(default_factory=list)
    collapses: int = 0
    ids: Optional[np.ndarray] = None
    predicted: Optional[np.ndarray] = None
    sampled: Optional[np.ndarray] = None


def worker_seed(seed: int, worker: int) -> int:
    """Independent per-worker seed derived from the run seed and worker index."""
    return int(np.random.SeedSequence([seed, worker]).generate_state(1, np.uint64)[0])


def _make_state(config: RunConfig, seed: int):
    a = config.algorithm
    if a in (Algorithm.SUPG_IT, Algorithm.SUPG_SP, Algorithm.SUPG_BASE):
        return SupgItState(
            targets=config.targets, eta=config.eta, rho=config.rho,
            clip_delta=config.clip_delta, residual_strategy=config.residual,
            sub_batch=config.sub_batch, seed=seed,
        )
    if a is Algorithm.GAMCAL:
        return GamCalState(
            alpha=config.alpha, beta=config.beta, rho=config.rho, n_min=config.n_min,
            lam=config.lam, seed=seed, sub_batch=config.sub_batch, calibrator=config.calibrator,
        )
    return None


_STEPS = {
    Algorithm.SUPG_IT: supg_it_step,
    Algorithm.SUPG_SP: supg_sp_step,
    Algorithm.SUPG_BASE: supg_base_step,
    Algorithm.GAMCAL: gamcal_step,
}


def _baseline_step(algorithm: Algorithm, batch: Batch, oracle):
    from streamcascade.core import BatchDecisions

    m = len(batch)
    if algorithm is Algorithm.ORACLE_ONLY:
        predicted = np.asarray(oracle(batch.ids), dtype=np.int64)
        routes = np.full(m, Route.DELEGATE, dtype=np.int8)
        from_oracle = np.ones(m, dtype=bool)
    else:
        predicted = (batch.scores >= 0.5).astype(np.int64)
        routes = np.where(predicted == 1, Route.ACCEPT, Route.REJECT).astype(np.int8)
        from_oracle = np.zeros(m, dtype=bool)
    return BatchDecisions(batch.ids.copy(), predicted, routes, np.zeros(m, dtype=bool), from_oracle)


def run_worker(config: RunConfig, partition: Dataset, oracle=None, worker: int = 0) -> RunReport:
    """Stream one partition through one cascade and score it against the
    partition's oracle labels."""
    if len(partition) < 1:
        raise ValueError("partition is empty")
    oracle = oracle if oracle is not None else LabelOracle(partition)
    state = _make_state(config, worker_seed(config.seed, worker))
    step = _STEPS.get(config.algorithm)
    n = len(partition)
    preds, sampled, trajectory = [], [], []
    calls = 0
    for t, start in enumerate(range(0, n, config.batch_size)):
        batch = partition.batch(slice(start, start + config.batch_size))
        if step is None:
            out = _baseline_step(config.algorithm, batch, oracle)
            thr = ThresholdPair(0.0, 1.0) if config.algorithm is Algorithm.ORACLE_ONLY else ThresholdPair(0.5, 0.5)
        else:
            state, out = step(state, batch, oracle)
            thr = state.thresholds
        calls += out.oracle_calls
        preds.append(out.predicted)
        sampled.append(out.sampled)
        done = min(start + config.batch_size, n)
        trajectory.append(TrajectoryPoint(t, thr, calls / done, out.uncertain_fraction, out.oracle_calls))
    predicted = np.concatenate(preds)
    counts = ConfusionCounts.from_labels(predicted, partition.labels)
    m = compute_metrics(counts, config.beta)
    metrics = replace(m, delegation_rate=calls / n)
    return RunReport(
        metrics=metrics, counts=counts, oracle_calls=calls, n=n,
        threshold_trajectory=trajectory, per_worker=[metrics], per_worker_counts=[counts],
        worker_trajectories=[trajectory],
        retrain_events=list(getattr(state, "retrain_events", [])),
        collapses=int(getattr(state, "collapses", 0)),
        ids=partition.ids.copy(), predicted=predicted, sampled=np.concatenate(sampled),
    )


def partition_dataset(dataset: Dataset, workers: int, seed: int) -> list[Dataset]:
    """Seeded shuffle, then ``workers`` contiguous near-equal slices.  A single
    worker keeps the original order."""
    if workers == 1:
        return [dataset]
    perm = np.random.default_rng([seed, 0x5EED]).permutation(len(dataset))
    shuffled = dataset[perm]
    return [shuffled[idx] for idx in np.array_split(np.arange(len(dataset)), workers)]


def run_parallel(config: RunConfig, dataset: Dataset, oracle_factory=None) -> RunReport:
    """Run ``config.workers`` independent workers and merge their results.

    Record quantiles are re-derived from the run seed.  Global confusion
    counts are the sums of the per-worker counts.
    """
    data = dataset.with_quantiles(config.seed)
    parts = partition_dataset(data, config.workers, config.seed)
    oracle_factory = oracle_factory or LabelOracle

    def work(k):
        return run_worker(config, parts[k], oracle_factory(parts[k]), worker=k)

    if config.workers == 1:
        reports = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            reports = list(pool.map(work, range(config.workers)))
    counts = ConfusionCounts()
    for r in reports:
        counts = counts + r.counts
    calls = sum(r.oracle_calls for r in reports)
    n = sum(r.n for r in reports)
    metrics = replace(compute_metrics(counts, config.beta), delegation_rate=calls / n)
    return RunReport(
        metrics=metrics, counts=counts, oracle_calls=calls, n=n,
        threshold_trajectory=reports[0].threshold_trajectory,
        per_worker=[r.metrics for r in reports],
        per_worker_counts=[r.counts for r in reports],
        worker_trajectories=[r.threshold_trajectory for r in reports],
        retrain_events=[r.retrain_events for r in reports],
        collapses=sum(r.collapses for r in reports),
        ids=np.concatenate([r.ids for r in reports]),
        predicted=np.concatenate([r.predicted for r in reports]),
        sampled=np.concatenate([r.sampled for r in reports]),
    )


# ---------------------------------------------------------------------------
# experiments


@dataclass
class SweepRow:
    run_id: str
    algorithm: str
    param_name: str
    param_value: float
    seed: int
    W: int
    report: RunReport

    def as_record(self) -> dict:
        m = self.report.metrics
        return {
            "run_id": self.run_id, "algorithm": self.algorithm,
            "param_name": self.param_name, "param_value": self.param_value,
            "seed": self.seed, "W": self.W, "precision": m.precision, "recall": m.recall,
            "f_beta": m.f_beta, "delegation": m.delegation_rate,
            "oracle_calls": self.report.oracle_calls,
        }


def apply_param(config: RunConfig, name: str, value) -> RunConfig:
    """Set one parameter; ``target`` sets ``t_p`` and ``t_r`` together."""
    if name == "target":
        return replace(config, t_p=value, t_r=value)
    if name not in RunConfig.__dataclass_fields__:
        raise KeyError(f"unknown run parameter {name!r}")
    return replace(config, **{name: value})


def sweep(
    template: RunConfig,
    grid: dict,
    seeds: Iterable[int] | int,
    dataset: Dataset,
    run_prefix: str = "run",
    failures: Optional[list] = None,
) -> list[SweepRow]:
    """Every combination of grid values crossed with every seed, one run each.

    When ``failures`` is a list, a run that raises is logged, its run id is
    appended there and the sweep continues; otherwise the error propagates.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("sweep grid must be non-empty")
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    names = list(grid)
    rows = []
    for k, (values, seed) in enumerate(itertools.product(itertools.product(*grid.values()), seeds)):
        cfg = replace(template, seed=seed)
        for name, value in zip(names, values):
            cfg = apply_param(cfg, name, value)
        pname = "+".join(names)
        pval = values[0] if len(values) == 1 else "+".join(str(v) for v in values)
        run_id = f"{run_prefix}-{k:05d}"
        try:
            report = run_parallel(cfg, dataset)
        except Exception as exc:
            if failures is None:
                raise
            log.error("run %s failed: %s", run_id, exc)
            failures.append(run_id)
            continue
        rows.append(SweepRow(run_id, cfg.algorithm.value, pname, pval, seed, cfg.workers, report))
        log.info("%s %s=%s seed=%d f=%.4f d=%.3f", cfg.algorithm.value, pname, pval, seed,
                 report.metrics.f_beta, report.metrics.delegation_rate)
    return rows


@dataclass
class ReliabilityCell:
    t_p: float
    t_r: float
    runs: int = 0
    satisfied: int = 0
    precision_failures: int = 0
    recall_failures: int = 0
    both_failures: int = 0
    delegation_sum: float = 0.0

    @property
    def satisfaction(self) -> float:
        return self.satisfied / self.runs if self.runs else 0.0

    @property
    def mean_delegation(self) -> float:
        return self.delegation_sum / self.runs if self.runs else 0.0

    @property
    def failures(self) -> int:
        return self.runs - self.satisfied


def reliability_grid(
    template: RunConfig,
    dataset: Dataset,
    t_p_grid: Sequence[float],
    t_r_grid: Sequence[float],
    seeds: Iterable[int] | int,
) -> list[ReliabilityCell]:
    """Joint target satisfaction per ``(t_p, t_r)`` cell over seeds.

    A run failing both metrics is counted under each metric and once more in
    ``both_failures``.
    """
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    cells = []
    for t_p, t_r in itertools.product(t_p_grid, t_r_grid):
        cell = ReliabilityCell(t_p, t_r)
        for seed in seeds:
            m = run_parallel(replace(template, t_p=t_p, t_r=t_r, seed=seed), dataset).metrics
            p_ok, r_ok = m.precision >= t_p, m.recall >= t_r
            cell.runs += 1
            cell.satisfied += int(p_ok and r_ok)
            cell.precision_failures += int(not p_ok)
            cell.recall_failures += int(not r_ok)
            cell.both_failures += int(not p_ok and not r_ok)
            cell.delegation_sum += m.delegation_rate
        cells.append(cell)
    return cells


def mean_by_param(rows: Sequence[SweepRow]) -> dict:
    """``{(algorithm, param_value): (mean f_beta, mean delegation)}`` over seeds."""
    acc: dict = {}
    for r in rows:
        acc.setdefault((r.algorithm, r.param_value), []).append(
            (r.report.metrics.f_beta, r.report.metrics.delegation_rate)
        )
    return {k: tuple(np.mean(v, axis=0)) for k, v in acc.items()}


def best_operating_points(rows: Sequence[SweepRow]) -> dict:
    """Best seed-averaged F-beta per algorithm with its delegation rate."""
    best: dict = {}
    for (alg, _), (f, d) in mean_by_param(rows).items():
        if alg not in best or f > best[alg][0]:
            best[alg] = (f, d)
    return best


def fixed_budget_fbeta(rows: Sequence[SweepRow], budget: float) -> dict:
    """Best seed-averaged F-beta per algorithm among points with delegation <= budget."""
    out: dict = {}
    for (alg, _), (f, d) in mean_by_param(rows).items():
        if d <= budget and f > out.get(alg, -1.0):
            out[alg] = f
    return out


def min_delegation_for(rows: Sequence[SweepRow], f_target: float) -> dict:
    """Smallest seed-averaged delegation per algorithm reaching ``f_target``."""
    out: dict = {}
    for (alg, _), (f, d) in mean_by_param(rows).items():
        if f >= f_target and d < out.get(alg, math.inf):
            out[alg] = d
    return out


# ---------------------------------------------------------------------------
# report files


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report_csv(rows: Sequence[SweepRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            rec = r.as_record()
            w.writerow([_fmt(rec[c]) for c in REPORT_COLUMNS])


def read_report_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report header {reader.fieldnames}")
        out = []
        for row in reader:
            for k in ("precision", "recall", "f_beta", "delegation"):
                row[k] = float(row[k])
            for k in ("seed", "W", "oracle_calls"):
                row[k] = int(row[k])
            out.append(row)
        return out


def write_trajectory_csv(rows: Sequence[SweepRow], path) -> None:
    """One row per batch per worker; workers after the first get a
    ``/w<k>`` suffix on the run id."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            for k, traj in enumerate(r.report.worker_trajectories):
                rid = r.run_id if k == 0 else f"{r.run_id}/w{k}"
                for p in traj:
                    w.writerow([rid, p.batch, repr(p.thresholds.low), repr(p.thresholds.high),
                                repr(p.delegation_so_far)])


def read_trajectory_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected trajectory header {reader.fieldnames}")
        return [
            {"run_id": r["run_id"], "batch": int(r["batch"]), "tau_low": float(r["tau_low"]),
             "tau_high": float(r["tau_high"]), "delegation_so_far": float(r["delegation_so_far"])}
            for r in reader
        ]


def report_to_csv_text(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        rec = r.as_record()
        w.writerow([_fmt(rec[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()
