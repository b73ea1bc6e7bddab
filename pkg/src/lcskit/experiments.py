"""Experiment harness: randomized train/discard/test splits, seeded multi-run
trials, cross-run aggregation, rule-coverage histograms, and the batch-lexicase
parameter sweep.

Every trial is a pure function of (plan, strategy, seed). The trial seed is
derived from the base seed plus the strategy and run indices through
numpy's SeedSequence, so any individual run can be re-executed on its own.
Trials are independent work units and may run in a process pool; results are
reduced in (strategy, run) order, so the worker count never changes output.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .engine import Population, UcsTrainer, parse_population_snapshot, population_snapshot
from .errors import ContractViolationError
from .model import Classifier, Dataset, Sample, UcsConfig
from .problems import ProblemSpec
from .selection import SelectionStrategy

__all__ = [
    "ExperimentPlan",
    "MetricPoint",
    "RunMetrics",
    "AggregateRow",
    "Histogram",
    "SweepResult",
    "derive_seed",
    "split_dataset",
    "run_trial",
    "run_experiment",
    "aggregate_runs",
    "coverage_counts",
    "coverage_histogram",
    "parameter_sweep",
    "write_metrics_csv",
    "write_aggregate_csv",
    "write_histogram_csv",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run: problem, strategies to compare, split protocol, and scale."""

    problem: ProblemSpec
    strategies: tuple[SelectionStrategy, ...]
    train_fraction: float = 0.7
    discard_fraction: float = 0.0
    n_runs: int = 10
    max_steps: int = 30_000
    metric_cadence: int = 500
    base_seed: int = 0
    config: UcsConfig = field(default_factory=UcsConfig)
    workers: int = 1

    def __post_init__(self) -> None:
        if self.train_fraction <= 0 or self.discard_fraction < 0:
            raise ContractViolationError("fractions must be positive / non-negative")
        if self.train_fraction + self.discard_fraction > 1.0 + 1e-12:
            raise ContractViolationError("train + discard fractions exceed 1")
        if self.n_runs < 1:
            raise ContractViolationError("n_runs must be >= 1")
        if self.metric_cadence < 1 or self.max_steps < 0:
            raise ContractViolationError("bad step counts")


@dataclass(frozen=True)
class MetricPoint:
    step: int
    train_acc: float
    test_acc: float
    macro_rules: int
    micro_rules: int


@dataclass(frozen=True)
class RunMetrics:
    """Time series for one trial plus its final population snapshot."""

    problem: str
    strategy: str
    run: int
    seed: int
    points: tuple[MetricPoint, ...]
    snapshot: tuple[str, ...]

    def final(self) -> MetricPoint:
        return self.points[-1]

    def final_rules(self) -> list[Classifier]:
        return parse_population_snapshot(self.snapshot)


def derive_seed(base_seed: int, *parts: int) -> int:
    """Deterministic per-trial seed: SeedSequence([base, *parts]) -> one uint64."""
    ss = np.random.SeedSequence([int(base_seed), *(int(p) for p in parts)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def split_dataset(
    dataset: Dataset,
    train_fraction: float,
    discard_fraction: float,
    rng: np.random.Generator,
) -> tuple[list[Sample], list[Sample]]:
    """Shuffle, take the train fraction, drop the discard fraction, keep the rest."""
    n = len(dataset.samples)
    n_train = int(train_fraction * n + 1e-9)
    n_discard = int(discard_fraction * n + 1e-9)
    if n_train < 1 or n - n_train - n_discard < 1:
        raise ContractViolationError(
            f"split of {n} rows leaves an empty train or test set"
        )
    order = rng.permutation(n)
    train = [dataset.samples[int(i)] for i in order[:n_train]]
    test = [dataset.samples[int(i)] for i in order[n_train + n_discard :]]
    return train, test


def _measurement_steps(max_steps: int, cadence: int) -> list[int]:
    steps = list(range(0, max_steps + 1, cadence))
    if steps[-1] != max_steps:
        steps.append(max_steps)
    return steps


def run_trial(
    plan: ExperimentPlan,
    strategy: SelectionStrategy,
    seed: int,
    run_index: int = 0,
) -> RunMetrics:
    """Train one engine and record accuracy/rule-count metrics on a fixed grid.

    The training stream and the evaluation tie-breaks use separate generators
    spawned from the trial seed, so the measurement cadence never perturbs
    the training trajectory.
    """
    train_ss, eval_ss = np.random.SeedSequence(seed).spawn(2)
    train_rng = np.random.Generator(np.random.PCG64(train_ss))
    eval_rng = np.random.Generator(np.random.PCG64(eval_ss))
    dataset = plan.problem.build(train_rng)
    train, test = split_dataset(
        dataset, plan.train_fraction, plan.discard_fraction, train_rng
    )
    trainer = UcsTrainer(
        train, dataset.n_features, dataset.n_classes, plan.config, strategy, train_rng
    )
    points = []
    done = 0
    for target in _measurement_steps(plan.max_steps, plan.metric_cadence):
        trainer.run_steps(target - done)
        done = target
        points.append(
            MetricPoint(
                step=target,
                train_acc=trainer.accuracy(train, eval_rng),
                test_acc=trainer.accuracy(test, eval_rng),
                macro_rules=len(trainer.population),
                micro_rules=trainer.population.total_numerosity,
            )
        )
    return RunMetrics(
        problem=plan.problem.name,
        strategy=strategy.spec_text,
        run=run_index,
        seed=seed,
        points=tuple(points),
        snapshot=tuple(population_snapshot(trainer.population)),
    )


def _trial_task(args: tuple) -> RunMetrics:
    plan, strategy, seed, run_index = args
    return run_trial(plan, strategy, seed, run_index)


def run_experiment(plan: ExperimentPlan) -> list[RunMetrics]:
    """All (strategy, run) trials of the plan, in deterministic order."""
    tasks = [
        (plan, strategy, derive_seed(plan.base_seed, si, run), run)
        for si, strategy in enumerate(plan.strategies)
        for run in range(plan.n_runs)
    ]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            return list(pool.map(_trial_task, tasks))
    return [_trial_task(t) for t in tasks]


@dataclass(frozen=True)
class AggregateRow:
    step: int
    metric: str
    mean: float
    std: float


_METRICS = ("train_acc", "test_acc", "macro_rules", "micro_rules")


def aggregate_runs(metrics: Sequence[RunMetrics]) -> list[AggregateRow]:
    """Per-step mean and sample standard deviation of every metric across runs."""
    if not metrics:
        raise ContractViolationError("nothing to aggregate")
    grid = [p.step for p in metrics[0].points]
    for m in metrics[1:]:
        if [p.step for p in m.points] != grid:
            raise ContractViolationError("runs have mismatched measurement grids")
    rows = []
    for at, step in enumerate(grid):
        for name in _METRICS:
            values = np.array(
                [float(getattr(m.points[at], name)) for m in metrics], dtype=np.float64
            )
            std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            rows.append(AggregateRow(step, name, float(values.mean()), std))
    return rows


@dataclass(frozen=True)
class Histogram:
    """Rule-coverage histogram: per-rule counts of correctly described samples."""

    bin_width: int
    bin_edges: tuple[int, ...]
    counts: tuple[int, ...]
    rule_counts: tuple[int, ...]

    @property
    def mean_instances_per_rule(self) -> float:
        return float(np.mean(self.rule_counts)) if self.rule_counts else 0.0


def _rule_pairs(rules) -> list[tuple[int, int, int]]:
    if isinstance(rules, Population):
        rules = rules.classifiers
    return [(r.condition.care, r.condition.bits, r.class_label) for r in rules]


def coverage_counts(rules, dataset: Dataset) -> list[int]:
    """For each rule, how many dataset samples it matches with the right class."""
    packed = np.array([s.packed for s in dataset.samples], dtype=np.int64)
    labels = np.array([s.class_label for s in dataset.samples], dtype=np.int64)
    counts = []
    for care, bits, cls in _rule_pairs(rules):
        counts.append(int((((packed & care) == bits) & (labels == cls)).sum()))
    return counts


def coverage_histogram(rules, dataset: Dataset, bin_width: int = 10) -> Histogram:
    """Bin the coverage counts into [0,w), [w,2w), ... intervals."""
    if bin_width < 1:
        raise ContractViolationError("bin_width must be >= 1")
    rule_counts = coverage_counts(rules, dataset)
    if not rule_counts:
        return Histogram(bin_width, (0,), (), ())
    n_bins = max(c for c in rule_counts) // bin_width + 1
    freq = [0] * n_bins
    for c in rule_counts:
        freq[c // bin_width] += 1
    edges = tuple(i * bin_width for i in range(n_bins + 1))
    return Histogram(bin_width, edges, tuple(freq), tuple(rule_counts))


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    step: int
    mean_train_acc: float
    std: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    recommendation: dict


def parameter_sweep(
    plan: ExperimentPlan,
    batch_sizes: Iterable[int] = (10, 50, 100, 200, 500),
    thresholds: Iterable[float] = (0.1, 0.3, 0.5, 0.7, 0.9),
) -> SweepResult:
    """Training-accuracy curves sweeping batch size at the plan's threshold
    and threshold at the plan's batch size, one aggregated curve per setting."""
    base = plan.strategies[0] if plan.strategies else None
    if base is None or base.batch_size is None:
        raise ContractViolationError("parameter_sweep needs a batch-lexicase plan")
    settings = [("batch_size", float(b), SelectionStrategy.batch_lexicase(int(b), base.batch_threshold))
                for b in batch_sizes]
    settings += [("threshold", float(t), SelectionStrategy.batch_lexicase(base.batch_size, float(t)))
                 for t in thresholds]
    tasks = [
        (replace(plan, strategies=(strategy,)), strategy,
         derive_seed(plan.base_seed, 1000 + axis_id, r), r)
        for axis_id, (_, _, strategy) in enumerate(settings)
        for r in range(plan.n_runs)
    ]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_trial_task, tasks))
    else:
        results = [_trial_task(t) for t in tasks]
    rows: list[SweepRow] = []
    for axis_id, (axis, value, _) in enumerate(settings):
        runs = results[axis_id * plan.n_runs : (axis_id + 1) * plan.n_runs]
        for row in aggregate_runs(runs):
            if row.metric == "train_acc":
                rows.append(SweepRow(axis, value, row.step, row.mean, row.std))
    data_size = plan.problem.n_samples
    rec = {
        "batch_size_fraction_of_data": [0.05, 0.1],
        "threshold": 0.9,
    }
    if data_size:
        rec["batch_size_range"] = [
            max(1, int(0.05 * data_size)),
            max(1, int(0.1 * data_size)),
        ]
    return SweepResult(tuple(rows), rec)


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_metrics_csv(path: str, runs: Sequence[RunMetrics]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["problem", "strategy", "run", "seed", "step",
             "train_acc", "test_acc", "macro_rules", "micro_rules"]
        )
        for m in runs:
            for p in m.points:
                w.writerow(
                    [m.problem, m.strategy, m.run, m.seed, p.step,
                     _fmt(p.train_acc), _fmt(p.test_acc), p.macro_rules, p.micro_rules]
                )


def write_aggregate_csv(path: str, groups: dict[tuple[str, str], Sequence[AggregateRow]]) -> None:
    """groups maps (problem, strategy) to that pairing's aggregate rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["problem", "strategy", "step", "metric", "mean", "std"])
        for (problem, strategy), rows in groups.items():
            for r in rows:
                w.writerow([problem, strategy, r.step, r.metric, _fmt(r.mean), _fmt(r.std)])


def write_histogram_csv(path: str, hist: Histogram) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for i, count in enumerate(hist.counts):
            w.writerow([hist.bin_edges[i], hist.bin_edges[i + 1], count])


def write_sweep_csv(path: str, result: SweepResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "value", "step", "mean_train_acc", "std"])
        for r in result.rows:
            w.writerow([r.axis, _fmt(r.value), r.step, _fmt(r.mean_train_acc), _fmt(r.std)])
