"""The UCS training loop: set formation, covering, GA rule discovery,
insertion, deletion, subsumption-based compaction, and voting prediction.

The population keeps its classifiers as plain objects (the source of truth)
plus numpy column mirrors of the condition and the numeric bookkeeping
fields. Matching, deletion votes, and prediction work on the mirrors;
every mutation goes through a Population method so the mirrors stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolationError, DataFormatError
from .model import (
    Classifier,
    Sample,
    TernaryCondition,
    UcsConfig,
    pack_bits,
    subsumes,
    update_on_outcome,
)
from .selection import CandidateView, CaseSet, SelectionStrategy, select_parent

__all__ = [
    "Population",
    "MatchResult",
    "UcsTrainer",
    "form_match_and_correct_sets",
    "cover",
    "ga_should_trigger",
    "crossover_two_point",
    "mutate_condition",
    "run_ga_cycle",
    "insert_classifier",
    "delete_excess",
    "subsumption_pass",
    "train_step",
    "predict",
    "population_snapshot",
    "parse_population_snapshot",
]

_GROW = 256


class Population:
    """Macroclassifier list plus synchronized numpy mirrors.

    Invariants: no two classifiers share (condition, class_label); the
    mirrors agree with the object fields; `total_numerosity` is the exact
    micro count. Removal swaps the last row into the hole, so list order is
    deterministic but otherwise arbitrary.
    """

    def __init__(self) -> None:
        self.classifiers: list[Classifier] = []
        self.step = 0
        self._index: dict[tuple[int, int, int], int] = {}
        self._micro = 0
        self._cap = _GROW
        self._care = np.zeros(self._cap, dtype=np.int64)
        self._bits = np.zeros(self._cap, dtype=np.int64)
        self._cls = np.zeros(self._cap, dtype=np.int64)
        self._num = np.zeros(self._cap, dtype=np.int64)
        self._fit = np.zeros(self._cap, dtype=np.float64)
        self._css = np.zeros(self._cap, dtype=np.float64)
        self._mat = np.zeros(self._cap, dtype=np.int64)
        self._cor = np.zeros(self._cap, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.classifiers)

    @property
    def total_numerosity(self) -> int:
        return self._micro

    def _grow(self) -> None:
        self._cap *= 2
        for name in ("_care", "_bits", "_cls", "_num", "_fit", "_css", "_mat", "_cor"):
            old = getattr(self, name)
            new = np.zeros(self._cap, dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)

    def _key(self, clf: Classifier) -> tuple[int, int, int]:
        return (clf.condition.care, clf.condition.bits, clf.class_label)

    def insert(self, newcomer: Classifier) -> int:
        """Merge into an identical (condition, class) rule or append; returns the row."""
        key = self._key(newcomer)
        at = self._index.get(key)
        if at is not None:
            existing = self.classifiers[at]
            existing.numerosity += newcomer.numerosity
            self._num[at] = existing.numerosity
            self._micro += newcomer.numerosity
            return at
        at = len(self.classifiers)
        if at == self._cap:
            self._grow()
        self.classifiers.append(newcomer)
        self._index[key] = at
        self._care[at] = newcomer.condition.care
        self._bits[at] = newcomer.condition.bits
        self._cls[at] = newcomer.class_label
        self.refresh_numeric(at)
        self._micro += newcomer.numerosity
        return at

    def refresh_numeric(self, at: int) -> None:
        """Re-sync the numeric mirror columns for one row after a field update."""
        clf = self.classifiers[at]
        self._num[at] = clf.numerosity
        self._fit[at] = clf.fitness
        self._css[at] = clf.cs_size_estimate
        self._mat[at] = clf.matches
        self._cor[at] = clf.corrects

    def add_numerosity(self, at: int, delta: int) -> None:
        clf = self.classifiers[at]
        clf.numerosity += delta
        self._num[at] = clf.numerosity
        self._micro += delta
        if clf.numerosity == 0:
            self.remove_macro(at)
        elif clf.numerosity < 0:
            raise ContractViolationError("numerosity went negative")

    def remove_macro(self, at: int) -> None:
        clf = self.classifiers[at]
        self._micro -= clf.numerosity
        del self._index[self._key(clf)]
        last = len(self.classifiers) - 1
        if at != last:
            moved = self.classifiers[last]
            self.classifiers[at] = moved
            self._index[self._key(moved)] = at
            for name in ("_care", "_bits", "_cls", "_num", "_fit", "_css", "_mat", "_cor"):
                col = getattr(self, name)
                col[at] = col[last]
        self.classifiers.pop()

    def match_indices(self, packed_features: int) -> np.ndarray:
        n = len(self.classifiers)
        return np.nonzero(
            (packed_features & self._care[:n]) == self._bits[:n]
        )[0]

    def check_consistency(self) -> None:
        """Verify mirrors and counters against the objects (test hook)."""
        n = len(self.classifiers)
        assert self._micro == sum(c.numerosity for c in self.classifiers)
        assert len(self._index) == n
        for at, clf in enumerate(self.classifiers):
            assert self._index[self._key(clf)] == at
            assert self._care[at] == clf.condition.care
            assert self._bits[at] == clf.condition.bits
            assert self._cls[at] == clf.class_label
            assert self._num[at] == clf.numerosity
            assert self._fit[at] == clf.fitness
            assert self._css[at] == clf.cs_size_estimate
            assert self._mat[at] == clf.matches
            assert self._cor[at] == clf.corrects


@dataclass
class MatchResult:
    """Match-set and correct-set rows for one sample."""

    match_set: np.ndarray
    correct_set: np.ndarray


def form_match_and_correct_sets(population: Population, sample: Sample) -> MatchResult:
    """All rows whose condition matches the sample, and the subset sharing its class."""
    match = population.match_indices(sample.packed)
    n = len(population.classifiers)
    correct = match[population._cls[:n][match] == sample.class_label]
    return MatchResult(match, correct)


def cover(sample: Sample, config: UcsConfig, rng: np.random.Generator, step: int = 0) -> Classifier:
    """Build a fresh rule matching the sample, wildcarding positions with p_hash."""
    length = len(sample.features)
    hashes = rng.random(length) < config.p_hash
    care = 0
    for h in hashes:
        care = (care << 1) | (0 if h else 1)
    condition = TernaryCondition(length, care, sample.packed & care)
    return Classifier(
        condition=condition,
        class_label=sample.class_label,
        matches=0,
        corrects=0,
        numerosity=1,
        fitness=1.0,
        cs_size_estimate=1.0,
        ga_timestamp=step,
    )


def ga_should_trigger(
    population: Population, correct_set: Sequence[int], config: UcsConfig
) -> bool:
    """True when the numerosity-weighted mean GA age of the correct set exceeds theta_ga."""
    if len(correct_set) == 0:
        raise ContractViolationError("GA trigger needs a non-empty correct set")
    num_sum = 0
    ts_sum = 0
    for i in correct_set:
        clf = population.classifiers[i]
        num_sum += clf.numerosity
        ts_sum += clf.numerosity * clf.ga_timestamp
    return population.step - ts_sum / num_sum > config.theta_ga


def crossover_two_point(
    parent_a: TernaryCondition,
    parent_b: TernaryCondition,
    rng: np.random.Generator,
) -> tuple[TernaryCondition, TernaryCondition]:
    """Swap the symbol span between two cut points drawn uniformly from [0, L]."""
    if parent_a.length != parent_b.length:
        raise ContractViolationError("parents have different condition lengths")
    length = parent_a.length
    x = int(rng.integers(0, length + 1))
    y = int(rng.integers(0, length + 1))
    if x > y:
        x, y = y, x
    # text span [x, y) occupies bits [length - y, length - x)
    span = ((1 << (y - x)) - 1) << (length - y)
    care_a = (parent_a.care & ~span) | (parent_b.care & span)
    bits_a = (parent_a.bits & ~span) | (parent_b.bits & span)
    care_b = (parent_b.care & ~span) | (parent_a.care & span)
    bits_b = (parent_b.bits & ~span) | (parent_a.bits & span)
    return (
        TernaryCondition(length, care_a, bits_a),
        TernaryCondition(length, care_b, bits_b),
    )


def mutate_condition(
    condition: TernaryCondition,
    sample: Sample,
    config: UcsConfig,
    rng: np.random.Generator,
) -> TernaryCondition:
    """Per-position niche mutation: wildcards become the sample's bit and vice versa."""
    length = condition.length
    if length != len(sample.features):
        raise ContractViolationError("condition/sample length mismatch")
    flips = rng.random(length) < config.mu
    care = condition.care
    bits = condition.bits
    packed = sample.packed
    for pos in np.nonzero(flips)[0]:
        bit = 1 << (length - 1 - int(pos))
        if care & bit:
            care &= ~bit
            bits &= ~bit
        else:
            care |= bit
            bits |= packed & bit
    return TernaryCondition(length, care, bits)


def insert_classifier(population: Population, newcomer: Classifier) -> Population:
    """Add a rule, merging by numerosity when (condition, class) already exists."""
    population.insert(newcomer)
    return population


def run_ga_cycle(
    population: Population,
    correct_set: Sequence[int],
    sample: Sample,
    cases,
    strategy: SelectionStrategy,
    config: UcsConfig,
    rng: np.random.Generator,
) -> Population:
    """Breed two offspring from the correct set and enforce the population bound.

    Parents are drawn independently (duplicates allowed); crossover happens
    with probability chi, mutation always. Offspring start untested with
    fitness 0.1 x mean parent fitness. GA subsumption is not performed.
    """
    rows = np.asarray(correct_set, dtype=np.intp)
    view = CandidateView(
        [population.classifiers[i] for i in rows],
        fitness=population._fit[rows],
        numerosity=population._num[rows],
    )
    flags = dict(
        zero_match_survives=config.batch_zero_match_survives,
        weight_by_numerosity=config.lexicase_weight_by_numerosity,
    )
    p1 = view.classifiers[select_parent(strategy, view, cases, rng, **flags)]
    p2 = view.classifiers[select_parent(strategy, view, cases, rng, **flags)]
    if rng.random() < config.chi:
        cond1, cond2 = crossover_two_point(p1.condition, p2.condition, rng)
    else:
        cond1, cond2 = p1.condition, p2.condition
    child_fitness = 0.1 * (p1.fitness + p2.fitness) / 2.0
    child_css = (p1.cs_size_estimate + p2.cs_size_estimate) / 2.0
    for cond in (cond1, cond2):
        offspring = Classifier(
            condition=mutate_condition(cond, sample, config, rng),
            class_label=sample.class_label,
            matches=0,
            corrects=0,
            numerosity=1,
            fitness=child_fitness,
            cs_size_estimate=child_css,
            ga_timestamp=population.step,
        )
        population.insert(offspring)
    delete_excess(population, config, rng)
    return population


def delete_excess(
    population: Population, config: UcsConfig, rng: np.random.Generator
) -> Population:
    """Roulette-delete microclassifiers until total numerosity fits the bound.

    A rule's vote is numerosity x cs_size_estimate, amplified by
    mean_fitness / (fitness/numerosity) for experienced rules whose
    per-micro fitness falls below delta x the population mean.
    """
    n_max = config.max_population
    while population.total_numerosity > n_max:
        n = len(population.classifiers)
        num = population._num[:n]
        fit = population._fit[:n]
        votes = num.astype(np.float64) * population._css[:n]
        mean_fit = float(fit.sum()) / population.total_numerosity
        # zero-fitness rules would divide the amplifier by zero; the floor
        # keeps votes finite while still making such rules the first to go
        per_micro = np.maximum(fit / num, 1e-30)
        low = (population._mat[:n] > config.theta_del) & (
            per_micro < config.delta * mean_fit
        )
        if low.any():
            votes = np.where(low, votes * (mean_fit / per_micro), votes)
        r = rng.random() * float(votes.sum())
        at = min(int(np.searchsorted(np.cumsum(votes), r, side="right")), n - 1)
        population.add_numerosity(at, -1)
    return population


def subsumption_pass(population: Population, config: UcsConfig) -> Population:
    """Let every experienced, accurate rule absorb its strictly-more-specific
    same-class rules, repeating until no qualifying pair remains."""
    changed = True
    while changed:
        changed = False
        at = 0
        while at < len(population.classifiers):
            g = population.classifiers[at]
            if g.matches < config.theta_sub or g.accuracy < config.acc_sub:
                at += 1
                continue
            n = len(population.classifiers)
            care = population._care[:n]
            bits = population._bits[:n]
            absorbable = (
                (population._cls[:n] == g.class_label)
                & ((care & g.condition.care) == g.condition.care)
                & ((bits & g.condition.care) == g.condition.bits)
                & (care != g.condition.care)
            )
            rows = np.nonzero(absorbable)[0]
            if len(rows):
                changed = True
                gained = 0
                # delete from the end so swap-removal can't disturb smaller rows
                for s in sorted((int(r) for r in rows), reverse=True):
                    gained += population.classifiers[s].numerosity
                    population.remove_macro(s)
                at = population._index[population._key(g)]  # row may have moved
                population.add_numerosity(at, gained)
            at += 1
    return population


def train_step(
    population: Population,
    sample: Sample,
    cases,
    strategy: SelectionStrategy,
    config: UcsConfig,
    rng: np.random.Generator,
) -> Population:
    """One supervised presentation: form sets, cover if nothing advocates the
    right class, update the match set, maybe run the GA, compact on schedule,
    and enforce the population bound."""
    result = form_match_and_correct_sets(population, sample)
    needs_cover = (
        len(result.match_set) == 0
        if config.cover_on_empty_match_only
        else len(result.correct_set) == 0
    )
    if needs_cover:
        population.insert(cover(sample, config, rng, step=population.step))
        result = form_match_and_correct_sets(population, sample)
    correct_rows = result.correct_set
    cs_micro = int(population._num[correct_rows].sum()) if len(correct_rows) else 0
    correct_mask = set(int(i) for i in correct_rows)
    for i in result.match_set:
        at = int(i)
        update_on_outcome(
            population.classifiers[at], at in correct_mask, cs_micro, config
        )
        population.refresh_numeric(at)
    if len(correct_rows) and ga_should_trigger(population, correct_rows, config):
        for i in correct_rows:
            population.classifiers[int(i)].ga_timestamp = population.step
        run_ga_cycle(population, correct_rows, sample, cases, strategy, config, rng)
    population.step += 1
    if population.step % config.subsumption_interval == 0:
        subsumption_pass(population, config)
    delete_excess(population, config, rng)
    return population


def predict(
    population: Population,
    features: Sequence[int],
    n_classes: int,
    rng: np.random.Generator,
    fallback_class: int = 0,
) -> int:
    """Fitness-x-numerosity weighted vote over matching rules; exact ties
    break uniformly at random, and an empty match set yields the fallback."""
    return predict_packed(population, pack_bits(features), n_classes, rng, fallback_class)


def predict_packed(
    population: Population,
    packed_features: int,
    n_classes: int,
    rng: np.random.Generator,
    fallback_class: int = 0,
) -> int:
    match = population.match_indices(packed_features)
    if len(match) == 0:
        return fallback_class
    n = len(population.classifiers)
    weights = population._fit[:n][match] * population._num[:n][match]
    votes = np.bincount(
        population._cls[:n][match], weights=weights, minlength=n_classes
    )
    best = votes.max()
    tied = np.flatnonzero(votes == best)
    if len(tied) == 1:
        return int(tied[0])
    return int(tied[rng.integers(len(tied))])


def population_snapshot(population: Population) -> list[str]:
    """One tab-separated line per macroclassifier:
    condition, class, matches, corrects, fitness, numerosity."""
    return [
        "\t".join(
            (
                str(c.condition),
                str(c.class_label),
                str(c.matches),
                str(c.corrects),
                repr(c.fitness),
                str(c.numerosity),
            )
        )
        for c in population.classifiers
    ]


def parse_population_snapshot(lines: Sequence[str]) -> list[Classifier]:
    """Rebuild classifiers from snapshot lines (cs_size/timestamp default)."""
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise DataFormatError(
                f"snapshot line {lineno}: expected 6 tab-separated fields"
            )
        try:
            out.append(
                Classifier(
                    condition=TernaryCondition.from_text(parts[0]),
                    class_label=int(parts[1]),
                    matches=int(parts[2]),
                    corrects=int(parts[3]),
                    fitness=float(parts[4]),
                    numerosity=int(parts[5]),
                )
            )
        except (ValueError, ContractViolationError) as exc:
            raise DataFormatError(f"snapshot line {lineno}: {exc}") from None
    return out


class UcsTrainer:
    """Drives one trial: epoch shuffling, case accumulation for the lexicase
    strategies, majority-class tracking, and batch accuracy evaluation.

    All stochastic choices come from the single generator passed in, so a
    trial is fully reproducible from its seed.
    """

    def __init__(
        self,
        train_samples: Sequence[Sample],
        n_features: int,
        n_classes: int,
        config: UcsConfig,
        strategy: SelectionStrategy,
        rng: np.random.Generator,
    ):
        if not train_samples:
            raise ContractViolationError("training needs at least one sample")
        self.train_samples = list(train_samples)
        self.n_features = n_features
        self.n_classes = n_classes
        self.config = config
        self.strategy = strategy
        self.rng = rng
        self.population = Population()
        packed = np.array([s.packed for s in self.train_samples], dtype=np.int64)
        labels = np.array([s.class_label for s in self.train_samples], dtype=np.int64)
        self.cases = CaseSet.growing(packed, labels, n_classes)
        self.class_counts = np.zeros(n_classes, dtype=np.int64)
        self._seen = np.zeros(len(self.train_samples), dtype=bool)
        self._order: np.ndarray | None = None
        self._pos = 0

    def run_steps(self, n_steps: int) -> None:
        for _ in range(n_steps):
            if self._order is None or self._pos == len(self._order):
                self._order = self.rng.permutation(len(self.train_samples))
                self._pos = 0
            idx = int(self._order[self._pos])
            self._pos += 1
            if not self._seen[idx]:
                self._seen[idx] = True
                self.cases.activate(idx)
            sample = self.train_samples[idx]
            self.class_counts[sample.class_label] += 1
            train_step(
                self.population, sample, self.cases, self.strategy, self.config, self.rng
            )

    @property
    def majority_class(self) -> int:
        """Most frequent training class so far; ties resolve to the lowest index."""
        return int(np.argmax(self.class_counts))

    def predict_sample(self, features: Sequence[int], rng: np.random.Generator) -> int:
        return predict(self.population, features, self.n_classes, rng, self.majority_class)

    def accuracy(self, samples: Sequence[Sample], rng: np.random.Generator) -> float:
        """Fraction of samples whose predicted class equals the label."""
        if not samples:
            raise ContractViolationError("accuracy needs a non-empty sample set")
        fallback = self.majority_class
        hits = 0
        for s in samples:
            if predict_packed(self.population, s.packed, self.n_classes, rng, fallback) == s.class_label:
                hits += 1
        return hits / len(samples)
