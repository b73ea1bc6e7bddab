"""Parent-selection strategies: roulette, tournament, lexicase, batch-lexicase.

Lexicase walks shuffled cases one at a time, keeping only the candidates
whose correct set contains the case; batch-lexicase walks shuffled batches,
keeping candidates whose in-batch accuracy clears a survival threshold.
Both use the completion rule that an empty survivor step is skipped (the
candidate pool is kept), so a parent is always returned.

Per-candidate case outcomes are memoized as bitmasks over a fixed case
universe (one bit per case). The memoization is a pure cache: results are
identical to recomputing outcomes from scratch, which the test suite checks
against a naive reference implementation.
"""

from __future__ import annotations

import enum
import weakref
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolationError
from .model import Classifier, Sample

__all__ = [
    "SelectionKind",
    "SelectionStrategy",
    "CaseSet",
    "CandidateView",
    "select_roulette",
    "select_tournament",
    "select_lexicase",
    "select_batch_lexicase",
    "select_parent",
]


class SelectionKind(enum.Enum):
    ROULETTE = "roulette"
    TOURNAMENT = "tournament"
    LEXICASE = "lexicase"
    BATCH_LEXICASE = "batch-lexicase"


@dataclass(frozen=True)
class SelectionStrategy:
    """A selection method plus the parameters that method actually uses."""

    kind: SelectionKind
    tournament_fraction: float | None = None
    batch_size: int | None = None
    batch_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.kind is SelectionKind.TOURNAMENT:
            if self.tournament_fraction is None or not 0 < self.tournament_fraction <= 1:
                raise ContractViolationError("tournament needs a fraction in (0, 1]")
        elif self.tournament_fraction is not None:
            raise ContractViolationError(f"{self.kind.value} takes no tournament fraction")
        if self.kind is SelectionKind.BATCH_LEXICASE:
            if self.batch_size is None or self.batch_size < 1:
                raise ContractViolationError("batch-lexicase needs batch_size >= 1")
            if self.batch_threshold is None or not 0 < self.batch_threshold < 1:
                raise ContractViolationError("batch-lexicase needs a threshold in (0, 1)")
        elif self.batch_size is not None or self.batch_threshold is not None:
            raise ContractViolationError(f"{self.kind.value} takes no batch parameters")

    @classmethod
    def roulette(cls) -> "SelectionStrategy":
        return cls(SelectionKind.ROULETTE)

    @classmethod
    def tournament(cls, fraction: float = 0.4) -> "SelectionStrategy":
        return cls(SelectionKind.TOURNAMENT, tournament_fraction=fraction)

    @classmethod
    def lexicase(cls) -> "SelectionStrategy":
        return cls(SelectionKind.LEXICASE)

    @classmethod
    def batch_lexicase(cls, batch_size: int = 100, threshold: float = 0.9) -> "SelectionStrategy":
        return cls(SelectionKind.BATCH_LEXICASE, batch_size=batch_size, batch_threshold=threshold)

    @classmethod
    def parse(cls, text: str) -> "SelectionStrategy":
        """Parse the CLI form: roulette | tournament:0.4 | lexicase | batch-lexicase:100:0.9."""
        parts = text.split(":")
        name = parts[0]
        try:
            if name == "roulette" and len(parts) == 1:
                return cls.roulette()
            if name == "lexicase" and len(parts) == 1:
                return cls.lexicase()
            if name == "tournament" and len(parts) <= 2:
                return cls.tournament(float(parts[1])) if len(parts) == 2 else cls.tournament()
            if name == "batch-lexicase" and len(parts) in (1, 3):
                if len(parts) == 3:
                    return cls.batch_lexicase(int(parts[1]), float(parts[2]))
                return cls.batch_lexicase()
        except ValueError:
            raise ContractViolationError(f"bad strategy parameter in {text!r}") from None
        raise ContractViolationError(f"unknown strategy spec {text!r}")

    @property
    def spec_text(self) -> str:
        if self.kind is SelectionKind.TOURNAMENT:
            return f"tournament:{self.tournament_fraction:g}"
        if self.kind is SelectionKind.BATCH_LEXICASE:
            return f"batch-lexicase:{self.batch_size}:{self.batch_threshold:g}"
        return self.kind.value


class CaseSet:
    """A fixed universe of cases with cached per-classifier outcome bitmasks.

    Bit j of a mask refers to universe case j. `active` lists the universe
    indices currently available to selection (the engine grows it as training
    samples are first presented). Masks cover the whole universe; restricting
    to active cases happens by only ever iterating active indices.
    """

    def __init__(self, packed: np.ndarray, labels: np.ndarray, n_classes: int):
        self.packed = np.ascontiguousarray(packed, dtype=np.int64)
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        self.n_classes = n_classes
        self._class_masks = [
            _bools_to_int(self.labels == c) for c in range(n_classes)
        ]
        self._masks: "weakref.WeakKeyDictionary[Classifier, tuple[int, int]]" = (
            weakref.WeakKeyDictionary()
        )
        self._active = np.arange(len(self.packed), dtype=np.int64)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], n_classes: int | None = None) -> "CaseSet":
        packed = np.array([s.packed for s in samples], dtype=np.int64)
        labels = np.array([s.class_label for s in samples], dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if len(labels) else 2
        return cls(packed, labels, n_classes)

    @classmethod
    def growing(cls, packed: np.ndarray, labels: np.ndarray, n_classes: int) -> "CaseSet":
        """Universe fixed up front but with no case active yet."""
        cs = cls(packed, labels, n_classes)
        cs._active = np.empty(len(cs.packed), dtype=np.int64)
        cs._active_n = 0
        return cs

    @property
    def active(self) -> np.ndarray:
        n = getattr(self, "_active_n", None)
        return self._active if n is None else self._active[:n]

    def activate(self, index: int) -> None:
        self._active[self._active_n] = index
        self._active_n += 1

    def __len__(self) -> int:
        return len(self.active)

    def outcome_masks(self, clf: Classifier) -> tuple[int, int]:
        """(match mask, correct mask) for a classifier over the whole universe."""
        cached = self._masks.get(clf)
        if cached is not None:
            return cached
        cond = clf.condition
        match = _bools_to_int((self.packed & cond.care) == cond.bits)
        if 0 <= clf.class_label < self.n_classes:
            correct = match & self._class_masks[clf.class_label]
        else:
            correct = 0
        self._masks[clf] = (match, correct)
        return match, correct


def _bools_to_int(flags: np.ndarray) -> int:
    """Pack a boolean vector into an int with element j at bit j."""
    if len(flags) == 0:
        return 0
    return int.from_bytes(np.packbits(flags, bitorder="little").tobytes(), "little")


class CandidateView:
    """The correct-set members a selection strategy chooses among.

    The engine passes fitness/numerosity columns it already maintains;
    otherwise they are gathered from the classifier objects on first use.
    """

    def __init__(
        self,
        classifiers: Sequence[Classifier],
        fitness: np.ndarray | None = None,
        numerosity: np.ndarray | None = None,
    ):
        self.classifiers = list(classifiers)
        self._fitness = fitness
        self._numerosity = numerosity

    def __len__(self) -> int:
        return len(self.classifiers)

    def fitnesses(self) -> np.ndarray:
        if self._fitness is None:
            self._fitness = np.array([c.fitness for c in self.classifiers], dtype=np.float64)
        return self._fitness

    def numerosities(self) -> np.ndarray:
        if self._numerosity is None:
            self._numerosity = np.array([c.numerosity for c in self.classifiers], dtype=np.int64)
        return self._numerosity


def _as_view(candidates) -> CandidateView:
    view = candidates if isinstance(candidates, CandidateView) else CandidateView(candidates)
    if len(view) == 0:
        raise ContractViolationError("selection requires a non-empty candidate set")
    return view


def _as_case_set(cases) -> CaseSet:
    return cases if isinstance(cases, CaseSet) else CaseSet.from_samples(cases)


def select_roulette(candidates, rng: np.random.Generator) -> int:
    """Fitness-proportionate draw, weighting each candidate by fitness x numerosity."""
    view = _as_view(candidates)
    weights = view.fitnesses() * view.numerosities()
    total = float(weights.sum())
    if total <= 0.0:
        return int(rng.integers(len(view)))
    r = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(weights), r, side="right"))
    return min(idx, len(view) - 1)


def select_tournament(candidates, fraction: float, rng: np.random.Generator) -> int:
    """Best-of-subset selection over microclassifier slots.

    The tournament holds t = ceil(fraction x micro count) slots sampled
    without replacement, so high-numerosity rules occupy more slots. Fitness
    ties among sampled rules break uniformly at random.
    """
    view = _as_view(candidates)
    if not 0 < fraction <= 1:
        raise ContractViolationError("tournament fraction must be in (0, 1]")
    nums = view.numerosities()
    bounds = np.cumsum(nums)
    micro_count = int(bounds[-1])
    # the tiny epsilon guards against 0.4 * 35 -> 14.000000000000002
    t = max(1, int(np.ceil(fraction * micro_count - 1e-9)))
    slots = rng.permutation(micro_count)[:t]
    # slot s belongs to the candidate whose cumulative-numerosity span holds s
    entrants = np.searchsorted(bounds, slots, side="right")
    fits = view.fitnesses()[entrants]
    best = fits.max()
    tied = np.unique(entrants[fits == best])
    if len(tied) == 1:
        return int(tied[0])
    return int(tied[rng.integers(len(tied))])


def select_lexicase(
    candidates,
    cases,
    rng: np.random.Generator,
    weight_by_numerosity: bool = False,
    trace: list | None = None,
) -> int:
    """Filter candidates case by case in shuffled order.

    Survivors of a case are the candidates that match it and predict its
    class. A case nobody survives is skipped. A single survivor is returned
    immediately; exhausting the cases returns a random remaining candidate.
    """
    view = _as_view(candidates)
    if len(view) == 1:
        return 0
    case_set = _as_case_set(cases)
    alive = list(range(len(view)))
    if len(case_set) == 0:
        return _final_pick(alive, view, rng, weight_by_numerosity)
    correct = [case_set.outcome_masks(c)[1] for c in view.classifiers]
    order = rng.permutation(case_set.active)

    union, common = _union_common(correct, alive)
    for j in order:
        bit = 1 << int(j)
        if not union & bit or common & bit:
            # either nobody survives (case skipped) or everybody does
            if trace is not None:
                trace.append((int(j), tuple(alive)))
            continue
        alive = [i for i in alive if correct[i] & bit]
        if trace is not None:
            trace.append((int(j), tuple(alive)))
        if len(alive) == 1:
            return alive[0]
        union, common = _union_common(correct, alive)
    return _final_pick(alive, view, rng, weight_by_numerosity)


def _union_common(masks: list[int], alive: list[int]) -> tuple[int, int]:
    union = 0
    common = -1
    for i in alive:
        union |= masks[i]
        common &= masks[i]
    return union, common


def _final_pick(
    alive: list[int],
    view: CandidateView,
    rng: np.random.Generator,
    weight_by_numerosity: bool,
) -> int:
    if len(alive) == 1:
        return alive[0]
    if weight_by_numerosity:
        nums = np.array([view.classifiers[i].numerosity for i in alive], dtype=np.float64)
        r = rng.random() * nums.sum()
        idx = min(int(np.searchsorted(np.cumsum(nums), r, side="right")), len(alive) - 1)
        return alive[idx]
    return alive[int(rng.integers(len(alive)))]


def batch_survivors(
    alive: list[int],
    match_masks: list[int],
    correct_masks: list[int],
    batch_mask: int,
    threshold: float,
    zero_match_survives: bool = True,
) -> list[int]:
    """Candidates surviving one batch: zero-match rules plus those with
    in-batch accuracy (corrects/matches) strictly above the threshold."""
    survivors = []
    for i in alive:
        m = (match_masks[i] & batch_mask).bit_count()
        if m == 0:
            if zero_match_survives:
                survivors.append(i)
            continue
        c = (correct_masks[i] & batch_mask).bit_count()
        if c / m > threshold:
            survivors.append(i)
    return survivors


def select_batch_lexicase(
    candidates,
    cases,
    batch_size: int,
    threshold: float,
    rng: np.random.Generator,
    zero_match_survives: bool = True,
    weight_by_numerosity: bool = False,
    trace: list | None = None,
) -> int:
    """Filter candidates batch by batch over a shuffled case order.

    Cases are shuffled, then cut sequentially into batches of `batch_size`
    (a short trailing batch is kept). Per batch each candidate scores
    corrects/matches on the batch's cases; scores strictly above `threshold`
    survive, candidates matching nothing in the batch are retained, and a
    batch that would eliminate everyone is skipped.
    """
    if batch_size < 1:
        raise ContractViolationError("batch_size must be >= 1")
    if not 0 < threshold < 1:
        raise ContractViolationError("batch threshold must be in (0, 1)")
    view = _as_view(candidates)
    if len(view) == 1:
        return 0
    case_set = _as_case_set(cases)
    alive = list(range(len(view)))
    if len(case_set) == 0:
        return _final_pick(alive, view, rng, weight_by_numerosity)
    masks = [case_set.outcome_masks(c) for c in view.classifiers]
    match_masks = [m for m, _ in masks]
    correct_masks = [c for _, c in masks]
    order = rng.permutation(case_set.active)

    for lo in range(0, len(order), batch_size):
        batch_mask = 0
        for j in order[lo : lo + batch_size]:
            batch_mask |= 1 << int(j)
        survivors = batch_survivors(
            alive, match_masks, correct_masks, batch_mask, threshold, zero_match_survives
        )
        if survivors:
            alive = survivors
        if trace is not None:
            trace.append((lo // batch_size, tuple(alive)))
        if len(alive) == 1:
            return alive[0]
    return _final_pick(alive, view, rng, weight_by_numerosity)


def select_parent(
    strategy: SelectionStrategy,
    candidates,
    cases,
    rng: np.random.Generator,
    zero_match_survives: bool = True,
    weight_by_numerosity: bool = False,
) -> int:
    """Dispatch to the strategy's selection function; returns a candidate index."""
    if strategy.kind is SelectionKind.ROULETTE:
        return select_roulette(candidates, rng)
    if strategy.kind is SelectionKind.TOURNAMENT:
        return select_tournament(candidates, strategy.tournament_fraction, rng)
    if strategy.kind is SelectionKind.LEXICASE:
        return select_lexicase(candidates, cases, rng, weight_by_numerosity)
    return select_batch_lexicase(
        candidates,
        cases,
        strategy.batch_size,
        strategy.batch_threshold,
        rng,
        zero_match_survives,
        weight_by_numerosity,
    )
