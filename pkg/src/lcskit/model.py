"""Rule representation, matching semantics, and the accuracy/fitness arithmetic.

Conditions are ternary strings over {0, 1, #} where # matches either bit.
Internally a condition is a pair of packed integers (care mask + cared bit
values), so matching a sample is two bitwise operations regardless of length.
Text position 0 is the leftmost symbol and maps to the highest bit, i.e. the
text form reads like a binary literal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from functools import cached_property
from typing import Iterable, Sequence

from .errors import ContractViolationError

__all__ = [
    "TernarySymbol",
    "TernaryCondition",
    "Classifier",
    "Sample",
    "Dataset",
    "UcsConfig",
    "pack_bits",
    "unpack_bits",
    "matches",
    "is_more_general",
    "subsumes",
    "update_on_outcome",
]


def pack_bits(bits: Iterable[int]) -> int:
    """Pack a 0/1 sequence into an int, first element in the highest bit."""
    value = 0
    for b in bits:
        value = (value << 1) | (b & 1)
    return value


def unpack_bits(value: int, length: int) -> tuple[int, ...]:
    """Inverse of pack_bits for a known length."""
    return tuple((value >> (length - 1 - i)) & 1 for i in range(length))


class TernarySymbol(enum.Enum):
    """One position of a rule condition; HASH is the don't-care wildcard."""

    ZERO = "0"
    ONE = "1"
    HASH = "#"


@dataclass(frozen=True)
class TernaryCondition:
    """Fixed-length ternary pattern over binary features.

    `care` has a 1-bit wherever the condition constrains the feature and
    `bits` holds the required value at cared positions (zero elsewhere).
    """

    length: int
    care: int
    bits: int

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ContractViolationError("condition length must be >= 1")
        full = (1 << self.length) - 1
        if not 0 <= self.care <= full:
            raise ContractViolationError("care mask out of range for length")
        if self.bits & ~self.care:
            raise ContractViolationError("value bits set outside the care mask")

    @classmethod
    def from_text(cls, text: str) -> "TernaryCondition":
        """Parse the serialized form, e.g. "1#0#"."""
        care = 0
        bits = 0
        for ch in text:
            care <<= 1
            bits <<= 1
            if ch == "1":
                care |= 1
                bits |= 1
            elif ch == "0":
                care |= 1
            elif ch != "#":
                raise ContractViolationError(f"invalid condition symbol {ch!r}")
        return cls(len(text), care, bits)

    @classmethod
    def from_symbols(cls, symbols: Sequence[TernarySymbol]) -> "TernaryCondition":
        return cls.from_text("".join(s.value for s in symbols))

    @property
    def symbols(self) -> tuple[TernarySymbol, ...]:
        return tuple(TernarySymbol(ch) for ch in str(self))

    @property
    def hash_count(self) -> int:
        """Number of wildcard positions."""
        return self.length - bin(self.care).count("1")

    def matches_packed(self, features: int) -> bool:
        return (features & self.care) == self.bits

    def __str__(self) -> str:
        out = []
        for i in range(self.length - 1, -1, -1):
            if (self.care >> i) & 1:
                out.append("1" if (self.bits >> i) & 1 else "0")
            else:
                out.append("#")
        return "".join(out)


def matches(condition: TernaryCondition, features: Sequence[int]) -> bool:
    """True iff every non-wildcard symbol equals the corresponding feature bit."""
    if len(features) != condition.length:
        raise ContractViolationError(
            f"condition length {condition.length} != feature length {len(features)}"
        )
    return condition.matches_packed(pack_bits(features))


def is_more_general(a: TernaryCondition, b: TernaryCondition) -> bool:
    """True iff a matches a strict superset of b's inputs.

    Positionwise: a is # or agrees with b everywhere, and a has strictly
    more wildcards. Equal conditions are not more general than each other.
    """
    if a.length != b.length:
        raise ContractViolationError("conditions have different lengths")
    if (b.care & a.care) != a.care:
        return False
    if (b.bits & a.care) != a.bits:
        return False
    return a.care != b.care


@dataclass(eq=False)
class Classifier:
    """A ternary rule with its bookkeeping counters.

    `matches` is the rule's lifetime experience; `corrects` counts correct
    classifications; fitness is (corrects/matches)**nu once experienced,
    otherwise the stored initialization value. `cs_size_estimate` is a
    recency-weighted estimate of correct-set size used by deletion.
    """

    condition: TernaryCondition
    class_label: int
    matches: int = 0
    corrects: int = 0
    numerosity: int = 1
    fitness: float = 1.0
    cs_size_estimate: float = 1.0
    ga_timestamp: int = 0

    @property
    def accuracy(self) -> float:
        """corrects/matches; 0 before the first match."""
        return self.corrects / self.matches if self.matches > 0 else 0.0

    def copy(self) -> "Classifier":
        return Classifier(**{f.name: getattr(self, f.name) for f in fields(self)})


@dataclass(frozen=True)
class Sample:
    """One data row: binary features plus an integer class label."""

    features: tuple[int, ...]
    class_label: int

    @cached_property
    def packed(self) -> int:
        return pack_bits(self.features)


@dataclass
class Dataset:
    samples: list[Sample]
    n_features: int
    n_classes: int
    name: str = ""

    def __post_init__(self) -> None:
        if self.n_features < 1 or self.n_classes < 2:
            raise ContractViolationError("dataset needs >= 1 feature and >= 2 classes")
        for s in self.samples:
            if len(s.features) != self.n_features:
                raise ContractViolationError(
                    f"sample has {len(s.features)} features, expected {self.n_features}"
                )
            if not 0 <= s.class_label < self.n_classes:
                raise ContractViolationError(
                    f"class label {s.class_label} out of range [0, {self.n_classes})"
                )

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class UcsConfig:
    """Every training hyperparameter, with the gap-filling decisions made explicit.

    `alpha` is carried for completeness but the supervised fitness rule never
    reads it. The `p_hash`, subsumption, and offspring settings have no
    standard published values; the defaults here are the conventional ones.
    """

    nu: float = 5.0
    alpha: float = 0.1
    beta: float = 0.2
    theta_ga: float = 25.0
    chi: float = 0.8
    mu: float = 0.04
    theta_del: int = 20
    delta: float = 0.1
    max_population: int = 1000
    p_hash: float = 0.33
    tournament_fraction: float = 0.4
    batch_size: int = 100
    batch_threshold: float = 0.9
    subsumption_interval: int = 1000
    theta_sub: int = 20
    acc_sub: float = 0.99
    seed: int = 0
    # gap-filling behavior flags
    cover_on_empty_match_only: bool = False
    batch_zero_match_survives: bool = True
    lexicase_weight_by_numerosity: bool = False

    def __post_init__(self) -> None:
        for name in ("chi", "mu", "delta", "p_hash", "tournament_fraction", "acc_sub"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractViolationError(f"{name}={v} must be in [0, 1]")
        if not 0.0 < self.batch_threshold < 1.0:
            raise ContractViolationError("batch_threshold must be in (0, 1)")
        if not 0.0 <= self.beta <= 1.0:
            raise ContractViolationError("beta must be in [0, 1]")
        for name in (
            "nu",
            "theta_ga",
            "theta_del",
            "max_population",
            "batch_size",
            "subsumption_interval",
            "theta_sub",
        ):
            if getattr(self, name) <= 0:
                raise ContractViolationError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "UcsConfig":
        return cls(**d)


def subsumes(general: Classifier, specific: Classifier, config: UcsConfig) -> bool:
    """Whether `general` may absorb `specific` during rule compaction.

    Requires equal class, strict generality, and that the subsumer is both
    experienced (matches >= theta_sub) and accurate (accuracy >= acc_sub).
    """
    if general.condition.length != specific.condition.length:
        raise ContractViolationError("conditions have different lengths")
    return (
        general.class_label == specific.class_label
        and general.matches >= config.theta_sub
        and general.accuracy >= config.acc_sub
        and is_more_general(general.condition, specific.condition)
    )


def update_on_outcome(
    classifier: Classifier,
    in_correct_set: bool,
    correct_set_size: int,
    config: UcsConfig,
) -> Classifier:
    """Apply one match-set exposure to a classifier, in place.

    Increments experience, recomputes fitness = accuracy**nu, and (for
    correct-set members) moves cs_size_estimate toward the observed
    correct-set size at rate beta.
    """
    classifier.matches += 1
    if in_correct_set:
        classifier.corrects += 1
        classifier.cs_size_estimate += config.beta * (
            correct_set_size - classifier.cs_size_estimate
        )
    classifier.fitness = (classifier.corrects / classifier.matches) ** config.nu
    return classifier
