"""Benchmark problem generators and loaders.

Four problems: the boolean multiplexer, odd parity, the noisy 7-segment LED
digit problem, and the UCI car-evaluation dataset (one-hot encoded to 21
binary features). Multiplexer address bits are the FIRST k bits, read
most-significant first.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import ContractViolationError, DataFormatError, EnumerationLimitError
from .model import Dataset, Sample, unpack_bits

__all__ = [
    "ProblemKind",
    "ProblemSpec",
    "mux_class",
    "parity_class",
    "gen_boolean_dataset",
    "sample_boolean_dataset",
    "gen_led",
    "load_car_eval",
    "save_dataset",
    "load_dataset",
    "LED_SEGMENTS",
]

ENUMERATION_BIT_LIMIT = 24

# 7-segment patterns for digits 0-9, segment order:
# top, top-left, top-right, middle, bottom-left, bottom-right, bottom.
LED_SEGMENTS: tuple[tuple[int, ...], ...] = (
    (1, 1, 1, 0, 1, 1, 1),  # 0
    (0, 0, 1, 0, 0, 1, 0),  # 1
    (1, 0, 1, 1, 1, 0, 1),  # 2
    (1, 0, 1, 1, 0, 1, 1),  # 3
    (0, 1, 1, 1, 0, 1, 0),  # 4
    (1, 1, 0, 1, 0, 1, 1),  # 5
    (1, 1, 0, 1, 1, 1, 1),  # 6
    (1, 0, 1, 0, 0, 1, 0),  # 7
    (1, 1, 1, 1, 1, 1, 1),  # 8
    (1, 1, 1, 1, 0, 1, 1),  # 9
)


class ProblemKind(enum.Enum):
    MULTIPLEXER = "mux"
    PARITY = "parity"
    LED = "led"
    CAR_EVAL = "car"


@dataclass(frozen=True)
class ProblemSpec:
    """Which benchmark to build and at what size.

    `size` is the address width k for MULTIPLEXER (feature count k + 2**k)
    and the bit count n for PARITY. `n_samples` selects sampling instead of
    full enumeration for boolean problems and is required for LED.
    """

    kind: ProblemKind
    size: int = 0
    noise: float = 0.1
    n_samples: int | None = None
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind in (ProblemKind.MULTIPLEXER, ProblemKind.PARITY) and self.size < 1:
            raise ContractViolationError("boolean problems need a positive size")
        if self.kind is ProblemKind.LED and not 0.0 <= self.noise < 0.5:
            raise ContractViolationError("LED noise must be in [0, 0.5)")
        if self.kind is ProblemKind.CAR_EVAL and not self.path:
            raise ContractViolationError("car evaluation needs a data file path")

    @property
    def n_features(self) -> int:
        if self.kind is ProblemKind.MULTIPLEXER:
            return self.size + (1 << self.size)
        if self.kind is ProblemKind.PARITY:
            return self.size
        if self.kind is ProblemKind.LED:
            return 7
        return 21

    @property
    def n_classes(self) -> int:
        if self.kind is ProblemKind.LED:
            return 10
        if self.kind is ProblemKind.CAR_EVAL:
            return 4
        return 2

    @property
    def name(self) -> str:
        if self.kind is ProblemKind.MULTIPLEXER:
            return f"mux{self.n_features}"
        if self.kind is ProblemKind.PARITY:
            return f"parity{self.size}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "ProblemSpec":
        """Parse shorthand: mux<total bits>, parity<n>, led, car:<path>."""
        if text.startswith("mux"):
            total = _parse_int(text[3:], text)
            for k in range(1, 6):
                if k + (1 << k) == total:
                    return cls(ProblemKind.MULTIPLEXER, size=k)
            raise ContractViolationError(
                f"{text!r}: no address width k with k + 2^k = {total}"
            )
        if text.startswith("parity"):
            return cls(ProblemKind.PARITY, size=_parse_int(text[6:], text))
        if text == "led":
            return cls(ProblemKind.LED)
        if text.startswith("car:"):
            return cls(ProblemKind.CAR_EVAL, path=text[4:])
        raise ContractViolationError(f"unknown problem spec {text!r}")

    def build(self, rng: np.random.Generator) -> Dataset:
        """Materialize the dataset, drawing from rng where the problem is stochastic."""
        if self.kind in (ProblemKind.MULTIPLEXER, ProblemKind.PARITY):
            if self.n_samples is not None:
                return sample_boolean_dataset(self, self.n_samples, rng)
            return gen_boolean_dataset(self)
        if self.kind is ProblemKind.LED:
            if self.n_samples is None:
                raise ContractViolationError("LED needs n_samples")
            return gen_led(self.n_samples, self.noise, rng)
        return load_car_eval(self.path)


def _parse_int(text: str, whole: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ContractViolationError(f"bad problem size in {whole!r}") from None


def mux_class(bits: Sequence[int], k: int) -> int:
    """Multiplexer target: the data bit addressed by the first k bits."""
    if len(bits) != k + (1 << k):
        raise ContractViolationError(
            f"multiplexer with k={k} needs {k + (1 << k)} bits, got {len(bits)}"
        )
    address = 0
    for i in range(k):
        address = (address << 1) | (bits[i] & 1)
    return bits[k + address] & 1


def parity_class(bits: Sequence[int]) -> int:
    """1 iff the number of ones is odd."""
    if len(bits) == 0:
        raise ContractViolationError("parity needs at least one bit")
    return sum(b & 1 for b in bits) & 1


def _label_fn(spec: ProblemSpec):
    if spec.kind is ProblemKind.MULTIPLEXER:
        k = spec.size
        return lambda bits: mux_class(bits, k)
    if spec.kind is ProblemKind.PARITY:
        return parity_class
    raise ContractViolationError(f"{spec.kind} is not a boolean problem")


def gen_boolean_dataset(spec: ProblemSpec) -> Dataset:
    """Enumerate all 2^L rows of a multiplexer or parity problem."""
    label = _label_fn(spec)
    n = spec.n_features
    if n > ENUMERATION_BIT_LIMIT:
        raise EnumerationLimitError(
            f"{n}-bit enumeration is over the {ENUMERATION_BIT_LIMIT}-bit guard; "
            "use sample_boolean_dataset"
        )
    samples = []
    for value in range(1 << n):
        bits = unpack_bits(value, n)
        samples.append(Sample(bits, label(bits)))
    return Dataset(samples, n, 2, name=spec.name)


def sample_boolean_dataset(
    spec: ProblemSpec, n_samples: int, rng: np.random.Generator
) -> Dataset:
    """Draw n_samples distinct rows uniformly from the 2^L input space."""
    label = _label_fn(spec)
    n = spec.n_features
    space = 1 << n
    if n_samples > space:
        raise ContractViolationError(
            f"cannot draw {n_samples} distinct rows from a {space}-row space"
        )
    seen: set[int] = set()
    chosen: list[int] = []
    while len(chosen) < n_samples:
        # rejection sampling keeps memory flat even for large L
        draws = rng.integers(0, space, size=max(64, n_samples - len(chosen)))
        for v in draws:
            v = int(v)
            if v not in seen:
                seen.add(v)
                chosen.append(v)
                if len(chosen) == n_samples:
                    break
    samples = []
    for value in chosen:
        bits = unpack_bits(value, n)
        samples.append(Sample(bits, label(bits)))
    return Dataset(samples, n, 2, name=spec.name)


def gen_led(n_samples: int, noise: float, rng: np.random.Generator) -> Dataset:
    """Noisy 7-segment digits: each segment bit flips with probability `noise`."""
    if not 0.0 <= noise < 0.5:
        raise ContractViolationError("noise must be in [0, 0.5)")
    table = np.array(LED_SEGMENTS, dtype=np.int8)
    digits = rng.integers(0, 10, size=n_samples)
    flips = rng.random((n_samples, 7)) < noise
    feats = table[digits] ^ flips
    samples = [
        Sample(tuple(int(b) for b in row), int(d)) for row, d in zip(feats, digits)
    ]
    return Dataset(samples, 7, 10, name="led")


def _car_schema() -> tuple[list[tuple[str, list[str]]], list[str]]:
    raw = resources.files("lcskit.data").joinpath("car_eval_categories.json")
    schema = json.loads(raw.read_text())
    attrs = [(a["name"], a["values"]) for a in schema["attributes"]]
    return attrs, schema["classes"]


def load_car_eval(path: str) -> Dataset:
    """Load a UCI car-evaluation file and one-hot encode it to 21 binary features."""
    attrs, classes = _car_schema()
    n_features = sum(len(vals) for _, vals in attrs)
    class_index = {c: i for i, c in enumerate(classes)}
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != len(attrs) + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {len(attrs) + 1} fields, got {len(parts)}"
                )
            bits: list[int] = []
            for (name, values), token in zip(attrs, parts):
                if token not in values:
                    raise DataFormatError(
                        f"{path}:{lineno}: unknown {name} category {token!r}"
                    )
                bits.extend(1 if v == token else 0 for v in values)
            label = parts[-1]
            if label not in class_index:
                raise DataFormatError(f"{path}:{lineno}: unknown class {label!r}")
            samples.append(Sample(tuple(bits), class_index[label]))
    if not samples:
        raise DataFormatError(f"{path}: file contains no instances")
    return Dataset(samples, n_features, len(classes), name="car")


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write the text form: header "n_features n_classes", then bit rows + label."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{dataset.n_features} {dataset.n_classes}\n")
        for s in dataset.samples:
            fh.write(" ".join(str(b) for b in s.features) + f" {s.class_label}\n")


def load_dataset(path: str, name: str = "") -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataFormatError(f"{path}:1: expected header 'n_features n_classes'")
        try:
            n_features, n_classes = int(header[0]), int(header[1])
        except ValueError:
            raise DataFormatError(f"{path}:1: non-integer header fields") from None
        samples = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != n_features + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {n_features + 1} fields, got {len(parts)}"
                )
            try:
                values = [int(p) for p in parts]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-integer field") from None
            if any(b not in (0, 1) for b in values[:-1]):
                raise DataFormatError(f"{path}:{lineno}: feature bits must be 0 or 1")
            samples.append(Sample(tuple(values[:-1]), values[-1]))
    return Dataset(samples, n_features, n_classes, name=name)
