"""Domain types shared across the package.

All types are immutable after construction. Masks and indicators are
defined over the *maskable region* of a sample: the answer tokens followed
by a single trailing ``<eos>`` slot. Prompt tokens are never maskable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

EOS = "<eos>"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a_64(data: bytes, h: int = _FNV_OFFSET) -> int:
    """64-bit FNV-1a; pass the previous value as ``h`` to continue a stream."""
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def block_ranges(n: int, block_size: int) -> list[tuple[int, int]]:
    """Consecutive half-open ranges of length ``block_size`` covering ``range(n)``."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    return [(s, min(s + block_size, n)) for s in range(0, n, block_size)]


class Domain(str, enum.Enum):
    CODE = "code"
    MATH = "math"
    OTHER = "other"


class Hard(str, enum.Enum):
    """Sentinel weights for the deterministic (hard) limits of priority masking."""

    DENSE = "hard_dense"  # w -> inf: dense positions first
    SPARSE = "hard_sparse"  # w -> 0 limit taken deterministically: sparse first


HARD_DENSE = Hard.DENSE
HARD_SPARSE = Hard.SPARSE


class Saturation(str, enum.Enum):
    NONE = "none"
    DENSE_AT_ONE = "dense_at_one"
    BASE_AT_ONE = "base_at_one"


class Mode(str, enum.Enum):
    BERNOULLI = "bernoulli"
    EXACT_COUNT = "exact_count"


class Scope(str, enum.Enum):
    PER_SEQUENCE = "per_sequence"
    PER_BLOCK = "per_block"


@dataclass(frozen=True, order=True)
class TokenSpan:
    """Half-open character range ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if not (isinstance(self.start, int) and isinstance(self.end, int)):
            raise TypeError("span bounds must be integers")
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def __iter__(self):
        yield self.start
        yield self.end

    def __len__(self):
        return self.end - self.start

    def overlaps(self, other: TokenSpan) -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class AnnotatedSample:
    """One SFT record with its token layout and density labels.

    ``indicator`` has one entry per answer token plus the ``<eos>`` slot.
    Construction does not validate; use :func:`validate_sample`.
    """

    id: str
    prompt: str
    answer: str
    domain: Domain
    tokens: tuple[tuple[str, TokenSpan], ...]
    dense_spans: tuple[TokenSpan, ...]
    indicator: tuple[int, ...]

    @property
    def n_maskable(self) -> int:
        return len(self.tokens) + 1

    @property
    def surfaces(self) -> list[str]:
        return [text for text, _ in self.tokens] + [EOS]

    @property
    def offsets(self) -> list[TokenSpan]:
        return [span for _, span in self.tokens]

    @property
    def n_dense(self) -> int:
        return int(sum(self.indicator))

    def indicator_array(self) -> np.ndarray:
        return np.asarray(self.indicator, dtype=bool)


def validate_sample(sample: AnnotatedSample) -> list[str]:
    """Return the list of invariant violations; empty means valid."""
    problems = []
    if len(sample.indicator) != len(sample.tokens) + 1:
        problems.append("indicator length mismatch")
    if any(c not in (0, 1) for c in sample.indicator):
        problems.append("indicator not binary")
    n = len(sample.answer)
    for span in sample.dense_spans:
        if span.end > n:
            problems.append("span out of bounds")
            break
    prev_end = 0
    for text, span in sample.tokens:
        if span.end > n:
            problems.append("token out of bounds")
            break
        if span.start < prev_end:
            problems.append("tokens unsorted or overlapping")
            break
        if sample.answer[span.start:span.end] != text:
            problems.append("token text mismatch")
            break
        prev_end = span.end
    try:
        Domain(sample.domain)
    except ValueError:
        problems.append("unknown domain")
    return problems


@dataclass(frozen=True)
class Reject:
    """A record that failed ingestion or validation, kept with its reasons."""

    where: str
    reasons: tuple[str, ...]
    record: object = None

    def to_dict(self) -> dict:
        return {"where": self.where, "reasons": list(self.reasons)}


@dataclass(frozen=True)
class NoiseDraw:
    t: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t={self.t} outside [0, 1]")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma={self.sigma} outside (0, 1)")


@dataclass(frozen=True)
class CategoryProbs:
    """Solved per-category masking probabilities for one (N, D, sigma, w)."""

    p_dense: float
    p_base: float
    rho: float
    saturated: Saturation
    sigma: float
    n: int
    d: int

    @property
    def residual(self) -> float:
        """Analytic conservation residual (0 for degenerate categories)."""
        if self.d == 0 or self.d == self.n:
            return 0.0
        return abs(self.rho * self.p_dense + (1.0 - self.rho) * self.p_base - self.sigma)


@dataclass(frozen=True, eq=False)
class MaskVector:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or np.any(bits > 1):
            raise ValueError("mask bits must be a 1-d binary vector")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def __len__(self):
        return len(self.bits)

    def __eq__(self, other):
        if not isinstance(other, MaskVector):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"MaskVector({''.join(map(str, self.bits.tolist()))})"


@dataclass(frozen=True)
class MaskPair:
    """Priority mask M and, when complementary, its logical NOT.

    ``syntactic`` is None in priority-only mode. ``draws`` and ``probs`` hold
    one entry per block (a single entry for per-sequence scope).
    """

    logical: MaskVector
    syntactic: MaskVector | None
    draws: tuple[NoiseDraw, ...]
    weight: float | Hard
    probs: tuple[CategoryProbs | None, ...] = ()
    blocks: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.syntactic is not None:
            if len(self.syntactic) != len(self.logical) or np.any(
                self.logical.bits + self.syntactic.bits != 1
            ):
                raise ValueError("syntactic mask is not the complement of the logical mask")

    @property
    def draw(self) -> NoiseDraw:
        return self.draws[0]


def _parse_weight(w) -> float | Hard:
    if isinstance(w, Hard):
        return w
    if isinstance(w, str):
        try:
            return Hard(w)
        except ValueError:
            w = float(w)
    w = float(w)
    if math.isinf(w) and w > 0:
        return Hard.DENSE
    if not w >= 0 or math.isnan(w):
        raise ValueError(f"weight must be nonnegative, got {w}")
    return w


@dataclass(frozen=True)
class SchedulerConfig:
    weight: float | Hard = 2.0
    sigma_range: tuple[float, float] = (0.3, 0.8)
    mode: Mode = Mode.BERNOULLI
    scope: Scope = Scope.PER_SEQUENCE
    block_size: int = 32
    complement: bool = True
    eos_is_dense: bool = False
    global_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weight", _parse_weight(self.weight))
        lo, hi = (float(x) for x in self.sigma_range)
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"sigma range must satisfy 0 < lo <= hi < 1, got {(lo, hi)}")
        object.__setattr__(self, "sigma_range", (lo, hi))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "scope", Scope(self.scope))
        if int(self.block_size) < 1:
            raise ValueError("block_size must be >= 1")
        object.__setattr__(self, "block_size", int(self.block_size))
        object.__setattr__(self, "global_seed", int(self.global_seed) & (2**64 - 1))

    @property
    def is_hard(self) -> bool:
        return isinstance(self.weight, Hard)

    def to_dict(self) -> dict:
        w = self.weight.value if self.is_hard else self.weight
        return {
            "weight": w,
            "sigma_range": list(self.sigma_range),
            "mode": self.mode.value,
            "scope": self.scope.value,
            "block_size": self.block_size,
            "complement": self.complement,
            "eos_is_dense": self.eos_is_dense,
            "global_seed": self.global_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SchedulerConfig:
        d = dict(d)
        if "sigma_range" in d:
            d["sigma_range"] = tuple(d["sigma_range"])
        return cls(**d)


def weight_label(w: float | Hard) -> str | float:
    return w.value if isinstance(w, Hard) else w
