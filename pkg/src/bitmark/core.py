"""Shared domain types: partitions over n-bit windows, scale schedules, bit streams."""

from __future__ import annotations

import hashlib
import hmac
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, DomainError, SizeMismatchError, StructureError

GREEN = True
RED = False


@dataclass(frozen=True)
class Partition:
    """Green/red split of all ``2**n`` window values.

    Window values are read MSB-first: the window ``01`` (first bit 0, second
    bit 1) has value 1.
    """

    n: int
    green: frozenset
    red: frozenset
    gamma: float
    effective: bool
    warnings: tuple = ()

    @property
    def green_mask(self) -> np.ndarray:
        mask = np.zeros(1 << self.n, dtype=np.uint8)
        mask[sorted(self.green)] = 1
        return mask

    def green_completions(self, prefix: int) -> list:
        """Bits b such that ``prefix || b`` is green."""
        return [b for b in (0, 1) if ((prefix << 1) | b) in self.green]

    def swapped(self) -> "Partition":
        """The partition with green and red exchanged."""
        return _make_partition(self.n, self.red, relaxed=True)

    def label(self) -> str:
        return ",".join(format(v, f"0{self.n}b") for v in sorted(self.green))


def _check_effective(n: int, green: frozenset) -> bool:
    for prefix in range(1 << (n - 1)):
        if (((prefix << 1) in green) + (((prefix << 1) | 1) in green)) != 1:
            return False
    return True


def _make_partition(n: int, green_values: Iterable[int], relaxed: bool = False) -> Partition:
    if n < 1:
        raise DomainError(f"window length must be >= 1, got {n}")
    size = 1 << n
    green = frozenset(int(v) for v in green_values)
    bad = [v for v in green if not 0 <= v < size]
    if bad:
        raise DomainError(f"window values {sorted(bad)} outside [0, {size})")
    if relaxed:
        if not 0 < len(green) < size:
            raise SizeMismatchError("green list must be a proper non-empty subset")
    elif len(green) != size // 2:
        raise SizeMismatchError(f"green list needs {size // 2} values for n={n}, got {len(green)}")
    red = frozenset(range(size)) - green
    notes = []
    effective = _check_effective(n, green)
    if n == 1:
        # One green value means every bit is pushed the same way; a
        # balance-restoring re-encoder undoes that.
        notes.append("unary bias")
    if not effective:
        notes.append("ineffective partition")
    if len(green) != size // 2:
        notes.append("unbalanced partition")
    return Partition(n=n, green=green, red=red, gamma=len(green) / size,
                     effective=effective, warnings=tuple(notes))


def build_partition(n: int, green_values: Iterable[int]) -> Partition:
    """Balanced partition (|G| = 2**(n-1)) with the given green values.

    Ineffective partitions are allowed; the ``effective`` flag and
    ``warnings`` record the problem.
    """
    return _make_partition(n, green_values)


def build_relaxed_partition(n: int, green_values: Iterable[int]) -> Partition:
    """Like :func:`build_partition` but any proper subset is accepted (gamma != 0.5)."""
    return _make_partition(n, green_values, relaxed=True)


def parse_green_list(text: str) -> Partition:
    """Parse ``"01,10"`` into a partition. All entries must share one length."""
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise DomainError("empty green list")
    lengths = {len(s) for s in items}
    if len(lengths) != 1 or any(set(s) - {"0", "1"} for s in items):
        raise DomainError(f"green list entries must be equal-length bit strings: {text!r}")
    n = lengths.pop()
    return build_partition(n, (int(s, 2) for s in items))


def keyed_partition(key: bytes, n: int) -> Partition:
    """Derive an effective partition from a secret key.

    For every (n-1)-bit prefix, HMAC-SHA256(key, n || prefix) picks which of
    the two completions is green.
    """
    if n < 2:
        raise DomainError(f"keyed partitions need n >= 2, got {n}")
    width = (n - 1 + 7) // 8 or 1
    green = []
    for prefix in range(1 << (n - 1)):
        msg = b"bitmark-partition" + bytes([n]) + prefix.to_bytes(width, "big")
        bit = hmac.new(key, msg, hashlib.sha256).digest()[0] & 1
        green.append((prefix << 1) | bit)
    part = build_partition(n, green)
    if not part.effective:
        raise ContractError("keyed partition is not effective")
    return part


def classify(partition: Partition, window: int) -> bool:
    """True (green) iff ``window`` is in the green list."""
    if not 0 <= window < (1 << partition.n):
        raise DomainError(f"window {window} outside [0, {1 << partition.n})")
    return window in partition.green


@dataclass(frozen=True)
class ScaleSchedule:
    tokens_per_scale: tuple
    m: int = 32

    def __post_init__(self):
        object.__setattr__(self, "tokens_per_scale", tuple(int(r) for r in self.tokens_per_scale))
        if not self.tokens_per_scale:
            raise DomainError("schedule needs at least one scale")
        if any(r < 1 for r in self.tokens_per_scale):
            raise DomainError("tokens per scale must be positive")
        if self.m < 1:
            raise DomainError("bits per token must be positive")

    @property
    def K(self) -> int:
        return len(self.tokens_per_scale)

    def scale_bits(self, i: int) -> int:
        return self.tokens_per_scale[i] * self.m

    @property
    def total_bits(self) -> int:
        return sum(self.tokens_per_scale) * self.m


INFINITY_2B = ScaleSchedule((1, 4, 16, 36, 64, 144, 256, 400, 576, 1024, 1600, 2304, 4096), m=32)
INSTELLA_IAR = ScaleSchedule((128,), m=32)
SCHEDULE_PRESETS = {"infinity-2b": INFINITY_2B, "instella-iar": INSTELLA_IAR}


def watermarkable_bits_per_token(m: int, n: int) -> int:
    if m < n:
        raise DomainError(f"token of {m} bits cannot hold a window of {n} bits")
    return m - (n - 1)


def total_watermarkable_bits(schedule: ScaleSchedule, n: int) -> int:
    """Number of within-token windows over the whole schedule."""
    k = watermarkable_bits_per_token(schedule.m, n)
    return sum(r * k for r in schedule.tokens_per_scale)


@dataclass(frozen=True)
class BitStream:
    """Per-scale unpacked bits (uint8 0/1), one array of r_i*m bits per scale."""

    schedule: ScaleSchedule
    scales: tuple = field(repr=False)

    def __post_init__(self):
        scales = tuple(np.ascontiguousarray(s, dtype=np.uint8) for s in self.scales)
        if len(scales) != self.schedule.K:
            raise StructureError(f"expected {self.schedule.K} scales, got {len(scales)}")
        for i, s in enumerate(scales):
            if s.ndim != 1 or s.size != self.schedule.scale_bits(i):
                raise StructureError(
                    f"scale {i} holds {s.size} bits, expected {self.schedule.scale_bits(i)}")
            if s.size and s.max() > 1:
                raise StructureError(f"scale {i} contains non-binary values")
            s.flags.writeable = False
        object.__setattr__(self, "scales", scales)

    def tokens(self, i: int) -> np.ndarray:
        """Scale ``i`` as an (r_i, m) view."""
        return self.scales[i].reshape(self.schedule.tokens_per_scale[i], self.schedule.m)

    def __eq__(self, other):
        if not isinstance(other, BitStream):
            return NotImplemented
        return self.schedule == other.schedule and all(
            np.array_equal(a, b) for a, b in zip(self.scales, other.scales))

    __hash__ = None

    @classmethod
    def from_scales(cls, schedule: ScaleSchedule, scales: Sequence) -> "BitStream":
        return cls(schedule, tuple(scales))


@dataclass(frozen=True)
class DetectionResult:
    green_count: int
    total: int
    green_fraction: float
    z: float
    p_value: float
    decision: bool
    threshold_used: float
    gamma: float = 0.5
    per_scale: tuple = ()


def warn_partition(partition: Partition) -> None:
    for note in partition.warnings:
        warnings.warn(f"{note}: green list {{{partition.label()}}}", stacklevel=3)
