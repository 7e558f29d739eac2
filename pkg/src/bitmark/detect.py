"""Green-window counting and the one-proportion z-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import kernels
from .core import BitStream, DetectionResult, Partition, total_watermarkable_bits
from .errors import DomainError, StructureError

GAUSSIAN_1PCT_THRESHOLD = 2.326


@dataclass(frozen=True)
class DetectConfig:
    partition: Partition
    threshold: float = GAUSSIAN_1PCT_THRESHOLD
    two_sided: bool = False

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise DomainError("threshold must be finite")


def count_green(stream: BitStream, partition: Partition):
    """Count green windows across all scales.

    Returns ``(C, T, per_scale)`` where ``per_scale`` is a list of
    ``(C_i, T_i)``. Windows slide with stride 1 inside each token only.
    """
    schedule = stream.schedule
    n, m = partition.n, schedule.m
    if m < n:
        raise StructureError(f"token of {m} bits cannot hold a window of {n} bits")
    mask = partition.green_mask
    k = m - n + 1
    per_scale = []
    for i, r in enumerate(schedule.tokens_per_scale):
        bits = stream.scales[i]
        if bits.size != r * m:
            raise StructureError(f"scale {i} length {bits.size} != {r * m}")
        per_scale.append((int(kernels.count_scale(bits, r, m, n, mask)), r * k))
    C = sum(c for c, _ in per_scale)
    T = sum(t for _, t in per_scale)
    assert T == total_watermarkable_bits(schedule, n)
    return C, T, per_scale


def z_score(C: int, T: int, gamma: float = 0.5) -> float:
    if T < 1:
        raise DomainError("z-score needs at least one window")
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must be in (0, 1), got {gamma}")
    return (C - gamma * T) / math.sqrt(T * gamma * (1.0 - gamma))


def p_value(z: float, two_sided: bool = False) -> float:
    """Upper-tail normal p-value, or two-sided when requested."""
    if two_sided:
        return math.erfc(abs(z) / math.sqrt(2.0))
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def detect(stream: BitStream, config: DetectConfig) -> DetectionResult:
    part = config.partition
    C, T, per_scale = count_green(stream, part)
    z = z_score(C, T, part.gamma)
    if config.two_sided:
        decision = abs(z) > config.threshold
    else:
        decision = z > config.threshold
    return DetectionResult(
        green_count=C,
        total=T,
        green_fraction=C / T,
        z=z,
        p_value=p_value(z, config.two_sided),
        decision=bool(decision),
        threshold_used=config.threshold,
        gamma=part.gamma,
        per_scale=tuple(per_scale),
    )
