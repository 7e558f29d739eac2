"""Watermark embedding by biasing per-bit logits toward green windows."""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import BitStream, Partition, ScaleSchedule
from .errors import ContractError, DomainError, NumericError, StreamError


class LogitSource(ABC):
    """Supplies the logit pair (l0, l1) for each bit in generation order.

    Generation order is scale-major, then token, then bit. Sources whose
    logits do not depend on already sampled bits may also implement
    :meth:`scale_logits`, which lets the embedder run a whole scale through
    the compiled kernel.
    """

    @abstractmethod
    def next_logits(self, scale_index: int, token_index: int, bit_index: int,
                    context_bits: np.ndarray) -> tuple:
        ...

    def scale_logits(self, scale_index: int, r: int, m: int):
        """Return ``(l0, l1)`` arrays of length r*m, or None if context-dependent."""
        return None


class ConstantLogitSource(LogitSource):
    """Same logits for every bit. ``ConstantLogitSource()`` gives uniform bits."""

    def __init__(self, l0: float = 0.0, l1: float = 0.0):
        if not (math.isfinite(l0) and math.isfinite(l1)):
            raise NumericError("logits must be finite")
        self.l0 = float(l0)
        self.l1 = float(l1)

    def next_logits(self, scale_index, token_index, bit_index, context_bits):
        return self.l0, self.l1

    def scale_logits(self, scale_index, r, m):
        return np.full(r * m, self.l0), np.full(r * m, self.l1)


class ArrayLogitSource(LogitSource):
    """Replays a fixed list of per-scale logit arrays, strictly in order.

    ``logits[i]`` has shape (r_i * m, 2). Reading past the end or out of
    order raises :class:`StreamError`.
    """

    def __init__(self, logits):
        self._logits = [np.asarray(a, dtype=np.float64) for a in logits]
        self._cursor = (0, 0)

    def next_logits(self, scale_index, token_index, bit_index, context_bits):
        pos = len(context_bits)
        if (scale_index, pos) != self._cursor:
            raise StreamError(f"out-of-order read at scale {scale_index}, bit {pos}")
        if scale_index >= len(self._logits) or pos >= len(self._logits[scale_index]):
            raise StreamError(f"logit source exhausted at scale {scale_index}, bit {pos}")
        arr = self._logits[scale_index]
        self._cursor = (scale_index, pos + 1) if pos + 1 < len(arr) else (scale_index + 1, 0)
        return float(arr[pos, 0]), float(arr[pos, 1])


@dataclass(frozen=True)
class EmbedConfig:
    delta: float
    partition: Partition
    rng_seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.delta) or self.delta < 0:
            raise DomainError(f"delta must be finite and >= 0, got {self.delta}")


def _softmax2(a0: float, a1: float) -> tuple:
    """Softmax of a logit pair with the larger logit subtracted.

    Written in terms of the gap so it matches the compiled kernels exactly.
    """
    d = a1 - a0
    if d >= 0:
        e = math.exp(-d)
        return e / (1.0 + e), 1.0 / (1.0 + e)
    e = math.exp(d)
    return 1.0 / (1.0 + e), e / (1.0 + e)


def bias_probability(logits, prefix: int, partition: Partition, delta: float) -> tuple:
    """Probabilities (p0, p1) after adding ``delta`` to the green-completing bit."""
    l0, l1 = (float(x) for x in logits)
    if not (math.isfinite(l0) and math.isfinite(l1)):
        raise NumericError(f"non-finite logits {logits!r}")
    if not 0 <= prefix < (1 << (partition.n - 1)):
        raise DomainError(f"prefix {prefix} outside [0, {1 << (partition.n - 1)})")
    completions = partition.green_completions(prefix)
    if len(completions) != 1:
        raise ContractError(
            f"prefix {prefix:0{max(partition.n - 1, 1)}b} has {len(completions)} green completions")
    if completions[0] == 1:
        return _softmax2(l0, l1 + delta)
    return _softmax2(l0 + delta, l1)


def sample_bit(probabilities, rng: np.random.Generator) -> int:
    p0, p1 = (float(x) for x in probabilities)
    if not (0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0) or abs(p0 + p1 - 1.0) > 1e-9:
        raise NumericError(f"invalid distribution ({p0}, {p1})")
    return int(rng.random() < p1)


def bias_tables(partition: Partition, delta: float) -> tuple:
    """Per-prefix logit offsets for bit 0 and bit 1.

    For an effective partition exactly one entry per prefix is ``delta``.
    Ineffective prefixes get delta on every green completion, which cancels
    when both are green and does nothing when neither is.
    """
    size = 1 << (partition.n - 1)
    bias0 = np.zeros(size)
    bias1 = np.zeros(size)
    for prefix in range(size):
        if (prefix << 1) in partition.green:
            bias0[prefix] = delta
        if (prefix << 1) | 1 in partition.green:
            bias1[prefix] = delta
    return bias0, bias1


def _sample_scale_per_bit(source, i, r, m, n, u, bias0, bias1):
    bits = np.zeros(r * m, dtype=np.uint8)
    pmask = (1 << (n - 1)) - 1
    for t in range(r):
        prefix = 0
        for j in range(m):
            c = t * m + j
            l0, l1 = source.next_logits(i, t, j, bits[:c])
            if not (math.isfinite(l0) and math.isfinite(l1)):
                raise NumericError(f"non-finite logits at scale {i}, token {t}, bit {j}")
            if j >= n - 1:
                l0 += bias0[prefix]
                l1 += bias1[prefix]
            bits[c] = u[c] < _softmax2(l0, l1)[1]
            prefix = ((prefix << 1) | int(bits[c])) & pmask
    return bits


def embed_stream(source: LogitSource, schedule: ScaleSchedule, config: EmbedConfig) -> BitStream:
    """Sample a full multi-scale bit stream with the watermark bias applied.

    The first n-1 bits of every token are sampled from the plain softmax;
    bits n..m use the preceding n-1 bits of the same token as prefix. One
    uniform draw is consumed per bit in generation order, so ``delta=0``
    reproduces unwatermarked sampling exactly.
    """
    part = config.partition
    n, m = part.n, schedule.m
    if m < n:
        raise DomainError(f"token of {m} bits cannot hold a window of {n} bits")
    if not part.effective:
        warnings.warn(f"ineffective partition {{{part.label()}}}: bias is partly void",
                      stacklevel=2)
    bias0, bias1 = bias_tables(part, float(config.delta))
    rng = np.random.default_rng(config.rng_seed)
    scales = []
    for i, r in enumerate(schedule.tokens_per_scale):
        u = rng.random(r * m)
        bulk = source.scale_logits(i, r, m)
        if bulk is None:
            bits = _sample_scale_per_bit(source, i, r, m, n, u, bias0, bias1)
        else:
            l0, l1 = (np.ascontiguousarray(a, dtype=np.float64) for a in bulk)
            if l0.shape != (r * m,) or l1.shape != (r * m,):
                raise StreamError(f"source returned wrong logit count for scale {i}")
            if not (np.isfinite(l0).all() and np.isfinite(l1).all()):
                raise NumericError(f"non-finite logits in scale {i}")
            bits = kernels.sample_scale(l0, l1, u, bias0, bias1, r, m, n)
        scales.append(bits)
    return BitStream(schedule, tuple(scales))


def embed_single_scale(source: LogitSource, r: int, m: int, config: EmbedConfig) -> BitStream:
    return embed_stream(source, ScaleSchedule((r,), m), config)
