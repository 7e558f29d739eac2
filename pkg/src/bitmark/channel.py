"""Bit-flip channels and the adaptive green-window flipping attack.

Pixel-space attacks are not modelled; each one is stood in for by a binary
symmetric channel (BSC) with per-scale flip rates. Apart from the
re-encoding preset, the rates below are synthetic: they are picked so
that stronger attacks flip more bits, and nothing more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import BitStream, Partition
from .errors import ConfigError, ContractError, DomainError, UnsupportedError

# Fraction of bits changed by decode -> re-encode, per scale, 13-scale schedule.
REENCODE_INFINITY_2B = (0.068, 0.132, 0.145, 0.200, 0.226, 0.247, 0.239,
                        0.277, 0.279, 0.264, 0.319, 0.328, 0.212)


def compose_rates(a: float, b: float) -> float:
    """Flip rate of two independent BSCs in series."""
    return a + b * (1.0 - 2.0 * a)


def _layered(extra: float) -> tuple:
    return tuple(compose_rates(r, extra) for r in REENCODE_INFINITY_2B)


# name -> (per-scale rates, description)
PRESETS = {
    "identity": ((0.0,) * 13, "no channel"),
    "reencode-infinity2b": (REENCODE_INFINITY_2B, "decode/re-encode loss (measured rates)"),
    "jpeg": (_layered(0.01), "re-encode + 1% extra flips (synthetic)"),
    "blur": (_layered(0.02), "re-encode + 2% extra flips (synthetic)"),
    "noise-weak": (_layered(0.03), "re-encode + 3% extra flips (synthetic)"),
    "color": (_layered(0.05), "re-encode + 5% extra flips (synthetic)"),
    "noise-strong": (_layered(0.08), "re-encode + 8% extra flips (synthetic)"),
    "crop": (_layered(0.12), "re-encode + 12% extra flips (synthetic)"),
    "rotate": (_layered(0.25), "re-encode + 25% extra flips (synthetic)"),
}


def preset_table() -> str:
    return "\n".join(f"{name:20s} {desc}" for name, (_, desc) in PRESETS.items())


@dataclass(frozen=True)
class ChannelConfig:
    flip_rates: tuple
    rng_seed: int = 0

    def __post_init__(self):
        rates = tuple(float(r) for r in self.flip_rates)
        for r in rates:
            if not 0.0 <= r <= 0.5:
                raise DomainError(f"flip rate {r} outside [0, 0.5]")
        object.__setattr__(self, "flip_rates", rates)


def preset_config(name: str, K: int, rng_seed: int = 0) -> ChannelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown attack preset {name!r}; known: {', '.join(PRESETS)}")
    rates = PRESETS[name][0]
    if len(rates) != K:
        if len(set(rates)) == 1:
            rates = (rates[0],) * K
        else:
            raise ConfigError(f"preset {name!r} has {len(rates)} scales, stream has {K}")
    return ChannelConfig(rates, rng_seed)


def bsc_apply(stream: BitStream, config: ChannelConfig) -> BitStream:
    """Flip each bit of scale i independently with probability ``flip_rates[i]``."""
    if len(config.flip_rates) != stream.schedule.K:
        raise ConfigError(
            f"{len(config.flip_rates)} flip rates for a {stream.schedule.K}-scale stream")
    rng = np.random.default_rng(config.rng_seed)
    out = []
    for bits, rate in zip(stream.scales, config.flip_rates):
        flips = rng.random(bits.size) < rate
        out.append(bits ^ flips.astype(np.uint8))
    return BitStream(stream.schedule, tuple(out))


def default_reencode(stream: BitStream, rng_seed: int = 0) -> BitStream:
    if stream.schedule.K != len(REENCODE_INFINITY_2B):
        raise ConfigError(
            f"default re-encoding rates cover 13 scales, stream has {stream.schedule.K}")
    return bsc_apply(stream, ChannelConfig(REENCODE_INFINITY_2B, rng_seed))


PARITY_GREEN_LISTS = (frozenset({1, 2}), frozenset({0, 3}))


def is_parity_partition(partition: Partition) -> bool:
    return partition.n == 2 and partition.green in PARITY_GREEN_LISTS


def expected_green_fraction_bsc(f: float, rho: float, partition: Partition) -> float:
    """Green fraction after a BSC of rate ``rho`` on windows with green fraction ``f``.

    A 2-bit parity window changes class iff exactly one of its bits flips.
    """
    if not is_parity_partition(partition):
        raise UnsupportedError("closed form only holds for 2-bit parity partitions")
    if not 0.0 <= f <= 1.0 or not 0.0 <= rho <= 0.5:
        raise DomainError(f"need f in [0, 1] and rho in [0, 0.5], got {f}, {rho}")
    q = 2.0 * rho * (1.0 - rho)
    # f(1-q) + (1-f)q, arranged so f=0.5 and rho=0 are exact
    return f + q * (1.0 - 2.0 * f)


@dataclass(frozen=True)
class FlipperConfig:
    phi: float
    partition: Partition
    rng_seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.phi) or self.phi < 0:
            raise DomainError(f"flip factor must be finite and >= 0, got {self.phi}")


def flip_probability(green_fraction: float, phi: float) -> float:
    return min(max((green_fraction - 0.5) * phi, 0.0), 1.0)


def bit_flipper_attack(stream: BitStream, config: FlipperConfig) -> BitStream:
    """Adaptive removal attack with full knowledge of the green list.

    Per scale, ``p = (C_i / |s_i| - 0.5) * phi`` clamped to [0, 1]. Windows
    are scanned in order; a green window has its last bit flipped with
    probability p, and later windows see the flipped bit. One uniform is
    drawn per window regardless of its class.
    """
    part = config.partition
    if not part.effective:
        raise ContractError("bit flipper needs an effective partition")
    schedule = stream.schedule
    n, m = part.n, schedule.m
    k = m - n + 1
    mask = part.green_mask
    rng = np.random.default_rng(config.rng_seed)
    out = []
    for i, r in enumerate(schedule.tokens_per_scale):
        bits = stream.scales[i].copy()
        u = rng.random(r * k)
        C = kernels.count_scale(bits, r, m, n, mask)
        p = flip_probability(C / (r * k), config.phi)
        if p > 0.0:
            kernels.flip_scan(bits, r, m, n, mask, u, p)
        out.append(bits)
    return BitStream(schedule, tuple(out))
