"""BMK1 stream files.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"BMK1"
    4       1     version (1)
    5       1     n, window length the stream was made for
    6       1     m, bits per token
    7       2     K, number of scales (u16)
    9       4*K   tokens per scale (u32 each)
    ...           per scale: ceil(r_i*m / 8) bytes of packed bits

Bits are packed LSB-first within each byte. Each scale is padded with zero
bits to a byte boundary, so equal streams give equal files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import BitStream, ScaleSchedule
from .errors import DomainError, StructureError

MAGIC = b"BMK1"
VERSION = 1
_FIXED = struct.Struct("<4sBBBH")


def encode(stream: BitStream, n: int = 2) -> bytes:
    sched = stream.schedule
    if not 1 <= n <= 255 or not 1 <= sched.m <= 255:
        raise DomainError("n and m must fit in one byte")
    if sched.K > 0xFFFF or any(r > 0xFFFFFFFF for r in sched.tokens_per_scale):
        raise DomainError("schedule too large for BMK1")
    parts = [_FIXED.pack(MAGIC, VERSION, n, sched.m, sched.K),
             struct.pack(f"<{sched.K}I", *sched.tokens_per_scale)]
    parts.extend(np.packbits(bits, bitorder="little").tobytes() for bits in stream.scales)
    return b"".join(parts)


def decode(data: bytes):
    """Parse a BMK1 buffer. Returns ``(stream, n)``."""
    if len(data) < _FIXED.size:
        raise StructureError(f"file too short for header ({len(data)} bytes)")
    magic, version, n, m, K = _FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise StructureError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StructureError(f"unsupported version {version}")
    if n < 1 or m < 1 or K < 1:
        raise StructureError(f"invalid header n={n} m={m} K={K}")
    offset = _FIXED.size
    if len(data) < offset + 4 * K:
        raise StructureError("truncated scale table")
    tokens = struct.unpack_from(f"<{K}I", data, offset)
    offset += 4 * K
    if any(r < 1 for r in tokens):
        raise StructureError("scale with zero tokens")
    sizes = [(r * m + 7) // 8 for r in tokens]
    if len(data) != offset + sum(sizes):
        raise StructureError(
            f"payload is {len(data) - offset} bytes, header declares {sum(sizes)}")
    scales = []
    for r, size in zip(tokens, sizes):
        raw = np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)
        bits = np.unpackbits(raw, bitorder="little")
        nbits = r * m
        if bits[nbits:].any():
            raise StructureError("non-zero padding bits")
        scales.append(bits[:nbits].copy())
        offset += size
    return BitStream(ScaleSchedule(tokens, m), tuple(scales)), n


def write_stream(path, stream: BitStream, n: int = 2) -> None:
    Path(path).write_bytes(encode(stream, n))


def read_stream(path):
    return decode(Path(path).read_bytes())
