"""Numpy fallback for the compiled kernels.

Loops run over bit positions within a token and vectorise across tokens,
which is valid because windows never cross token boundaries.
"""

import numpy as np


def sample_scale(l0, l1, u, bias0, bias1, r, m, n):
    l0 = np.asarray(l0, dtype=np.float64).reshape(r, m)
    l1 = np.asarray(l1, dtype=np.float64).reshape(r, m)
    u = np.asarray(u, dtype=np.float64).reshape(r, m)
    bias0 = np.asarray(bias0, dtype=np.float64)
    bias1 = np.asarray(bias1, dtype=np.float64)
    bits = np.empty((r, m), dtype=np.uint8)
    prefix = np.zeros(r, dtype=np.int64)
    pmask = (1 << (n - 1)) - 1
    for j in range(m):
        if j >= n - 1:
            d = (l1[:, j] + bias1[prefix]) - (l0[:, j] + bias0[prefix])
        else:
            d = l1[:, j] - l0[:, j]
        # softmax of the pair with the larger logit subtracted
        e = np.exp(-np.abs(d))
        p1 = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        bits[:, j] = u[:, j] < p1
        prefix = ((prefix << 1) | bits[:, j]) & pmask
    return bits.reshape(-1)


def _windows(bits, n):
    """(r, k) array of window values for an (r, m) bit array."""
    r, m = bits.shape
    k = m - n + 1
    vals = np.zeros((r, k), dtype=np.int64)
    for i in range(n):
        vals = (vals << 1) | bits[:, i:i + k]
    return vals


def count_scale(bits, r, m, n, mask):
    bits = np.asarray(bits, dtype=np.uint8).reshape(r, m)
    mask = np.asarray(mask, dtype=np.uint8)
    return int(mask[_windows(bits, n)].sum(dtype=np.int64))


def flip_scan(bits, r, m, n, mask, u, p):
    """Sequential green-window flipping, in place on ``bits``."""
    view = np.asarray(bits).reshape(r, m)
    mask = np.asarray(mask, dtype=bool)
    k = m - n + 1
    u = np.asarray(u, dtype=np.float64).reshape(r, k)
    flips = 0
    for w in range(k):
        end = w + n - 1
        window = np.zeros(r, dtype=np.int64)
        for i in range(w, end + 1):
            window = (window << 1) | view[:, i]
        hit = mask[window] & (u[:, w] < p)
        view[:, end] ^= hit.astype(np.uint8)
        flips += int(hit.sum())
    return flips
