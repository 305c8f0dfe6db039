"""Numba-compiled implementations of the hot kernels (fast path).

Importing this module requires numba; `drumpipe.kernels` falls back to the
numpy twin when the import fails or DRUMPIPE_NUMBA=0 is set.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def levenshtein(a: np.ndarray, b: np.ndarray) -> int:
    la = a.shape[0]
    lb = b.shape[0]
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = np.arange(lb + 1)
    cur = np.empty(lb + 1, dtype=np.int64)
    for i in range(la):
        cur[0] = i + 1
        for j in range(1, lb + 1):
            best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            sub = prev[j - 1] + (0 if a[i] == b[j - 1] else 1)
            if sub < best:
                best = sub
            cur[j] = best
        prev, cur = cur, prev
    return prev[lb]


@njit(cache=True)
def _sinc(t: float) -> float:
    if t == 0.0:
        return 1.0
    pt = math.pi * t
    return math.sin(pt) / pt


@njit(cache=True)
def resample_sinc(x: np.ndarray, src_rate: int, dst_rate: int, half_width: int = 32) -> np.ndarray:
    if src_rate == dst_rate:
        return x.copy()
    ratio = dst_rate / src_rate
    n_in = x.shape[0]
    n_out = int(round(n_in * ratio))
    scale = min(1.0, ratio)
    taps = int(math.ceil(half_width / scale))
    out = np.zeros(n_out)
    for j in range(n_out):
        pos = j / ratio
        center = int(math.floor(pos))
        acc = 0.0
        for k in range(center - taps, center + taps + 2):
            if k < 0 or k >= n_in:
                continue
            t = (pos - k) * scale
            u = t / half_width
            if u <= -1.0 or u >= 1.0:
                continue
            window = 0.5 + 0.5 * math.cos(math.pi * u)
            acc += x[k] * scale * _sinc(t) * window
        out[j] = acc
    return out


@njit(cache=True)
def mix_events(
    out: np.ndarray,
    data: np.ndarray,
    offsets: np.ndarray,
    lengths: np.ndarray,
    dests: np.ndarray,
    gains: np.ndarray,
) -> None:
    n_out = out.shape[0]
    for i in range(dests.shape[0]):
        d0 = dests[i]
        n = lengths[i]
        if n_out - d0 < n:
            n = n_out - d0
        if n <= 0:
            continue
        o0 = offsets[i]
        g = gains[i]
        for j in range(n):
            out[d0 + j] += g * data[o0 + j]
