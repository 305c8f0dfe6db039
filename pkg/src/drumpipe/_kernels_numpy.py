"""Pure-numpy implementations of the hot kernels (fallback path).

Same contracts as `_kernels_numba`; selected when numba is unavailable or
disabled via DRUMPIPE_NUMBA=0.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

_BLOCK = 8192


def levenshtein(a: np.ndarray, b: np.ndarray) -> int:
    """Edit distance between two int32 code arrays via row-vectorized DP."""
    la, lb = a.shape[0], b.shape[0]
    if la == 0:
        return int(lb)
    if lb == 0:
        return int(la)
    idx = np.arange(lb + 1)
    prev = idx.copy()
    for i in range(la):
        cur = np.empty(lb + 1, dtype=np.int64)
        cur[0] = i + 1
        cur[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (b != a[i]))
        # propagate left-to-right insertions: cur[j] <= cur[j-1] + 1
        cur = np.minimum.accumulate(cur - idx) + idx
        prev = cur
    return int(prev[lb])


def resample_sinc(x: np.ndarray, src_rate: int, dst_rate: int, half_width: int = 32) -> np.ndarray:
    """Windowed-sinc rate conversion of a float64 signal.

    Hann-windowed sinc with cutoff at the lower of the two Nyquist rates;
    `half_width` is the kernel half-width in zero crossings at that cutoff.
    """
    if src_rate == dst_rate:
        return x.copy()
    ratio = dst_rate / src_rate
    n_in = x.shape[0]
    n_out = int(round(n_in * ratio))
    scale = min(1.0, ratio)
    taps = int(np.ceil(half_width / scale))
    out = np.zeros(n_out)
    k_rel = np.arange(-taps, taps + 1)
    for j0 in range(0, n_out, _BLOCK):
        j = np.arange(j0, min(j0 + _BLOCK, n_out))
        pos = j / ratio
        k = np.floor(pos).astype(np.int64)[:, None] + k_rel[None, :]
        t = (pos[:, None] - k) * scale
        u = t / half_width
        window = np.where(np.abs(u) < 1.0, 0.5 + 0.5 * np.cos(np.pi * u), 0.0)
        weights = scale * np.sinc(t) * window
        valid = (k >= 0) & (k < n_in)
        samples = np.where(valid, x[np.clip(k, 0, n_in - 1)], 0.0)
        out[j] = np.einsum("ij,ij->i", samples, weights)
    return out


def mix_events(
    out: np.ndarray,
    data: np.ndarray,
    offsets: np.ndarray,
    lengths: np.ndarray,
    dests: np.ndarray,
    gains: np.ndarray,
) -> None:
    """Overlap-add event audio into `out` (float64, in place).

    Event i is data[offsets[i]:offsets[i]+lengths[i]], scaled by gains[i],
    placed at dests[i]; anything past the end of `out` is truncated.
    """
    n_out = out.shape[0]
    for i in range(dests.shape[0]):
        d0 = int(dests[i])
        n = min(int(lengths[i]), n_out - d0)
        if n <= 0:
            continue
        o0 = int(offsets[i])
        out[d0 : d0 + n] += gains[i] * data[o0 : o0 + n]
