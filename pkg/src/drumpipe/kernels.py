"""Dispatch layer for the hot numeric kernels.

The numba fast path is used when numba imports cleanly; set DRUMPIPE_NUMBA=0
(or "false"/"off"/"no") to force the pure-numpy fallback. `BACKEND` records
which path is active.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_numpy

_FALSEY = {"0", "false", "off", "no"}


def _select_backend():
    if os.environ.get("DRUMPIPE_NUMBA", "").strip().lower() in _FALSEY:
        return _kernels_numpy
    try:
        from . import _kernels_numba
        return _kernels_numba
    except ImportError:
        return _kernels_numpy


_impl = _select_backend()
BACKEND: str = _impl.BACKEND_NAME


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit costs) between strings."""
    ca = np.fromiter(map(ord, a), dtype=np.int32, count=len(a))
    cb = np.fromiter(map(ord, b), dtype=np.int32, count=len(b))
    return int(_impl.levenshtein(ca, cb))


def resample(x: np.ndarray, src_rate: int, dst_rate: int, half_width: int = 32) -> np.ndarray:
    """Windowed-sinc resampling of a mono float64 signal."""
    if src_rate <= 0 or dst_rate <= 0:
        raise ValueError("sample rates must be positive")
    return _impl.resample_sinc(np.ascontiguousarray(x, dtype=np.float64), src_rate, dst_rate, half_width)


def mix_events(out: np.ndarray, events: list[tuple[int, np.ndarray, float]]) -> None:
    """Overlap-add (dest_index, samples, gain) events into `out` in place.

    `out` and all sample arrays are float64; samples past the end of `out`
    are truncated. Event order is preserved, so results are bit-stable
    across backends.
    """
    if not events:
        return
    lengths = np.array([e[1].shape[0] for e in events], dtype=np.int64)
    offsets = np.zeros(len(events), dtype=np.int64)
    np.cumsum(lengths[:-1], out=offsets[1:])
    data = np.concatenate([np.ascontiguousarray(e[1], dtype=np.float64) for e in events])
    dests = np.array([e[0] for e in events], dtype=np.int64)
    gains = np.array([e[2] for e in events], dtype=np.float64)
    _impl.mix_events(out, data, offsets, lengths, dests, gains)
