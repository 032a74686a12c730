"""Sample-matrix plumbing: everything downstream iterates chunks.

A "sample source" is either a plain ndarray or any object exposing

    n_rows() -> int
    n_cols() -> int
    chunks(cols=None) -> iterator of (lo, hi, ndarray)

where lo/hi are row offsets of the yielded block and ``cols`` optionally
restricts to a column subset.  ndarrays get wrapped on the fly, so the
estimator code has a single path for both in-memory matrices and virtual
(regenerated-on-demand) datasets.
"""

from __future__ import annotations

import numpy as np

from .rng import CHUNK_ROWS


def num_rows(samples) -> int:
    if isinstance(samples, np.ndarray):
        return samples.shape[0]
    return samples.n_rows()


def num_cols(samples) -> int:
    if isinstance(samples, np.ndarray):
        return samples.shape[1]
    return samples.n_cols()


def iter_sample_chunks(samples, cols=None):
    """Yield (lo, hi, block) row blocks, optionally column-restricted."""
    if isinstance(samples, np.ndarray):
        n = samples.shape[0]
        for lo in range(0, max(n, 1), CHUNK_ROWS):
            hi = min(lo + CHUNK_ROWS, n)
            if hi <= lo:
                break
            block = samples[lo:hi]
            if cols is not None:
                block = block[:, cols]
            yield lo, hi, block
        return
    yield from samples.chunks(cols=cols)


def head_rows(samples, count: int, cols=None) -> np.ndarray:
    """Materialize the first ``count`` rows (column-restricted) in the
    source dtype.  Stops generating once enough rows are in hand, which
    matters for virtual sources."""
    count = min(count, num_rows(samples))
    width = len(cols) if cols is not None else num_cols(samples)
    dtype = samples.dtype if isinstance(samples, np.ndarray) else         getattr(samples, "dtype", np.float64)
    out = np.empty((count, width), dtype=dtype)
    filled = 0
    for lo, hi, block in iter_sample_chunks(samples, cols=cols):
        take = min(count - filled, hi - lo)
        out[filled:filled + take] = block[:take]
        filled += take
        if filled >= count:
            break
    return out


def gather_rows(samples, idx) -> np.ndarray:
    """Materialize the given (sorted) row indices as float64."""
    idx = np.asarray(idx, dtype=int)
    if isinstance(samples, np.ndarray):
        return np.asarray(samples[idx], dtype=np.float64)
    out = np.empty((idx.size, num_cols(samples)))
    pos = 0
    for lo, hi, block in iter_sample_chunks(samples):
        while pos < idx.size and lo <= idx[pos] < hi:
            out[pos] = block[idx[pos] - lo]
            pos += 1
        if pos >= idx.size:
            break
    return out


def materialize(samples, dtype=None) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return samples if dtype is None else samples.astype(dtype, copy=False)
    blocks = [b if dtype is None else b.astype(dtype, copy=False)
              for _, _, b in iter_sample_chunks(samples)]
    if not blocks:
        return np.empty((0, num_cols(samples)))
    return np.concatenate(blocks, axis=0)


class RangeView:
    """Contiguous row window [lo, hi) of another sample source."""

    def __init__(self, base, lo: int, hi: int):
        n = num_rows(base)
        if not 0 <= lo <= hi <= n:
            raise ValueError("bad row range")
        self.base = base
        self.lo = lo
        self.hi = hi

    def n_rows(self) -> int:
        return self.hi - self.lo

    def n_cols(self) -> int:
        return num_cols(self.base)

    def chunks(self, cols=None):
        for blo, bhi, block in iter_sample_chunks(self.base, cols=cols):
            if bhi <= self.lo:
                continue
            if blo >= self.hi:
                break
            a = max(self.lo, blo) - blo
            b = min(self.hi, bhi) - blo
            yield blo + a - self.lo, blo + b - self.lo, block[a:b]


def split_rows(samples, fraction: float):
    """Split into a leading working part and a trailing holdout part."""
    n = num_rows(samples)
    cut = int(round(fraction * n))
    cut = min(max(cut, 1), n - 1) if n >= 2 else n
    if isinstance(samples, np.ndarray):
        return samples[:cut], samples[cut:]
    return RangeView(samples, 0, cut), RangeView(samples, cut, n)
