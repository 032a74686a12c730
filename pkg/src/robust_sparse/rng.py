"""Deterministic random streams built on the Philox counter-based generator.

Every dataset and every randomized procedure in this package draws from a
Philox4x64-10 bit generator keyed by ``(seed, stream_id)``.  Philox is
counter-based, so any stream can be opened independently of the others:
chunk ``c`` of a dataset is regenerable without producing chunks
``0..c-1`` first.  This is what makes the virtual (never materialized)
datasets byte-reproducible and lets very large sample matrices be
streamed twice at identical content.

Stream id layout:

* ``0 .. 2**48``      sample chunks (chunk index within one dataset)
* ``META_STREAM``     dataset-level parameter draws (sparse supports,
                      adversary directions, cluster centers)
* ``ALG_STREAM``      algorithm-internal draws (interval centers etc.)

Chunks are ``CHUNK_ROWS`` rows wide; the constant is part of the stream
contract, changing it changes generated bytes.
"""

from __future__ import annotations

import numpy as np

CHUNK_ROWS = 131072

META_STREAM = 1 << 62
ALG_STREAM = (1 << 62) + 1


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Open the (seed, stream_id) Philox stream."""
    key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(stream_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def chunk_stream(seed: int, chunk_index: int) -> np.random.Generator:
    if chunk_index < 0 or chunk_index >= (1 << 48):
        raise ValueError(f"chunk index {chunk_index} out of range")
    return stream(seed, chunk_index)


def n_chunks(n: int) -> int:
    return (n + CHUNK_ROWS - 1) // CHUNK_ROWS
