"""Counter-based random streams.

Every uniform variate is a pure function of ``(master_seed, stream_id, tag,
position, attempt)``.  Replica ``r`` of a Monte Carlo batch owns stream
``r``, so batches come out identical no matter how replicas are chunked or
spread over workers.

The block function is Philox4x64-10 (Salmon et al., SC'11), evaluated with
numpy over arrays of keys and counters.  For a fixed key it reproduces
``numpy.random.Philox`` bit for bit (see ``tests/test_rng.py``).
"""

from __future__ import annotations

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_M0 = 0xD2E7470EE14C6C93
_M1 = 0xCA5A826395121157
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_ROUNDS = 10

# stream tags; each variate family reads its own counter plane
TAG_XI = 0  # i.i.d. draws from the law
TAG_XI_TAIL = 1  # rejection attempts for the Zipf tail
TAG_POISSON_NT = 2  # N_t in the coupled simulator
TAG_HEAD = 3  # head Bernoullis in the Poissonized simulator
TAG_BLOCK_COUNT = 4  # Poisson point count for the middle block
TAG_BLOCK_INDEX = 5  # positions of those points
TAG_TAIL = 6  # Poisson count standing in for the far tail
TAG_CONTROL = 7  # control streams (e.g. standard normals)


def _mulhilo(m: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m_lo = np.uint64(m & 0xFFFFFFFF)
    m_hi = np.uint64(m >> 32)
    x_lo = x & _MASK32
    x_hi = x >> _SHIFT32
    ll = x_lo * m_lo
    lh = x_lo * m_hi
    hl = x_hi * m_lo
    hh = x_hi * m_hi
    mid = (ll >> _SHIFT32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _SHIFT32) + (hl >> _SHIFT32) + (mid >> _SHIFT32)
    lo = x * np.uint64(m)
    return hi, lo


def philox4x64(counter: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Philox4x64-10 on ``counter`` (..., 4) with ``key`` (..., 2), uint64."""
    c = np.asarray(counter, dtype=np.uint64)
    k = np.asarray(key, dtype=np.uint64)
    shape = np.broadcast_shapes(c.shape[:-1], k.shape[:-1])
    c = np.broadcast_to(c, shape + (4,))
    k = np.broadcast_to(k, shape + (2,))
    x0, x1, x2, x3 = (c[..., j].copy() for j in range(4))
    k0 = k[..., 0].copy()
    k1 = k[..., 1].copy()
    with np.errstate(over="ignore"):
        for r in range(_ROUNDS):
            if r:
                k0 += _W0
                k1 += _W1
            hi0, lo0 = _mulhilo(_M0, x0)
            hi1, lo1 = _mulhilo(_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
    return np.stack([x0, x1, x2, x3], axis=-1)


def _to_unit(words: np.ndarray) -> np.ndarray:
    # 53 high bits -> [0, 1), as numpy's Generator.random does
    return (words >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _keys(master_seed: int, streams: np.ndarray) -> np.ndarray:
    streams = np.asarray(streams, dtype=np.uint64)
    key = np.empty(streams.shape + (2,), dtype=np.uint64)
    key[..., 0] = np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF)
    key[..., 1] = streams
    return key


def block_uniforms(master_seed: int, streams, blocks, tag: int, attempt=0) -> np.ndarray:
    """Four uniforms per element from counter ``(block, tag, attempt, 0)``.

    ``streams``, ``blocks`` and ``attempt`` broadcast together; the result has
    their broadcast shape plus a trailing axis of length 4.
    """
    streams, blocks, attempt = np.broadcast_arrays(
        np.asarray(streams, dtype=np.uint64),
        np.asarray(blocks, dtype=np.uint64),
        np.asarray(attempt, dtype=np.uint64),
    )
    ctr = np.zeros(streams.shape + (4,), dtype=np.uint64)
    ctr[..., 0] = blocks
    ctr[..., 1] = np.uint64(tag)
    ctr[..., 2] = attempt
    return _to_unit(philox4x64(ctr, _keys(master_seed, streams)))


def stream_uniforms(master_seed: int, streams, tag: int, start: int, count: int) -> np.ndarray:
    """Uniforms at word positions ``start .. start+count-1`` of each stream.

    Returns an array of shape ``(len(streams), count)``.  Word ``w`` lives in
    block ``w // 4``, lane ``w % 4``, so any window of the same stream agrees
    with any other window on their overlap.
    """
    streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
    if count <= 0:
        return np.empty((streams.size, 0))
    b0 = start // 4
    b1 = (start + count - 1) // 4 + 1
    blocks = np.arange(b0, b1, dtype=np.uint64)
    u = block_uniforms(master_seed, streams[:, None], blocks[None, :], tag)
    u = u.reshape(streams.size, -1)
    off = start - 4 * b0
    return u[:, off : off + count]


class RngState:
    """A single-owner cursor over one ``(master_seed, stream_id)`` stream.

    Two states built from the same pair produce identical sequences; distinct
    stream ids give independent streams.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        if not (0 <= master_seed < 2**64 and 0 <= stream_id < 2**64):
            raise ValueError("master_seed and stream_id must be 64-bit unsigned integers")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.position = 0

    def __repr__(self):
        return f"RngState(master_seed={self.master_seed}, stream_id={self.stream_id}, position={self.position})"

    def uniforms(self, count: int, tag: int = TAG_XI) -> np.ndarray:
        u = stream_uniforms(self.master_seed, [self.stream_id], tag, self.position, count)[0]
        self.position += count
        return u
