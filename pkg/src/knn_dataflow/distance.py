"""Squared Euclidean distance, staged the way the streaming scan computes it.

The reference value is a single left-to-right float32 accumulation over all
d squared differences. The staged pipeline reorders that sum in three steps:

1. partial distances: the vector is cut into ``r = ceil(d / w)`` chunks of
   ``w`` components (tail zero-padded) and each chunk is summed left to
   right;
2. accumulation: chunk sums are folded, ``m`` at a time over
   ``r' = ceil(r / m)`` activations, into an m-wide accumulator (tail block
   zero-padded);
3. full add: the accumulator is summed left to right.

Zero padding adds +0.0f, so it never changes a float32 sum; the reordering
itself can, which is why staged and reference values agree only to about
1e-5 relative. Only squared L2 is implemented: the metric lives entirely in
the squared-difference term inside ``partial_distances`` (and the kernels'
inner loop); everything after that point just sums terms, so swapping the
term swaps the metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import DimensionMismatch, VectorRecord

#: Components fetched per read: 16 float32 = one 64-byte line.
DEFAULT_CHUNK_WIDTH = 16
#: Accumulator length; chosen to cover the latency of a pipelined adder.
DEFAULT_ACC_WIDTH = 8


class WrongBlockCount(ValueError):
    """The accumulator was fed a different number of blocks than promised."""

    def __init__(self, got: int, expected: int):
        super().__init__(f"expected {expected} accumulator blocks, got {got}")
        self.got = got
        self.expected = expected


@dataclass(frozen=True)
class DistanceStagingParams:
    """Shape of the staged pipeline: chunk width w, accumulator width m."""

    w: int = DEFAULT_CHUNK_WIDTH
    m: int = DEFAULT_ACC_WIDTH

    def __post_init__(self):
        if self.w < 1:
            raise ValueError(f"chunk width w must be >= 1, got {self.w}")
        if self.m < 1:
            raise ValueError(f"accumulator width m must be >= 1, got {self.m}")

    def num_chunks(self, d: int) -> int:
        """r = ceil(d / w) for a d-component vector."""
        return -(-d // self.w)

    def num_blocks(self, d: int) -> int:
        """r' = ceil(r / m): accumulator activations for a d-component vector."""
        return -(-self.num_chunks(d) // self.m)


def _components(v) -> np.ndarray:
    if isinstance(v, VectorRecord):
        return v.values
    arr = np.asarray(v, dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


def _pair(q, x) -> tuple[np.ndarray, np.ndarray]:
    qa, xa = _components(q), _components(x)
    if qa.shape[0] != xa.shape[0]:
        raise DimensionMismatch(
            f"query has {qa.shape[0]} components, vector has {xa.shape[0]}"
        )
    return qa, xa


def direct_sq_l2(q, x) -> float:
    """Reference squared L2: one left-to-right float32 accumulation."""
    qa, xa = _pair(q, x)
    if qa.shape[0] == 0:
        return 0.0
    diff = qa - xa
    sq = diff * diff
    return float(np.add.accumulate(sq)[-1])


def partial_distances(q, x, params: DistanceStagingParams = DistanceStagingParams()) -> np.ndarray:
    """Per-chunk squared-difference sums: float32 array of length r.

    Chunk t covers components [t*w, (t+1)*w); the tail chunk is zero-padded.
    """
    qa, xa = _pair(q, x)
    d = qa.shape[0]
    r = params.num_chunks(d)
    diff = qa - xa
    sq = diff * diff
    padded = np.zeros(r * params.w, dtype=np.float32)
    padded[:d] = sq
    by_chunk = padded.reshape(r, params.w)
    sums = np.zeros(r, dtype=np.float32)
    for u in range(params.w):
        sums += by_chunk[:, u]
    return sums


def vector_add_accumulate(chunk_blocks, r_prime: int) -> np.ndarray:
    """Fold m-length blocks of chunk sums into the m-wide accumulator.

    ``chunk_blocks`` is a sequence of r' float32 blocks, all of one length m
    (the last block zero-padded by the caller). Accumulation is B = B + A per
    activation, per lane. Raises WrongBlockCount if the block count is not
    r_prime.
    """
    blocks = [np.asarray(b, dtype=np.float32) for b in chunk_blocks]
    if len(blocks) != r_prime:
        raise WrongBlockCount(len(blocks), r_prime)
    if not blocks:
        raise ValueError("accumulator needs at least one block")
    m = blocks[0].shape[0]
    acc = np.zeros(m, dtype=np.float32)
    for block in blocks:
        if block.ndim != 1 or block.shape[0] != m:
            raise ValueError("all accumulator blocks must share one length m")
        acc += block
    return acc


def full_add(values) -> float:
    """Left-to-right float32 sum of the accumulator."""
    vals = np.asarray(values, dtype=np.float32).ravel()
    total = np.float32(0.0)
    for v in vals:
        total = total + v
    return float(total)


def staged_distance(q, x, params: DistanceStagingParams = DistanceStagingParams()) -> float:
    """Squared L2 through the full staged pipeline (chunks, accumulator, sum)."""
    qa, xa = _pair(q, x)
    d = qa.shape[0]
    chunks = partial_distances(qa, xa, params)
    r_prime = params.num_blocks(d)
    if r_prime == 0:
        return 0.0
    padded = np.zeros(r_prime * params.m, dtype=np.float32)
    padded[: chunks.shape[0]] = chunks
    acc = vector_add_accumulate(padded.reshape(r_prime, params.m), r_prime)
    return full_add(acc)


def staged_distance_block(
    queries: np.ndarray,
    vectors: np.ndarray,
    params: DistanceStagingParams = DistanceStagingParams(),
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Staged squared L2 for every (query row, vector row) pair.

    The batch form of ``staged_distance``: same float32 operation order, one
    kernel call. Returns (and fills, if ``out`` is given) a float32 array of
    shape (len(queries), len(vectors)).
    """
    q = np.ascontiguousarray(queries, dtype=np.float32)
    x = np.ascontiguousarray(vectors, dtype=np.float32)
    if q.ndim != 2 or x.ndim != 2:
        raise ValueError("queries and vectors must be 2-d matrices")
    if q.shape[1] != x.shape[1]:
        raise DimensionMismatch(
            f"queries have {q.shape[1]} components, vectors have {x.shape[1]}"
        )
    if out is None:
        out = np.empty((q.shape[0], x.shape[0]), dtype=np.float32)
    elif (
        out.shape != (q.shape[0], x.shape[0])
        or out.dtype != np.float32
        or not out.flags.c_contiguous
    ):
        raise ValueError("out must be a C-contiguous float32 (n_queries, n_vectors) array")
    if q.shape[0] == 0 or x.shape[0] == 0:
        return out
    _backend.active().staged_block(q, x, params.w, params.m, out)
    return out
