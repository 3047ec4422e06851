"""Pure-NumPy fallback for the hot kernels.

Mirrors the compiled extension operation-for-operation in float32 so that
both backends produce bit-identical distances: squared differences per
component, chunk sums accumulated left to right inside each w-wide chunk,
chunk sums folded block by block into an m-wide accumulator, accumulator
summed left to right.
"""

from __future__ import annotations

import numpy as np

NAME = "purepy"


def staged_block(queries: np.ndarray, vectors: np.ndarray, w: int, m: int,
                 out: np.ndarray) -> np.ndarray:
    """Staged squared-L2 between every query row and every vector row.

    All three arrays are C-contiguous float32; ``out`` has shape
    (len(queries), len(vectors)). Tail chunks and tail accumulator blocks are
    implicitly zero-padded, which adds +0.0f and leaves float32 sums
    bit-identical to explicit padding.
    """
    n_queries, d = queries.shape
    n_vectors = vectors.shape[0]
    r = -(-d // w)           # chunks per vector
    r_prime = -(-r // m)     # accumulator activations
    for qi in range(n_queries):
        diff = queries[qi] - vectors
        np.multiply(diff, diff, out=diff)
        # chunk sums: position u of every chunk lands at column u::w, so
        # adding those strided columns in u order is the in-chunk
        # left-to-right accumulation.
        chunks = np.zeros((n_vectors, r), dtype=np.float32)
        for u in range(w):
            cols = diff[:, u::w]
            chunks[:, : cols.shape[1]] += cols
        # fold chunk sums into the m-wide accumulator, one block at a time
        acc = np.zeros((n_vectors, m), dtype=np.float32)
        for b in range(r_prime):
            seg = chunks[:, b * m : (b + 1) * m]
            acc[:, : seg.shape[1]] += seg
        # final left-to-right reduction of the accumulator
        total = np.zeros(n_vectors, dtype=np.float32)
        for u in range(m):
            total += acc[:, u]
        out[qi, :] = total
    return out


def queue_push_batch(dists: np.ndarray, ids: np.ndarray, cand_d: np.ndarray,
                     cand_i: np.ndarray) -> int:
    """Insert candidates into the sorted queue arrays, in push order, in place.

    ``dists``/``ids`` are the ascending queue state (float64/int64, length k,
    empty slots hold +inf / SENTINEL). A candidate enters only under a strict
    compare against the current worst; an entering pair lands at the upper
    bound of its distance, so it sits after every stored equal distance.
    Returns how many candidates entered.
    """
    k = dists.shape[0]
    worst = dists[k - 1]
    inserted = 0
    # prefilter against the threshold at call time; survivors are recheck'd
    # because each insertion tightens the threshold
    for t in np.flatnonzero(cand_d < worst):
        v = cand_d[t]
        if not v < dists[k - 1]:
            continue
        pos = int(np.searchsorted(dists, v, side="right"))
        dists[pos + 1 :] = dists[pos : k - 1]
        ids[pos + 1 :] = ids[pos : k - 1]
        dists[pos] = v
        ids[pos] = cand_i[t]
        inserted += 1
    return inserted
