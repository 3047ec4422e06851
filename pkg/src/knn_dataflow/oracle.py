"""Brute-force exact k-NN, used to verify engine output.

Deliberately shares no code with the staged pipeline or the queue: distances
come from row-wise float32 cumulative sums and ranking from a single lexsort
(distance first, id to break ties), so an agreement between engine and
oracle checks two independent routes.
"""

from __future__ import annotations

import numpy as np

from .core import DimensionMismatch, KnnResult, VectorRecord, VectorsLike, as_collection


def brute_force_knn(vectors: VectorsLike, query, k: int, *, chunk_rows: int = 4096) -> KnnResult:
    """The k nearest vectors to ``query`` by squared L2, ties to the smaller id.

    Returns min(k, n) neighbors (an anonymous array query gets query_id -1).
    Distances are float32 left-to-right accumulations, matching the
    reference kernel's arithmetic.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    coll = as_collection(vectors)
    if isinstance(query, VectorRecord):
        q_values = query.values
        q_id = query.id
    else:
        q_values = np.asarray(query, dtype=np.float32)
        q_id = -1
    if len(coll) and q_values.shape[0] != coll.d:
        raise DimensionMismatch(
            f"query has {q_values.shape[0]} components, dataset has {coll.d}"
        )
    n = len(coll)
    dists = np.empty(n, dtype=np.float32)
    for start in range(0, n, chunk_rows):
        rows = coll.matrix[start : start + chunk_rows]
        diff = rows - q_values
        np.multiply(diff, diff, out=diff)
        dists[start : start + rows.shape[0]] = np.add.accumulate(diff, axis=1)[:, -1]
    order = np.lexsort((coll.ids, dists))[: min(k, n)]
    return KnnResult(q_id, dists[order].astype(np.float64), coll.ids[order])


def distances_match(candidate, reference, rel_tol: float = 1e-5) -> tuple[bool, str]:
    """Compare two ascending distance lists rank by rank.

    Accepts KnnResult or bare arrays. Rank j passes when
    |candidate_j - reference_j| <= rel_tol * max(1, reference_j); tied
    distances may carry any ids, so ids are not compared here. Returns
    (ok, explanation).
    """
    cand = np.asarray(getattr(candidate, "distances", candidate), dtype=np.float64)
    ref = np.asarray(getattr(reference, "distances", reference), dtype=np.float64)
    if cand.shape != ref.shape:
        return False, f"length mismatch: {cand.shape[0]} vs {ref.shape[0]}"
    if cand.size == 0:
        return True, "ok"
    err = np.abs(cand - ref)
    bound = rel_tol * np.maximum(1.0, ref)
    bad = np.flatnonzero(err > bound)
    if bad.size:
        j = int(bad[0])
        return False, (
            f"rank {j}: candidate {cand[j]!r} vs reference {ref[j]!r} "
            f"(|err|={err[j]:.3e} > {bound[j]:.3e})"
        )
    return True, "ok"
