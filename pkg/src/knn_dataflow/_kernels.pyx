# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled hot kernels: the staged distance scan and sorted-queue insertion.

Operation order matches knn_dataflow._purepy exactly (see that module's
docstring); the build disables FMA contraction so float32 results are
bit-identical across backends.
"""

from libc.stdlib cimport free, malloc
from libc.string cimport memmove

NAME = "cython"


def staged_block(const float[:, ::1] queries, const float[:, ::1] vectors,
                 Py_ssize_t w, Py_ssize_t m, float[:, ::1] out):
    """Staged squared-L2 between every query row and every vector row."""
    cdef Py_ssize_t n_queries = queries.shape[0]
    cdef Py_ssize_t n_vectors = vectors.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    cdef Py_ssize_t r = (d + w - 1) // w
    cdef Py_ssize_t r_prime = (r + m - 1) // m
    cdef Py_ssize_t qi, ci, b, u, t, j, lo, hi
    cdef float diff, cs, total
    cdef float* acc = <float*> malloc(m * sizeof(float))
    if acc == NULL:
        raise MemoryError()
    try:
        with nogil:
            for qi in range(n_queries):
                for ci in range(n_vectors):
                    for u in range(m):
                        acc[u] = 0.0
                    for b in range(r_prime):
                        for u in range(m):
                            t = b * m + u
                            if t >= r:
                                break
                            lo = t * w
                            hi = lo + w
                            if hi > d:
                                hi = d
                            cs = 0.0
                            for j in range(lo, hi):
                                diff = queries[qi, j] - vectors[ci, j]
                                cs = cs + diff * diff
                            acc[u] = acc[u] + cs
                    total = 0.0
                    for u in range(m):
                        total = total + acc[u]
                    out[qi, ci] = total
    finally:
        free(acc)
    return out


def queue_push_batch(double[::1] dists, long long[::1] ids,
                     const double[::1] cand_d, const long long[::1] cand_i):
    """Insert candidates into the sorted queue arrays, in push order, in place.

    Strict compare against the current worst; an entering pair lands at the
    upper bound of its distance. Returns how many candidates entered.
    """
    cdef Py_ssize_t k = dists.shape[0]
    cdef Py_ssize_t n = cand_d.shape[0]
    cdef Py_ssize_t b, lo, hi, mid
    cdef double v
    cdef Py_ssize_t inserted = 0
    with nogil:
        for b in range(n):
            v = cand_d[b]
            if not v < dists[k - 1]:
                continue
            lo = 0
            hi = k
            while lo < hi:
                mid = (lo + hi) >> 1
                if v < dists[mid]:
                    hi = mid
                else:
                    lo = mid + 1
            if lo < k - 1:
                memmove(&dists[lo + 1], &dists[lo], (k - 1 - lo) * sizeof(double))
                memmove(&ids[lo + 1], &ids[lo], (k - 1 - lo) * sizeof(long long))
            dists[lo] = v
            ids[lo] = cand_i[b]
            inserted += 1
    return inserted
