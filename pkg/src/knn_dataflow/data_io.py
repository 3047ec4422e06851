"""Dataset ingestion, partitioning, and the inner-product-to-L2 transform.

File formats: fvecs and bvecs records are a little-endian int32 component
count followed by that many float32 (fvecs) or uint8 (bvecs) components;
records repeat back to back and every record must declare the same count.

Partitioning cuts an id-ordered collection into fixed-capacity blocks; a
short tail block is zero-padded up to capacity, with SENTINEL ids marking
the padding slots so scans can ignore them.
"""

from __future__ import annotations

import numpy as np

from .core import (
    SENTINEL,
    DimensionMismatch,
    NonFiniteComponent,
    VectorCollection,
    VectorsLike,
    as_collection,
)


class FileFormatError(ValueError):
    """Base class for malformed vector files."""


class EmptyFile(FileFormatError):
    def __init__(self, path):
        super().__init__(f"{path}: file holds no records")
        self.path = str(path)


class TruncatedRecord(FileFormatError):
    """The file ends inside a record; ``offset`` is where that record starts."""

    def __init__(self, path, offset: int):
        super().__init__(f"{path}: truncated record starting at byte offset {offset}")
        self.path = str(path)
        self.offset = offset


class InconsistentDimension(FileFormatError):
    """A record declares a different component count than the first record."""

    def __init__(self, path, record_index: int, got: int, expected: int):
        super().__init__(
            f"{path}: record {record_index} declares {got} components, expected {expected}"
        )
        self.path = str(path)
        self.record_index = record_index
        self.got = got
        self.expected = expected


class InvalidCapacity(ValueError):
    def __init__(self, capacity):
        super().__init__(f"partition capacity must be >= 1, got {capacity!r}")
        self.capacity = capacity


class EmptyCollection(ValueError):
    """An operation needs at least one vector to be meaningful."""


def _scan_records(path, raw: np.ndarray, component_bytes: int) -> int:
    """Walk record headers to pinpoint the fault; returns d if none found."""
    size = raw.size
    offset = 0
    index = 0
    d = -1
    while offset < size:
        if size - offset < 4:
            raise TruncatedRecord(path, offset)
        declared = int(raw[offset : offset + 4].view("<i4")[0])
        if index == 0:
            if declared < 1:
                raise InconsistentDimension(path, 0, declared, 1)
            d = declared
        elif declared != d:
            raise InconsistentDimension(path, index, declared, d)
        if size - offset - 4 < component_bytes * d:
            raise TruncatedRecord(path, offset)
        offset += 4 + component_bytes * d
        index += 1
    return d


def _load_vec_file(path, component_bytes: int) -> tuple[int, int, np.ndarray]:
    """Shared fvecs/bvecs reader: returns (n, d, raw bytes) after validation."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise EmptyFile(path)
    if raw.size < 4:
        raise TruncatedRecord(path, 0)
    d = int(raw[:4].view("<i4")[0])
    record = 4 + component_bytes * d
    if d < 1 or raw.size % record != 0:
        d = _scan_records(path, raw, component_bytes)
        record = 4 + component_bytes * d
    n = raw.size // record
    headers = raw.reshape(n, record)[:, :4].copy().view("<i4").ravel()
    if (headers != d).any():
        _scan_records(path, raw, component_bytes)  # raises with the exact record
        raise AssertionError("unreachable: header walk found no fault")
    return n, d, raw


def load_fvecs(path) -> VectorCollection:
    """Read an fvecs file into a collection with ids 0..n-1 in file order."""
    n, d, raw = _load_vec_file(path, 4)
    table = raw.view("<f4").reshape(n, d + 1)
    return VectorCollection(table[:, 1:].copy())


def load_bvecs(path) -> VectorCollection:
    """Read a bvecs file, widening uint8 components to float32."""
    n, d, raw = _load_vec_file(path, 1)
    body = raw.reshape(n, d + 4)[:, 4:]
    return VectorCollection(body.astype(np.float32))


def write_fvecs(path, vectors: VectorsLike) -> None:
    """Write a collection as fvecs. Round-trips bit-exactly through load_fvecs."""
    matrix = as_collection(vectors).matrix
    n, d = matrix.shape
    if d < 1:
        raise ValueError("cannot write zero-dimensional records")
    table = np.empty((n, d + 1), dtype="<f4")
    table.view("<i4")[:, 0] = d
    table[:, 1:] = matrix
    table.tofile(path)


def generate_synthetic(n: int, d: int, seed: int) -> VectorCollection:
    """n uniform [0, 1) float32 vectors; fully determined by (n, d, seed)."""
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    return VectorCollection(rng.random((n, d), dtype=np.float32))


class PartitionedDataset:
    """An id-ordered collection cut into equal-capacity blocks.

    Every block is a (capacity, d) float32 matrix; only the tail block may
    hold fewer than ``capacity`` real vectors, with zero-padding (SENTINEL
    ids) behind them. Vector ids are positional, so partition p covers ids
    [p * capacity, p * capacity + valid_count(p)).
    """

    def __init__(self, matrix: np.ndarray, partition_capacity: int):
        if not isinstance(partition_capacity, (int, np.integer)) or partition_capacity < 1:
            raise InvalidCapacity(partition_capacity)
        self._matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.partition_capacity = int(partition_capacity)
        n, self.d = self._matrix.shape
        self.total_valid = n
        self.num_partitions = -(-n // self.partition_capacity)
        self._full_blocks = n // self.partition_capacity
        tail_valid = n - self._full_blocks * self.partition_capacity
        if tail_valid:
            self._tail = np.zeros((self.partition_capacity, self.d), dtype=np.float32)
            self._tail[:tail_valid] = self._matrix[self._full_blocks * self.partition_capacity :]
            self._tail_valid = tail_valid
        else:
            self._tail = None
            self._tail_valid = 0
        self._blocks_cache = None
        self._ids_cache = None

    @property
    def valid_counts(self) -> tuple[int, ...]:
        counts = [self.partition_capacity] * self._full_blocks
        if self._tail is not None:
            counts.append(self._tail_valid)
        return tuple(counts)

    def _check_index(self, p: int):
        if not 0 <= p < self.num_partitions:
            raise IndexError(f"partition {p} out of range [0, {self.num_partitions})")

    def block(self, p: int) -> np.ndarray:
        """The full (capacity, d) block, padding included. A view where possible."""
        self._check_index(p)
        if p < self._full_blocks:
            start = p * self.partition_capacity
            return self._matrix[start : start + self.partition_capacity]
        return self._tail

    def valid_count(self, p: int) -> int:
        self._check_index(p)
        return self.partition_capacity if p < self._full_blocks else self._tail_valid

    def valid_block(self, p: int) -> np.ndarray:
        """Only the real vectors of partition p."""
        return self.block(p)[: self.valid_count(p)]

    def base_id(self, p: int) -> int:
        self._check_index(p)
        return p * self.partition_capacity

    def slot_ids(self, p: int) -> np.ndarray:
        """Per-slot ids for partition p; padding slots hold SENTINEL."""
        valid = self.valid_count(p)
        slots = np.arange(self.partition_capacity, dtype=np.int64)
        return np.where(slots < valid, self.base_id(p) + slots, SENTINEL)

    def valid_ids(self, p: int) -> np.ndarray:
        base = self.base_id(p)
        return np.arange(base, base + self.valid_count(p), dtype=np.int64)

    def valid_blocks_list(self) -> list[np.ndarray]:
        """All valid blocks, built once and cached (they are views)."""
        if self._blocks_cache is None:
            self._blocks_cache = [self.valid_block(p) for p in range(self.num_partitions)]
        return self._blocks_cache

    def valid_ids_list(self) -> list[np.ndarray]:
        if self._ids_cache is None:
            self._ids_cache = [self.valid_ids(p) for p in range(self.num_partitions)]
        return self._ids_cache

    def repartition(self, partition_capacity: int) -> "PartitionedDataset":
        return PartitionedDataset(self._matrix, partition_capacity)

    def __repr__(self) -> str:
        return (
            f"PartitionedDataset(n={self.total_valid}, d={self.d}, "
            f"capacity={self.partition_capacity}, partitions={self.num_partitions})"
        )


def partition_dataset(
    vectors: VectorsLike, partition_capacity: int, d: int | None = None
) -> PartitionedDataset:
    """Cut an id-ordered collection into fixed-capacity padded blocks."""
    coll = as_collection(vectors)
    if d is not None and len(coll) and coll.d != d:
        raise DimensionMismatch(
            f"collection is {coll.d}-dimensional, expected {d}",
            vector_id=int(coll.ids[0]),
        )
    if len(coll) and not np.array_equal(coll.ids, np.arange(len(coll))):
        raise ValueError("partitioning requires contiguous ids starting at 0")
    return PartitionedDataset(coll.matrix, partition_capacity)


def mips_to_l2(
    documents: VectorsLike, queries: VectorsLike
) -> tuple[VectorCollection, VectorCollection]:
    """Reduce maximum-inner-product search to nearest-neighbor L2 search.

    With phi = max document norm, every document x gains the component
    sqrt(phi^2 - |x|^2) and every query gains 0. All transformed documents
    then share the norm phi, so for any query q the squared L2 distance is
    |q|^2 + phi^2 - 2 q.x: ascending distance is descending inner product.
    Norms are computed in float64; a tiny negative radicand from rounding is
    clamped to zero.
    """
    docs = as_collection(documents)
    qs = as_collection(queries)
    if len(docs) == 0:
        raise EmptyCollection("the document collection must hold at least one vector")
    if len(qs) and docs.d != qs.d:
        raise DimensionMismatch(
            f"documents are {docs.d}-dimensional, queries are {qs.d}-dimensional"
        )
    for coll in (docs, qs):
        finite = np.isfinite(coll.matrix)
        if not finite.all():
            row, col = np.argwhere(~finite)[0]
            raise NonFiniteComponent(int(coll.ids[row]), int(col))
    norms_sq = np.einsum(
        "ij,ij->i", docs.matrix.astype(np.float64), docs.matrix.astype(np.float64)
    )
    phi_sq = float(norms_sq.max())
    radicand = phi_sq - norms_sq
    if phi_sq > 0 and (radicand < -1e-6 * phi_sq).any():
        raise ValueError("document norm computation drifted beyond tolerance")
    extra = np.sqrt(np.maximum(radicand, 0.0)).astype(np.float32)
    doc_matrix = np.hstack([docs.matrix, extra[:, None]])
    q_matrix = np.hstack([qs.matrix, np.zeros((len(qs), 1), dtype=np.float32)])
    return VectorCollection(doc_matrix, docs.ids), VectorCollection(q_matrix, qs.ids)
