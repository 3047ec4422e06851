"""Shared domain types for the exact k-NN dataflow engines.

Everything downstream (distance staging, the top-k queue, both engines)
speaks in terms of these types: vectors and queries are float32 rows with a
non-negative integer id, candidate results are (distance, id) pairs, and a
finished search is a ranked ``KnnResult``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

#: Reserved id for padding slots and uninitialized queue nodes. A SENTINEL id
#: travels with an infinite distance and never surfaces in a result.
SENTINEL = -1


class DatasetError(ValueError):
    """Base class for malformed vector collections."""


class DimensionMismatch(DatasetError):
    """A vector (or query) does not match the collection dimensionality."""

    def __init__(self, message: str, *, vector_id: int | None = None):
        super().__init__(message)
        self.vector_id = vector_id


class NonFiniteComponent(DatasetError):
    """A vector carries a NaN or infinite component."""

    def __init__(self, vector_id: int, position: int):
        super().__init__(
            f"vector {vector_id} has a non-finite component at position {position}"
        )
        self.vector_id = vector_id
        self.position = position


class DuplicateId(DatasetError):
    """Two vectors in one collection share an id."""

    def __init__(self, vector_id: int):
        super().__init__(f"duplicate vector id {vector_id}")
        self.vector_id = vector_id


def _as_float32_1d(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d component array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class VectorRecord:
    """One d-dimensional dataset point and its index in the collection.

    Components are stored as float32; ids are non-negative and unique within
    a collection (the SENTINEL id is reserved for padding and never names a
    real vector).
    """

    id: int
    values: np.ndarray

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"vector id must be non-negative, got {self.id}")
        vals = _as_float32_1d(self.values)
        if vals.size < 1:
            raise ValueError("vector needs at least one component")
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise NonFiniteComponent(self.id, int(bad[0]))
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class Query(VectorRecord):
    """A search point. Same shape rules as ``VectorRecord``."""


@dataclass(frozen=True)
class NeighborPair:
    """A candidate or finished (distance, id) pair.

    The only legal infinite distance is +inf paired with the SENTINEL id,
    which marks an empty queue slot.
    """

    distance: float
    vector_id: int
    solution: bool = False

    def __post_init__(self):
        d = float(self.distance)
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "vector_id", int(self.vector_id))
        if math.isnan(d) or d < 0.0:
            raise ValueError(f"distance must be non-negative and comparable, got {d}")
        if math.isinf(d) != (self.vector_id == SENTINEL):
            raise ValueError(
                "infinite distance and the SENTINEL id imply each other: "
                f"got distance={d}, vector_id={self.vector_id}"
            )

    @property
    def is_sentinel(self) -> bool:
        return self.vector_id == SENTINEL


class KnnResult:
    """Ranked neighbors for one query: distances ascending, ids real and unique."""

    __slots__ = ("query_id", "distances", "vector_ids")

    def __init__(self, query_id: int, distances, vector_ids, *, validate: bool = True):
        self.query_id = int(query_id)
        self.distances = np.asarray(distances, dtype=np.float64)
        self.vector_ids = np.asarray(vector_ids, dtype=np.int64)
        if validate:
            self._check()

    def _check(self):
        if self.distances.ndim != 1 or self.vector_ids.ndim != 1:
            raise ValueError("distances and vector_ids must be 1-d")
        if self.distances.shape != self.vector_ids.shape:
            raise ValueError("distances and vector_ids must have equal length")
        if self.distances.size == 0:
            return
        if not np.isfinite(self.distances).all() or (self.distances < 0).any():
            raise ValueError("result distances must be finite and non-negative")
        if (np.diff(self.distances) < 0).any():
            raise ValueError("result distances must ascend")
        if (self.vector_ids == SENTINEL).any():
            raise ValueError("SENTINEL ids never appear in a result")
        if np.unique(self.vector_ids).size != self.vector_ids.size:
            raise ValueError("result ids must be unique")

    @property
    def neighbors(self) -> tuple[NeighborPair, ...]:
        return tuple(
            NeighborPair(float(d), int(i), solution=True)
            for d, i in zip(self.distances, self.vector_ids)
        )

    def __len__(self) -> int:
        return self.distances.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnnResult):
            return NotImplemented
        return (
            self.query_id == other.query_id
            and np.array_equal(self.distances, other.distances)
            and np.array_equal(self.vector_ids, other.vector_ids)
        )

    def __repr__(self) -> str:
        return f"KnnResult(query_id={self.query_id}, k={len(self)})"


class VectorCollection(Sequence):
    """An id-ordered set of vectors backed by one (n, d) float32 matrix.

    Treated as immutable once constructed. ``matrix`` is the canonical
    storage; ``__getitem__`` materializes ``VectorRecord`` views on demand.
    """

    def __init__(self, matrix, ids=None):
        m = np.ascontiguousarray(matrix, dtype=np.float32)
        if m.ndim != 2:
            raise ValueError(f"expected an (n, d) matrix, got shape {m.shape}")
        self._matrix = m
        if ids is None:
            self._ids = np.arange(m.shape[0], dtype=np.int64)
        else:
            self._ids = np.asarray(ids, dtype=np.int64)
            if self._ids.shape != (m.shape[0],):
                raise ValueError("ids must be one per matrix row")

    @classmethod
    def from_records(cls, records: Iterable[VectorRecord]) -> "VectorCollection":
        records = list(records)
        if not records:
            return cls(np.empty((0, 0), dtype=np.float32))
        d = records[0].d
        for rec in records:
            if rec.d != d:
                raise DimensionMismatch(
                    f"vector {rec.id} has {rec.d} components, expected {d}",
                    vector_id=rec.id,
                )
        matrix = np.stack([rec.values for rec in records])
        ids = np.array([rec.id for rec in records], dtype=np.int64)
        return cls(matrix, ids)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def d(self) -> int:
        return self._matrix.shape[1]

    def __len__(self) -> int:
        return self._matrix.shape[0]

    def __getitem__(self, index) -> VectorRecord:
        if isinstance(index, slice):
            return VectorCollection(self._matrix[index], self._ids[index])
        return VectorRecord(int(self._ids[index]), self._matrix[index])

    def __iter__(self) -> Iterator[VectorRecord]:
        for i in range(len(self)):
            yield self[i]

    def __repr__(self) -> str:
        return f"VectorCollection(n={len(self)}, d={self.d})"


VectorsLike = Union[VectorCollection, Iterable[VectorRecord], np.ndarray]


def as_collection(vectors: VectorsLike) -> VectorCollection:
    """Coerce records / a raw matrix / a collection into a VectorCollection."""
    if isinstance(vectors, VectorCollection):
        return vectors
    if isinstance(vectors, np.ndarray):
        return VectorCollection(vectors)
    return VectorCollection.from_records(vectors)


def validate_dataset(vectors: VectorsLike, d: int) -> VectorCollection:
    """Check collection-level invariants and return the coerced collection.

    Confirms every vector has exactly ``d`` finite components and that ids
    are unique, contiguous and start at 0. Raises ``DimensionMismatch``,
    ``NonFiniteComponent`` or ``DuplicateId`` naming the offending vector.
    """
    if d < 1:
        raise ValueError(f"dimensionality must be positive, got {d}")
    coll = as_collection(vectors)
    if len(coll) and coll.d != d:
        raise DimensionMismatch(
            f"vector {int(coll.ids[0])} has {coll.d} components, expected {d}",
            vector_id=int(coll.ids[0]),
        )
    finite = np.isfinite(coll.matrix)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise NonFiniteComponent(int(coll.ids[row]), int(col))
    ids = coll.ids
    uniq, counts = np.unique(ids, return_counts=True)
    if (counts > 1).any():
        raise DuplicateId(int(uniq[counts > 1][0]))
    if len(coll) and not np.array_equal(np.sort(ids), np.arange(len(coll))):
        raise DatasetError("vector ids must be contiguous and start at 0")
    return coll
