"""Top-k selection queue with single-push updates and a terminal flush.

The queue behaves like k pipelined compare-and-store nodes: a pushed pair
enters only under a strict compare against the stored worst, displaced pairs
cascade toward the tail, and a tie never displaces what is already stored
(an incoming pair equal to a stored distance settles after it). Flush drains
the queue once, best first, and retires it.

This realization keeps the k live pairs in sorted arrays and inserts at the
upper bound of the pushed distance, which observes the same contract with
far less bookkeeping than the node-by-node form (see pipeline_sim for that
one, used as the protocol reference in tests). ``queue_partition`` splits a
fresh queue into M independent lanes of k/M for batched querying.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import SENTINEL, NeighborPair


class TopKQueueError(Exception):
    """Base class for queue lifecycle violations."""


class InvalidK(TopKQueueError):
    def __init__(self, k):
        super().__init__(f"queue length k must be a positive integer, got {k!r}")
        self.k = k


class PushAfterFlush(TopKQueueError):
    """The queue was already drained (or handed to a partition)."""


class DoubleFlush(TopKQueueError):
    """Flush is single-use."""


class PartitionAfterPush(TopKQueueError):
    """Only a fresh queue can be partitioned into lanes."""


class IndivisibleK(TopKQueueError):
    def __init__(self, k: int, m: int):
        super().__init__(f"cannot split k={k} into {m} equal lanes")
        self.k = k
        self.m = m


@dataclass(frozen=True)
class QueueNodeState:
    """Snapshot of one queue slot: its stored pair and whether it terminated."""

    stored: NeighborPair
    terminated: bool


class TopKQueue:
    """Keeps the k nearest (distance, id) pairs seen so far.

    Empty slots hold (+inf, SENTINEL). Push accepts any finite, non-negative
    distance; flush returns the survivors ascending by distance (ties keep
    their arrival-determined order) and terminates the queue.
    """

    __slots__ = ("k", "_dists", "_ids", "_pushes", "_flushed", "_partitioned")

    def __init__(self, k: int):
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
            raise InvalidK(k)
        self.k = int(k)
        self._dists = np.full(self.k, np.inf, dtype=np.float64)
        self._ids = np.full(self.k, SENTINEL, dtype=np.int64)
        self._pushes = 0
        self._flushed = False
        self._partitioned = False

    # -- state queries ----------------------------------------------------

    @property
    def pushes(self) -> int:
        return self._pushes

    @property
    def flushed(self) -> bool:
        return self._flushed

    @property
    def worst_distance(self) -> float:
        """Current admission threshold (+inf while any slot is empty)."""
        return float(self._dists[self.k - 1])

    def node_states(self) -> list[QueueNodeState]:
        """Stored pairs in slot order, nearest first."""
        return [
            QueueNodeState(
                stored=NeighborPair(float(d), int(i), solution=self._flushed),
                terminated=self._flushed,
            )
            for d, i in zip(self._dists, self._ids)
        ]

    # -- mutation ----------------------------------------------------------

    def _check_live(self):
        if self._flushed:
            raise PushAfterFlush("queue was already flushed")
        if self._partitioned:
            raise PushAfterFlush("queue was handed to queue_partition")

    def push(self, pair: NeighborPair) -> None:
        """Offer one candidate pair."""
        self.push_many(
            np.array([pair.distance], dtype=np.float64),
            np.array([pair.vector_id], dtype=np.int64),
        )

    def push_many(self, distances, vector_ids) -> int:
        """Offer candidates one after another, in order. Returns how many entered."""
        self._check_live()
        d = np.ascontiguousarray(distances, dtype=np.float64)
        i = np.ascontiguousarray(vector_ids, dtype=np.int64)
        if d.shape != i.shape or d.ndim != 1:
            raise ValueError("distances and vector_ids must be equal-length 1-d arrays")
        if d.size and (not np.isfinite(d).all() or (d < 0).any()):
            raise ValueError("pushed distances must be finite and non-negative")
        entered = _backend.active().queue_push_batch(self._dists, self._ids, d, i)
        self._pushes += d.size
        return int(entered)

    def flush_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Drain the queue: (distances, ids), ascending, sentinels dropped."""
        if self._flushed:
            raise DoubleFlush("queue was already flushed")
        self._check_live()
        self._flushed = True
        count = int(np.count_nonzero(self._ids != SENTINEL))
        return self._dists[:count].copy(), self._ids[:count].copy()

    def flush(self) -> list[NeighborPair]:
        """Drain the queue as solution-marked pairs, nearest first."""
        dists, ids = self.flush_arrays()
        return [
            NeighborPair(float(d), int(i), solution=True) for d, i in zip(dists, ids)
        ]


class PartitionedTopKQueue:
    """M independent top-(k/M) lanes carved out of one logical queue."""

    __slots__ = ("lanes", "lane_k")

    def __init__(self, lanes: list[TopKQueue]):
        self.lanes = tuple(lanes)
        self.lane_k = self.lanes[0].k if self.lanes else 0

    def __len__(self) -> int:
        return len(self.lanes)

    def push(self, lane: int, pair: NeighborPair) -> None:
        self.lanes[lane].push(pair)

    def push_many(self, lane: int, distances, vector_ids) -> int:
        return self.lanes[lane].push_many(distances, vector_ids)

    def flush_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [lane.flush_arrays() for lane in self.lanes]

    def flush(self) -> list[list[NeighborPair]]:
        return [lane.flush() for lane in self.lanes]


def queue_partition(queue: TopKQueue, num_lanes: int) -> PartitionedTopKQueue:
    """Split a fresh queue of length k into ``num_lanes`` lanes of k / num_lanes.

    The lanes are fully independent: one per concurrent query. The parent
    queue is retired. Raises IndivisibleK when num_lanes does not divide k,
    PartitionAfterPush when the queue has already seen pushes (or was
    flushed or partitioned before).
    """
    if not isinstance(num_lanes, (int, np.integer)) or num_lanes < 1:
        raise ValueError(f"num_lanes must be a positive integer, got {num_lanes!r}")
    if queue._pushes > 0 or queue._flushed or queue._partitioned:
        raise PartitionAfterPush("only a fresh queue can be partitioned")
    if queue.k % num_lanes != 0:
        raise IndivisibleK(queue.k, int(num_lanes))
    queue._partitioned = True
    return PartitionedTopKQueue([TopKQueue(queue.k // num_lanes) for _ in range(num_lanes)])
