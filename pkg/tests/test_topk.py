import math

import numpy as np
import pytest

from knn_dataflow.core import SENTINEL, NeighborPair
from knn_dataflow.topk import (
    DoubleFlush,
    IndivisibleK,
    InvalidK,
    PartitionAfterPush,
    PushAfterFlush,
    TopKQueue,
    queue_partition,
)


def push_all(queue, pairs):
    for dist, vid in pairs:
        queue.push(NeighborPair(dist, vid))


def test_fresh_queue_is_all_sentinels():
    queue = TopKQueue(3)
    states = queue.node_states()
    assert all(s.stored.vector_id == SENTINEL for s in states)
    assert all(math.isinf(s.stored.distance) for s in states)
    assert not any(s.terminated for s in states)
    assert queue.worst_distance == math.inf


@pytest.mark.parametrize("k", [0, -1, 2.5, "4", True])
def test_invalid_k(k):
    with pytest.raises(InvalidK):
        TopKQueue(k)


def test_k2_keeps_two_nearest():
    """Pushing 5, 3, 9, 1 into a k=2 queue leaves 1 and 3."""
    queue = TopKQueue(2)
    push_all(queue, [(5.0, 0), (3.0, 1), (9.0, 2), (1.0, 3)])
    result = queue.flush()
    assert [(p.distance, p.vector_id) for p in result] == [(1.0, 3), (3.0, 1)]
    assert all(p.solution for p in result)


def test_tie_never_displaces_the_earlier_arrival():
    """Equal distances settle behind the stored pair: first pushed stays nearer."""
    queue = TopKQueue(3)
    push_all(queue, [(4.0, 10), (4.0, 20)])
    result = queue.flush()
    assert [(p.distance, p.vector_id) for p in result] == [(4.0, 10), (4.0, 20)]


def test_k4_with_duplicate_distances():
    """{10, 2, 7, 7, 1} into k=4 keeps [1, 2, 7, 7]."""
    queue = TopKQueue(4)
    queue.push_many([10.0, 2.0, 7.0, 7.0, 1.0], [0, 1, 2, 3, 4])
    dists, ids = queue.flush_arrays()
    assert dists.tolist() == [1.0, 2.0, 7.0, 7.0]
    assert ids.tolist() == [4, 1, 2, 3]


def test_underfull_queue_flushes_short():
    queue = TopKQueue(8)
    queue.push_many([3.0, 1.0], [0, 1])
    dists, ids = queue.flush_arrays()
    assert dists.tolist() == [1.0, 3.0]
    assert ids.tolist() == [1, 0]


def test_zero_pushes_flush_empty():
    dists, ids = TopKQueue(4).flush_arrays()
    assert dists.size == 0 and ids.size == 0


def test_push_rejects_bad_distances():
    queue = TopKQueue(2)
    with pytest.raises(ValueError):
        queue.push_many([math.nan], [1])
    with pytest.raises(ValueError):
        queue.push_many([-1.0], [1])
    with pytest.raises(ValueError):
        queue.push_many([math.inf], [1])


def test_lifecycle_violations():
    queue = TopKQueue(2)
    queue.push(NeighborPair(1.0, 0))
    queue.flush()
    with pytest.raises(PushAfterFlush):
        queue.push(NeighborPair(2.0, 1))
    with pytest.raises(DoubleFlush):
        queue.flush()


def test_worst_distance_tracks_threshold():
    queue = TopKQueue(2)
    queue.push_many([5.0, 3.0], [0, 1])
    assert queue.worst_distance == 5.0
    queue.push_many([1.0], [2])
    assert queue.worst_distance == 3.0


def test_duplicate_ids_pass_through():
    # the queue compares distances only; the same id may occupy two slots
    queue = TopKQueue(3)
    queue.push_many([2.0, 1.0], [7, 7])
    dists, ids = queue.flush_arrays()
    assert ids.tolist() == [7, 7]
    assert dists.tolist() == [1.0, 2.0]


def sort_oracle(pairs, k):
    """Top-k by (distance, arrival order), the queue's admission rule."""
    ranked = sorted(enumerate(pairs), key=lambda item: (item[1][0], item[0]))
    return [(d, i) for _, (d, i) in ranked[:k]]


@pytest.mark.parametrize("k", [1, 2, 7, 64])
def test_queue_matches_sort_oracle(k):
    rng = np.random.default_rng(k)
    for _ in range(50):
        size = int(rng.integers(0, 4 * k + 1))
        dists = np.round(rng.random(size) * 8, 1)  # coarse grid forces ties
        ids = np.arange(size, dtype=np.int64)
        queue = TopKQueue(k)
        queue.push_many(dists, ids)
        got_d, got_i = queue.flush_arrays()
        expected = sort_oracle(list(zip(dists.tolist(), ids.tolist())), k)
        assert got_d.tolist() == [d for d, _ in expected]
        assert got_i.tolist() == [i for _, i in expected]


def test_partition_example():
    """k=1024 split 16 ways: 16 independent lanes of 64."""
    lanes = queue_partition(TopKQueue(1024), 16)
    assert len(lanes) == 16
    assert lanes.lane_k == 64
    assert all(lane.k == 64 for lane in lanes.lanes)


def test_partition_lanes_are_independent():
    lanes = queue_partition(TopKQueue(8), 2)
    lanes.push(0, NeighborPair(1.0, 0))
    assert lanes.lanes[0].pushes == 1
    assert lanes.lanes[1].pushes == 0
    flushed = lanes.flush()
    assert [(p.distance, p.vector_id) for p in flushed[0]] == [(1.0, 0)]
    assert flushed[1] == []


def test_partition_indivisible():
    with pytest.raises(IndivisibleK) as excinfo:
        queue_partition(TopKQueue(10), 3)
    assert (excinfo.value.k, excinfo.value.m) == (10, 3)


def test_partition_after_push():
    queue = TopKQueue(4)
    queue.push(NeighborPair(1.0, 0))
    with pytest.raises(PartitionAfterPush):
        queue_partition(queue, 2)


def test_partitioned_parent_is_retired():
    queue = TopKQueue(4)
    queue_partition(queue, 2)
    with pytest.raises(PushAfterFlush):
        queue.push(NeighborPair(1.0, 0))
    with pytest.raises(PartitionAfterPush):
        queue_partition(queue, 2)
