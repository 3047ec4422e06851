"""The two exact k-NN dataflow engines.

FQ-SD (fixed queries, streamed dataset) answers a batch of exactly
``workers`` queries in lockstep: each query owns one lane of a partitioned
top-k queue, and dataset partitions stream through two staging buffers so
the fill of partition p+1 overlaps the scan of partition p. Built for
throughput.

FD-SQ (fixed dataset, streamed queries) answers queries one at a time over a
resident partitioned dataset: partitions are divided round-robin among
``workers`` workers, each keeps its own k-queue while scanning its share,
and the per-worker survivors merge by (distance, id) into a result identical
to one k-queue fed by every partition in id order. Built for latency.

Both engines admit a candidate only through the strict-compare queue and
both report squared L2 distances from the staged kernel, so either engine,
at any worker count or partition capacity, returns the same distance
multiset for the same query.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

from . import _backend
from .core import DimensionMismatch, KnnResult, VectorRecord, as_collection
from .data_io import PartitionedDataset
from .distance import DistanceStagingParams
from .topk import TopKQueue, queue_partition

#: Largest operating point the budget model admits by default
#: (24 workers x k=72).
DEFAULT_QUEUE_BUDGET = 1728

#: Below this many multiply-accumulates per partition, a scan runs inline on
#: the consumer thread instead of being split across the worker pool.
_INLINE_OPS = 1 << 17

#: Blocks smaller than this many float32 elements are not worth staging
#: through the producer thread: FQ-SD then walks the partition views
#: directly (same blocks, same order, identical results).
_STREAM_MIN_ELEMENTS = 1 << 14

#: Candidate pushes are batched up to this many per queue call; batching
#: never reorders candidates, so queue contents are unchanged.
_PUSH_CHUNK = 1 << 16


class EngineError(Exception):
    """Base class for engine configuration and runtime failures."""


class BatchSizeMismatch(EngineError):
    """FQ-SD requires exactly one query per worker lane."""

    def __init__(self, got: int, expected: int):
        super().__init__(f"batch carries {got} queries but the engine has {expected} lanes")
        self.got = got
        self.expected = expected


class NoPartitions(EngineError):
    """FD-SQ needs a resident dataset with at least one partition."""


class BudgetExceeded(EngineError):
    """The configuration needs more queue nodes than the budget provides."""

    def __init__(self, required: int, available: int):
        super().__init__(f"configuration needs {required} queue nodes, budget is {available}")
        self.required = required
        self.available = available


class ProducerFailure(EngineError):
    """The partition producer failed; every earlier partition was scanned."""

    def __init__(self, partition_index: int):
        super().__init__(f"producer failed while staging partition {partition_index}")
        self.partition_index = partition_index


class Mode(str, Enum):
    FQ_SD = "fqsd"
    FD_SQ = "fdsq"


def validate_budget(k: int, workers: int, k_total: int) -> int:
    """Check that workers * k queue nodes fit the budget k_total.

    Queue nodes are the scaling-limited resource and each worker (FD-SQ) or
    lane (FQ-SD) holds k of them. Returns the required node count; raises
    BudgetExceeded(required, available) when it exceeds k_total.
    """
    for name, value in (("k", k), ("workers", workers), ("k_total", k_total)):
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
    required = int(k) * int(workers)
    if required > k_total:
        raise BudgetExceeded(required, int(k_total))
    return required


@dataclass(frozen=True)
class EngineConfig:
    """One engine run: mode, per-query k, worker count, staging shape.

    ``budget``, when set, bounds workers * k queue nodes (see
    validate_budget); leaving it None skips the check.
    """

    mode: Mode
    k: int = 10
    workers: int = 1
    partition_capacity: int = 4096
    staging: DistanceStagingParams = DistanceStagingParams()
    budget: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("k", "workers", "partition_capacity"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.budget is not None:
            validate_budget(self.k, self.workers, self.budget)


class BufferEvent(NamedTuple):
    """One timed fill or scan of a staging slot (perf_counter seconds)."""

    kind: str
    partition: int
    slot: int
    start: float
    end: float


@dataclass
class StreamCursor:
    """Producer-side progress through the partition stream."""

    buffers: tuple
    next_partition_index: int = 0

    @property
    def buffer_slot(self) -> int:
        return self.next_partition_index % 2


def double_buffer_stream(
    num_partitions: int,
    fill: Callable[[int, int], None],
    scan: Callable[[int, int], None],
    *,
    cursor: StreamCursor | None = None,
    record_events: bool = False,
) -> list[BufferEvent]:
    """Drive fill/scan callbacks through the two-slot handoff protocol.

    Partition p uses slot p % 2. ``fill(p, slot)`` runs on a producer thread
    and must leave partition p staged in its slot; ``scan(p, slot)`` runs on
    the calling thread. The semaphore pair guarantees scan(p) starts only
    after fill(p) ends and fill(p + 2) starts only after scan(p) ends, which
    leaves fill(p + 1) free to overlap scan(p). A producer exception
    surfaces as ProducerFailure(p), raised after every partition before p
    was scanned.
    """
    empty = (threading.Semaphore(1), threading.Semaphore(1))
    full = (threading.Semaphore(0), threading.Semaphore(0))
    events: list[BufferEvent] = []
    failures: dict[int, BaseException] = {}
    stop = threading.Event()

    def producer():
        for p in range(num_partitions):
            slot = p % 2
            empty[slot].acquire()
            if stop.is_set():
                return
            if cursor is not None:
                cursor.next_partition_index = p
            start = time.perf_counter()
            try:
                fill(p, slot)
            except BaseException as exc:  # handed to the consumer as ProducerFailure
                failures[p] = exc
                full[slot].release()
                return
            if record_events:
                events.append(BufferEvent("fill", p, slot, start, time.perf_counter()))
            if cursor is not None:
                cursor.next_partition_index = p + 1
            full[slot].release()

    thread = threading.Thread(target=producer, name="partition-producer", daemon=True)
    thread.start()
    try:
        for p in range(num_partitions):
            slot = p % 2
            full[slot].acquire()
            if p in failures:
                raise ProducerFailure(p) from failures[p]
            start = time.perf_counter()
            scan(p, slot)
            if record_events:
                events.append(BufferEvent("scan", p, slot, start, time.perf_counter()))
            empty[slot].release()
    except BaseException:
        stop.set()
        empty[0].release()
        empty[1].release()
        thread.join(timeout=30.0)
        raise
    thread.join()
    return events


def _pool_width(workers: int, thread_cap: int | None) -> int:
    """Threads backing ``workers`` logical workers; thread_cap only shrinks."""
    if thread_cap is None:
        return workers
    return max(1, min(workers, int(thread_cap)))


def _query_batch(queries, d: int) -> tuple[list[int], np.ndarray]:
    """Coerce a query batch to (ids, C-contiguous float32 matrix), checking d."""
    if isinstance(queries, np.ndarray):
        queries = as_collection(queries)
    records = list(queries)
    ids = []
    rows = []
    for rec in records:
        if isinstance(rec, VectorRecord):
            ids.append(rec.id)
            rows.append(rec.values)
        else:
            arr = np.asarray(rec, dtype=np.float32)
            ids.append(len(ids))
            rows.append(arr)
        if rows[-1].shape[0] != d:
            raise DimensionMismatch(
                f"query {ids[-1]} has {rows[-1].shape[0]} components, dataset has {d}",
                vector_id=ids[-1],
            )
    if not rows:
        return [], np.empty((0, d), dtype=np.float32)
    return ids, np.ascontiguousarray(np.stack(rows), dtype=np.float32)


def _merge_ranked(dist_arrays, id_arrays, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Merge per-queue survivors by (distance, id) and keep the best k."""
    dists = np.concatenate(dist_arrays) if dist_arrays else np.empty(0, dtype=np.float64)
    ids = np.concatenate(id_arrays) if id_arrays else np.empty(0, dtype=np.int64)
    order = np.lexsort((ids, dists))[:k]
    return dists[order], ids[order]


def _scan_partitions_inline(q_matrix, dataset, lanes, kernel, w, m) -> None:
    """Scan partition views in stream order without the staging buffers.

    Tiny blocks gain nothing from fill/scan overlap, so the partitions are
    walked in place. Each lane still sees candidates in partition order then
    row order, batched to cut per-call overhead, so every queue ends up with
    exactly the contents the staged path produces.
    """
    num_lanes = q_matrix.shape[0]
    blocks = dataset.valid_blocks_list()
    ids64 = dataset.valid_ids_list()
    chunk = max(_PUSH_CHUNK, dataset.partition_capacity)
    buf_d = np.empty((num_lanes, chunk), dtype=np.float64)
    buf_i = np.empty(chunk, dtype=np.int64)
    fill = 0

    def drain() -> None:
        nonlocal fill
        for lane in range(num_lanes):
            lanes.push_many(lane, buf_d[lane, :fill], buf_i[:fill])
        fill = 0

    for p, block in enumerate(blocks):
        valid = block.shape[0]
        if valid == 0:
            continue
        if fill + valid > chunk:
            drain()
        out = np.empty((num_lanes, valid), dtype=np.float32)
        kernel.staged_block(q_matrix, block, w, m, out)
        buf_d[:, fill:fill + valid] = out
        buf_i[fill:fill + valid] = ids64[p]
        fill += valid
    if fill:
        drain()


def run_fqsd(
    queries,
    dataset: PartitionedDataset,
    config: EngineConfig,
    *,
    thread_cap: int | None = None,
    record_events: bool = False,
):
    """Answer exactly ``config.workers`` queries over the streamed dataset.

    One queue of workers * k nodes is partitioned into ``workers``
    independent k-lanes, one per query. Partitions stream through two
    staging buffers (fill overlapping scan); each staged block is scanned
    for every lane before the next block lands. Returns results in query
    order; with record_events=True returns (results, buffer events).
    """
    if config.mode is not Mode.FQ_SD:
        raise ValueError(f"config.mode must be {Mode.FQ_SD}, got {config.mode}")
    q_ids, q_matrix = _query_batch(queries, dataset.d)
    lanes_needed = config.workers
    if q_matrix.shape[0] != lanes_needed:
        raise BatchSizeMismatch(q_matrix.shape[0], lanes_needed)
    if config.budget is not None:
        validate_budget(config.k, config.workers, config.budget)
    lanes = queue_partition(TopKQueue(lanes_needed * config.k), lanes_needed)

    kernel = _backend.active()
    w, m = config.staging.w, config.staging.m
    d = dataset.d
    capacity = dataset.partition_capacity
    num_partitions = dataset.num_partitions

    if not record_events and capacity * d < _STREAM_MIN_ELEMENTS:
        # Staging tiny blocks through the producer thread costs more than
        # the scans it would overlap; walk the partitions in place instead.
        _scan_partitions_inline(q_matrix, dataset, lanes, kernel, w, m)
        return [
            KnnResult(q_ids[lane], *lanes.lanes[lane].flush_arrays())
            for lane in range(lanes_needed)
        ]

    valid_ids = dataset.valid_ids_list()
    slots = (
        np.empty((capacity, d), dtype=np.float32),
        np.empty((capacity, d), dtype=np.float32),
    )
    slot_valid = [0, 0]
    cursor = StreamCursor(buffers=slots)

    pool = _pool_width(lanes_needed, thread_cap)
    executor = ThreadPoolExecutor(max_workers=pool, thread_name_prefix="fqsd-lane") if pool > 1 else None
    bounds = np.linspace(0, lanes_needed, pool + 1).astype(int) if executor else None

    def fill(p: int, slot: int) -> None:
        np.copyto(slots[slot], dataset.block(p))
        slot_valid[slot] = dataset.valid_count(p)

    def scan_lanes(lo: int, hi: int, block: np.ndarray, out64_ids) -> None:
        valid, ids = out64_ids
        out = np.empty((hi - lo, valid), dtype=np.float32)
        kernel.staged_block(q_matrix[lo:hi], block, w, m, out)
        out64 = out.astype(np.float64)
        for lane in range(lo, hi):
            lanes.push_many(lane, out64[lane - lo], ids)

    def scan(p: int, slot: int) -> None:
        valid = slot_valid[slot]
        if valid == 0:
            return
        block = slots[slot][:valid]
        ids = valid_ids[p]
        if executor is None or valid * d * lanes_needed < _INLINE_OPS:
            scan_lanes(0, lanes_needed, block, (valid, ids))
            return
        futures = [
            executor.submit(scan_lanes, int(bounds[g]), int(bounds[g + 1]), block, (valid, ids))
            for g in range(pool)
            if bounds[g] < bounds[g + 1]
        ]
        for future in futures:
            future.result()

    try:
        events = double_buffer_stream(
            num_partitions, fill, scan, cursor=cursor, record_events=record_events
        )
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    results = [
        KnnResult(q_ids[lane], *lanes.lanes[lane].flush_arrays())
        for lane in range(lanes_needed)
    ]
    if record_events:
        return results, events
    return results


def run_fdsq(
    dataset: PartitionedDataset,
    queries: Iterable,
    config: EngineConfig,
    *,
    thread_cap: int | None = None,
) -> Iterator[KnnResult]:
    """Answer a stream of queries, one at a time, over the resident dataset.

    Partitions are assigned round-robin to ``config.workers`` workers; when
    there are more workers than partitions (and enough vectors), the dataset
    is recut so every worker holds a share. Returns a generator yielding one
    KnnResult per query, in arrival order.
    """
    if config.mode is not Mode.FD_SQ:
        raise ValueError(f"config.mode must be {Mode.FD_SQ}, got {config.mode}")
    if dataset.num_partitions == 0:
        raise NoPartitions("the resident dataset holds no partitions")
    if config.budget is not None:
        validate_budget(config.k, config.workers, config.budget)

    workers = config.workers
    if workers > dataset.num_partitions and dataset.total_valid >= workers:
        dataset = dataset.repartition(-(-dataset.total_valid // workers))

    kernel = _backend.active()
    w, m = config.staging.w, config.staging.m
    k = config.k
    d = dataset.d
    capacity = dataset.partition_capacity
    shares = [list(range(j, dataset.num_partitions, workers)) for j in range(workers)]
    blocks = dataset.valid_blocks_list()
    ids64 = dataset.valid_ids_list()

    pool = _pool_width(workers, thread_cap)
    executor = ThreadPoolExecutor(max_workers=pool, thread_name_prefix="fdsq-worker") if pool > 1 else None

    chunk = max(_PUSH_CHUNK, capacity)

    def scan_share(j: int, q_row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # Scratch is reused across partitions (the queue copies what it
        # keeps), and pushes are batched without reordering candidates.
        queue = TopKQueue(k)
        out = np.empty((1, capacity), dtype=np.float32)
        buf_d = np.empty(chunk, dtype=np.float64)
        buf_i = np.empty(chunk, dtype=np.int64)
        fill = 0
        for p in shares[j]:
            block = blocks[p]
            valid = block.shape[0]
            if fill + valid > chunk:
                queue.push_many(buf_d[:fill], buf_i[:fill])
                fill = 0
            view = out[:, :valid]
            kernel.staged_block(q_row, block, w, m, view)
            np.copyto(buf_d[fill:fill + valid], view[0])
            buf_i[fill:fill + valid] = ids64[p]
            fill += valid
        if fill:
            queue.push_many(buf_d[:fill], buf_i[:fill])
        return queue.flush_arrays()

    def answer(record) -> KnnResult:
        if isinstance(record, VectorRecord):
            q_id, values = record.id, record.values
        else:
            values = np.asarray(record, dtype=np.float32)
            q_id = -1
        if values.shape[0] != d:
            raise DimensionMismatch(
                f"query {q_id} has {values.shape[0]} components, dataset has {d}",
                vector_id=q_id,
            )
        q_row = np.ascontiguousarray(values.reshape(1, d))
        if executor is None:
            parts = [scan_share(j, q_row) for j in range(workers)]
        else:
            futures = [executor.submit(scan_share, j, q_row) for j in range(workers)]
            parts = [f.result() for f in futures]
        merged = _merge_ranked([p[0] for p in parts], [p[1] for p in parts], k)
        return KnnResult(q_id, *merged)

    def stream() -> Iterator[KnnResult]:
        try:
            for record in queries:
                yield answer(record)
        finally:
            if executor is not None:
                executor.shutdown(wait=True)

    return stream()
