"""Element-by-element model of the k-node selection pipeline.

This is the protocol-level form of the top-k queue: a reader injects one
pair at a time, k compare-and-store nodes cascade it, and a writer collects
the drained queue. Tests use it as the reference for ``TopKQueue``.

Push, at each node: an incoming pair strictly nearer than the stored pair is
stored and the old pair moves on (operation A); otherwise the incoming pair
moves on unchanged (operation B), so a tie never displaces a stored pair.
Whatever falls off the last node during pushing is not a solution and the
writer discards it.

Flush runs in two phases per node. Phase 1 (on receiving a solution pair):
the node marks its current pair as a solution, forwards it, and stores the
received solution pair. Phase 2 (on receiving end-of-stream): the node marks
its current pair as a solution, forwards it, forwards end-of-stream, and
terminates. Node i therefore runs phase 1 exactly i times and phase 2 once,
and the writer receives solutions worst first; storing them in reverse
arrival order yields the ascending result. Sentinel pairs (empty slots) are
dropped by the writer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import SENTINEL
from .topk import DoubleFlush, InvalidK, PushAfterFlush

#: End-of-stream marker flowing through the node chain during flush.
_EOS = object()


@dataclass
class _Node:
    distance: float = math.inf
    vector_id: int = SENTINEL
    solution: bool = False
    terminated: bool = False
    phase1_count: int = 0
    phase2_count: int = 0


@dataclass
class PipelineSimulation:
    """A k-node selection pipeline driven one element at a time."""

    k: int
    nodes: list[_Node] = field(init=False)
    writer_pairs: list[tuple[float, int, bool]] = field(init=False, default_factory=list)

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise InvalidK(self.k)
        self.nodes = [_Node() for _ in range(self.k)]
        self._flushed = False

    def push(self, distance: float, vector_id: int) -> None:
        if self._flushed:
            raise PushAfterFlush("pipeline already flushed")
        if not (math.isfinite(distance) and distance >= 0.0):
            raise ValueError("pushed distances must be finite and non-negative")
        cur = (float(distance), int(vector_id), False)
        for node in self.nodes:
            if cur[0] < node.distance:
                displaced = (node.distance, node.vector_id, node.solution)
                node.distance, node.vector_id, node.solution = cur
                cur = displaced
        # cur falls off the last node; it is not a solution, so it is dropped

    def flush(self) -> list[tuple[float, int]]:
        """Drain the pipeline; returns (distance, id) ascending, sentinels dropped."""
        if self._flushed:
            raise DoubleFlush("pipeline already flushed")
        self._flushed = True
        stream: list = [_EOS]
        for node in self.nodes:
            out: list = []
            for msg in stream:
                if msg is _EOS:
                    node.phase2_count += 1
                    node.solution = True
                    out.append((node.distance, node.vector_id, True))
                    out.append(_EOS)
                    node.terminated = True
                else:
                    node.phase1_count += 1
                    out.append((node.distance, node.vector_id, True))
                    node.distance, node.vector_id, node.solution = msg
            stream = out
        arrivals = [msg for msg in stream if msg is not _EOS]
        # writer stores in reverse arrival order: worst arrives first
        self.writer_pairs = list(reversed(arrivals))
        return [(d, i) for d, i, _ in self.writer_pairs if i != SENTINEL]

    def phase1_counts(self) -> list[int]:
        return [n.phase1_count for n in self.nodes]

    def phase2_counts(self) -> list[int]:
        return [n.phase2_count for n in self.nodes]

    def stored_pairs(self) -> list[tuple[float, int]]:
        """Current (distance, id) per node, nearest node first."""
        return [(n.distance, n.vector_id) for n in self.nodes]
