"""Benchmark harness: timed engine runs, verification, and report emission.

A ``BenchmarkRun`` names the engine configuration plus where the dataset and
queries come from (files or synthetic specs); ``run_benchmark`` executes it
``runs`` times and folds the timings into a ``MetricsReport``;
``emit_report`` renders reports as a table (with scale-up ratios against the
first row), CSV, or JSON.

Latency convention: FD-SQ answers queries one at a time, so a sample is one
query's wall time. FQ-SD answers a whole batch in lockstep, so every query
in a batch records the batch's wall time; batches never mix runs. Energy is
not measured and is always reported as "n/a".
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import statistics
import time
from dataclasses import asdict, dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

from . import _backend
from .core import DatasetError, Query, VectorCollection, validate_dataset
from .data_io import (
    FileFormatError,
    generate_synthetic,
    load_bvecs,
    load_fvecs,
    mips_to_l2,
    partition_dataset,
)
from .engines import EngineConfig, EngineError, Mode, run_fdsq, run_fqsd
from .oracle import brute_force_knn, distances_match

#: The spelled-out name for the OS-level error emit_report can raise when a
#: destination cannot be written.
IoError = OSError


class ConfigInvalid(ValueError):
    """The benchmark cannot run as configured."""


class VerificationFailed(RuntimeError):
    """An engine result disagreed with the brute-force reference."""

    def __init__(self, query_id: int, detail: str = ""):
        msg = f"query {query_id} failed verification"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.query_id = query_id


@dataclass(frozen=True)
class SyntheticSpec:
    """A generated dataset: n uniform [0, 1) vectors of dimension d."""

    n: int
    d: int
    seed: int


@dataclass(frozen=True)
class SyntheticQuerySpec:
    """Generated queries; dimensionality follows the dataset."""

    n: int
    seed: int


@dataclass
class BenchmarkRun:
    """One benchmark: an engine config plus dataset/query sources."""

    config: EngineConfig
    dataset_spec: "str | SyntheticSpec"
    query_spec: "str | SyntheticQuerySpec"
    runs: int = 3
    batch: int | None = None
    verify: bool = False
    mips_transform: bool = False


@dataclass
class MetricsReport:
    """Folded measurements of one benchmark.

    ``latencies_ms`` keeps every per-query sample, one tuple per run;
    ``mean_latency_ms`` is the arithmetic mean of all stored samples and
    ``throughput_qps`` the mean of the per-run queries-per-second values.
    ``checksums`` fingerprint the first run's results (one per query), so
    two reports over the same data can be compared for agreement. ``d`` is
    the scanned dimensionality (raw d + 1 when the transform ran).
    """

    mode: str
    workers: int
    batch: int
    k: int
    n: int
    d: int
    runs: int
    mean_latency_ms: float
    throughput_qps: float
    verified: bool | None
    partition_capacity: int
    chunk_width: int
    acc_width: int
    budget: int | None
    backend: str
    energy_queries_per_joule: str = "n/a"
    latencies_ms: tuple = ()
    checksums: tuple = ()

    def median_latency_ms(self) -> float:
        samples = [s for run in self.latencies_ms for s in run]
        return statistics.median(samples)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        data = dict(data)
        data["latencies_ms"] = tuple(tuple(run) for run in data.get("latencies_ms", ()))
        data["checksums"] = tuple(data.get("checksums", ()))
        return cls(**data)


def thread_cap_from_env() -> int | None:
    """KNN_DATAFLOW_THREADS caps the engine worker pool; unset means no cap."""
    raw = os.environ.get("KNN_DATAFLOW_THREADS", "").strip()
    if not raw:
        return None
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigInvalid(f"KNN_DATAFLOW_THREADS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ConfigInvalid(f"KNN_DATAFLOW_THREADS must be >= 1, got {cap}")
    return cap


def _load_vector_source(spec) -> VectorCollection:
    if isinstance(spec, SyntheticSpec):
        return generate_synthetic(spec.n, spec.d, spec.seed)
    path = str(spec)
    if path.endswith(".bvecs"):
        return load_bvecs(path)
    return load_fvecs(path)


def _resolve_inputs(run: BenchmarkRun) -> tuple[VectorCollection, VectorCollection]:
    dataset = _load_vector_source(run.dataset_spec)
    if isinstance(run.query_spec, SyntheticQuerySpec):
        queries = generate_synthetic(run.query_spec.n, dataset.d, run.query_spec.seed)
    else:
        queries = _load_vector_source(run.query_spec)
    validate_dataset(dataset, dataset.d)
    if queries.d != dataset.d:
        raise ConfigInvalid(
            f"queries are {queries.d}-dimensional, dataset is {dataset.d}-dimensional"
        )
    if run.mips_transform:
        dataset, queries = mips_to_l2(dataset, queries)
    return dataset, queries


def _result_checksum(result) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(result.distances).tobytes())
    digest.update(np.ascontiguousarray(result.vector_ids).tobytes())
    return digest.hexdigest()[:16]


def run_benchmark(run: BenchmarkRun, *, thread_cap: int | None = None) -> MetricsReport:
    """Execute one benchmark and fold its timings into a MetricsReport.

    Verification (when requested) checks the first run's result for every
    query against brute_force_knn rank by rank at 1e-5 relative tolerance
    and raises VerificationFailed(query_id) on the first disagreement.
    Configuration problems (bad sources, shape conflicts, invalid batch)
    raise ConfigInvalid.
    """
    if thread_cap is None:
        thread_cap = thread_cap_from_env()
    config = run.config
    if run.runs < 1:
        raise ConfigInvalid(f"runs must be >= 1, got {run.runs}")
    try:
        dataset_coll, query_coll = _resolve_inputs(run)
        partitioned = partition_dataset(dataset_coll, config.partition_capacity)
    except ConfigInvalid:
        raise
    except (DatasetError, FileFormatError, OSError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    if len(query_coll) == 0:
        raise ConfigInvalid("benchmark needs at least one query")
    queries = [Query(int(i), row) for i, row in zip(query_coll.ids, query_coll.matrix)]

    if config.mode is Mode.FQ_SD:
        batch = config.workers if run.batch is None else run.batch
        if batch != config.workers:
            raise ConfigInvalid(
                f"FQ-SD advances one query per lane: batch {batch} != workers {config.workers}"
            )
    else:
        batch = 1 if run.batch is None else run.batch
        if batch != 1:
            raise ConfigInvalid(f"FD-SQ streams queries one at a time: batch {batch} != 1")

    latencies: list[tuple[float, ...]] = []
    per_run_qps: list[float] = []
    first_results = None
    for _ in range(run.runs):
        samples: list[float] = []
        results = []
        run_start = time.perf_counter()
        if config.mode is Mode.FQ_SD:
            for lo in range(0, len(queries), batch):
                group = queries[lo : lo + batch]
                group_config = (
                    config if len(group) == config.workers else replace(config, workers=len(group))
                )
                t0 = time.perf_counter()
                group_results = run_fqsd(group, partitioned, group_config, thread_cap=thread_cap)
                elapsed_ms = (time.perf_counter() - t0) * 1000.0
                samples.extend([elapsed_ms] * len(group))
                results.extend(group_results)
        else:
            stream = run_fdsq(partitioned, queries, config, thread_cap=thread_cap)
            for _query in queries:
                t0 = time.perf_counter()
                results.append(next(stream))
                samples.append((time.perf_counter() - t0) * 1000.0)
        run_wall = time.perf_counter() - run_start
        latencies.append(tuple(samples))
        per_run_qps.append(len(queries) / run_wall if run_wall > 0 else float("inf"))
        if first_results is None:
            first_results = results

    verified: bool | None = None
    if run.verify:
        for query, result in zip(queries, first_results):
            reference = brute_force_knn(dataset_coll, query, config.k)
            ok, why = distances_match(result, reference)
            if not ok:
                raise VerificationFailed(query.id, why)
        verified = True

    all_samples = [s for run_samples in latencies for s in run_samples]
    return MetricsReport(
        mode=config.mode.value,
        workers=config.workers,
        batch=batch,
        k=config.k,
        n=len(dataset_coll),
        d=dataset_coll.d,
        runs=run.runs,
        mean_latency_ms=statistics.fmean(all_samples),
        throughput_qps=statistics.fmean(per_run_qps),
        verified=verified,
        partition_capacity=config.partition_capacity,
        chunk_width=config.staging.w,
        acc_width=config.staging.m,
        budget=config.budget,
        backend=_backend.backend_name(),
        latencies_ms=tuple(latencies),
        checksums=tuple(_result_checksum(r) for r in first_results),
    )


# -- report rendering -------------------------------------------------------

CSV_COLUMNS = (
    "mode",
    "workers",
    "batch",
    "k",
    "n",
    "d",
    "runs",
    "mean_latency_ms",
    "throughput_qps",
    "verified",
)

TABLE_COLUMNS = (
    "Method",
    "Workers",
    "Batch Size",
    "Latency msec/query",
    "Throughput queries/sec",
    "Energy queries/J",
)

_MODE_LABEL = {"fqsd": "FQ-SD", "fdsq": "FD-SQ"}


def scale_up_ratio(baseline_latency_ms: float, latency_ms: float) -> float:
    """How many times faster than the baseline: baseline / measured."""
    if baseline_latency_ms <= 0 or latency_ms <= 0:
        raise ValueError("latencies must be positive to form a ratio")
    return baseline_latency_ms / latency_ms


def format_scale_up(ratio: float) -> str:
    """Render a ratio to one decimal, round half up: 304/21 -> '14.5x'."""
    return f"{Decimal(ratio).quantize(Decimal('0.1'), rounding=ROUND_HALF_UP)}×"


def _table_rows(reports: Sequence[MetricsReport]) -> list[list[str]]:
    baseline = reports[0]
    rows = []
    for i, rep in enumerate(reports):
        latency = f"{rep.mean_latency_ms:.1f}"
        throughput = f"{rep.throughput_qps:.1f}"
        if len(reports) > 1 and i > 0:
            latency += f" ({format_scale_up(scale_up_ratio(baseline.mean_latency_ms, rep.mean_latency_ms))})"
            throughput += f" ({format_scale_up(rep.throughput_qps / baseline.throughput_qps)})"
        rows.append(
            [
                _MODE_LABEL.get(rep.mode, rep.mode),
                str(rep.workers),
                str(rep.batch),
                latency,
                throughput,
                rep.energy_queries_per_joule,
            ]
        )
    return rows


def _render_table(reports: Sequence[MetricsReport]) -> str:
    rows = [list(TABLE_COLUMNS)] + _table_rows(reports)
    widths = [max(len(row[c]) for row in rows) for c in range(len(TABLE_COLUMNS))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[c] for c in range(len(widths))))
    return "\n".join(lines)


def _render_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        verified = "" if rep.verified is None else str(rep.verified).lower()
        writer.writerow(
            [
                rep.mode,
                rep.workers,
                rep.batch,
                rep.k,
                rep.n,
                rep.d,
                rep.runs,
                repr(rep.mean_latency_ms),
                repr(rep.throughput_qps),
                verified,
            ]
        )
    return buf.getvalue()


def _render_json(reports: Sequence[MetricsReport]) -> str:
    return json.dumps([rep.to_dict() for rep in reports], indent=2)


def emit_report(reports, fmt: str = "table", destination=None) -> str:
    """Render reports in the chosen format; optionally write to a path.

    ``reports`` is one MetricsReport or a sequence (the first is the
    baseline for table scale-up ratios). Returns the rendered text. Writing
    failures propagate as OSError (= IoError).
    """
    if isinstance(reports, MetricsReport):
        reports = [reports]
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to report")
    if fmt == "table":
        text = _render_table(reports)
    elif fmt == "csv":
        text = _render_csv(reports)
    elif fmt == "json":
        text = _render_json(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if destination is not None:
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            with open(destination, "w", encoding="utf-8") as fh:
                fh.write(text)
    return text
