"""Command-line benchmark driver.

Example:

    knn-dataflow --mode fdsq --k 64 --workers 4 \\
        --synthetic 100000,960,7 --synthetic-queries 20,11 \\
        --runs 3 --verify --format table

Exit codes: 0 on success, 2 when the benchmark cannot run as configured,
3 when verification caught a wrong result.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    BenchmarkRun,
    ConfigInvalid,
    SyntheticQuerySpec,
    SyntheticSpec,
    VerificationFailed,
    emit_report,
    run_benchmark,
)
from .core import DatasetError
from .data_io import FileFormatError
from .distance import DistanceStagingParams
from .engines import EngineConfig, EngineError
from .topk import TopKQueueError


def _int_tuple(text: str, n: int, what: str) -> tuple[int, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} wants {n} comma-separated integers, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} wants integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="knn-dataflow",
        description="Benchmark the exact k-NN dataflow engines.",
    )
    parser.add_argument("--mode", required=True, choices=["fqsd", "fdsq"],
                        help="fqsd: batched queries over a streamed dataset; "
                        "fdsq: streamed queries over the resident dataset")
    parser.add_argument("--k", type=int, default=10, help="neighbors per query")
    parser.add_argument("--workers", default="1",
                        help="worker/lane count; a comma list benchmarks each "
                        "count as one table row (first is the baseline)")
    parser.add_argument("--batch", type=int, default=None,
                        help="queries per engine call (fqsd: must equal workers; fdsq: 1)")
    parser.add_argument("--partition-capacity", type=int, default=4096,
                        help="vectors per dataset partition")
    parser.add_argument("--chunk-width", type=int, default=DistanceStagingParams().w,
                        help="components summed per distance chunk (w)")
    parser.add_argument("--acc-width", type=int, default=DistanceStagingParams().m,
                        help="accumulator length in chunk sums (m)")
    parser.add_argument("--budget", type=int, default=None,
                        help="total queue-node budget; workers*k must fit")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset", metavar="PATH", help="fvecs (or .bvecs) dataset file")
    source.add_argument("--synthetic", metavar="N,D,SEED",
                        help="generate the dataset: count, dimension, seed")
    q_source = parser.add_mutually_exclusive_group(required=True)
    q_source.add_argument("--queries", metavar="PATH", help="fvecs query file")
    q_source.add_argument("--synthetic-queries", metavar="N,SEED",
                          help="generate queries: count, seed (dimension follows the dataset)")
    parser.add_argument("--runs", type=int, default=3, help="timed repetitions (default 3)")
    parser.add_argument("--verify", action="store_true",
                        help="check every first-run result against brute force")
    parser.add_argument("--format", choices=["table", "csv", "json"], default="table")
    parser.add_argument("--out", metavar="PATH", default=None,
                        help="write the report here instead of stdout")
    parser.add_argument("--mips-transform", action="store_true",
                        help="augment dataset and queries so nearest-L2 equals "
                        "maximum inner product")
    return parser


def _assemble_runs(args) -> list[BenchmarkRun]:
    try:
        worker_counts = [int(p) for p in str(args.workers).split(",")]
    except ValueError:
        raise ConfigInvalid(f"--workers wants an integer or comma list, got {args.workers!r}") from None
    if args.batch is not None and len(worker_counts) > 1:
        raise ConfigInvalid("--batch cannot combine with a --workers list")
    if args.synthetic is not None:
        n, d, seed = _int_tuple(args.synthetic, 3, "--synthetic")
        dataset_spec = SyntheticSpec(n, d, seed)
    else:
        dataset_spec = args.dataset
    if args.synthetic_queries is not None:
        n, seed = _int_tuple(args.synthetic_queries, 2, "--synthetic-queries")
        query_spec = SyntheticQuerySpec(n, seed)
    else:
        query_spec = args.queries
    runs = []
    for count in worker_counts:
        try:
            config = EngineConfig(
                mode=args.mode,
                k=args.k,
                workers=count,
                partition_capacity=args.partition_capacity,
                staging=DistanceStagingParams(w=args.chunk_width, m=args.acc_width),
                budget=args.budget,
            )
        except (EngineError, TopKQueueError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from exc
        runs.append(
            BenchmarkRun(
                config=config,
                dataset_spec=dataset_spec,
                query_spec=query_spec,
                runs=args.runs,
                batch=args.batch,
                verify=args.verify,
                mips_transform=args.mips_transform,
            )
        )
    return runs


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        runs = _assemble_runs(args)
        reports = [run_benchmark(run) for run in runs]
        text = emit_report(reports, args.format, args.out)
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 3
    except argparse.ArgumentTypeError as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return 2
    except (ConfigInvalid, EngineError, TopKQueueError, DatasetError, FileFormatError,
            OSError, ValueError) as exc:
        print(f"cannot run benchmark: {exc}", file=sys.stderr)
        return 2
    if args.out is None:
        print(text)
    else:
        print(f"report written to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
