"""Time the compiled kernels against the pure-NumPy fallback.

Runs the staged distance scan, the queue insertion path, and a small FD-SQ
end-to-end query on every available backend and prints one table. Results
must agree bit-for-bit between backends; this script asserts that too.

Usage: python3 benchmarks/compare_backends.py [--n 20000] [--d 960] [--k 256]
"""

import argparse
import time

import numpy as np

from knn_dataflow import (
    EngineConfig,
    Query,
    TopKQueue,
    available_backends,
    generate_synthetic,
    partition_dataset,
    run_fdsq,
    set_backend,
    staged_distance_block,
)


def time_call(fn, repeats=3):
    best = float("inf")
    value = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        value = fn()
        best = min(best, time.perf_counter() - t0)
    return best, value


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=20000)
    parser.add_argument("--d", type=int, default=960)
    parser.add_argument("--k", type=int, default=256)
    parser.add_argument("--queries", type=int, default=4)
    args = parser.parse_args()

    dataset = generate_synthetic(args.n, args.d, seed=7)
    q_mat = generate_synthetic(args.queries, args.d, seed=11).matrix
    queries = [Query(i, row) for i, row in enumerate(q_mat)]
    partitioned = partition_dataset(dataset, 4096)
    rng = np.random.default_rng(3)
    cand_d = rng.random(200000)
    cand_i = np.arange(200000, dtype=np.int64)

    rows = []
    reference = {}
    for name in available_backends():
        set_backend(name)

        scan_s, dists = time_call(lambda: staged_distance_block(q_mat, dataset.matrix))

        def push_all():
            queue = TopKQueue(args.k)
            queue.push_many(cand_d, cand_i)
            return queue.flush_arrays()

        push_s, flushed = time_call(push_all)

        config = EngineConfig(mode="fdsq", k=args.k, workers=2)
        fdsq_s, results = time_call(
            lambda: [r for r in run_fdsq(partitioned, queries, config)], repeats=1
        )

        for key, value in (("scan", dists), ("push", flushed)):
            if key not in reference:
                reference[key] = value
        if not np.array_equal(reference["scan"], dists):
            raise SystemExit(f"{name}: staged scan diverged from the first backend")
        if not all(np.array_equal(a, b) for a, b in zip(reference["push"], flushed)):
            raise SystemExit(f"{name}: queue content diverged from the first backend")

        mq = args.queries * args.n / 1e6
        rows.append(
            (
                name,
                f"{scan_s * 1e3:8.1f}",
                f"{mq / scan_s:8.2f}",
                f"{push_s * 1e3:8.1f}",
                f"{fdsq_s * 1e3 / args.queries:8.1f}",
            )
        )

    print(f"n={args.n} d={args.d} k={args.k} queries={args.queries}")
    header = ("backend", "scan ms", "Mpair/s", "push ms", "fdsq ms/q")
    print("{:<8}  {:>8}  {:>8}  {:>8}  {:>9}".format(*header))
    for row in rows:
        print("{:<8}  {:>8}  {:>8}  {:>8}  {:>9}".format(*row))
    print("backends agree bit-for-bit on scan output and queue content")


if __name__ == "__main__":
    main()
