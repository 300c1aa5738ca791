"""Compiled vs numpy kernel timings on a model-sized vector.

    python3 benchmarks/bench_kernels.py [--size N] [--number K]
"""

import argparse

from syncsgd.bench.kernelbench import bench, bench_training_step, format_table

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=109386)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args()
    print(format_table(bench(size=args.size, number=args.number)))
    print()
    for backend, ms in bench_training_step():
        print(f"gradient step, batch 100, {backend:<7}{ms:8.3f} ms")
