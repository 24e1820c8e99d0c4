"""Half-resolution benchmark: moving- and fixed-mesh optimizations plus the cross-check table.

    python3 scripts/run_benchmark.py [--cache benchmark_runs] [--iterations 100] [--fresh]

Results are cached per source fingerprint; the acceptance tests reuse them.
"""
import argparse
import logging
import os
import sys

from tofsi.benchmark import cross_check, run_benchmark
from tofsi.cli import format_cross_check

DEFAULT_CACHE = os.environ.get("TOFSI_BENCHMARK_DIR",
                               os.path.join(os.path.dirname(__file__), os.pardir, "benchmark_runs"))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--cache", default=DEFAULT_CACHE)
    ap.add_argument("--iterations", type=int, default=100)
    ap.add_argument("--fresh", action="store_true", help="ignore cached runs")
    ap.add_argument("--only", choices=("moving", "fixed"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    runs = {}
    for moving in (True, False):
        if args.only and args.only != ("moving" if moving else "fixed"):
            continue
        run = run_benchmark(args.cache, moving, args.iterations, reuse=not args.fresh)
        name = "moving-mesh design" if moving else "fixed-mesh design"
        runs[name] = run
        status = "ok" if run.ok else f"FAILED ({run.error})"
        print(f"{name}: f_n={run.compliance:.6f} DM={run.dm:.3f}% V={run.volume:.5f} {status}")
    designs = {n: r.design for n, r in runs.items() if r.ok}
    if len(designs) == 2:
        table = cross_check(designs)
        print(format_cross_check(list(table.items())))
    return 0 if all(r.ok for r in runs.values()) else 3


if __name__ == "__main__":
    sys.exit(main())
