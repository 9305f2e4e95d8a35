"""Compare the numba kernels with the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--queries N] [--batch B] [--repeat R] [--json]
"""

import argparse
import json

from terradeploy import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true")
    a = ap.parse_args()
    res = bench.run(seed=a.seed, n_queries=a.queries, batch=a.batch, repeat=a.repeat)
    print(json.dumps(res, indent=2) if a.json else bench.format_report(res))


if __name__ == "__main__":
    main()
