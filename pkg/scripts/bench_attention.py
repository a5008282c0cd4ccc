"""Attention cost sweep: score count and wall time per bridge count.

    python scripts/bench_attention.py --paths 4 --max-bridges 8 --out bench.csv
"""

import argparse
import csv
import sys

from crossre.cli import bench_attention


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=4)
    ap.add_argument("--min-bridges", type=int, default=2)
    ap.add_argument("--max-bridges", type=int, default=8)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = bench_attention(range(args.min_bridges, args.max_bridges + 1), args.paths, args.d, repeats=args.repeats)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    base = {r["nodes"]: r["wall_time_s"] for r in rows}
    for n, t in sorted(base.items()):
        if 2 * n in base:
            print(f"|E| {n} -> {2 * n}: {base[2 * n] / t:.1f}x", file=sys.stderr)


if __name__ == "__main__":
    main()
