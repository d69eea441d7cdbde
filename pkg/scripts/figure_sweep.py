"""Relative revenue curves for several attack shapes and both baselines.

Writes one CSV per curve family into --out-dir, in the sweep CSV layout.

    python3 scripts/figure_sweep.py --out-dir results --step 0.01
"""
import argparse
import os
from pathlib import Path

from selfish_forks.cli import SweepSpec, format_csv, run_sweep

SHAPES = [(1, 1), (2, 1), (2, 2)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--p-max", type=float, default=0.3)
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--gammas", default="0,0.5,1")
    ap.add_argument("--l", type=int, default=4)
    ap.add_argument("--tree-depth", type=int, default=4)
    ap.add_argument("--tree-width", type=int, default=5)
    ap.add_argument("--epsilon", type=float, default=1e-5)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    n = int(round(args.p_max / args.step))
    ps = tuple(round(i * args.step, 10) for i in range(n + 1))
    gammas = tuple(float(g) for g in args.gammas.split(","))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    specs = {"honest.csv": SweepSpec("honest", ps, gammas)}
    specs["single_tree.csv"] = SweepSpec("single-tree", ps, gammas, f=args.tree_width, l=args.tree_depth)
    for d, f in SHAPES:
        specs[f"ours_d{d}_f{f}.csv"] = SweepSpec("ours", ps, gammas, d, f, args.l, args.epsilon)
    for name, spec in specs.items():
        rows, ok = run_sweep(spec, args.jobs)
        (out / name).write_text(format_csv(rows))
        print(f"{name}: {len(rows)} rows{'' if ok else ' (some points failed)'}")


if __name__ == "__main__":
    main()
