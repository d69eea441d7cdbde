"""Model size and wall time of the bisection for a few attack shapes.

    python3 scripts/runtime_table.py --p 0.3 --gamma 0.5
"""
import argparse

from selfish_forks.model import AttackParams
from selfish_forks.revenue import compute_errev


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, default=0.3)
    ap.add_argument("--gamma", type=float, default=0.5)
    ap.add_argument("--l", type=int, default=4)
    ap.add_argument("--epsilon", type=float, default=1e-5)
    ap.add_argument("--shapes", default="1x1,2x1,2x2,3x1",
                    help="comma list of DxF attack shapes")
    args = ap.parse_args()

    print("| d | f | states | bound | solves | build s | solve s | errev |")
    print("|---|---|---|---|---|---|---|---|")
    for shape in args.shapes.split(","):
        d, f = (int(x) for x in shape.split("x"))
        params = AttackParams(args.p, args.gamma, d, f, args.l)
        rep = compute_errev(params, args.epsilon)
        print(f"| {d} | {f} | {rep.state_count} | {params.estimated_states} | {rep.solver_calls} "
              f"| {rep.build_time_s:.2f} | {rep.solve_time_s:.2f} | {rep.errev_lower:.5f} |")


if __name__ == "__main__":
    main()
