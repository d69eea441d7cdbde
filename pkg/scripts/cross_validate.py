"""Compare simulated and exact relative revenue of optimal strategies.

    python3 scripts/cross_validate.py --steps 10000000
"""
import argparse

from selfish_forks.model import AttackParams
from selfish_forks.revenue import compute_errev, exact_errev
from selfish_forks.sim import simulate

POINTS = [(0.3, 1.0, 1, 1), (0.3, 0.5, 2, 1), (0.2, 0.0, 2, 1), (0.3, 1.0, 2, 2), (0.1, 0.5, 2, 2)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=10 ** 6)
    ap.add_argument("--seed", type=int, default=100)
    ap.add_argument("--l", type=int, default=4)
    args = ap.parse_args()
    print("p,gamma,d,f,exact,simulated,stderr,z")
    for n, (p, g, d, f) in enumerate(POINTS):
        rep = compute_errev(AttackParams(p, g, d, f, args.l))
        exact = exact_errev(rep.model, rep.strategy)
        sim = simulate(rep.model.params, rep.model.strategy_to_map(rep.strategy), args.steps,
                       seed=args.seed + n)
        z = (sim.rel_revenue - exact) / sim.stderr
        print(f"{p},{g},{d},{f},{exact:.6f},{sim.rel_revenue:.6f},{sim.stderr:.2e},{z:+.2f}")


if __name__ == "__main__":
    main()
