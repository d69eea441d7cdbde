"""Command-line entry point: ``selfish-forks analyze | sweep | simulate``.

Exit codes: 0 success, 2 bad flags or unreadable input, 3 state cap
exceeded, 4 some sweep points failed, 5 strategy does not match model.
Diagnostics go to stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import io
from .baselines import build_single_tree_chain, honest_errev, single_tree_errev
from .errors import ResourceLimitError, SelfishForksError, StrategyMismatchError, ValidationError
from .model import AttackParams
from .revenue import DEFAULT_EPSILON, compute_errev
from .sim import simulate

log = logging.getLogger("selfish_forks")

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_PARTIAL, EXIT_MISMATCH = 0, 2, 3, 4, 5
CSV_HEADER = ["attack", "p", "gamma", "d", "f", "l", "errev", "epsilon", "states", "wall_time_s"]
ATTACKS = ("ours", "single-tree", "honest")


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(round((b - a) / step))
            values = [round(a + i * step, 10) for i in range(n + 1)]
        else:
            values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"bad grid {text!r}; use start:stop:step or a comma list") from None
    if not values:
        raise ValidationError(f"empty grid {text!r}")
    return values


@dataclass(frozen=True)
class SweepSpec:
    attack: str
    p_grid: tuple[float, ...]
    gammas: tuple[float, ...]
    d: int = 2
    f: int = 1
    l: int = 4
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise ValidationError(f"unknown attack {self.attack!r}")
        if not self.p_grid or not self.gammas:
            raise ValidationError("grids must be non-empty")
        for x in self.p_grid + self.gammas:
            if not 0.0 <= x <= 1.0:
                raise ValidationError(f"grid value {x} outside [0, 1]")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if min(self.d, self.f, self.l) < 1:
            raise ValidationError("d, f, l must be positive")

    def points(self):
        return [(p, g) for p in self.p_grid for g in self.gammas]


def sweep_row(spec: SweepSpec, p: float, gamma: float) -> tuple[list, bool]:
    t0 = time.perf_counter()
    ok = True
    d, eps, errev, states = spec.d, spec.epsilon, "", ""
    try:
        if spec.attack == "honest":
            d, eps = "", ""
            errev, states = honest_errev(p), 1
        elif spec.attack == "single-tree":
            d, eps = "", ""
            states = build_single_tree_chain(p, gamma, spec.l, spec.f).state_count
            errev = single_tree_errev(p, gamma, spec.l, spec.f)
        else:
            rep = compute_errev(AttackParams(p, gamma, spec.d, spec.f, spec.l), spec.epsilon)
            errev, states = rep.errev_lower, rep.state_count
    except SelfishForksError as exc:
        print(f"sweep point p={p} gamma={gamma} failed: {exc}", file=sys.stderr)
        errev, ok = "", False
    wall = round(time.perf_counter() - t0, 3)
    return [spec.attack, p, gamma, d, spec.f if spec.attack != "honest" else "",
            spec.l if spec.attack != "honest" else "", errev, eps, states, wall], ok


def _row_job(args):
    return sweep_row(*args)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> tuple[list[list], bool]:
    tasks = [(spec, p, g) for p, g in spec.points()]
    if jobs <= 1 or len(tasks) == 1:
        results = [_row_job(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_row_job, tasks))   # map keeps grid order
    return [r for r, _ in results], all(ok for _, ok in results)


def format_csv(rows) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _params(ns) -> AttackParams:
    return AttackParams(ns.p, ns.gamma, ns.d, ns.f, ns.l)


def cmd_analyze(ns) -> int:
    params = _params(ns)
    if not ns.epsilon > 0:
        raise ValidationError("--epsilon must be positive")
    t0 = time.perf_counter()
    report = compute_errev(params, ns.epsilon)
    wall = time.perf_counter() - t0
    if ns.strategy_out:
        io.write_strategy_file(ns.strategy_out, report.model, report.strategy)
    _emit(io.dumps(io.analysis_document(report, params, round(wall, 3))), ns.out)
    return EXIT_OK


def cmd_sweep(ns) -> int:
    spec = SweepSpec(ns.attack, tuple(parse_grid(ns.p)), tuple(parse_grid(ns.gamma)),
                     ns.d, ns.f, ns.l, ns.epsilon)
    rows, ok = run_sweep(spec, ns.jobs or os.cpu_count() or 1)
    _emit(format_csv(rows), ns.out)
    return EXIT_OK if ok else EXIT_PARTIAL


def cmd_simulate(ns) -> int:
    params = _params(ns)
    if ns.steps < 1:
        raise ValidationError("--steps must be at least 1")
    sf = io.read_strategy_file(ns.strategy)
    sf.check_params(params)
    trace = open(ns.trace, "w") if ns.trace else None
    try:
        rep = simulate(params, sf.actions, ns.steps, ns.seed, ns.replica, trace=trace)
    finally:
        if trace:
            trace.close()
    _emit(io.dumps(rep.to_dict()), ns.out)
    return EXIT_OK


def _model_flags(ap, required=True):
    ap.add_argument("--p", type=float, required=required)
    ap.add_argument("--gamma", type=float, required=required)
    ap.add_argument("--d", type=int, required=required)
    ap.add_argument("--f", type=int, required=required)
    ap.add_argument("--l", type=int, required=required)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selfish-forks", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="lower bound on relative revenue at one point")
    _model_flags(a)
    a.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    a.add_argument("--out")
    a.add_argument("--strategy-out")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="CSV over a (p, gamma) grid")
    s.add_argument("--attack", choices=ATTACKS, default="ours")
    s.add_argument("--p", required=True, help="start:stop:step or comma list")
    s.add_argument("--gamma", required=True, help="start:stop:step or comma list")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--f", type=int, default=1, help="forking number (tree width for single-tree)")
    s.add_argument("--l", type=int, default=4, help="fork length (tree depth for single-tree)")
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--jobs", type=int, default=0, help="worker processes (0: all CPUs)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="Monte Carlo run of a strategy file")
    _model_flags(m)
    m.add_argument("--strategy", required=True)
    m.add_argument("--steps", type=int, required=True)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--replica", type=int, default=0)
    m.add_argument("--trace")
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except StrategyMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
