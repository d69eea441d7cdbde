"""Relative revenue of the attack via bisection on a scalarized reward.

For a fixed ``beta`` the reward ``r_adv * (1 - beta) - r_hon * beta`` has an
optimal gain that is non-increasing in ``beta`` and crosses zero exactly at
the best achievable relative revenue.  :func:`compute_errev` brackets that
crossing to width ``epsilon`` and returns the lower end together with a
strategy whose relative revenue is at least that value.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .errors import StructuralError, ValidationError
from .mdp import PositionalStrategy, SparseMdp, scalarize_reward
from .model import AttackModel, AttackParams, build_model
from .solver import DEFAULT_TOL, SolveResult, evaluate_strategy, solve_mean_payoff

DEFAULT_EPSILON = 1e-5
DEAD_BAND_FACTOR = 10.0


class BracketError(AssertionError):
    pass


@dataclass(frozen=True)
class RevenueReport:
    errev_lower: float
    strategy: PositionalStrategy
    epsilon: float
    beta_trace: tuple[tuple[float, float], ...]
    state_count: int
    solver_calls: int
    build_time_s: float = 0.0
    solve_time_s: float = 0.0
    model: AttackModel | None = field(default=None, repr=False, compare=False)


def mp_at_beta(mdp: SparseMdp, beta: float, tolerance: float = DEFAULT_TOL,
               initial: PositionalStrategy | None = None) -> tuple[float, PositionalStrategy]:
    res = _solve(mdp, beta, tolerance, initial)
    return res.gain, res.strategy


def _solve(mdp, beta, tolerance, initial=None) -> SolveResult:
    return solve_mean_payoff(mdp, scalarize_reward(mdp, beta), tolerance, initial=initial)


def errev_bisection(mdp: SparseMdp, epsilon: float = DEFAULT_EPSILON,
                    tolerance: float = DEFAULT_TOL):
    """Bisection on a built model.

    Returns ``(beta_low, strategy, trace)``.  A gain within
    ``DEAD_BAND_FACTOR * tolerance`` of zero counts as non-negative, which
    keeps ``beta_low`` on the safe side.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    band = DEAD_BAND_FACTOR * tolerance
    lo, hi = 0.0, 1.0
    trace: list[tuple[float, float]] = []
    solved: dict[float, SolveResult] = {}
    warm = None
    while hi - lo >= epsilon:
        beta = 0.5 * (lo + hi)
        res = _solve(mdp, beta, tolerance, warm)
        warm = res.strategy
        solved[beta] = res
        trace.append((beta, res.gain))
        if res.gain < -band:
            hi = beta
        else:
            lo = beta
        _check_bracket(lo, hi, solved, band)
    if lo not in solved:
        res = _solve(mdp, lo, tolerance, warm)
        solved[lo] = res
        trace.append((lo, res.gain))
    trace.sort()
    return lo, solved[lo].strategy, tuple(trace)


def _check_bracket(lo, hi, solved, band):
    """gain(lo) >= -band unless lo == 0, and gain(hi) < -band unless hi == 1."""
    if not (hi > lo
            and (lo == 0.0 or solved[lo].gain >= -band)
            and (hi == 1.0 or solved[hi].gain < -band)):
        raise BracketError(f"bisection bracket [{lo}, {hi}] lost its sign pattern")


def max_solver_calls(epsilon: float) -> int:
    return math.ceil(math.log2(1.0 / epsilon)) + 2


def compute_errev(params: AttackParams, epsilon: float = DEFAULT_EPSILON,
                  tolerance: float = DEFAULT_TOL, model: AttackModel | None = None) -> RevenueReport:
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    t0 = time.perf_counter()
    if model is None:
        model = build_model(params)
    t1 = time.perf_counter()
    beta, strategy, trace = errev_bisection(model.mdp, epsilon, tolerance)
    t2 = time.perf_counter()
    return RevenueReport(
        errev_lower=beta,
        strategy=strategy,
        epsilon=epsilon,
        beta_trace=trace,
        state_count=model.state_count,
        solver_calls=len(trace),
        build_time_s=t1 - t0,
        solve_time_s=t2 - t1,
        model=model,
    )


def gain_ratio(gain_adv: float, gain_hon: float, tolerance: float = DEFAULT_TOL) -> float:
    total = gain_adv + gain_hon
    if total < 10 * tolerance:
        raise StructuralError(f"finalization rate {total:.3e} is numerically zero")
    return gain_adv / total


def exact_errev(params_or_model, strategy: PositionalStrategy,
                tolerance: float = DEFAULT_TOL) -> float:
    """Relative revenue of a fixed strategy, from the two long-run rates.

    Accepts either :class:`AttackParams` (the model is rebuilt) or an
    already built :class:`AttackModel`.
    """
    model = params_or_model
    if isinstance(model, AttackParams):
        model = build_model(model)
    gains = evaluate_strategy(model.mdp, strategy, tolerance)
    return gain_ratio(gains.gain_adv, gains.gain_hon, tolerance)


def chain_quality(errev: float) -> float:
    if not 0.0 <= errev <= 1.0:
        raise ValidationError(f"relative revenue must lie in [0, 1], got {errev}")
    return 1.0 - errev
