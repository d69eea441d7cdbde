"""Mean-payoff (long-run average reward) solver for unichain MDPs.

Policy iteration is the default method.  Evaluation solves

    g + h(s) = r(s) + sum_t P(s, t) h(t),     h(ref) = 0

as one linear system in which the ``h(ref)`` column is replaced by the
unknown gain.  The same matrix, transposed, gives the stationary
distribution, so a single factorization serves both.

Relative value iteration (with an aperiodicity transform) is available as
``method="value"``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, StructuralError, ValidationError
from .mdp import InducedChain, PositionalStrategy, SparseMdp, induce_chain

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
IMPROVEMENT_MARGIN = 1e-12
DIRECT_LIMIT = 10_000
VI_MAX_ITER = 1_000_000
PI_MAX_ITER = 10_000


@dataclass(frozen=True)
class SolveResult:
    gain: float
    strategy: PositionalStrategy
    iterations: int
    residual: float
    bias: np.ndarray


@dataclass(frozen=True)
class GainPair:
    gain_adv: float
    gain_hon: float

    @property
    def total(self) -> float:
        return self.gain_adv + self.gain_hon


class UnichainSystem:
    """Factorized ``I - P`` with the reference column replaced by ones."""

    def __init__(self, P: sp.spmatrix, ref: int, direct_limit: int = DIRECT_LIMIT):
        n = P.shape[0]
        self.n, self.ref = n, ref
        keep = np.ones(n)
        keep[ref] = 0.0
        ones_col = sp.csc_matrix((np.ones(n), (np.arange(n), np.full(n, ref))), shape=(n, n))
        self.M = ((sp.identity(n, format="csc") - P.tocsc()) @ sp.diags(keep) + ones_col).tocsc()
        self.direct = n <= direct_limit
        self._lu = None

    def _factor(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.M)
            except RuntimeError as exc:
                raise StructuralError(
                    "policy-evaluation system is singular; the induced chain "
                    "has more than one recurrent class"
                ) from exc
        return self._lu

    def _iterative(self, A, b):
        try:
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-6, fill_factor=20)
            pre = spla.LinearOperator(A.shape, ilu.solve)
        except RuntimeError:
            pre = None
        x, info = spla.gmres(A, b, M=pre, rtol=1e-13, atol=0.0, restart=200, maxiter=500)
        if info != 0:
            return None
        return x

    def solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        A = self.M.T.tocsc() if transpose else self.M
        x = None
        if not self.direct:
            x = self._iterative(A, b)
            if x is None:
                log.debug("iterative solve did not converge; falling back to LU")
        if x is None:
            x = self._factor().solve(b, trans="T" if transpose else "N")
        if not np.all(np.isfinite(x)):
            raise StructuralError("policy-evaluation system is singular")
        resid = np.max(np.abs(A @ x - b), initial=0.0)
        if resid > 1e-8 * (1.0 + np.max(np.abs(b), initial=0.0)):
            raise StructuralError(
                f"policy-evaluation system is ill-conditioned (residual {resid:.2e}); "
                "the induced chain is probably not unichain"
            )
        return x


def _evaluate(P_pi, r_pi, ref, direct_limit):
    x = UnichainSystem(P_pi, ref, direct_limit).solve(r_pi)
    gain = float(x[ref])
    h = x.copy()
    h[ref] = 0.0
    return gain, h


def _greedy(mdp: SparseMdp, Q: np.ndarray):
    """Per-state max of Q and the lowest-id pair achieving it."""
    starts = mdp.action_ptr[:-1]
    best = np.maximum.reduceat(Q, starts)
    idx = np.arange(mdp.pair_count)
    cand = np.where(Q >= best[mdp.pair_state], idx, mdp.pair_count)
    return best, np.minimum.reduceat(cand, starts)


def bellman_residual(mdp: SparseMdp, r_pair: np.ndarray, gain: float, bias: np.ndarray) -> float:
    best, _ = _greedy(mdp, r_pair + mdp.pair_matrix @ bias)
    return float(np.max(np.abs(best - gain - bias)))


def solve_pairs(
    mdp: SparseMdp,
    r_pair: np.ndarray,
    tolerance: float = DEFAULT_TOL,
    method: str = "policy",
    initial: PositionalStrategy | None = None,
    direct_limit: int = DIRECT_LIMIT,
    max_iter: int | None = None,
    fallback: bool = True,
) -> SolveResult:
    """Like :func:`solve_mean_payoff` but with rewards given per (state, action) pair."""
    if tolerance <= 0:
        raise ValidationError("tolerance must be positive")
    r_pair = np.asarray(r_pair, dtype=np.float64)
    if method == "policy":
        try:
            return _policy_iteration(mdp, r_pair, tolerance, initial, direct_limit,
                                     max_iter or PI_MAX_ITER)
        except StructuralError:
            if not fallback:
                raise
            # some intermediate policy split the chain; value iteration copes
            # with that as long as the optimal gain is state-independent
            log.debug("policy evaluation singular; switching to value iteration")
            return _relative_value_iteration(mdp, r_pair, tolerance, direct_limit, VI_MAX_ITER)
    if method == "value":
        return _relative_value_iteration(mdp, r_pair, tolerance, direct_limit,
                                         max_iter or VI_MAX_ITER)
    raise ValidationError(f"unknown method {method!r}")


def solve_mean_payoff(
    mdp: SparseMdp,
    rewards: np.ndarray,
    tolerance: float = DEFAULT_TOL,
    method: str = "policy",
    initial: PositionalStrategy | None = None,
    direct_limit: int = DIRECT_LIMIT,
    max_iter: int | None = None,
    fallback: bool = True,
) -> SolveResult:
    """Optimal gain and a positional strategy achieving it.

    ``rewards`` holds one real reward per transition (aligned with
    ``mdp.prob``), e.g. the output of :func:`selfish_forks.mdp.scalarize_reward`.
    With ``fallback`` set, a singular policy evaluation hands over to
    relative value iteration instead of raising.
    """
    return solve_pairs(mdp, mdp.pair_rewards(rewards), tolerance, method, initial,
                       direct_limit, max_iter, fallback)


def _policy_iteration(mdp, r_pair, tolerance, initial, direct_limit, max_iter):
    P_all = mdp.pair_matrix
    ref = mdp.initial_state
    pol = (initial or PositionalStrategy.first_action(mdp)).pairs(mdp)
    for it in range(1, max_iter + 1):
        gain, h = _evaluate(P_all[pol], r_pair[pol], ref, direct_limit)
        Q = r_pair + P_all @ h
        best, first = _greedy(mdp, Q)
        improve = best > Q[pol] + IMPROVEMENT_MARGIN
        if not improve.any():
            residual = float(np.max(np.abs(best - gain - h)))
            if residual > tolerance:
                raise ConvergenceError("policy iteration stopped above tolerance", residual)
            return SolveResult(gain, PositionalStrategy.from_pairs(mdp, pol), it, residual, h)
        pol = np.where(improve, first, pol)
    raise ConvergenceError(f"policy iteration did not stabilise in {max_iter} rounds", np.inf)


def _relative_value_iteration(mdp, r_pair, tolerance, direct_limit, max_iter, tau=0.5):
    P_all = mdp.pair_matrix
    ref = mdp.initial_state
    ps = mdp.pair_state
    h = np.zeros(mdp.state_count)
    span = np.inf
    for it in range(1, max_iter + 1):
        Q = r_pair + tau * h[ps] + (1.0 - tau) * (P_all @ h)
        best, first = _greedy(mdp, Q)
        diff = best - h
        lo, hi = diff.min(), diff.max()
        span = hi - lo
        h = best - best[ref]
        if span < tolerance:
            break
    else:
        raise ConvergenceError(f"value iteration hit the {max_iter}-sweep cap", span)
    gain = 0.5 * (lo + hi)
    bias = (1.0 - tau) * h
    # final evaluation pass of the greedy strategy
    eval_gain, _ = _evaluate(P_all[first], r_pair[first], ref, direct_limit)
    if eval_gain < lo - tolerance:
        raise ConvergenceError("greedy strategy falls short of the value-iteration bound",
                               lo - eval_gain)
    residual = bellman_residual(mdp, r_pair, gain, bias)
    return SolveResult(gain, PositionalStrategy.from_pairs(mdp, first), it, residual, bias)


def stationary_distribution(chain: InducedChain, tolerance: float = DEFAULT_TOL,
                            direct_limit: int = DIRECT_LIMIT) -> np.ndarray:
    """Stationary distribution of a unichain chain (periodicity allowed)."""
    P = chain.matrix()
    system = UnichainSystem(P, chain.initial_state, direct_limit)
    b = np.zeros(chain.state_count)
    b[chain.initial_state] = 1.0
    pi = system.solve(b, transpose=True)
    if pi.min() < -max(tolerance, 1e-12):
        raise StructuralError("stationary solve produced negative mass; chain is not unichain")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    err = float(np.max(np.abs(P.T @ pi - pi)))
    if err > tolerance:
        raise StructuralError(f"stationary residual {err:.2e} above tolerance")
    return pi


def chain_gains(chain: InducedChain, tolerance: float = DEFAULT_TOL) -> GainPair:
    pi = stationary_distribution(chain, tolerance)
    ra, rh = chain.expected_components()
    return GainPair(float(pi @ ra), float(pi @ rh))


def evaluate_strategy(mdp: SparseMdp, strategy: PositionalStrategy,
                      tolerance: float = DEFAULT_TOL) -> GainPair:
    """Long-run average of each reward component under ``strategy``."""
    return chain_gains(induce_chain(mdp, strategy), tolerance)
