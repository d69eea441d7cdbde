import itertools
from functools import lru_cache

import numpy as np
import pytest

from selfish_forks.mdp import SparseMdp
from selfish_forks.model import AttackParams, build_model
from selfish_forks.revenue import compute_errev

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@lru_cache(maxsize=None)
def model_for(p, gamma, d, f, l):
    return build_model(AttackParams(p, gamma, d, f, l))


@lru_cache(maxsize=None)
def report_for(p, gamma, d, f, l, epsilon=1e-5):
    return compute_errev(AttackParams(p, gamma, d, f, l), epsilon, model=model_for(p, gamma, d, f, l))


def random_mdp(rng: np.random.Generator, n_states=None, max_actions=3, reward_high=4) -> SparseMdp:
    """Small MDP in which every action reaches state 0, so every policy is unichain."""
    n = n_states or int(rng.integers(1, 7))
    trans = {}
    for s in range(n):
        for a in range(int(rng.integers(1, max_actions + 1))):
            k = int(rng.integers(1, n + 1))
            succ = sorted({0, *rng.choice(n, size=k, replace=True).tolist()})
            w = rng.random(len(succ)) + 0.05
            w /= w.sum()
            trans[(s, a)] = [
                (t, float(pw), int(rng.integers(0, reward_high)), int(rng.integers(0, reward_high)))
                for t, pw in zip(succ, w)
            ]
            # absorb rounding so rows sum to 1 within 1e-12
            t, pw, ra, rh = trans[(s, a)][-1]
            trans[(s, a)][-1] = (t, 1.0 - sum(x[1] for x in trans[(s, a)][:-1]), ra, rh)
    return SparseMdp.from_transitions(trans, state_count=n)


def dense_stationary(P: np.ndarray) -> np.ndarray:
    """Least-squares solve of pi P = pi, sum(pi) = 1 (reference implementation)."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


def brute_force_gain(mdp: SparseMdp, rewards: np.ndarray) -> float:
    """Best gain over every positional strategy, each evaluated densely."""
    n = mdp.state_count
    best = -np.inf
    for choice in itertools.product(*(mdp.actions_of(s).tolist() for s in range(n))):
        P = np.zeros((n, n))
        r = np.zeros(n)
        for s, a in enumerate(choice):
            q = int(mdp.pair_index([s], [a])[0])
            lo, hi = mdp.trans_ptr[q], mdp.trans_ptr[q + 1]
            for e in range(lo, hi):
                P[s, mdp.succ[e]] += mdp.prob[e]
                r[s] += mdp.prob[e] * rewards[e]
        best = max(best, float(dense_stationary(P) @ r))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
