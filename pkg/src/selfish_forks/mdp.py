"""Finite MDPs with two integer reward components per transition.

States and actions are dense integers.  Storage is CSR-like and
two-level: ``action_ptr`` slices the (state, action) *pairs* of a state,
``trans_ptr`` slices the outcomes of a pair.  Each outcome carries a
successor, a probability and two non-negative integer reward counts
(adversary blocks finalized, honest blocks finalized), so that one built
model serves every scalarization ``r_adv * (1 - beta) - r_hon * beta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

PROB_ATOL = 1e-12

Outcome = tuple  # (successor, probability, reward_adv, reward_hon)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseMdp:
    state_count: int
    initial_state: int
    action_ptr: np.ndarray
    action_ids: np.ndarray
    trans_ptr: np.ndarray
    succ: np.ndarray
    prob: np.ndarray
    reward_adv: np.ndarray
    reward_hon: np.ndarray
    reward_cap: int | None = None

    def __post_init__(self):
        for name in ("action_ptr", "action_ids", "trans_ptr", "succ", "reward_adv", "reward_hon"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=np.int64)))
        object.__setattr__(self, "prob", _readonly(np.asarray(self.prob, dtype=np.float64)))
        self.validate()

    def validate(self) -> None:
        n = self.state_count
        if n < 1:
            raise ValidationError("an MDP needs at least one state")
        if not 0 <= self.initial_state < n:
            raise ValidationError(f"initial state {self.initial_state} out of range")
        if len(self.action_ptr) != n + 1 or self.action_ptr[0] != 0:
            raise ValidationError("action_ptr must have state_count + 1 entries starting at 0")
        counts = np.diff(self.action_ptr)
        if np.any(counts < 1):
            bad = int(np.flatnonzero(counts < 1)[0])
            raise ValidationError(f"state {bad} has no available action")
        pairs = len(self.action_ids)
        if self.action_ptr[-1] != pairs or len(self.trans_ptr) != pairs + 1:
            raise ValidationError("pair arrays are inconsistent")
        if np.any(np.diff(self.trans_ptr) < 1):
            raise ValidationError("every (state, action) pair needs at least one outcome")
        # action ids strictly increasing within each state
        inner = np.ones(pairs, dtype=bool)
        inner[self.action_ptr[:-1]] = False
        if pairs and np.any(np.diff(self.action_ids)[inner[1:]] <= 0):
            raise ValidationError("action ids must be strictly increasing within a state")
        if len(self.succ) and (self.succ.min() < 0 or self.succ.max() >= n):
            raise ValidationError("successor index out of range")
        if np.any(self.prob < 0) or np.any(self.prob > 1 + PROB_ATOL):
            raise ValidationError("probabilities must lie in [0, 1]")
        sums = np.add.reduceat(self.prob, self.trans_ptr[:-1])
        worst = np.max(np.abs(sums - 1.0)) if pairs else 0.0
        if worst > PROB_ATOL:
            q = int(np.argmax(np.abs(sums - 1.0)))
            raise ValidationError(
                f"outcome probabilities of state {int(self.pair_state[q])}, action "
                f"{int(self.action_ids[q])} sum to {sums[q]!r}"
            )
        if np.any(self.reward_adv < 0) or np.any(self.reward_hon < 0):
            raise ValidationError("reward components must be non-negative")
        if self.reward_cap is not None:
            top = max(int(self.reward_adv.max(initial=0)), int(self.reward_hon.max(initial=0)))
            if top > self.reward_cap:
                raise ValidationError(f"reward component {top} above cap {self.reward_cap}")

    # -- queries ---------------------------------------------------------

    @property
    def pair_count(self) -> int:
        return len(self.action_ids)

    @cached_property
    def pair_state(self) -> np.ndarray:
        return _readonly(np.repeat(np.arange(self.state_count), np.diff(self.action_ptr)))

    @cached_property
    def _pair_keys(self) -> np.ndarray:
        width = int(self.action_ids.max()) + 1
        return _readonly(self.pair_state * width + self.action_ids)

    def actions_of(self, s: int) -> np.ndarray:
        return self.action_ids[self.action_ptr[s]:self.action_ptr[s + 1]]

    def pair_index(self, states, actions) -> np.ndarray:
        """Pair indices for arrays of (state, action id); -1 where unavailable."""
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        width = int(self.action_ids.max()) + 1
        keys = states * width + actions
        pos = np.searchsorted(self._pair_keys, keys)
        pos = np.minimum(pos, self.pair_count - 1)
        ok = (actions >= 0) & (actions < width) & (self._pair_keys[pos] == keys)
        return np.where(ok, pos, -1)

    def transitions_of(self, s: int, a: int) -> list[Outcome]:
        q = int(self.pair_index([s], [a])[0])
        if q < 0:
            raise ValidationError(f"action {a} is not available in state {s}")
        lo, hi = self.trans_ptr[q], self.trans_ptr[q + 1]
        return [
            (int(t), float(p), int(ra), int(rh))
            for t, p, ra, rh in zip(self.succ[lo:hi], self.prob[lo:hi],
                                    self.reward_adv[lo:hi], self.reward_hon[lo:hi])
        ]

    @cached_property
    def pair_matrix(self) -> sp.csr_matrix:
        """(pairs x states) transition matrix, duplicates summed."""
        m = sp.csr_matrix(
            (self.prob.copy(), self.succ.copy(), self.trans_ptr.copy()),
            shape=(self.pair_count, self.state_count),
        )
        m.sum_duplicates()
        return m

    @cached_property
    def pair_components(self) -> tuple[np.ndarray, np.ndarray]:
        """Expected (reward_adv, reward_hon) of each pair."""
        starts = self.trans_ptr[:-1]
        ra = np.add.reduceat(self.prob * self.reward_adv, starts)
        rh = np.add.reduceat(self.prob * self.reward_hon, starts)
        return _readonly(ra), _readonly(rh)

    def pair_rewards(self, transition_rewards: np.ndarray) -> np.ndarray:
        """Expected one-step reward of each pair for a per-transition reward array."""
        r = np.asarray(transition_rewards, dtype=np.float64)
        if r.shape != self.prob.shape:
            raise ValidationError("need one reward per transition")
        return np.add.reduceat(self.prob * r, self.trans_ptr[:-1])

    @classmethod
    def from_transitions(
        cls,
        transitions: Mapping[tuple[int, int], Sequence[Outcome]],
        state_count: int | None = None,
        initial_state: int = 0,
    ) -> "SparseMdp":
        """Build from ``{(state, action): [(succ, prob, r_adv, r_hon), ...]}``."""
        b = MdpBuilder()
        for (s, a) in sorted(transitions):
            b.add(s, a, transitions[(s, a)])
        if state_count is None:
            state_count = 1 + max(max(s for s, _ in transitions),
                                  max(t[0] for outs in transitions.values() for t in outs))
        return b.build(state_count, initial_state)


class MdpBuilder:
    """Accumulates pairs in (state, action) order and emits a SparseMdp.

    Outcomes of one pair that agree on successor *and* both reward
    components are merged; outcomes that only share the successor are kept
    apart because the reward belongs to the event.
    """

    def __init__(self):
        self._action_counts: list[int] = []
        self._action_ids: list[int] = []
        self._trans_counts: list[int] = []
        self._succ: list[int] = []
        self._prob: list[float] = []
        self._ra: list[int] = []
        self._rh: list[int] = []
        self._last: tuple[int, int] = (-1, -1)

    def add(self, state: int, action: int, outcomes: Iterable[Outcome]) -> None:
        if (state, action) <= self._last:
            raise ValidationError("pairs must be added in increasing (state, action) order")
        if state < self._last[0]:
            raise ValidationError("states must be added in order")
        while len(self._action_counts) <= state:
            self._action_counts.append(0)
        self._last = (state, action)
        merged: dict[tuple[int, int, int], float] = {}
        for t, p, ra, rh in outcomes:
            if int(ra) != ra or int(rh) != rh:
                raise ValidationError("reward components must be integers")
            key = (int(t), int(ra), int(rh))
            merged[key] = merged.get(key, 0.0) + float(p)
        if not merged:
            raise ValidationError(f"pair ({state}, {action}) has no outcome")
        self._action_counts[state] += 1
        self._action_ids.append(int(action))
        self._trans_counts.append(len(merged))
        for (t, ra, rh), p in merged.items():
            self._succ.append(t)
            self._prob.append(p)
            self._ra.append(ra)
            self._rh.append(rh)

    def build(self, state_count: int, initial_state: int = 0, reward_cap: int | None = None) -> SparseMdp:
        counts = self._action_counts + [0] * (state_count - len(self._action_counts))
        return SparseMdp(
            state_count=state_count,
            initial_state=initial_state,
            action_ptr=np.concatenate([[0], np.cumsum(counts)]),
            action_ids=np.array(self._action_ids, dtype=np.int64),
            trans_ptr=np.concatenate([[0], np.cumsum(self._trans_counts)]),
            succ=np.array(self._succ, dtype=np.int64),
            prob=np.array(self._prob, dtype=np.float64),
            reward_adv=np.array(self._ra, dtype=np.int64),
            reward_hon=np.array(self._rh, dtype=np.int64),
            reward_cap=reward_cap,
        )


@dataclass(frozen=True, eq=False)
class PositionalStrategy:
    """Total map state -> action id."""

    choice: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "choice", _readonly(np.array(self.choice, dtype=np.int64)))

    def __len__(self) -> int:
        return len(self.choice)

    def __getitem__(self, s: int) -> int:
        return int(self.choice[s])

    def __eq__(self, other) -> bool:
        return isinstance(other, PositionalStrategy) and np.array_equal(self.choice, other.choice)

    def __hash__(self):
        return hash(self.choice.tobytes())

    def pairs(self, mdp: SparseMdp) -> np.ndarray:
        """Pair index chosen in every state; raises if any choice is unavailable."""
        if len(self.choice) != mdp.state_count:
            raise ValidationError(
                f"strategy covers {len(self.choice)} states, model has {mdp.state_count}"
            )
        q = mdp.pair_index(np.arange(mdp.state_count), self.choice)
        if np.any(q < 0):
            s = int(np.flatnonzero(q < 0)[0])
            raise ValidationError(
                f"strategy picks action {int(self.choice[s])} in state {s}, "
                f"available: {mdp.actions_of(s).tolist()}"
            )
        return q

    @classmethod
    def from_pairs(cls, mdp: SparseMdp, pairs: np.ndarray) -> "PositionalStrategy":
        return cls(mdp.action_ids[pairs])

    @classmethod
    def first_action(cls, mdp: SparseMdp) -> "PositionalStrategy":
        return cls(mdp.action_ids[mdp.action_ptr[:-1]])


@dataclass(frozen=True, eq=False)
class InducedChain:
    """Markov chain rows (CSR) with the reward components of the source model."""

    state_count: int
    initial_state: int
    indptr: np.ndarray
    succ: np.ndarray
    prob: np.ndarray
    reward_adv: np.ndarray
    reward_hon: np.ndarray
    labels: tuple | None = field(default=None, repr=False)

    def row(self, s: int) -> list[Outcome]:
        lo, hi = self.indptr[s], self.indptr[s + 1]
        return [
            (int(t), float(p), int(ra), int(rh))
            for t, p, ra, rh in zip(self.succ[lo:hi], self.prob[lo:hi],
                                    self.reward_adv[lo:hi], self.reward_hon[lo:hi])
        ]

    def matrix(self) -> sp.csr_matrix:
        m = sp.csr_matrix((self.prob.copy(), self.succ.copy(), self.indptr.copy()),
                          shape=(self.state_count,) * 2)
        m.sum_duplicates()
        return m

    def expected_components(self) -> tuple[np.ndarray, np.ndarray]:
        starts = self.indptr[:-1]
        return (np.add.reduceat(self.prob * self.reward_adv, starts),
                np.add.reduceat(self.prob * self.reward_hon, starts))

    def check_stochastic(self, atol: float = PROB_ATOL) -> float:
        sums = np.add.reduceat(self.prob, self.indptr[:-1])
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > atol:
            raise ValidationError(f"chain rows deviate from stochastic by {worst:.3e}")
        return worst

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Outcome]], initial_state: int = 0,
                  labels: tuple | None = None) -> "InducedChain":
        flat = [o for r in rows for o in r]
        chain = cls(
            state_count=len(rows),
            initial_state=initial_state,
            indptr=np.concatenate([[0], np.cumsum([len(r) for r in rows])]).astype(np.int64),
            succ=np.array([o[0] for o in flat], dtype=np.int64),
            prob=np.array([o[1] for o in flat], dtype=np.float64),
            reward_adv=np.array([o[2] for o in flat], dtype=np.int64),
            reward_hon=np.array([o[3] for o in flat], dtype=np.int64),
            labels=labels,
        )
        chain.check_stochastic()
        return chain


def induce_chain(mdp: SparseMdp, strategy: PositionalStrategy) -> InducedChain:
    """Fix ``strategy`` in ``mdp``; row s is the outcome list of (s, choice(s))."""
    q = strategy.pairs(mdp)
    lo = mdp.trans_ptr[q]
    lengths = mdp.trans_ptr[q + 1] - lo
    indptr = np.concatenate([[0], np.cumsum(lengths)])
    idx = np.repeat(lo - indptr[:-1], lengths) + np.arange(indptr[-1])
    return InducedChain(
        state_count=mdp.state_count,
        initial_state=mdp.initial_state,
        indptr=indptr,
        succ=mdp.succ[idx],
        prob=mdp.prob[idx],
        reward_adv=mdp.reward_adv[idx],
        reward_hon=mdp.reward_hon[idx],
    )


def scalarize_reward(mdp: SparseMdp, beta: float) -> np.ndarray:
    """Per-transition reward ``(1 - beta)`` per adversary block, ``-beta`` per honest block."""
    if not 0.0 <= beta <= 1.0:
        raise ValidationError(f"beta must lie in [0, 1], got {beta}")
    return mdp.reward_adv * (1.0 - beta) - mdp.reward_hon * beta
