"""The multi-fork selfish-mining MDP.

A state is ``(C, O, kind)``:

* ``C`` is a d x f matrix of private fork lengths; ``C[i][j]`` (0-based
  here, depth ``i + 1``) is the j-th fork on the public block at that depth.
* ``O`` holds the owners of the public blocks at depths 1..d-1 (tip
  first).  A block that reaches depth d can no longer be orphaned, so it
  is *finalized* there and its owner is paid.
* ``kind`` says whose turn it is: ``M`` (a block is being mined), ``H``
  (an honest block was just found), ``A`` (an adversary block was just
  found).

Honest blocks are *pending* while ``kind == "H"``: C and O still describe
the chain below the new block, so the adversary can answer with a fork
from any of the d tracked depths.  The window shifts (and one block
finalizes) when the adversary answers with ``mine`` or loses a race.
Publishing k blocks of a fork at depth i races the public chain when
``k == i`` and the fresh block is honest, and overrides it when
``k > i`` (or ``k >= i`` after an adversary block).
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .encoding import decode_state, encode_state
from .errors import ResourceLimitError, ValidationError
from .mdp import MdpBuilder, PositionalStrategy, SparseMdp

MINING, HONEST, ADVERSARY = "M", "H", "A"
MAX_STATES_ENV = "SELFISH_FORKS_MAX_STATES"
DEFAULT_MAX_STATES = 2_000_000


@dataclass(frozen=True)
class AttackParams:
    p: float
    gamma: float
    d: int
    f: int
    l: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"p must lie in [0, 1], got {self.p}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("d", "f", "l"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v}")

    @property
    def estimated_states(self) -> int:
        return 3 * (self.l + 1) ** (self.d * self.f) * 2 ** (self.d - 1)

    @property
    def honest_floor(self) -> float:
        """Smallest honest-block probability of any mining step."""
        return (1 - self.p) / (1 - self.p + self.p * self.d * self.f)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AttackParams":
        return cls(float(data["p"]), float(data["gamma"]), int(data["d"]), int(data["f"]), int(data["l"]))


@dataclass(frozen=True, order=True)
class Action:
    """``mine`` (all zeros) or ``release(i, j, k)`` with 1-based indices."""

    i: int = 0
    j: int = 0
    k: int = 0

    @property
    def is_mine(self) -> bool:
        return self.k == 0

    def __str__(self) -> str:
        return "mine" if self.is_mine else f"release:{self.i},{self.j},{self.k}"

    @classmethod
    def parse(cls, text: str) -> "Action":
        if text == "mine":
            return MINE
        if text.startswith("release:"):
            try:
                i, j, k = (int(x) for x in text[len("release:"):].split(","))
            except ValueError:
                pass
            else:
                if min(i, j, k) >= 1:
                    return cls(i, j, k)
        raise ValidationError(f"malformed action {text!r}")


MINE = Action()


def release(i: int, j: int, k: int) -> Action:
    return Action(i, j, k)


def action_id(action: Action, params: AttackParams) -> int:
    if action.is_mine:
        return 0
    return 1 + ((action.i - 1) * params.f + (action.j - 1)) * params.l + (action.k - 1)


def action_from_id(aid: int, params: AttackParams) -> Action:
    if aid == 0:
        return MINE
    q, k = divmod(aid - 1, params.l)
    i, j = divmod(q, params.f)
    return Action(i + 1, j + 1, k + 1)


@dataclass(frozen=True)
class ChainState:
    C: tuple[tuple[int, ...], ...]
    O: tuple[str, ...]
    kind: str

    def encode(self) -> str:
        return encode_state(self.kind, self.O, self.C)

    @classmethod
    def decode(cls, text: str) -> "ChainState":
        kind, owners, forks = decode_state(text)
        return cls(forks, owners, kind)

    def check(self, params: AttackParams) -> None:
        if len(self.C) != params.d or any(len(r) != params.f for r in self.C):
            raise ValidationError(f"fork matrix of {self.encode()} is not {params.d}x{params.f}")
        if any(not 0 <= c <= params.l for r in self.C for c in r):
            raise ValidationError(f"fork length out of [0, {params.l}] in {self.encode()}")
        if len(self.O) != params.d - 1:
            raise ValidationError(f"owner window of {self.encode()} must have d-1 entries")


class Outcome(NamedTuple):
    state: ChainState
    prob: float
    reward_adv: int = 0
    reward_hon: int = 0
    published: int = 0   # blocks that joined the main chain
    orphaned: int = 0    # main-chain blocks knocked off it


def initial_state(params: AttackParams) -> ChainState:
    zeros = tuple((0,) * params.f for _ in range(params.d))
    return ChainState(zeros, ("H",) * (params.d - 1), MINING)


def _mining_targets(C) -> list[tuple[int, int]]:
    targets = []
    for i, row in enumerate(C):
        fresh = row.index(0) if 0 in row else -1
        for j, c in enumerate(row):
            if c > 0 or j == fresh:
                targets.append((i, j))
    return targets


def mining_fanout(state: ChainState, params: AttackParams) -> int:
    """Number of blocks the adversary mines on: live forks plus one fresh start per depth."""
    return len(_mining_targets(state.C))


def _finalized(blocks) -> tuple[int, int]:
    adv = sum(1 for o in blocks if o == "A")
    return adv, len(blocks) - adv


def _honest_shift(state: ChainState, params: AttackParams) -> Outcome:
    """Commit the pending honest block: new empty top row, deepest window block finalizes."""
    C = ((0,) * params.f,) + state.C[:-1]
    window = ("H",) + state.O
    ra, rh = _finalized(window[params.d - 1:])
    return Outcome(ChainState(C, window[:params.d - 1], MINING), 1.0, ra, rh)


def mining_step_distribution(state: ChainState, params: AttackParams) -> list[Outcome]:
    if state.kind != MINING:
        raise ValidationError(f"mining step requested in non-mining state {state.encode()}")
    p = params.p
    targets = _mining_targets(state.C)
    z = 1 - p + p * len(targets)
    outs = []
    for i, j in targets:
        C = [list(r) for r in state.C]
        C[i][j] = min(C[i][j] + 1, params.l)
        outs.append(Outcome(ChainState(tuple(map(tuple, C)), state.O, ADVERSARY), p / z))
    outs.append(Outcome(ChainState(state.C, state.O, HONEST), (1 - p) / z, published=1))
    return outs


def available_actions(state: ChainState, params: AttackParams) -> list[Action]:
    if state.kind == MINING:
        return [MINE]
    acts = [MINE]
    for i, row in enumerate(state.C, start=1):
        for j, c in enumerate(row, start=1):
            # shorter than the public chain never wins
            acts.extend(Action(i, j, k) for k in range(i, c + 1))
    return acts


def _accept(state: ChainState, a: Action, params: AttackParams) -> Outcome:
    d, f = params.d, params.f
    i, j, k = a.i, a.j, a.k
    window = ("A",) * k + state.O[i - 1:]
    ra, rh = _finalized(window[d - 1:])
    rows = [(state.C[i - 1][j - 1] - k,) + (0,) * (f - 1)]
    rows += [(0,) * f] * (min(d, k) - 1)
    for r in range(i - 1, d):
        if len(rows) == d:
            break
        row = state.C[r]
        if r == i - 1:
            row = row[:j - 1] + (0,) + row[j:]
        rows.append(row)
    orphaned = (i - 1) + (1 if state.kind == HONEST else 0)
    return Outcome(ChainState(tuple(rows), window[:d - 1], MINING), 1.0, ra, rh, k, orphaned)


def release_lead(state: ChainState, a: Action) -> int:
    """Published length minus the public chain above the fork base."""
    above = a.i if state.kind == HONEST else a.i - 1
    return a.k - above


def apply_release(state: ChainState, action: Action, params: AttackParams) -> list[Outcome]:
    if state.kind == MINING or action.is_mine:
        raise ValidationError("apply_release needs a release action in a non-mining state")
    if not (1 <= action.i <= params.d and 1 <= action.j <= params.f):
        raise ValidationError(f"{action} addresses a fork outside the window")
    if action.k > state.C[action.i - 1][action.j - 1]:
        raise ValidationError(f"{action} publishes more blocks than fork holds in {state.encode()}")
    lead = release_lead(state, action)
    if lead < 0 or (lead == 0 and state.kind != HONEST):
        raise ValidationError(f"{action} cannot displace the public chain in {state.encode()}")
    won = _accept(state, action, params)
    if lead >= 1:
        return [won]
    lost = _honest_shift(state, params)
    g = params.gamma
    return [won._replace(prob=g), lost._replace(prob=1 - g)]


def apply_mine(state: ChainState, params: AttackParams) -> list[Outcome]:
    if state.kind == MINING:
        return mining_step_distribution(state, params)
    if state.kind == HONEST:
        return [_honest_shift(state, params)]
    return [Outcome(ChainState(state.C, state.O, MINING), 1.0)]


def transitions(state: ChainState, action: Action, params: AttackParams) -> list[Outcome]:
    if action.is_mine:
        return apply_mine(state, params)
    return apply_release(state, action, params)


def window_occupancy(state: ChainState, params: AttackParams) -> int:
    """Public blocks not yet finalized: the d-1 window plus a pending honest block."""
    return params.d - 1 + (1 if state.kind == HONEST else 0)


@dataclass(frozen=True, eq=False)
class AttackModel:
    params: AttackParams
    mdp: SparseMdp
    states: tuple[ChainState, ...]
    index: dict

    @property
    def state_count(self) -> int:
        return self.mdp.state_count

    def action(self, aid: int) -> Action:
        return action_from_id(int(aid), self.params)

    def strategy_to_map(self, strategy: PositionalStrategy) -> dict[str, str]:
        strategy.pairs(self.mdp)
        return {s.encode(): str(self.action(a)) for s, a in zip(self.states, strategy.choice)}

    def strategy_from_map(self, mapping: dict[str, str]) -> PositionalStrategy:
        choice = np.empty(self.state_count, dtype=np.int64)
        for n, s in enumerate(self.states):
            key = s.encode()
            if key not in mapping:
                raise ValidationError(f"strategy has no action for reachable state {key}")
            choice[n] = action_id(Action.parse(mapping[key]), self.params)
        strategy = PositionalStrategy(choice)
        strategy.pairs(self.mdp)
        return strategy

    def never_release(self) -> PositionalStrategy:
        return PositionalStrategy(np.zeros(self.state_count, dtype=np.int64))


def state_cap() -> int:
    return int(os.environ.get(MAX_STATES_ENV, DEFAULT_MAX_STATES))


def build_model(params: AttackParams, max_states: int | None = None) -> AttackModel:
    """Explore the states reachable from the initial state.

    States are numbered breadth-first; within one BFS layer they are
    ordered by their encoding string.  Zero-probability outcomes are
    dropped, so e.g. ``p == 0`` yields a tiny model.
    """
    cap = state_cap() if max_states is None else max_states
    if params.estimated_states > cap:
        raise ResourceLimitError(params.estimated_states, cap)
    s0 = initial_state(params)
    index = {s0: 0}
    order = [s0]
    expanded = []
    frontier = [s0]
    while frontier:
        fresh = set()
        for s in frontier:
            rows = []
            for a in available_actions(s, params):
                outs = [o for o in transitions(s, a, params) if o.prob > 0]
                rows.append((action_id(a, params), outs))
                fresh.update(o.state for o in outs if o.state not in index)
            expanded.append(rows)
        frontier = sorted(fresh, key=ChainState.encode)
        for s in frontier:
            index[s] = len(order)
            order.append(s)
    b = MdpBuilder()
    for n, rows in enumerate(expanded):
        for aid, outs in rows:
            b.add(n, aid, [(index[o.state], o.prob, o.reward_adv, o.reward_hon) for o in outs])
    mdp = b.build(len(order), 0, reward_cap=params.l + params.d)
    return AttackModel(params, mdp, tuple(order), index)
