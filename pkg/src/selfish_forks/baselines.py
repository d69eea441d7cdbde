"""Reference strategies: honest mining and a single private tree.

The tree attack keeps one private tree rooted at the last common block.
Only the number of blocks per tree depth is tracked: a new block at
depth i + 1 can attach to any of the ``profile[i]`` blocks at depth i,
so that count is all the transition law needs.

Trigger rules (lead = tree depth minus honest blocks mined since the fork):

* lead 0, honest block: the honest block simply joins the chain.
* lead 1, honest block: the public chain catches up and the adversary
  publishes its deepest path.  Honest miners switch with probability
  gamma; the winner's branch joins the chain.
* lead 2, honest block: the adversary publishes its deepest path and
  wins by one block.
* lead >= 3, honest block: lead drops by one, nothing is published.

Mining successes beyond depth ``l_tree`` or above width ``f_tree`` are
dropped, which makes them self-loops.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ValidationError
from .mdp import InducedChain
from .solver import DEFAULT_TOL, chain_gains


def honest_errev(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True, order=True)
class TreeState:
    profile: tuple[int, ...]
    lead: int = 0

    @property
    def depth(self) -> int:
        return max((i + 1 for i, c in enumerate(self.profile) if c > 0), default=0)

    @property
    def size(self) -> int:
        return sum(self.profile)


class TreeOutcome(NamedTuple):
    state: TreeState
    prob: float
    reward_adv: int = 0
    reward_hon: int = 0
    orphaned_adv: int = 0
    orphaned_hon: int = 0


def _check(p, gamma, l_tree, f_tree):
    if not 0.0 <= p <= 1.0 or not 0.0 <= gamma <= 1.0:
        raise ValidationError("p and gamma must lie in [0, 1]")
    if l_tree < 1 or f_tree < 1:
        raise ValidationError("tree depth and width must be at least 1")


def tree_outcomes(s: TreeState, p: float, gamma: float, l_tree: int, f_tree: int) -> list[TreeOutcome]:
    prof, lead = s.profile, s.lead
    depth, size = s.depth, s.size
    z = 1.0 - p + p * (1 + size)
    ph = (1.0 - p) / z
    empty = TreeState((0,) * l_tree, 0)
    honest_since_fork = depth - lead
    out = []
    if lead == 0:
        out.append(TreeOutcome(empty, ph, 0, 1))
    elif lead == 1:
        # race: the published path and the honest branch have equal length
        out.append(TreeOutcome(empty, ph * gamma, depth, 0, size - depth, honest_since_fork + 1))
        out.append(TreeOutcome(empty, ph * (1 - gamma), 0, depth, size, 0))
    elif lead == 2:
        out.append(TreeOutcome(empty, ph, depth, 0, size - depth, honest_since_fork + 1))
    else:
        out.append(TreeOutcome(TreeState(prof, lead - 1), ph))
    # a block at depth i+1 may hang below any of the profile[i] blocks; depth 1 below the root
    weights = (1,) + prof
    for i, w in enumerate(weights):
        if w == 0:
            continue
        pa = p * w / z
        if i >= l_tree or prof[i] >= f_tree:
            out.append(TreeOutcome(s, pa))
            continue
        new = list(prof)
        new[i] += 1
        out.append(TreeOutcome(TreeState(tuple(new), lead + max(0, i + 1 - depth)), pa))
    return [o for o in out if o.prob > 0]


def build_single_tree_chain(p: float, gamma: float, l_tree: int = 4, f_tree: int = 5) -> InducedChain:
    """Markov chain of the tree attack; states are BFS-ordered and kept in ``labels``."""
    _check(p, gamma, l_tree, f_tree)
    s0 = TreeState((0,) * l_tree, 0)
    index = {s0: 0}
    order = [s0]
    rows = []
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        row = []
        for o in tree_outcomes(s, p, gamma, l_tree, f_tree):
            if o.state not in index:
                index[o.state] = len(order)
                order.append(o.state)
                queue.append(o.state)
            row.append((index[o.state], o.prob, o.reward_adv, o.reward_hon))
        rows.append(row)
    return InducedChain.from_rows(rows, 0, labels=tuple(order))


def single_tree_errev(p: float, gamma: float, l_tree: int = 4, f_tree: int = 5,
                      tolerance: float = DEFAULT_TOL) -> float:
    chain = build_single_tree_chain(p, gamma, l_tree, f_tree)
    g = chain_gains(chain, tolerance)
    if g.gain_adv == 0.0:
        return 0.0
    return g.gain_adv / g.total
