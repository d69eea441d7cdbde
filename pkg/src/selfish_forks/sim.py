"""Monte Carlo simulation of the attack under a fixed strategy.

This is a second, independent implementation of the chain rules: forks
are anchored at block heights measured from the public tip, the owner
window is kept oldest-first, and no transition matrix is consulted.  The
only code shared with the model builder is the state encoding, which is
how strategies are looked up.

Per-state outcome lists are derived lazily the first time a state is
visited and memoized, so a long walk only pays for bisection on a
cumulative probability list.

Randomness: ``numpy.random.PCG64`` seeded with
``SeedSequence(seed).spawn(replica + 1)[replica]``; exactly one uniform
is consumed per step, drawn in chunks of ``CHUNK``.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import asdict, dataclass
from os import PathLike
from typing import TYPE_CHECKING, Mapping, NamedTuple, TextIO

import numpy as np

from .encoding import encode_state
from .errors import StrategyMismatchError, ValidationError

if TYPE_CHECKING:
    from .model import AttackParams

GENERATOR = "numpy.random.PCG64 via SeedSequence(seed).spawn(replica + 1)[replica]"
CHUNK = 1 << 16
BATCHES = 100


@dataclass(frozen=True)
class Fork:
    anchor: int   # height of the public block it hangs on; the tip is 0
    slot: int     # 0-based
    length: int


@dataclass(frozen=True)
class SimChain:
    phase: str                      # "M", "H" (honest block pending) or "A"
    window: tuple[str, ...]         # owners of non-final public blocks, oldest first
    forks: tuple[Fork, ...]         # only non-empty forks, sorted

    def encode(self, d: int, f: int) -> str:
        C = [[0] * f for _ in range(d)]
        for fk in self.forks:
            C[-fk.anchor][fk.slot] = fk.length
        return encode_state(self.phase, self.window[::-1], C)


class Step(NamedTuple):
    prob: float
    state: SimChain
    final: str        # owners of the blocks finalized by this step, in order
    published: int
    orphaned: int
    event: str


def start_chain(d: int) -> SimChain:
    return SimChain("M", ("H",) * (d - 1), ())


def _parse_action(text: str):
    if text == "mine":
        return None
    head, _, body = text.partition(":")
    parts = body.split(",")
    if head != "release" or len(parts) != 3 or not all(x.isdigit() for x in parts):
        raise StrategyMismatchError(f"unreadable action {text!r}")
    return tuple(int(x) for x in parts)


def _commit_pending(c: SimChain, d: int) -> tuple[SimChain, str]:
    """Append the pending honest block; everything is one block deeper."""
    seq = c.window + ("H",)
    cut = len(seq) - (d - 1)
    forks = tuple(Fork(fk.anchor - 1, fk.slot, fk.length) for fk in c.forks if fk.anchor - 1 > -d)
    return SimChain("M", seq[cut:], forks), "".join(seq[:cut])


def _mining(c: SimChain, p: float, d: int, f: int, l: int) -> list[Step]:
    grown = []
    for anchor in range(0, -d, -1):
        here = sorted((fk for fk in c.forks if fk.anchor == anchor), key=lambda fk: fk.slot)
        used = {fk.slot for fk in here}
        grown.extend(here)
        free = next((s for s in range(f) if s not in used), None)
        if free is not None:
            grown.append(Fork(anchor, free, 0))
    z = 1 - p + p * len(grown)
    out = []
    for fk in grown:
        rest = tuple(x for x in c.forks if (x.anchor, x.slot) != (fk.anchor, fk.slot))
        new = Fork(fk.anchor, fk.slot, min(fk.length + 1, l))
        forks = tuple(sorted(rest + (new,), key=lambda x: (-x.anchor, x.slot)))
        out.append(Step(p / z, SimChain("A", c.window, forks), "", 0, 0, "adversary-block"))
    out.append(Step((1 - p) / z, SimChain("H", c.window, c.forks), "", 1, 0, "honest-block"))
    return out


def _overtake(c: SimChain, fork: Fork, k: int, d: int) -> tuple[SimChain, str, int]:
    above = -fork.anchor                     # window blocks above the anchor
    kept = c.window[:len(c.window) - above]
    seq = kept + ("A",) * k
    cut = max(0, len(seq) - (d - 1))
    shift = fork.anchor + k                  # old height of the new tip
    forks = []
    for fk in c.forks:
        if fk is fork or fk.anchor > fork.anchor:
            continue
        if fk.anchor - shift > -d:
            forks.append(Fork(fk.anchor - shift, fk.slot, fk.length))
    if fork.length > k:
        forks.append(Fork(0, 0, fork.length - k))
    forks.sort(key=lambda x: (-x.anchor, x.slot))
    orphaned = above + (1 if c.phase == "H" else 0)
    return SimChain("M", seq[cut:], tuple(forks)), "".join(seq[:cut]), orphaned


def outcomes(c: SimChain, action: str, params) -> list[Step]:
    """Every positive-probability result of playing ``action`` in ``c``."""
    p, gamma, d, f, l = params.p, params.gamma, params.d, params.f, params.l
    act = _parse_action(action)
    if act is None:
        if c.phase == "M":
            steps = _mining(c, p, d, f, l)
        elif c.phase == "H":
            nxt, fin = _commit_pending(c, d)
            steps = [Step(1.0, nxt, fin, 0, 0, "wait")]
        else:
            steps = [Step(1.0, SimChain("M", c.window, c.forks), "", 0, 0, "wait")]
        return [s for s in steps if s.prob > 0]
    if c.phase == "M":
        raise StrategyMismatchError(f"release chosen while mining in {c.encode(d, f)}")
    i, j, k = act
    fork = next((fk for fk in c.forks if fk.anchor == 1 - i and fk.slot == j - 1), None)
    if fork is None or k > fork.length or k < 1:
        raise StrategyMismatchError(f"{action} does not fit the forks of {c.encode(d, f)}")
    public_above = (i - 1) + (1 if c.phase == "H" else 0)
    if k < public_above or (k == public_above and c.phase != "H"):
        raise StrategyMismatchError(f"{action} is too short to matter in {c.encode(d, f)}")
    nxt, fin, orph = _overtake(c, fork, k, d)
    if k > public_above:
        return [Step(1.0, nxt, fin, k, orph, "override")]
    lost, lost_fin = _commit_pending(c, d)
    steps = [Step(gamma, nxt, fin, k, orph, "race-won"),
             Step(1.0 - gamma, lost, lost_fin, 0, 0, "race-lost")]
    return [s for s in steps if s.prob > 0]


@dataclass(frozen=True)
class SimReport:
    steps: int
    finalized_adv: int
    finalized_hon: int
    rel_revenue: float | None
    stderr: float | None
    seed: int
    replica: int = 0
    published: int = 0
    orphaned: int = 0
    batches: int = BATCHES
    generator: str = GENERATOR

    @property
    def defined(self) -> bool:
        return self.rel_revenue is not None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimReport":
        return cls(**data)


def _rng(seed: int, replica: int) -> np.random.Generator:
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    child = np.random.SeedSequence(seed).spawn(replica + 1)[replica]
    return np.random.Generator(np.random.PCG64(child))


def _uniforms(rng: np.random.Generator, n: int):
    while n > 0:
        m = min(n, CHUNK)
        yield from rng.random(m).tolist()
        n -= m


def ratio_stderr(adv: np.ndarray, total: np.ndarray) -> float | None:
    """Batch-means standard error of ``sum(adv) / sum(total)`` (delta method)."""
    b = len(adv)
    if b < 2 or total.sum() == 0:
        return None
    r = adv.sum() / total.sum()
    resid = adv - r * total
    return float(math.sqrt(np.sum(resid ** 2) / (b * (b - 1))) / total.mean())


class _Table:
    """Interned states and their cumulative outcome lists under a strategy."""

    def __init__(self, params, strategy: Mapping[str, str]):
        self.params = params
        self.strategy = strategy
        self.ids: dict[SimChain, int] = {}
        self.chains: list[SimChain] = []
        self.cum: list[list[float] | None] = []
        self.rows: list[list | None] = []

    def intern(self, c: SimChain) -> int:
        n = self.ids.get(c)
        if n is None:
            n = self.ids[c] = len(self.chains)
            self.chains.append(c)
            self.cum.append(None)
            self.rows.append(None)
        return n

    def expand(self, n: int) -> None:
        c = self.chains[n]
        key = c.encode(self.params.d, self.params.f)
        if key not in self.strategy:
            raise StrategyMismatchError(f"strategy has no action for visited state {key}")
        steps = outcomes(c, self.strategy[key], self.params)
        acc, cum, row = 0.0, [], []
        for s in steps:
            acc += s.prob
            cum.append(acc)
            row.append((self.intern(s.state), s.final.count("A"), s.final.count("H"),
                        s.published, s.orphaned, s.final, s.event))
        cum[-1] = 1.0
        self.cum[n] = cum
        self.rows[n] = row


def simulate(params, strategy, steps: int, seed: int, replica: int = 0,
             trace: TextIO | None = None, check_conservation: bool = False) -> SimReport:
    """Walk ``steps`` steps from the initial state under ``strategy``.

    ``strategy`` maps encoded states to action strings, or is a path to a
    strategy file.  With ``trace`` set, one tab-separated line
    ``step, state, event, owner`` is written per finalized block.
    """
    if steps < 1:
        raise ValidationError("steps must be at least 1")
    if isinstance(strategy, (str, PathLike)):
        from .io import read_strategy_file
        sf = read_strategy_file(strategy)
        sf.check_params(params)
        strategy = sf.actions
    d = params.d
    table = _Table(params, strategy)
    s = table.intern(start_chain(d))
    batches = min(BATCHES, steps)
    bounds = [steps * (b + 1) // batches for b in range(batches)]
    adv_b = np.zeros(batches, dtype=np.int64)
    hon_b = np.zeros(batches, dtype=np.int64)
    adv = hon = published = orphaned = 0
    b = 0
    cum_all, rows_all = table.cum, table.rows
    for t, u in enumerate(_uniforms(_rng(seed, replica), steps), start=1):
        cum = cum_all[s]
        if cum is None:
            table.expand(s)
            cum = cum_all[s]
        row = rows_all[s]
        nxt, ra, rh, pub, orph, final, event = row[min(bisect_right(cum, u), len(row) - 1)]
        adv += ra
        hon += rh
        if trace is not None and final:
            key = table.chains[s].encode(d, params.f)
            for owner in final:
                trace.write(f"{t}\t{key}\t{event}\t{owner}\n")
        published += pub
        orphaned += orph
        if check_conservation:
            c = table.chains[nxt]
            pending = 1 if c.phase == "H" else 0
            if published + d - 1 != adv + hon + orphaned + len(c.window) + pending:
                raise AssertionError(f"block count mismatch at step {t} entering {c.encode(d, params.f)}")
        s = nxt
        if t == bounds[b]:
            adv_b[b], hon_b[b] = adv, hon
            b += 1
    adv_b = np.diff(adv_b, prepend=0)
    hon_b = np.diff(hon_b, prepend=0)
    total = adv + hon
    return SimReport(
        steps=steps,
        finalized_adv=adv,
        finalized_hon=hon,
        rel_revenue=adv / total if total else None,
        stderr=ratio_stderr(adv_b, adv_b + hon_b) if total else None,
        seed=seed,
        replica=replica,
        published=published,
        orphaned=orphaned,
        batches=batches,
    )


def chain_from_encoding(text: str) -> SimChain:
    from .encoding import decode_state
    kind, owners, C = decode_state(text)
    forks = tuple(Fork(-i, j, c) for i, row in enumerate(C) for j, c in enumerate(row) if c > 0)
    return SimChain(kind, tuple(owners[::-1]), forks)


def transition_frequency_check(params, state, action, samples: int, seed: int) -> float:
    """Largest gap between sampled successor frequencies and the model's probabilities.

    ``state`` is an encoded state string (or anything with ``encode()``),
    ``action`` an action string such as ``"release:1,1,2"``.
    """
    from .model import Action, ChainState, transitions

    text = state if isinstance(state, str) else state.encode()
    action = str(action)
    steps = outcomes(chain_from_encoding(text), action, params)
    cum = np.cumsum([s.prob for s in steps])
    cum[-1] = 1.0
    u = _rng(seed, 0).random(samples)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), len(steps) - 1)
    counts = np.bincount(idx, minlength=len(steps))
    empirical: dict[tuple, float] = {}
    for s, c in zip(steps, counts):
        key = (s.state.encode(params.d, params.f), s.final.count("A"), s.final.count("H"))
        empirical[key] = empirical.get(key, 0.0) + c / samples
    declared: dict[tuple, float] = {}
    for o in transitions(ChainState.decode(text), Action.parse(action), params):
        key = (o.state.encode(), o.reward_adv, o.reward_hon)
        declared[key] = declared.get(key, 0.0) + o.prob
    keys = set(empirical) | set(declared)
    return max(abs(empirical.get(k, 0.0) - declared.get(k, 0.0)) for k in keys)
