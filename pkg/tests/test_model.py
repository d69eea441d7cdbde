from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfish_forks.errors import ResourceLimitError, ValidationError
from selfish_forks.model import (MINE, Action, AttackParams, ChainState, action_from_id, action_id,
                                 apply_mine, apply_release, available_actions, build_model,
                                 initial_state, mining_fanout, mining_step_distribution,
                                 transitions, window_occupancy)
from selfish_forks.sim import chain_from_encoding, outcomes as sim_outcomes

from conftest import model_for


def st_(C, O, kind):
    return ChainState(tuple(map(tuple, C)), tuple(O), kind)


# -- parameters and actions ---------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(p=-0.1, gamma=0.5, d=1, f=1, l=1),
    dict(p=0.1, gamma=1.1, d=1, f=1, l=1),
    dict(p=0.1, gamma=0.5, d=0, f=1, l=1),
    dict(p=0.1, gamma=0.5, d=1, f=1, l=0),
])
def test_param_validation(kw):
    with pytest.raises(ValidationError):
        AttackParams(**kw)


def test_params_round_trip():
    p = AttackParams(0.3, 0.5, 2, 2, 4)
    assert AttackParams.from_dict(p.to_dict()) == p


@settings(max_examples=50)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 6), st.data())
def test_action_ids_round_trip(d, f, l, data):
    params = AttackParams(0.2, 0.5, d, f, l)
    a = Action(data.draw(st.integers(1, d)), data.draw(st.integers(1, f)), data.draw(st.integers(1, l)))
    assert action_from_id(action_id(a, params), params) == a
    assert Action.parse(str(a)) == a
    assert action_id(MINE, params) == 0


@pytest.mark.parametrize("text", ["release:0,1,1", "release:1,1", "hold", "release:a,b,c"])
def test_bad_action_strings(text):
    with pytest.raises(ValidationError):
        Action.parse(text)


def test_encoding_round_trip():
    s = st_([[1, 0], [0, 2]], "A", "H")
    assert s.encode() == "T:H;O:A;C:1,0|0,2"
    assert ChainState.decode(s.encode()) == s


# -- initial state and mining ---------------------------------------------------

@pytest.mark.parametrize("d, f, C, O", [
    (2, 1, [[0], [0]], "H"),
    (1, 1, [[0]], ""),
    (3, 2, [[0, 0]] * 3, "HH"),
])
def test_initial_state(d, f, C, O):
    assert initial_state(AttackParams(0.2, 0.5, d, f, 3)) == st_(C, O, "M")


@pytest.mark.parametrize("d, f, C, sigma", [
    (2, 2, [[0, 0], [0, 0]], 2),
    (2, 1, [[1], [0]], 2),
    (2, 2, [[1, 3], [2, 1]], 4),
    (2, 3, [[0, 2, 0], [0, 0, 0]], 3),
])
def test_mining_fanout(d, f, C, sigma):
    params = AttackParams(0.3, 0.5, d, f, 4)
    assert mining_fanout(st_(C, "H" * (d - 1), "M"), params) == sigma


def test_mining_probabilities_d1():
    params = AttackParams(0.3, 0.5, 1, 1, 4)
    outs = mining_step_distribution(st_([[2]], "", "M"), params)
    probs = sorted(o.prob for o in outs)
    assert probs == pytest.approx([0.3, 0.7], abs=1e-15)


def test_mining_probabilities_d2():
    params = AttackParams(0.3, 0.5, 2, 1, 4)
    outs = mining_step_distribution(st_([[1], [0]], "H", "M"), params)
    honest = [o for o in outs if o.state.kind == "H"]
    adv = [o for o in outs if o.state.kind == "A"]
    assert honest[0].prob == pytest.approx(0.7 / 1.3, abs=1e-15)
    assert [o.prob for o in adv] == pytest.approx([0.3 / 1.3] * 2, abs=1e-15)
    assert {o.state.C for o in adv} == {((2,), (0,)), ((1,), (1,))}


def test_honest_block_finalizes_oldest_window_entry():
    # honest block found, then committed: the adversary block at depth 1 drops to depth 2
    params = AttackParams(0.3, 0.5, 2, 1, 4)
    s = st_([[0], [0]], "A", "M")
    found = [o for o in mining_step_distribution(s, params) if o.state.kind == "H"][0]
    assert (found.reward_adv, found.reward_hon, found.published) == (0, 0, 1)
    [commit] = apply_mine(found.state, params)
    assert commit.state.O == ("H",)
    assert (commit.reward_adv, commit.reward_hon) == (1, 0)


def test_fork_length_capped():
    params = AttackParams(0.3, 0.5, 1, 1, 2)
    outs = mining_step_distribution(st_([[2]], "", "M"), params)
    assert any(o.state == st_([[2]], "", "A") for o in outs)


def test_mining_step_rejects_other_kinds():
    with pytest.raises(ValidationError):
        mining_step_distribution(st_([[0]], "", "H"), AttackParams(0.3, 0.5, 1, 1, 2))


# -- actions -------------------------------------------------------------------

def test_actions_honest_d1():
    params = AttackParams(0.3, 0.5, 1, 1, 4)
    acts = available_actions(st_([[2]], "", "H"), params)
    assert acts == [MINE, Action(1, 1, 1), Action(1, 1, 2)]


def test_actions_adversary_excludes_equal_length():
    params = AttackParams(0.3, 0.5, 2, 1, 4)
    acts = available_actions(st_([[0], [1]], "H", "A"), params)
    assert Action(2, 1, 1) not in acts
    assert acts == [MINE]


def test_actions_mining_kind():
    params = AttackParams(0.3, 0.5, 2, 2, 4)
    assert available_actions(st_([[1, 2], [3, 4]], "A", "M"), params) == [MINE]


# -- releases -------------------------------------------------------------------

def test_override_from_depth_one_with_pending_block():
    # fork of 3 on the tip, honest block pending, publish 2: wins by one
    params = AttackParams(0.3, 0.5, 2, 1, 4)
    [o] = apply_release(st_([[3], [0]], "H", "H"), Action(1, 1, 2), params)
    assert o.prob == 1.0
    assert o.state == st_([[1], [0]], "A", "M")
    # the old depth-1 block and one published block both reach depth 2
    assert (o.reward_adv, o.reward_hon) == (1, 1)
    assert (o.published, o.orphaned) == (2, 1)


def test_release_after_adversary_block_d1():
    params = AttackParams(0.3, 0.5, 1, 1, 4)
    [o] = apply_release(st_([[1]], "", "A"), Action(1, 1, 1), params)
    assert o.state == st_([[0]], "", "M")
    assert (o.reward_adv, o.reward_hon) == (1, 0)


def test_race_on_tip():
    params = AttackParams(0.3, 0.5, 2, 1, 4)
    s = st_([[1], [0]], "H", "H")
    won, lost = apply_release(s, Action(1, 1, 1), params)
    assert won.prob == lost.prob == 0.5
    assert won.state.O == ("A",)
    assert won.orphaned == 1
    # losing the race commits the honest block and keeps the fork, now one level deeper
    assert lost.state == st_([[0], [1]], "H", "M")
    assert (lost.reward_adv, lost.reward_hon) == (0, 1)


def test_deep_release_keeps_surviving_rows():
    params = AttackParams(0.3, 0.5, 3, 2, 4)
    s = st_([[1, 0], [3, 2], [4, 1]], "AH", "A")
    [o] = apply_release(s, Action(2, 1, 3), params)
    # new tip: 3 published blocks; tail of 0; old depth-2 row (slot 1 cleared) now at depth 4 -> gone
    assert o.state == st_([[0, 0], [0, 0], [0, 0]], "AA", "M")
    # window was [A(d1), H(d2)]; cat = AAA + [H] -> finalized AH
    assert (o.reward_adv, o.reward_hon) == (1, 1)
    assert o.orphaned == 1


def test_release_keeps_sibling_fork():
    params = AttackParams(0.3, 0.5, 3, 2, 4)
    s = st_([[0, 0], [3, 2], [0, 0]], "AH", "A")
    [o] = apply_release(s, Action(2, 1, 2), params)
    assert o.state.C == ((1, 0), (0, 0), (0, 2))


@pytest.mark.parametrize("state, action", [
    (st_([[1]], "", "H"), Action(1, 1, 2)),     # longer than the fork
    (st_([[0], [1]], "H", "H"), Action(2, 1, 1)),  # shorter than the public chain
    (st_([[1], [0]], "H", "A"), Action(2, 1, 1)),  # no fork at depth 2
])
def test_invalid_releases(state, action):
    with pytest.raises(ValidationError):
        apply_release(state, action, AttackParams(0.3, 0.5, len(state.C), 1, 4))


def test_gamma_zero_race_drops_accept():
    params = AttackParams(0.3, 0.0, 1, 1, 4)
    model = build_model(params)
    s = st_([[1]], "", "H")
    n = model.index[s]
    outs = model.mdp.transitions_of(n, action_id(Action(1, 1, 1), params))
    assert len(outs) == 1 and outs[0][1] == 1.0


# -- model builder ----------------------------------------------------------------

@pytest.mark.parametrize("d, f, l, bound", [(1, 1, 2, 9), (2, 2, 4, 3750), (1, 1, 1, 6), (2, 1, 4, 150)])
def test_state_count_bound(d, f, l, bound):
    params = AttackParams(0.3, 0.5, d, f, l)
    assert params.estimated_states == bound
    assert build_model(params).state_count <= bound


def test_state_cap(monkeypatch):
    monkeypatch.setenv("SELFISH_FORKS_MAX_STATES", "100")
    with pytest.raises(ResourceLimitError, match="3750"):
        build_model(AttackParams(0.3, 0.5, 2, 2, 4))


def test_canonical_order_is_deterministic():
    a = build_model(AttackParams(0.3, 0.5, 2, 1, 3))
    b = build_model(AttackParams(0.3, 0.5, 2, 1, 3))
    assert a.states == b.states
    assert a.states[0] == initial_state(a.params)
    assert np.array_equal(a.mdp.prob, b.mdp.prob)


def test_p_extremes():
    m0 = build_model(AttackParams(0.0, 0.5, 2, 2, 3))
    assert m0.state_count == 2
    p1 = AttackParams(1.0, 0.5, 1, 1, 2)
    for o in mining_step_distribution(st_([[0]], "", "M"), p1):
        if o.state.kind == "H":
            assert o.prob == 0.0


def reachable_by_sim_rules(params):
    """State space explored with the simulator's independent rules (all actions)."""
    start = initial_state(params).encode()
    seen, queue = {start}, deque([start])
    while queue:
        enc = queue.popleft()
        c = chain_from_encoding(enc)
        for a in available_actions(ChainState.decode(enc), params):
            for step in sim_outcomes(c, str(a), params):
                e = step.state.encode(params.d, params.f)
                if e not in seen:
                    seen.add(e)
                    queue.append(e)
    return seen


@pytest.mark.parametrize("d, f, l", [(1, 1, 4), (2, 1, 4), (2, 2, 2), (3, 1, 2)])
def test_state_space_matches_independent_exploration(d, f, l):
    params = AttackParams(0.3, 0.5, d, f, l)
    model = build_model(params)
    assert {s.encode() for s in model.states} == reachable_by_sim_rules(params)


@pytest.mark.parametrize("d, f, l", [(1, 1, 4), (2, 1, 4), (2, 2, 4), (3, 1, 3)])
def test_transitions_agree_with_independent_rules(d, f, l):
    params = AttackParams(0.3, 0.5, d, f, l)
    model = model_for(0.3, 0.5, d, f, l)
    for s in model.states[:: max(1, model.state_count // 300)]:
        for a in available_actions(s, params):
            mine = {}
            for o in transitions(s, a, params):
                key = (o.state.encode(), o.reward_adv, o.reward_hon, o.published, o.orphaned)
                mine[key] = mine.get(key, 0.0) + o.prob
            theirs = {}
            for x in sim_outcomes(chain_from_encoding(s.encode()), str(a), params):
                key = (x.state.encode(d, f), x.final.count("A"), x.final.count("H"),
                       x.published, x.orphaned)
                theirs[key] = theirs.get(key, 0.0) + x.prob
            mine = {k: v for k, v in mine.items() if v > 0}
            assert mine.keys() == theirs.keys()
            for k in mine:
                assert mine[k] == pytest.approx(theirs[k], abs=1e-15)


@pytest.mark.parametrize("d, f, l", [(1, 1, 4), (2, 1, 4), (2, 2, 4)])
def test_per_transition_block_accounting(d, f, l):
    # published = finalized + orphaned + change in window occupancy, on every outcome
    params = AttackParams(0.3, 0.5, d, f, l)
    model = model_for(0.3, 0.5, d, f, l)
    for s in model.states:
        for a in available_actions(s, params):
            for o in transitions(s, a, params):
                growth = window_occupancy(o.state, params) - window_occupancy(s, params)
                assert o.published == o.reward_adv + o.reward_hon + o.orphaned + growth


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 2), st.integers(1, 2), st.integers(1, 3))
def test_built_models_are_valid(p, gamma, d, f, l):
    params = AttackParams(p, gamma, d, f, l)
    model = build_model(params)
    mdp = model.mdp
    sums = np.add.reduceat(mdp.prob, mdp.trans_ptr[:-1])
    assert np.max(np.abs(sums - 1)) <= 1e-12
    assert mdp.reward_adv.max(initial=0) <= l + d
    delta = params.honest_floor
    for n, s in enumerate(model.states):
        if s.kind != "M":
            continue
        outs = mining_step_distribution(s, params)
        honest = [o.prob for o in outs if o.state.kind == "H"][0]
        assert honest >= delta - 1e-15
        # a fresh start weighs as much as a live fork, so the floor is hit
        # when no depth has two or more empty slots
        full = all(sum(c == 0 for c in row) <= 1 for row in s.C)
        assert (mining_fanout(s, params) == d * f) == full
        if full:
            assert honest == pytest.approx(delta, rel=1e-12, abs=0)
