from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskft.analysis import check_failing
from maskft.game import ERR, P, R, V, build_snippet, build_symbolic
from maskft.oracle import oracle_value
from maskft.parser import parse_model
from maskft.polytope import enumerate_vertices
from maskft.quantitative import (
    ValueOperator, Milestone, PreconditionError, attractor_bound, attractor_levels,
    compute_bound, value_step, reward, rewards, solve_value,
)

from conftest import SELF_LOOP
from randmodels import random_pair

FAULT = Milestone({"fault": 1})


def failing_random_games(n, start=0):
    out = []
    seed = start
    while len(out) < n:
        g = build_symbolic(*random_pair(seed))
        if check_failing(g):
            out.append((seed, g))
        seed += 1
    return out


def test_milestone_parsing():
    m = Milestone.parse(["fault=1", "tick=2", "fault=2"])
    assert m.weights == {"fault": 3, "tick": 2} and m("rfsh") == 0 and m.max_weight == 3
    assert m.scaled(2).weights == {"fault": 6, "tick": 4}
    assert Milestone().max_weight == 0
    for bad in (["fault"], ["=1"], ["fault=x"], ["fault=-1"]):
        with pytest.raises(ValueError):
            Milestone.parse(bad)


def test_rewards_only_on_verifier_vertices(faulty_game):
    g = faulty_game
    r = rewards(g, FAULT)
    for i, v in enumerate(g.vertices):
        if g.cls[i] == V:
            assert r[i] == (1 if v.label == "fault" else 0) == reward(v, FAULT)
        else:
            assert r[i] == 0


def test_bounds_on_one_round(one_round):
    h = build_snippet(one_round)
    assert compute_bound(one_round, Milestone()) == 0
    # every coupling is a point mass, so the bound is r_max * N
    assert compute_bound(one_round, Milestone({"f": 3})) == 3 * len(h)
    assert attractor_bound(one_round, Milestone({"f": 1})) == 3
    assert attractor_bound(one_round, Milestone()) == 0


def test_memcell_bounds(faulty_game):
    b = attractor_bound(faulty_game, FAULT)
    assert b >= 4
    crude = compute_bound(faulty_game, FAULT)
    assert crude > 10 ** 500 and crude > b


def test_attractor_levels(one_round, faulty_game):
    for g in (one_round, faulty_game):
        lv = attractor_levels(g)
        assert lv[g.err] == 0 and g.reachable() <= set(lv)


def test_attractor_bound_needs_failing(limited_game):
    with pytest.raises(PreconditionError):
        attractor_bound(limited_game, FAULT)


def test_value_step_examples(one_round):
    g = one_round
    m = Milestone({"f": 1})
    top = np.full(len(g), 5.0)
    out = value_step(g, m, 3, top)
    assert out[g.err] == 0
    for i in g.ids(R) + g.ids(P):
        assert out[i] == 3  # capped at the bound
    zero = value_step(g, m, 3, np.zeros(len(g)))
    for i in g.ids(V):
        assert zero[i] == reward(g.vertices[i], m)


def test_value_step_lp_vs_vertex_max(faulty_game):
    g = faulty_game
    rng = np.random.default_rng(0)
    f = rng.integers(0, 20, len(g)).astype(float)
    out = value_step(g, FAULT, 100, f)
    for i in g.ids(P):
        v = g.vertices[i]
        t = g.cell_targets(i)
        best = max(sum(float(x) * f[t[c]] for c, x in w.items()) for w in enumerate_vertices(v.mu, v.mu2))
        assert out[i] == pytest.approx(min(best, 100), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(range(8)), st.data())
def test_fast_operator_matches_reference(k, data):
    _, g = failing_random_games(8)[k]
    m = Milestone({"f": 1, "a": data.draw(st.integers(0, 2))})
    bound = attractor_bound(g, m)
    f = np.array([data.draw(st.integers(0, 12)) for _ in range(len(g))], dtype=float)
    f[g.err] = 0
    op = ValueOperator(g, m, bound)
    op.initialise(f)
    assert np.allclose(op.apply(f), value_step(g, m, bound, f), atol=1e-9)


def test_memcell_values(faulty_game):
    res = solve_value(faulty_game, FAULT)
    assert res.converged and abs(res.value - 4) < 1e-8
    assert res.bound_source == "attractor" and res.error_estimate < 1e-9
    tick = solve_value(faulty_game, Milestone({"tick": 1}))
    assert abs(tick.value - 80) < 1e-6


def test_zero_milestone_has_zero_value(faulty_game):
    res = solve_value(faulty_game, Milestone())
    assert res.value == 0 and res.converged and res.iterations == 1


def test_precondition(limited_game):
    with pytest.raises(PreconditionError):
        solve_value(limited_game, FAULT)
    m = parse_model(SELF_LOOP)
    with pytest.raises(PreconditionError):
        solve_value(build_symbolic(m, m), Milestone({"a": 1}))


def test_residual_stop_is_cruder(faulty_game):
    rate = solve_value(faulty_game, FAULT, epsilon=1e-6)
    resid = solve_value(faulty_game, FAULT, epsilon=1e-6, stop="residual")
    assert resid.iterations <= rate.iterations
    assert resid.value >= rate.value - 1e-12


def test_non_convergence_flag(faulty_game):
    res = solve_value(faulty_game, FAULT, max_iters=5)
    assert not res.converged and res.iterations == 5 and res.value >= 4


def test_bound_override(faulty_game):
    res = solve_value(faulty_game, FAULT, bound_override=10)
    assert res.bound == 10 and res.bound_source == "user" and abs(res.value - 4) < 1e-8


def test_bad_arguments(faulty_game):
    with pytest.raises(ValueError):
        solve_value(faulty_game, FAULT, epsilon=0)
    with pytest.raises(ValueError):
        solve_value(faulty_game, FAULT, stop="never")


def test_iterates_descend(faulty_game):
    res = solve_value(faulty_game, FAULT, epsilon=1e-6)
    assert all(d >= 0 for d in res.deltas)
    assert np.all(res.values >= -1e-12)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(range(12)))
def test_attractor_bound_dominates_oracle(k):
    _, g = failing_random_games(12)[k]
    m = Milestone({"f": 1, "a": 1})
    ov = oracle_value(build_snippet(g), m)
    assert attractor_bound(g, m) >= ov.inf_sup
    assert abs(solve_value(g, m).value - float(ov.inf_sup)) <= 2e-9
