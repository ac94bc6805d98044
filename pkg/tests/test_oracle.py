from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from maskft.analysis import check_failing, compute_u_set
from maskft.game import build_snippet, build_symbolic
from maskft.oracle import (
    OracleCapError, oracle_failing, oracle_reach_positive, oracle_value,
)
from maskft.quantitative import Milestone

from randmodels import random_pair


def test_one_round_values(one_round):
    h = build_snippet(one_round)
    assert oracle_failing(h)
    assert oracle_value(h, Milestone({"f": 1})).value == 1
    assert oracle_value(h, Milestone({"f": 3, "a": 5})).value == 3
    # the Refuter wins straight away by challenging ``b`` after the fault
    assert oracle_value(h, Milestone({"a": 1})).value == 0
    assert oracle_value(h, Milestone()).value == 0


def test_memcell_frozen_values(faulty_snippet):
    assert oracle_value(faulty_snippet, Milestone({"fault": 1})).value == 4
    assert oracle_value(faulty_snippet, Milestone({"tick": 1})).value == 80


def test_limited_is_not_failing(limited_game):
    assert not oracle_failing(build_snippet(limited_game))


def test_reach_positive_on_memcell(faulty_game, limited_game):
    assert faulty_game.initial in oracle_reach_positive(build_snippet(faulty_game))
    h = build_snippet(limited_game)
    assert h.initial not in oracle_reach_positive(h)


def test_enumeration_cap(faulty_snippet):
    with pytest.raises(OracleCapError):
        oracle_value(faulty_snippet, Milestone({"fault": 1}), cap=10, method="enumerate")
    with pytest.raises(ValueError):
        oracle_value(faulty_snippet, Milestone({"fault": 1}), method="guess")


def _failing_snippets(n):
    out, seed = [], 0
    while len(out) < n:
        g = build_symbolic(*random_pair(seed))
        if check_failing(g):
            out.append(build_snippet(g))
        seed += 1
    return out


SNIPPETS = _failing_snippets(15)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(range(15)), st.integers(0, 3), st.integers(0, 3))
def test_enumerate_equals_iterate(k, wf, wa):
    h = SNIPPETS[k]
    m = Milestone({"f": wf, "a": wa})
    try:
        e = oracle_value(h, m, cap=2000, method="enumerate")
    except OracleCapError:
        return
    assert e.inf_sup == oracle_value(h, m, method="iterate").inf_sup


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(range(15)), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2))
def test_value_monotone_in_weights(k, wf, wa, extra):
    h = SNIPPETS[k]
    lo = oracle_value(h, Milestone({"f": wf, "a": wa})).value
    hi = oracle_value(h, Milestone({"f": wf + extra, "a": wa})).value
    assert lo <= hi
    assert oracle_value(h, Milestone({"f": 2 * wf, "a": 2 * wa})).value == 2 * lo


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_reach_positive_matches_u_set(seed):
    g = build_symbolic(*random_pair(seed))
    h = build_snippet(g)
    assert (g.initial in compute_u_set(g)) == (h.initial in oracle_reach_positive(h))
    assert oracle_failing(h) == check_failing(g)


def test_values_are_exact(one_round):
    v = oracle_value(build_snippet(one_round), Milestone({"f": 1})).value
    assert isinstance(v, Fraction)
