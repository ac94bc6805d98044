from fractions import Fraction

import pytest

from maskft.model import ModelError
from maskft.parser import ModelSyntaxError, parse_model, tokenize

from conftest import SELF_LOOP


def dist_of(p, state, label):
    (t,) = [t for t in p.out(state) if t.label == label]
    return dict(t.target.items())


def test_nominal_memcell(nominal):
    assert len(nominal.states) == 4
    assert nominal.actions == {"w0", "w1", "r0", "r1", "tick", "rfsh"}
    assert nominal.faults == frozenset()
    assert dist_of(nominal, (0, 0), "tick") == {(0, 1): Fraction(1, 10), (0, 0): Fraction(9, 10)}


def test_limited_memcell_tick(limited):
    assert dist_of(limited, (0, 0, 0), "tick") == {
        (0, 2, 0): Fraction(1, 10), (0, 1, 0): Fraction(1, 20), (0, 0, 0): Fraction(17, 20)}
    assert limited.var_names == ("v", "s", "f")


def test_faulty_fault_updates(faulty):
    # two fault commands from (v=0, s=1): one vote up, one ternary fallback
    targets = sorted(t.target.support()[0] for t in faulty.out((0, 1)) if t.label == "fault")
    assert targets == [(1, 0)]
    targets = sorted(t.target.support()[0] for t in faulty.out((3, 1)) if t.label == "fault")
    assert targets == [(2, 0)]
    targets = sorted(t.target.support()[0] for t in faulty.out((1, 1)) if t.label == "fault")
    assert targets == [(0, 0), (2, 0)]


def test_single_self_loop():
    p = parse_model(SELF_LOOP)
    assert p.states == ((0,),)
    (t,) = p.transitions
    assert t.label == "a" and t.target.is_dirac() and t.target.support() == ((0,),)


def test_branch_merging():
    p = parse_model("var x : [0..1] init 0;\n[a] true -> 1/3: (x'=1) + 1/3: (x'=1) + 1/3: true;")
    assert dist_of(p, (0,), "a") == {(1,): Fraction(2, 3), (0,): Fraction(1, 3)}


def test_identical_commands_merge():
    p = parse_model("var x : [0..0] init 0;\n[a] true -> true;\n[a] (x=0) -> (x'=0);")
    assert len(p.transitions) == 1


def test_expressions():
    text = """
    const k = 2;
    var x : [0..4] init 0;
    var y : [-1..1] init -1;
    [a] (x < k) | !(y != -1) -> (x' = x + k * 1 - 1) & (y' = (x >= 1) ? 1 : 0);
    [b] (x >= k) & true -> (x'=0);
    """
    p = parse_model(text)
    assert (1, 0) in p.states and (2, 1) in p.states


def test_module_wrapper_and_comments():
    p = parse_model("module M // comment\nvar x : [0..0] init 0; // c\n[a] true -> true;\nendmodule\n")
    assert len(p.transitions) == 1


def test_probability_expressions():
    p = parse_model("const p = 1/4; const q = 1/8;\nvar x : [0..2] init 0;\n"
                    "[a] true -> p: (x'=1) + (1-p-q): true + q/1: (x'=2);")
    assert dist_of(p, (0,), "a") == {(1,): Fraction(1, 4), (0,): Fraction(5, 8), (2,): Fraction(1, 8)}


@pytest.mark.parametrize("text, match", [
    ("var x : [0..1] init 0;\n[a] true -> 1/2: (x'=1);", "sum to 1/2"),
    ("var x : [0..1] init 0;\n[a] true -> (x'=2);", "outside"),
    ("var x : [0..1] init 0;\n[a] (x=0) -> (x'=1);", "deadlock"),
    ("var x : [0..1] init 0;\n[a] true -> (x'=1) + true;", "more than one"),
    ("var x : [0..1] init 0;\n[a] true -> x: (x'=1) + true;", "non-constant"),
    ("var x : [0..1] init 0;\n[a] true -> 3/2: (x'=1) + true;", "outside"),
    ("var x : [0..1] init 0;\n[a] true -> (z'=1);", "undeclared"),
    ("var x : [0..1] init 0;\n[a] x -> true;", "boolean"),
    ("var x : [0..1] init 2;\n[a] true -> true;", "initial"),
    ("[a] true -> true;", "no variables"),
])
def test_semantic_errors(text, match):
    with pytest.raises(ModelError, match=match):
        parse_model(text)


def test_syntax_error_position():
    with pytest.raises(ModelSyntaxError) as ei:
        parse_model("var x : [0..1] init 0;\n[a] true -> (x'=1;\n")
    assert (ei.value.line, ei.value.col) == (2, 18)
    assert str(ei.value).startswith("2:18:")


def test_tokenizer_rejects_garbage():
    with pytest.raises(ModelSyntaxError, match="unexpected character"):
        tokenize("var x $")
