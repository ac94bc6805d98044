from importlib import resources

import pytest

from maskft.game import build_snippet, build_symbolic
from maskft.parser import parse_model


def bundled(name):
    text = (resources.files("maskft") / "models" / f"{name}.pm").read_text(encoding="utf-8")
    return parse_model(text, name=name)


@pytest.fixture(scope="session")
def nominal():
    return bundled("memcell_nominal")


@pytest.fixture(scope="session")
def faulty():
    return bundled("memcell_faulty")


@pytest.fixture(scope="session")
def limited():
    return bundled("memcell_faulty_limited")


@pytest.fixture(scope="session")
def faulty_game(nominal, faulty):
    return build_symbolic(nominal, faulty)


@pytest.fixture(scope="session")
def limited_game(nominal, limited):
    return build_symbolic(nominal, limited)


@pytest.fixture(scope="session")
def faulty_snippet(faulty_game):
    return build_snippet(faulty_game)


SELF_LOOP = """
var x : [0..0] init 0;
[a] true -> (x'=x);
"""

# a fault moves the implementation to a state without ``b``, after which
# the Refuter can challenge ``b`` on the nominal side and win
ONE_ROUND_NOMINAL = """
var x : [0..0] init 0;
[a] true -> true;
[b] true -> true;
"""

ONE_ROUND_IMPL = """
faults: f;
var x : [0..1] init 0;
[a] true -> true;
[b] (x=0) -> true;
[f] (x=0) -> (x'=1);
"""


@pytest.fixture(scope="session")
def one_round():
    return build_symbolic(parse_model(ONE_ROUND_NOMINAL), parse_model(ONE_ROUND_IMPL))
