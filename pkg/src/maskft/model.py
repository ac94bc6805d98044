"""Probabilistic transition systems and exact finite distributions.

States are full variable valuations, stored as tuples of ints in the
declaration order of the model's variables.  All probabilities are
:class:`fractions.Fraction` values.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

StateId = tuple  # tuple[int, ...], one entry per declared variable


class ModelError(ValueError):
    """Raised for semantically invalid models or model pairs."""


class Dist:
    """Finite-support probability distribution with exact weights.

    Only positive weights are stored; the weights must sum to exactly 1.
    Instances are immutable and hashable, and compare by content.
    """

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, weights: Mapping | Iterable):
        pairs = weights.items() if isinstance(weights, Mapping) else weights
        acc: dict = {}
        for state, w in pairs:
            w = Fraction(w)
            if w < 0:
                raise ModelError(f"negative probability {w} for state {state}")
            if w == 0:
                continue
            acc[state] = acc.get(state, Fraction(0)) + w
        if not acc:
            raise ModelError("distribution has empty support")
        total = sum(acc.values())
        if total != 1:
            raise ModelError(f"distribution weights sum to {total}, not 1")
        self._items = tuple(sorted(acc.items()))
        self._map = dict(self._items)
        self._hash = hash(self._items)

    def __getitem__(self, state) -> Fraction:
        return self._map.get(state, Fraction(0))

    def __iter__(self) -> Iterator:
        return (s for s, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Dist) and self._items == other._items

    def __lt__(self, other: "Dist") -> bool:
        return self._items < other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        inner = ", ".join(f"{format_state(s)}: {w}" for s, w in self._items)
        return f"Dist({{{inner}}})"

    def items(self) -> tuple:
        return self._items

    def support(self) -> tuple:
        return tuple(s for s, _ in self._items)

    def is_dirac(self) -> bool:
        return len(self._items) == 1


def dirac(s: StateId) -> Dist:
    """The point distribution on ``s``."""
    return Dist({s: 1})


def format_state(s) -> str:
    if isinstance(s, tuple):
        return "(" + ",".join(str(x) for x in s) + ")"
    return str(s)


def format_dist(mu: Dist) -> str:
    if mu.is_dirac():
        return "D" + format_state(mu.support()[0])
    return " + ".join(f"{w}*{format_state(s)}" for s, w in mu.items())


@dataclass(frozen=True)
class Variable:
    name: str
    lo: int
    hi: int
    init: int


@dataclass(frozen=True)
class Transition:
    source: StateId
    label: str
    target: Dist

    def sort_key(self):
        return (self.source, self.label, self.target.items())


@dataclass(frozen=True, eq=False)
class Pts:
    """A finite PTS restricted to the states reachable from ``initial``.

    ``actions`` includes the fault labels; ``faults`` is empty for nominal
    models.
    """

    variables: tuple
    actions: frozenset
    faults: frozenset
    transitions: tuple
    initial: StateId
    name: str = ""
    _out: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        trans = tuple(sorted(set(self.transitions), key=Transition.sort_key))
        object.__setattr__(self, "transitions", trans)
        out: dict = {}
        for t in trans:
            out.setdefault(t.source, []).append(t)
        object.__setattr__(self, "_out", out)
        if not self.faults <= self.actions:
            raise ModelError(f"fault labels {sorted(self.faults - self.actions)} are not actions")
        for t in trans:
            if t.label not in self.actions:
                raise ModelError(f"transition label {t.label!r} is not a declared action")
            for s in (t.source, *t.target):
                self._check_state(s)

    def _check_state(self, s):
        if len(s) != len(self.variables):
            raise ModelError(f"state {s} does not match the variable declarations")
        for v, x in zip(self.variables, s):
            if not v.lo <= x <= v.hi:
                raise ModelError(f"variable {v.name}={x} outside [{v.lo}..{v.hi}]")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pts):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.actions == other.actions
            and self.faults == other.faults
            and self.transitions == other.transitions
            and self.initial == other.initial
        )

    def __hash__(self) -> int:
        return hash((self.variables, self.transitions, self.initial))

    @property
    def var_names(self) -> tuple:
        return tuple(v.name for v in self.variables)

    @property
    def states(self) -> tuple:
        return tuple(sorted(reachable_states(self)))

    def out(self, s: StateId) -> list:
        """Outgoing transitions of ``s``, sorted by label then target."""
        return self._out.get(s, [])

    def valuation(self, s: StateId) -> dict:
        return dict(zip(self.var_names, s))


def reachable_states(p: Pts) -> set:
    """States reachable from ``p.initial`` through transition supports."""
    seen = {p.initial}
    todo = deque([p.initial])
    while todo:
        s = todo.popleft()
        for t in p.out(s):
            for u in t.target:
                if u not in seen:
                    seen.add(u)
                    todo.append(u)
    return seen


def check_total(p: Pts) -> None:
    """Raise if some reachable state has no outgoing transition."""
    for s in sorted(reachable_states(p)):
        if not p.out(s):
            desc = ", ".join(f"{k}={v}" for k, v in p.valuation(s).items())
            raise ModelError(f"deadlock: reachable state ({desc}) has no enabled command")


@dataclass(frozen=True)
class ModelPair:
    """A nominal model and an implementation checked for compatibility."""

    nominal: Pts
    impl: Pts

    @property
    def faults(self) -> frozenset:
        return self.impl.faults

    @property
    def sigma(self) -> frozenset:
        return self.nominal.actions


def validate_pair(nominal: Pts, impl: Pts) -> ModelPair:
    """Check that ``impl`` is a candidate implementation of ``nominal``.

    The nominal model must be fault free, both models must agree on the
    non-fault alphabet, and fault labels must not occur in the nominal one.
    """
    if not nominal.transitions or not impl.transitions:
        raise ModelError("empty model: no transitions")
    if nominal.faults:
        raise ModelError(f"nominal model declares fault labels {sorted(nominal.faults)}")
    clash = impl.faults & nominal.actions
    if clash:
        raise ModelError(f"fault labels {sorted(clash)} also used by the nominal model")
    impl_sigma = impl.actions - impl.faults
    if impl_sigma != nominal.actions:
        only_n = sorted(nominal.actions - impl_sigma)
        only_i = sorted(impl_sigma - nominal.actions)
        raise ModelError(
            f"alphabet mismatch: nominal-only {only_n}, implementation-only {only_i}"
        )
    check_total(nominal)
    check_total(impl)
    return ModelPair(nominal, impl)


def format_pts(p: Pts) -> str:
    """Render ``p`` in the model language, one command per transition.

    Re-parsing the output yields a PTS equal to ``p``.
    """
    lines = []
    if p.faults:
        lines.append(f"faults: {', '.join(sorted(p.faults))};")
    for v in p.variables:
        lines.append(f"var {v.name} : [{v.lo}..{v.hi}] init {v.init};")
    names = p.var_names
    used = set()
    for t in p.transitions:
        used.add(t.label)
        guard = " & ".join(f"({n}={x})" for n, x in zip(names, t.source)) or "true"
        branches = []
        for s, w in t.target.items():
            upd = " & ".join(f"({n}'={x})" for n, x in zip(names, s)) or "true"
            branches.append(f"{w}: {upd}")
        lines.append(f"[{t.label}] {guard} -> {' + '.join(branches)};")
    for label in sorted(p.actions - used):
        lines.append(f"[{label}] false -> true;")
    return "\n".join(lines) + "\n"
