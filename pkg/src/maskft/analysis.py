"""Qualitative analyses on the symbolic game.

``compute_u_set`` computes the set of vertices from which the Refuter
reaches the error vertex with positive probability; the implementation
masks the nominal model iff the initial vertex is outside that set.
``check_failing`` decides whether the error vertex is reached almost
surely under every Verifier strategy when the Refuter plays fairly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .game import ERR, P, R, V, GameGraph, build_symbolic
from .model import Pts
from .polytope import build_system, feasible


class VertexSet:
    """Set of vertex ids, optionally recording the level at which each
    member entered a fixpoint iteration."""

    def __init__(self, members: Iterable[int] | dict = ()):
        if isinstance(members, dict):
            self.levels = dict(members)
        else:
            self.levels = {i: None for i in members}

    def __contains__(self, i) -> bool:
        return i in self.levels

    def __iter__(self):
        return iter(sorted(self.levels))

    def __len__(self):
        return len(self.levels)

    def __eq__(self, other):
        if isinstance(other, VertexSet):
            return set(self.levels) == set(other.levels)
        return set(self.levels) == set(other)

    def __repr__(self):
        return f"VertexSet({sorted(self.levels)})"

    def level(self, i: int):
        return self.levels.get(i)

    def as_set(self) -> frozenset:
        return frozenset(self.levels)


def _prob_blocked(g: GameGraph, i: int, c) -> bool:
    """True iff every coupling of probabilistic vertex ``i`` puts positive
    weight on some successor in ``c``.

    On the symbolic graph this is infeasibility of the coupling system with
    the cells leading into ``c`` forced to zero.  On a snippet each vertex
    carries a fixed coupling whose successors all have positive weight.
    """
    if i in g.prob:
        return any(j in c for j in g.succ[i])
    v = g.vertices[i]
    targets = g.cell_targets(i)
    forbidden = [cell for cell, j in targets.items() if j in c]
    if not forbidden:
        return False
    return not feasible(build_system(v.mu, v.mu2, forbidden))


def compute_u_set(g: GameGraph) -> VertexSet:
    """Least fixpoint of the positive-reachability step, with levels.

    Level 0 is the error vertex.  A vertex enters at level ``k`` when it
    qualifies given the members of levels ``< k``.
    """
    levels = {g.err: 0}
    frontier = {g.err}
    k = 0
    while frontier:
        k += 1
        candidates = sorted({p for j in frontier for p in g.pred[j] if p not in levels})
        new = []
        for i in candidates:
            c = g.cls[i]
            if c == R:
                ok = True  # a predecessor of a new member has a successor in U
            elif c == V:
                ok = all(j in levels for j in g.succ[i])
            else:
                ok = _prob_blocked(g, i, levels)
            if ok:
                new.append(i)
        for i in new:
            levels[i] = k
        frontier = set(new)
        assert k <= len(g) + 1, "U-set iteration failed to stabilise"
    return VertexSet(levels)


def masking_relation(g: GameGraph, u: VertexSet) -> set:
    """State pairs of the reachable Refuter vertices outside ``u``."""
    return {(g.vertices[i].s, g.vertices[i].s2) for i in g.ids(R) if i not in u}


@dataclass
class MaskingResult:
    masking: bool
    game: GameGraph
    u: VertexSet
    trace: list

    @property
    def relation(self) -> set:
        return masking_relation(self.game, self.u)


def u_trace(g: GameGraph, u: VertexSet, start: int | None = None) -> list:
    """A path of ``(level, vertex id)`` pairs from ``start`` down to the
    error vertex, following the Refuter's quickest successor and, at
    Verifier and probabilistic vertices, the slowest successor in ``u``."""
    i = g.initial if start is None else start
    if i not in u:
        return []
    path = [(u.level(i), i)]
    while i != g.err:
        inside = [j for j in g.succ[i] if j in u and u.level(j) < u.level(i)]
        if g.cls[i] == R:
            i = min(inside, key=lambda j: (u.level(j), j))
        else:
            i = max(inside, key=lambda j: (u.level(j), -j))
        path.append((u.level(i), i))
    return path


def analyse_masking(nominal: Pts, impl: Pts) -> MaskingResult:
    g = build_symbolic(nominal, impl)
    u = compute_u_set(g)
    masking = g.initial not in u
    return MaskingResult(masking, g, u, [] if masking else u_trace(g, u))


def decide_masking(nominal: Pts, impl: Pts) -> bool:
    """Whether ``impl`` masks the faults of ``nominal``."""
    return analyse_masking(nominal, impl).masking


def pre_exists(g: GameGraph, c) -> VertexSet:
    """Vertices with at least one successor in ``c``."""
    c = c if isinstance(c, (set, frozenset, VertexSet)) else set(c)
    return VertexSet(i for i in range(len(g)) if any(j in c for j in g.succ[i]))


def _forall_member(g: GameGraph, i: int, c) -> bool:
    cl = g.cls[i]
    if cl == V:
        return all(j in c for j in g.succ[i])
    if cl == P:
        return _prob_blocked(g, i, c)
    # Refuter vertices and the error vertex: a fair Refuter eventually
    # takes every available move
    return any(j in c for j in g.succ[i])


def pre_forall(g: GameGraph, c) -> VertexSet:
    """Vertices from which ``c`` is hit in one step with positive
    probability whatever the Verifier does, assuming a fair Refuter."""
    c = c if isinstance(c, (set, frozenset, VertexSet)) else set(c)
    return VertexSet(i for i in range(len(g)) if _forall_member(g, i, c))


def forall_star(g: GameGraph, start: Iterable[int]) -> set:
    """Least fixpoint of ``X = start | pre_forall(X)``."""
    x = set(start)
    frontier = set(x)
    rounds = 0
    while frontier:
        rounds += 1
        cand = sorted({p for j in frontier for p in g.pred[j] if p not in x})
        frontier = {i for i in cand if _forall_member(g, i, x)}
        x |= frontier
        assert rounds <= len(g) + 1
    return x


def exists_star(g: GameGraph, start: Iterable[int]) -> set:
    """Least fixpoint of ``Y = start | pre_exists(Y)`` (backward reachability)."""
    y = set(start)
    todo = list(y)
    while todo:
        for p in g.pred[todo.pop()]:
            if p not in y:
                y.add(p)
                todo.append(p)
    return y


def check_failing(g: GameGraph) -> bool:
    """Whether the error vertex is reached almost surely from the initial
    vertex under every Verifier strategy and every fair Refuter strategy.

    Works on the symbolic graph or on a snippet.
    """
    a = forall_star(g, [g.err])
    b = exists_star(g, set(range(len(g))) - a)
    return g.initial not in b


def failing_vertices(g: GameGraph) -> set:
    """All vertices from which the game is almost surely failing."""
    a = forall_star(g, [g.err])
    return set(range(len(g))) - exists_star(g, set(range(len(g))) - a)
