"""Symbolic masking game graphs and their finite vertex snippets.

The symbolic game has four kinds of vertices:

* ``RefuterV(s, s2)``: the Refuter picks a transition of either model.
* ``VerifierV(s, label, side, s2, pending)``: the Verifier answers the
  challenge ``label`` played on ``side`` (1 = nominal, 2 = implementation)
  whose target distribution is ``pending``.
* ``ProbV(s, s2, mu, mu2)``: a pair of distributions to be coupled.
* ``ErrV``: the error sink, reached when the Verifier cannot answer.

Only vertices reachable from the initial Refuter vertex are built.  The
snippet replaces each ``ProbV`` by one probabilistic vertex per vertex of
its coupling polytope.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .model import Dist, ModelPair, Pts, dirac, format_dist, format_state, validate_pair
from .polytope import Coupling, enumerate_vertices, DEFAULT_CELL_CAP

R, V, P, ERR = "R", "V", "P", "err"


@dataclass(frozen=True)
class RefuterV:
    s: tuple
    s2: tuple
    cls = R

    def key(self):
        return (self.s, self.s2, 1)


@dataclass(frozen=True)
class VerifierV:
    s: tuple
    label: str
    side: int
    s2: tuple
    pending: Dist
    cls = V

    def key(self):
        return (self.s, self.s2, 2, self.label, self.side, self.pending.items())


@dataclass(frozen=True)
class ProbV:
    s: tuple
    s2: tuple
    mu: Dist
    mu2: Dist
    cls = P

    def key(self):
        return (self.s, self.s2, 3, self.mu.items(), self.mu2.items())


@dataclass(frozen=True)
class SnippetP:
    """A probabilistic vertex carrying one polytope-vertex coupling."""

    s: tuple
    s2: tuple
    mu: Dist
    mu2: Dist
    w: Coupling
    cls = P

    def key(self):
        return (self.s, self.s2, 3, self.mu.items(), self.mu2.items(), self.w.items())


class _Err:
    cls = ERR
    s = s2 = None

    def key(self):
        return ((), (), 0)

    def __repr__(self):
        return "ErrV"

    def __reduce__(self):
        return "ErrV"


ErrV = _Err()


def _label(v) -> str:
    if v is ErrV:
        return "v_err"
    base = f"{format_state(v.s)} | {format_state(v.s2)}"
    if v.cls == V:
        return f"{base}\n{v.label}^{v.side}: {format_dist(v.pending)}"
    if v.cls == P:
        text = f"{base}\n{format_dist(v.mu)} ; {format_dist(v.mu2)}"
        if isinstance(v, SnippetP):
            text += "\nw = " + ", ".join(
                f"{format_state(a)}~{format_state(b)}:{x}" for (a, b), x in v.w.items())
        return text
    return base


class GameGraph:
    """Finite game graph with integer vertex ids.

    ``vertices[i]`` is the vertex object, ``cls[i]`` its class and
    ``succ[i]`` the sorted tuple of successor ids.  For snippet graphs,
    ``prob[i]`` holds the transition probabilities of probabilistic vertex
    ``i`` aligned with ``succ[i]``.
    """

    def __init__(self, vertices: list, succ: list, initial: int, prob: dict | None = None,
                 pair: ModelPair | None = None):
        self.vertices = tuple(vertices)
        self.succ = tuple(tuple(x) for x in succ)
        self.initial = initial
        self.prob = prob or {}
        self.pair = pair
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.cls = tuple(v.cls for v in self.vertices)
        self.err = self.index[ErrV]
        pred: list = [[] for _ in self.vertices]
        for i, out in enumerate(self.succ):
            for j in out:
                pred[j].append(i)
        self.pred = tuple(tuple(p) for p in pred)

    def __len__(self):
        return len(self.vertices)

    def __eq__(self, other):
        return (
            isinstance(other, GameGraph)
            and self.vertices == other.vertices
            and self.succ == other.succ
            and self.initial == other.initial
            and self.prob == other.prob
        )

    def ids(self, cls: str) -> list:
        return [i for i, c in enumerate(self.cls) if c == cls]

    def counts(self) -> dict:
        return {
            "refuter": self.cls.count(R),
            "verifier": self.cls.count(V),
            "probabilistic": self.cls.count(P),
            "err": 1,
            "edges": sum(len(s) for s in self.succ),
        }

    def challenge(self, i: int):
        v = self.vertices[i]
        return (v.label, v.side) if v.cls == V else None

    def cell_targets(self, i: int) -> dict:
        """For a probabilistic vertex, map each cell ``(t, t2)`` of its
        coupling system to the id of the Refuter vertex it leads to."""
        return {(self.vertices[j].s, self.vertices[j].s2): j for j in self.succ[i]}

    def reachable(self, start: int | None = None) -> set:
        start = self.initial if start is None else start
        seen = {start}
        todo = [start]
        while todo:
            for j in self.succ[todo.pop()]:
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        return seen

    def describe(self, i: int) -> str:
        return _label(self.vertices[i]).replace("\n", "  ")


SymbolicGame = GameGraph
SnippetGame = GameGraph


def _finish(succ_map: dict, initial_v, pair, prob_map=None) -> GameGraph:
    order = sorted(succ_map, key=lambda v: v.key())
    idx = {v: i for i, v in enumerate(order)}
    succ = [sorted(idx[w] for w in succ_map[v]) for v in order]
    prob = None
    if prob_map:
        prob = {}
        for v, dist in prob_map.items():
            i = idx[v]
            prob[i] = tuple(dist[order[j]] for j in succ[i])
    return GameGraph(order, succ, idx[initial_v], prob, pair)


def build_symbolic(nominal: Pts, impl: Pts) -> GameGraph:
    """Build the symbolic masking game restricted to reachable vertices."""
    pair = validate_pair(nominal, impl)
    faults = impl.faults
    v0 = RefuterV(nominal.initial, impl.initial)
    succ_map: dict = {ErrV: {ErrV}}
    todo = deque([v0])
    seen = {v0}
    while todo:
        v = todo.popleft()
        if v.cls == R:
            out = [VerifierV(v.s, t.label, 1, v.s2, t.target) for t in nominal.out(v.s)]
            out += [VerifierV(v.s, t.label, 2, v.s2, t.target) for t in impl.out(v.s2)]
            assert out, "Refuter vertex without moves in a total model pair"
        elif v.cls == V:
            if v.side == 1:
                out = [ProbV(v.s, v.s2, v.pending, t.target)
                       for t in impl.out(v.s2) if t.label == v.label]
            elif v.label in faults:
                out = [ProbV(v.s, v.s2, dirac(v.s), v.pending)]
            else:
                out = [ProbV(v.s, v.s2, t.target, v.pending)
                       for t in nominal.out(v.s) if t.label == v.label]
            if not out:
                out = [ErrV]
        else:
            out = [RefuterV(t, t2) for t in v.mu for t2 in v.mu2]
        succ_map[v] = set(out)
        for w in out:
            if w not in seen and w is not ErrV:
                seen.add(w)
                todo.append(w)
    return _finish(succ_map, v0, pair)


def build_snippet(g: GameGraph, cap: int = DEFAULT_CELL_CAP) -> GameGraph:
    """Expand each probabilistic vertex of ``g`` into its vertex couplings."""
    expansions = {}
    for i in g.ids(P):
        v = g.vertices[i]
        expansions[v] = [SnippetP(v.s, v.s2, v.mu, v.mu2, w)
                         for w in sorted(enumerate_vertices(v.mu, v.mu2, cap), key=Coupling.items)]
    succ_map: dict = {}
    prob_map: dict = {}
    for i, v in enumerate(g.vertices):
        if v.cls == P:
            for sv in expansions[v]:
                succ_map[sv] = {RefuterV(a, b) for a, b in sv.w}
                prob_map[sv] = {RefuterV(a, b): x for (a, b), x in sv.w.items()}
        elif v.cls == V:
            out = set()
            for j in g.succ[i]:
                w = g.vertices[j]
                out.update(expansions[w] if w.cls == P else [w])
            succ_map[v] = out
        else:
            succ_map[v] = {g.vertices[j] for j in g.succ[i]}
    h = _finish(succ_map, g.vertices[g.initial], g.pair, prob_map)
    # snippet vertices unreachable after the expansion are dropped
    keep = h.reachable() | {h.err}
    if len(keep) == len(h):
        return h
    sm = {h.vertices[i]: {h.vertices[j] for j in h.succ[i]} for i in keep}
    pm = {v: dict(prob_map[v]) for v in sm if v in prob_map}
    return _finish(sm, h.vertices[h.initial], g.pair, pm)


# ---------------------------------------------------------------------------
# serialisation

def _dist_json(mu: Dist) -> list:
    return [[list(s), str(w)] for s, w in mu.items()]


def _dist_load(data) -> Dist:
    return Dist({tuple(s): Fraction(w) for s, w in data})


def _vertex_json(i: int, v) -> dict:
    if v is ErrV:
        return {"id": i, "class": ERR}
    d: dict[str, Any] = {"id": i, "class": v.cls, "s": list(v.s), "s'": list(v.s2)}
    if v.cls == V:
        d["challenge"] = {"label": v.label, "side": v.side}
        d["mu" if v.side == 1 else "mu2"] = _dist_json(v.pending)
    elif v.cls == P:
        d["mu"] = _dist_json(v.mu)
        d["mu2"] = _dist_json(v.mu2)
        if isinstance(v, SnippetP):
            d["w"] = [[list(a), list(b), str(x)] for (a, b), x in v.w.items()]
    return d


def _vertex_load(d: dict):
    cls = d["class"]
    if cls == ERR:
        return ErrV
    s, s2 = tuple(d["s"]), tuple(d["s'"])
    if cls == R:
        return RefuterV(s, s2)
    if cls == V:
        ch = d["challenge"]
        pending = _dist_load(d["mu"] if ch["side"] == 1 else d["mu2"])
        return VerifierV(s, ch["label"], ch["side"], s2, pending)
    mu, mu2 = _dist_load(d["mu"]), _dist_load(d["mu2"])
    if "w" in d:
        w = Coupling({(tuple(a), tuple(b)): Fraction(x) for a, b, x in d["w"]})
        return SnippetP(s, s2, mu, mu2, w)
    return ProbV(s, s2, mu, mu2)


def graph_to_json(g: GameGraph) -> dict:
    data = {
        "vertices": [_vertex_json(i, v) for i, v in enumerate(g.vertices)],
        "edges": [[i, j] for i, out in enumerate(g.succ) for j in out],
        "initial": g.initial,
        "counts": g.counts(),
    }
    if g.prob:
        data["prob"] = {str(i): [str(x) for x in ps] for i, ps in sorted(g.prob.items())}
    return data


def load_graph_json(text: str) -> GameGraph:
    data = json.loads(text)
    verts = [None] * len(data["vertices"])
    for d in data["vertices"]:
        verts[d["id"]] = _vertex_load(d)
    succ: list = [[] for _ in verts]
    for a, b in data["edges"]:
        succ[a].append(b)
    prob = {int(k): tuple(Fraction(x) for x in v) for k, v in data.get("prob", {}).items()}
    return GameGraph(verts, [sorted(s) for s in succ], data["initial"], prob or None)


_SHAPES = {R: "box", V: "ellipse", P: "diamond", ERR: "doublecircle"}


def emit_graph(g: GameGraph, fmt: str = "json") -> str:
    """Serialise ``g`` as ``json`` or Graphviz ``dot`` (deterministic)."""
    if fmt == "json":
        return json.dumps(graph_to_json(g), indent=1)
    if fmt != "dot":
        raise ValueError(f"unknown graph format {fmt!r}")
    lines = ["digraph masking_game {"]
    for i, v in enumerate(g.vertices):
        label = _label(v).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        extra = ", penwidth=2" if i == g.initial else ""
        lines.append(f'  n{i} [shape={_SHAPES[v.cls]}, label="{label}"{extra}];')
    for i, out in enumerate(g.succ):
        for j in out:
            lines.append(f"  n{i} -> n{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"
