"""Brute-force reference analyses on the vertex snippet.

These are deliberately naive and exact (rational arithmetic); they exist
to cross-check the symbolic algorithms on small games.

* :func:`oracle_reach_positive`: classical attractor for positive
  probability reachability of the error vertex.
* :func:`oracle_failing`: enumerates the Verifier's deterministic
  memoryless strategies against a uniformly random Refuter.
* :func:`oracle_value`: values of deterministic memoryless strategy pairs,
  combined into inf-sup and sup-inf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import networkx as nx

from .game import ERR, P, R, V, GameGraph
from .quantitative import Milestone, attractor_levels, reward

DEFAULT_STRATEGY_CAP = 10**6
FAILING_ENUMERATION_CAP = 10**4
# pair counts up to which method="auto" enumerates instead of iterating
AUTO_ENUMERATION_LIMIT = 2000


class OracleCapError(ValueError):
    pass


class DeterminacyError(AssertionError):
    """inf-sup and sup-inf disagree; indicates an implementation bug."""


def oracle_reach_positive(h: GameGraph) -> set:
    """Vertices from which the Refuter reaches the error vertex with
    positive probability whatever the Verifier does."""
    att = {h.err}
    changed = True
    while changed:
        changed = False
        for i in range(len(h)):
            if i in att:
                continue
            succ = h.succ[i]
            if h.cls[i] == V:
                ok = all(j in att for j in succ)
            else:
                ok = any(j in att for j in succ)
            if ok:
                att.add(i)
                changed = True
    return att


def _choice_vertices(h: GameGraph, cls: str) -> list:
    return [i for i in h.ids(cls) if i != h.err]


def _strategy_count(h: GameGraph, cls: str) -> int:
    return math.prod(len(h.succ[i]) for i in _choice_vertices(h, cls))


def _reaches_err_surely(h: GameGraph, succ_of) -> bool:
    """In the finite chain given by ``succ_of`` (positive-probability
    successors), is the error vertex reached with probability 1 from the
    initial vertex?  True iff every reachable vertex can still reach it."""
    reach = {h.initial}
    todo = [h.initial]
    edges: dict = {}
    while todo:
        i = todo.pop()
        edges[i] = succ_of(i)
        for j in edges[i]:
            if j not in reach:
                reach.add(j)
                todo.append(j)
    if h.err not in reach:
        return False
    back: dict = {}
    for i, out in edges.items():
        for j in out:
            back.setdefault(j, []).append(i)
    seen = {h.err}
    todo = [h.err]
    while todo:
        for i in back.get(todo.pop(), ()):
            if i not in seen:
                seen.add(i)
                todo.append(i)
    return reach <= seen


def _verifier_trap(h: GameGraph, refuter_succ) -> set:
    """Largest set of non-error vertices in which the Verifier can keep
    the play forever: random and Refuter moves stay inside, the Verifier
    has some move inside.  ``refuter_succ(i)`` gives the Refuter's
    possible moves."""
    t = set(range(len(h))) - {h.err}
    changed = True
    while changed:
        changed = False
        for i in sorted(t):
            c = h.cls[i]
            if c == V:
                ok = any(j in t for j in h.succ[i])
            elif c == R:
                ok = all(j in t for j in refuter_succ(i))
            else:
                ok = all(j in t for j in h.succ[i])
            if not ok:
                t.discard(i)
                changed = True
    return t


def oracle_failing(h: GameGraph, cap: int = FAILING_ENUMERATION_CAP) -> bool:
    """Whether every Verifier strategy, played against the uniformly random
    Refuter, reaches the error vertex with probability 1.

    Deterministic memoryless Verifier strategies are enumerated when there
    are at most ``cap`` of them.  Otherwise the equivalent end-component
    test is used: the Verifier can avoid the error vertex with positive
    probability iff a trap without it is reachable from the initial vertex.
    """
    vs = _choice_vertices(h, V)
    if _strategy_count(h, V) <= cap:
        choices = [h.succ[i] for i in vs]
        for pick in product(*choices):
            pi = dict(zip(vs, pick))

            def succ_of(i, pi=pi):
                return (pi[i],) if i in pi else h.succ[i]

            if not _reaches_err_surely(h, succ_of):
                return False
        return True
    trap = _verifier_trap(h, lambda i: h.succ[i])
    return not (trap & h.reachable())


# ---------------------------------------------------------------------------
# strategy evaluation

def _solve_sparse(rows: dict, rhs: dict) -> dict:
    """Solve ``sum_k rows[i][k] x_k = rhs[i]`` exactly by sparse
    Gauss-Jordan elimination.  Raises ZeroDivisionError if singular."""
    pivots: dict = {}  # pivot variable -> (row, rhs), fully reduced
    for i in sorted(rows, key=lambda i: (len(rows[i]), i)):
        r = dict(rows[i])
        b = rhs[i]
        for pv in [k for k in r if k in pivots]:
            f = r.pop(pv)
            prow, pb = pivots[pv]
            for k, a in prow.items():
                nv = r.get(k, 0) - f * a
                if nv:
                    r[k] = nv
                else:
                    r.pop(k, None)
            b -= f * pb
        if not r:
            raise ZeroDivisionError("singular system")
        pv = min(r)
        a = r.pop(pv)
        prow = {k: x / a for k, x in r.items()}
        pb = b / a
        for qv, (qrow, qb) in list(pivots.items()):
            f = qrow.pop(pv, None)
            if f:
                for k, x in prow.items():
                    nv = qrow.get(k, 0) - f * x
                    if nv:
                        qrow[k] = nv
                    else:
                        qrow.pop(k, None)
                pivots[qv] = (qrow, qb - f * pb)
        pivots[pv] = (prow, pb)
    sol = {}
    for pv, (prow, pb) in pivots.items():
        if prow:
            raise ZeroDivisionError("singular system")
        sol[pv] = pb
    return sol


class _Evaluator:
    """Exact expected total reward of strategy pairs on a snippet."""

    def __init__(self, h: GameGraph, m: Milestone):
        self.h = h
        self.r = [Fraction(reward(v, m)) for v in h.vertices]
        self.P_ids = h.ids(P)

    def _reached(self, pi_R: dict, pi_V: dict) -> list:
        h = self.h
        seen = {h.initial}
        todo = [h.initial]
        while todo:
            i = todo.pop()
            c = h.cls[i]
            out = (pi_R[i],) if c == R else (pi_V[i],) if c == V else h.succ[i]
            for j in out:
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        return [i for i in self.P_ids if i in seen]

    def __call__(self, pi_R: dict, pi_V: dict, from_initial: bool = False) -> list:
        """Values at all vertices, or only at those reachable from the
        initial vertex under the pair when ``from_initial`` (others are 0)."""
        h, r = self.h, self.r
        rows: dict = {}
        const: dict = {}
        p_ids = self._reached(pi_R, pi_V) if from_initial else self.P_ids
        for i in p_ids:
            c = Fraction(0)
            coef: dict = {}
            for j, p in zip(h.succ[i], h.prob[i]):
                v = pi_R[j]
                c += p * r[v]
                w = pi_V[v]
                if w != h.err:
                    coef[w] = coef.get(w, 0) + p
            rows[i] = coef
            const[i] = c
        graph = nx.DiGraph()
        graph.add_nodes_from(p_ids)
        graph.add_edges_from((i, k) for i, coef in rows.items() for k in coef)
        cond = nx.condensation(graph)
        x = {h.err: Fraction(0)}
        for comp in reversed(list(nx.topological_sort(cond))):
            members = cond.nodes[comp]["members"]
            sys_rows, rhs = {}, {}
            for i in members:
                row = {i: Fraction(1)}
                b = const[i]
                for k, a in rows[i].items():
                    if k in members:
                        row[k] = row.get(k, 0) - a
                    else:
                        b += a * x[k]
                row = {k: a for k, a in row.items() if a}
                sys_rows[i] = row
                rhs[i] = b
            try:
                x.update(_solve_sparse(sys_rows, rhs))
            except ZeroDivisionError:
                raise ArithmeticError("strategy pair does not reach the error vertex surely") from None
        out = [Fraction(0)] * len(h)
        for i in p_ids:
            out[i] = x[i]
        for v, w in pi_V.items():
            out[v] = r[v] + (out[w] if w != h.err else 0)
        for j, v in pi_R.items():
            out[j] = out[v]
        return out


def _refuter_fair(h: GameGraph, pi_R: dict) -> bool:
    """A deterministic memoryless Refuter strategy is almost surely fair on
    a failing game iff no Verifier strategy keeps the play away from the
    error vertex with positive probability."""
    trap = _verifier_trap(h, lambda i: (pi_R[i],))
    if not trap:
        return True
    reach = {h.initial}
    todo = [h.initial]
    while todo:
        i = todo.pop()
        out = (pi_R[i],) if i in pi_R else h.succ[i]
        for j in out:
            if j not in reach:
                reach.add(j)
                todo.append(j)
    return not (trap & reach)


def _attractor_strategy(h: GameGraph) -> dict:
    """Refuter strategy moving to a successor of lowest attractor level."""
    levels = attractor_levels(h)
    pi = {}
    for i in _choice_vertices(h, R):
        if i not in levels:
            raise ValueError("game is not almost surely failing")
        pi[i] = min(h.succ[i], key=lambda j: (levels.get(j, math.inf), j))
    return pi


@dataclass
class OracleValue:
    inf_sup: Fraction
    sup_inf: Fraction
    method: str
    values: list | None = None

    @property
    def value(self) -> Fraction:
        return self.inf_sup


def _verifier_best_response(h, ev, pi_R, pi_V=None):
    """Policy iteration for the maximising Verifier against ``pi_R``."""
    if pi_V is None:
        pi_V = {i: h.succ[i][0] for i in _choice_vertices(h, V)}
    while True:
        x = ev(pi_R, pi_V)
        changed = False
        for i in pi_V:
            cur = x[pi_V[i]]
            best = max(h.succ[i], key=lambda j: (x[j], -j))
            if x[best] > cur:
                pi_V[i] = best
                changed = True
        if not changed:
            return x, pi_V


def _refuter_best_response(h, ev, pi_V, pi_R):
    """Policy iteration for the minimising Refuter against ``pi_V``,
    starting from a fair strategy; strict improvements keep it fair."""
    while True:
        x = ev(pi_R, pi_V)
        changed = False
        for i in pi_R:
            cur = x[pi_R[i]]
            best = min(h.succ[i], key=lambda j: (x[j], j))
            if x[best] < cur:
                pi_R[i] = best
                changed = True
        if not changed:
            return x, pi_R


def oracle_value(h: GameGraph, m: Milestone, cap: int = DEFAULT_STRATEGY_CAP,
                 method: str = "auto") -> OracleValue:
    """Game value at the initial vertex over deterministic memoryless
    strategies, with the Refuter restricted to fair strategies.

    ``method="enumerate"`` evaluates every strategy pair (needs the product
    of strategy counts within ``cap``); ``"auto"`` uses it only for tiny
    games.  ``method="iterate"`` runs exact
    strategy iteration: the Refuter improves from the attractor strategy
    against Verifier best responses, which gives inf-sup; sup-inf is the
    Refuter's best response to the resulting Verifier strategy.  Raises
    :class:`DeterminacyError` if the two differ.
    """
    ev = _Evaluator(h, m)
    n_R, n_V = _strategy_count(h, R), _strategy_count(h, V)
    if method == "auto":
        method = "enumerate" if n_R * n_V <= min(cap, AUTO_ENUMERATION_LIMIT) else "iterate"
    if method == "enumerate":
        if n_R * n_V > cap:
            raise OracleCapError(f"{n_R} x {n_V} strategy pairs exceed the cap of {cap}")
        rs, vs = _choice_vertices(h, R), _choice_vertices(h, V)
        fair = []
        for pick in product(*(h.succ[i] for i in rs)):
            pi_R = dict(zip(rs, pick))
            if _refuter_fair(h, pi_R):
                fair.append(pi_R)
        if not fair:
            raise ValueError("no fair Refuter strategy reaches the error vertex surely")
        pis_V = [dict(zip(vs, pick)) for pick in product(*(h.succ[i] for i in vs))]
        table = [[ev(pi_R, pi_V, True)[h.initial] for pi_V in pis_V] for pi_R in fair]
        inf_sup = min(max(row) for row in table)
        sup_inf = max(min(row[k] for row in table) for k in range(len(pis_V)))
        result = OracleValue(inf_sup, sup_inf, "enumerate")
    elif method == "iterate":
        pi_R = _attractor_strategy(h)
        pi_V = None
        while True:
            x, pi_V = _verifier_best_response(h, ev, pi_R, pi_V)
            changed = False
            for i in pi_R:
                best = min(h.succ[i], key=lambda j: (x[j], j))
                if x[best] < x[pi_R[i]]:
                    pi_R[i] = best
                    changed = True
            if not changed:
                break
        y, _ = _refuter_best_response(h, ev, dict(pi_V), _attractor_strategy(h))
        result = OracleValue(x[h.initial], y[h.initial], "iterate", x)
    else:
        raise ValueError(f"unknown oracle method {method!r}")
    if result.inf_sup != result.sup_inf:
        raise DeterminacyError(f"inf-sup {result.inf_sup} != sup-inf {result.sup_inf}")
    return result
