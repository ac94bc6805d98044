"""Coupling polytopes of two distributions, handled with exact arithmetic.

A coupling of ``mu`` and ``mu2`` is a non-negative weight map on
``Supp(mu) x Supp(mu2)`` whose row sums equal ``mu`` and whose column sums
equal ``mu2``.  Forcing some cells to zero gives the restricted systems
used by the game solvers.  Feasibility and optimisation use a two-phase
simplex over :class:`fractions.Fraction` with Bland's pivoting rule, so no
tolerance is ever involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Iterable, Mapping

from .model import Dist, format_state


class InfeasibleError(ValueError):
    pass


class CapExceededError(ValueError):
    """Raised when a vertex enumeration would exceed the cell cap."""


class Coupling:
    """Immutable exact weight map on state pairs (positive weights only)."""

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, weights: Mapping | Iterable):
        pairs = weights.items() if isinstance(weights, Mapping) else weights
        acc: dict = {}
        for cell, w in pairs:
            w = Fraction(w)
            if w < 0:
                raise ValueError(f"negative coupling weight {w} at {cell}")
            if w:
                acc[cell] = acc.get(cell, Fraction(0)) + w
        self._items = tuple(sorted(acc.items()))
        self._map = dict(self._items)
        self._hash = hash(self._items)

    def __getitem__(self, cell) -> Fraction:
        return self._map.get(cell, Fraction(0))

    def __iter__(self):
        return (c for c, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __eq__(self, other):
        return isinstance(other, Coupling) and self._items == other._items

    def __hash__(self):
        return self._hash

    def __repr__(self):
        inner = ", ".join(f"{format_state(s)}~{format_state(t)}: {w}" for (s, t), w in self._items)
        return f"Coupling({{{inner}}})"

    def items(self) -> tuple:
        return self._items

    def support(self) -> tuple:
        return tuple(c for c, _ in self._items)

    def row_marginal(self) -> dict:
        out: dict = {}
        for (s, _), w in self._items:
            out[s] = out.get(s, Fraction(0)) + w
        return out

    def col_marginal(self) -> dict:
        out: dict = {}
        for (_, t), w in self._items:
            out[t] = out.get(t, Fraction(0)) + w
        return out

    def is_coupling_of(self, mu: Dist, mu2: Dist) -> bool:
        return self.row_marginal() == dict(mu.items()) and self.col_marginal() == dict(mu2.items())


@dataclass(frozen=True)
class CouplingSystem:
    """Linear system whose non-negative solutions are the couplings of
    ``(mu, mu2)`` that put zero weight on every ``forbidden`` cell."""

    rows: tuple
    cols: tuple
    row_targets: tuple
    col_targets: tuple
    forbidden: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if sum(self.row_targets) != 1 or sum(self.col_targets) != 1:
            raise ValueError("marginals must each sum to 1")
        if any(c[0] not in self.rows or c[1] not in self.cols for c in self.forbidden):
            raise ValueError("forbidden cells must lie in rows x cols")

    @property
    def cells(self) -> list:
        """Cells that may carry weight, in row-major order."""
        return [(s, t) for s in self.rows for t in self.cols if (s, t) not in self.forbidden]

    @property
    def n_equations(self) -> int:
        # one per row, one per column, and one sum-to-zero for the forbidden cells
        return len(self.rows) + len(self.cols) + (1 if self.forbidden else 0)

    @property
    def n_inequalities(self) -> int:
        return len(self.rows) * len(self.cols)

    def equations(self) -> list[str]:
        """Human-readable rendering of the system."""
        def x(s, t):
            return f"x[{format_state(s)},{format_state(t)}]"

        eqs = []
        for s, a in zip(self.rows, self.row_targets):
            eqs.append(" + ".join(x(s, t) for t in self.cols) + f" = {a}")
        for t, b in zip(self.cols, self.col_targets):
            eqs.append(" + ".join(x(s, t) for s in self.rows) + f" = {b}")
        if self.forbidden:
            eqs.append(" + ".join(x(s, t) for s, t in sorted(self.forbidden)) + " = 0")
        eqs.extend(f"{x(s, t)} >= 0" for s in self.rows for t in self.cols)
        return eqs


def build_system(mu: Dist, mu2: Dist, forbidden: Iterable = ()) -> CouplingSystem:
    rows, cols = mu.support(), mu2.support()
    rs, cs = set(rows), set(cols)
    forb = frozenset(c for c in forbidden if c[0] in rs and c[1] in cs)
    return CouplingSystem(
        rows, cols,
        tuple(w for _, w in mu.items()),
        tuple(w for _, w in mu2.items()),
        forb,
    )


# ---------------------------------------------------------------------------
# exact simplex

@dataclass
class LPResult:
    value: Fraction
    coupling: Coupling
    basis: tuple  # basic cells, usable as a warm start


def _constraints(sys: CouplingSystem):
    """Equality rows for the allowed cells, with the last column sum dropped
    (it is implied by the others since both marginals sum to 1)."""
    cells = sys.cells
    ridx = {s: i for i, s in enumerate(sys.rows)}
    cidx = {t: j for j, t in enumerate(sys.cols)}
    m, n = len(sys.rows), len(sys.cols)
    nrows = m + n - 1
    A = [[Fraction(0)] * len(cells) for _ in range(nrows)]
    for k, (s, t) in enumerate(cells):
        A[ridx[s]][k] = Fraction(1)
        j = cidx[t]
        if j < n - 1:
            A[m + j][k] = Fraction(1)
    b = list(sys.row_targets) + list(sys.col_targets[:-1])
    return cells, A, b


def _pivot(T, basis, r, col):
    row = T[r]
    p = row[col]
    if p != 1:
        inv = 1 / p
        T[r] = row = [v * inv for v in row]
    for i, other in enumerate(T):
        if i != r:
            f = other[col]
            if f:
                T[i] = [a - f * b for a, b in zip(other, row)]
    basis[r] = col


def _optimise(T, basis, cost, allowed):
    """Maximise ``cost`` over the tableau ``T`` (last column is the rhs),
    entering only columns in ``allowed``.  Bland's rule throughout."""
    while True:
        entering = None
        for j in allowed:
            if j in basis:
                continue
            rc = cost[j] - sum(cost[basis[i]] * T[i][j] for i in range(len(T)) if T[i][j])
            if rc > 0:
                entering = j
                break
        if entering is None:
            return
        best = None
        for i, row in enumerate(T):
            a = row[entering]
            if a > 0:
                ratio = row[-1] / a
                key = (ratio, basis[i])
                if best is None or key < best[0]:
                    best = (key, i)
        if best is None:  # cannot happen on a bounded polytope
            raise ArithmeticError("unbounded linear program")
        _pivot(T, basis, best[1], entering)


def _warm_tableau(A, b, cells, basis_cells):
    index = {c: k for k, c in enumerate(cells)}
    cols = [index.get(c) for c in basis_cells]
    if None in cols:
        return None
    T = [row[:] + [rhs] for row, rhs in zip(A, b)]
    basis = [None] * len(T)
    for k in cols:
        r = next((i for i in range(len(T)) if basis[i] is None and T[i][k] != 0), None)
        if r is None:
            return None
        _pivot(T, basis, r, k)
    keep = [i for i in range(len(T)) if basis[i] is not None]
    for i in range(len(T)):
        if basis[i] is None and (any(T[i][:-1]) or T[i][-1] != 0):
            return None
    T = [T[i] for i in keep]
    basis = [basis[i] for i in keep]
    if any(row[-1] < 0 for row in T):
        return None
    return T, basis


def _cold_tableau(A, b, ncells):
    nrows = len(A)
    T = []
    for i, (row, rhs) in enumerate(zip(A, b)):
        art = [Fraction(0)] * nrows
        art[i] = Fraction(1)
        T.append(row[:] + art + [rhs])
    basis = [ncells + i for i in range(nrows)]
    cost = [Fraction(0)] * ncells + [Fraction(-1)] * nrows
    _optimise(T, basis, cost, range(ncells + nrows))
    if any(T[i][-1] != 0 for i in range(nrows) if basis[i] >= ncells):
        return None
    # drive remaining (zero-level) artificials out of the basis
    i = 0
    while i < len(T):
        if basis[i] >= ncells:
            j = next((j for j in range(ncells) if T[i][j] != 0 and j not in basis), None)
            if j is None:  # redundant equation
                del T[i]
                del basis[i]
                continue
            _pivot(T, basis, i, j)
        i += 1
    T = [row[:ncells] + [row[-1]] for row in T]
    return T, basis


def _tableau(sys: CouplingSystem, basis_cells=None):
    cells, A, b = _constraints(sys)
    start = None
    if basis_cells is not None:
        start = _warm_tableau(A, b, cells, basis_cells)
    if start is None:
        start = _cold_tableau(A, b, len(cells))
    return cells, start


def _result(cells, T, basis, cost) -> LPResult:
    weights = {cells[basis[i]]: T[i][-1] for i in range(len(T))}
    value = sum((cost[basis[i]] * T[i][-1] for i in range(len(T))), Fraction(0))
    return LPResult(value, Coupling(weights), tuple(cells[k] for k in basis))


def feasible(sys: CouplingSystem) -> bool:
    """Whether the system has a non-negative solution (decided exactly)."""
    if not sys.forbidden:
        return True  # the product coupling always exists
    _, start = _tableau(sys)
    return start is not None


def _to_fraction(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def solve(sys: CouplingSystem, objective: Mapping | Callable, basis=None) -> LPResult:
    """Maximise the linear ``objective`` (cell -> value, or a callable on
    the cell) over the polytope.  ``basis`` is an optional warm start taken
    from a previous :class:`LPResult` on the same system."""
    cells, start = _tableau(sys, basis)
    if start is None:
        raise InfeasibleError("coupling system has no solution")
    T, bas = start
    get = objective if callable(objective) else (lambda c: objective.get(c, 0))
    cost = [_to_fraction(get(c)) for c in cells]
    _optimise(T, bas, cost, range(len(cells)))
    return _result(cells, T, bas, cost)


def maximize(sys: CouplingSystem, objective: Mapping | Callable) -> tuple:
    """Return ``(optimum, witness)``; the witness is a basic feasible
    solution and therefore a vertex of the polytope."""
    res = solve(sys, objective)
    return res.value, res.coupling


# ---------------------------------------------------------------------------
# vertex enumeration

DEFAULT_CELL_CAP = 25


def _basic_solution(tree, a, b):
    """Solve the transportation equations on a spanning tree by peeling
    leaves.  ``tree`` holds (i, j) index pairs; returns a dict or None if
    some entry is negative."""
    a, b = list(a), list(b)
    row_adj: dict = {}
    col_adj: dict = {}
    for i, j in tree:
        row_adj.setdefault(i, set()).add(j)
        col_adj.setdefault(j, set()).add(i)
    x = {}
    remaining = len(tree)
    while remaining:
        progressed = False
        for i in list(row_adj):
            if len(row_adj[i]) == 1:
                (j,) = row_adj.pop(i)
                x[(i, j)] = a[i]
                b[j] -= a[i]
                col_adj[j].discard(i)
                if not col_adj[j]:
                    del col_adj[j]
                remaining -= 1
                progressed = True
        for j in list(col_adj):
            if len(col_adj[j]) == 1:
                (i,) = col_adj.pop(j)
                x[(i, j)] = b[j]
                a[i] -= b[j]
                row_adj[i].discard(j)
                if not row_adj[i]:
                    del row_adj[i]
                remaining -= 1
                progressed = True
        if not progressed:  # cannot happen for a tree
            raise ArithmeticError("basis is not a forest")
    if any(v < 0 for v in x.values()):
        return None
    return x


def _spanning_trees(m: int, n: int):
    """All spanning trees of the complete bipartite graph K_{m,n}, as lists
    of (row, col) index pairs."""
    edges = list(product(range(m), range(n)))
    need = m + n - 1

    def find(parent, u):
        while parent[u] != u:
            u = parent[u]
        return u

    def rec(k, chosen, parent):
        if len(chosen) == need:
            yield list(chosen)
            return
        if len(edges) - k < need - len(chosen):
            return
        i, j = edges[k]
        ri, rj = find(parent, i), find(parent, m + j)
        if ri != rj:
            p2 = parent[:]
            p2[ri] = rj
            chosen.append((i, j))
            yield from rec(k + 1, chosen, p2)
            chosen.pop()
        yield from rec(k + 1, chosen, parent)

    yield from rec(0, [], list(range(m + n)))


def enumerate_vertices(mu: Dist, mu2: Dist, cap: int = DEFAULT_CELL_CAP) -> set:
    """All vertices of the coupling polytope of ``(mu, mu2)``.

    Vertices are the non-negative basic solutions, one per spanning tree
    of the bipartite support graph; degenerate repeats are merged.
    """
    rows, cols = mu.support(), mu2.support()
    m, n = len(rows), len(cols)
    if m * n > cap:
        raise CapExceededError(f"{m}x{n} coupling polytope exceeds the cap of {cap} cells")
    a = [w for _, w in mu.items()]
    b = [w for _, w in mu2.items()]
    found = set()
    for tree in _spanning_trees(m, n):
        x = _basic_solution(tree, a, b)
        if x is not None:
            found.add(Coupling({(rows[i], cols[j]): w for (i, j), w in x.items()}))
    return found


def respects(w: Coupling, relation) -> bool:
    """True iff every positive-weight pair of ``w`` lies in ``relation``
    (a set of pairs or a predicate on ``(s, t)``)."""
    if callable(relation):
        return all(relation(s, t) for s, t in w)
    return all(c in relation for c in w)


def is_acyclic_support(w: Coupling) -> bool:
    """Whether the bipartite graph formed by ``Supp(w)`` is a forest."""
    parent: dict = {}

    def find(u):
        parent.setdefault(u, u)
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for s, t in w:
        ru, rv = find(("r", s)), find(("c", t))
        if ru == rv:
            return False
        parent[ru] = rv
    return True
