"""Milestones and the value of the quantitative masking game.

A milestone assigns a non-negative integer weight to implementation
labels.  Each Verifier vertex pays the weight of its challenge label, and
the value of the game is the expected total payoff collected before the
error vertex is reached, with the Verifier maximising and a fair Refuter
minimising.  It is computed as the greatest fixpoint of the operator
:func:`value_step` by iterating downwards from a sound upper bound.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .analysis import check_failing
from .game import ERR, P, R, V, GameGraph, build_snippet
from .polytope import DEFAULT_CELL_CAP, build_system, maximize, solve

log = logging.getLogger(__name__)


class PreconditionError(ValueError):
    """The game is not almost surely failing, so its value is undefined."""


class Milestone:
    """Non-negative integer weights on labels (absent labels weigh 0)."""

    def __init__(self, weights: Mapping[str, int] | None = None):
        weights = dict(weights or {})
        for label, w in weights.items():
            if int(w) != w or w < 0:
                raise ValueError(f"milestone weight for {label!r} must be a non-negative integer")
        self.weights = {k: int(v) for k, v in weights.items() if v}

    @classmethod
    def parse(cls, specs) -> "Milestone":
        """Build from strings like ``"fault=1"``."""
        weights: dict = {}
        for spec in specs:
            label, sep, w = spec.partition("=")
            if not sep or not label.strip():
                raise ValueError(f"milestone must look like label=weight, got {spec!r}")
            try:
                weights[label.strip()] = weights.get(label.strip(), 0) + int(w)
            except ValueError:
                raise ValueError(f"milestone weight in {spec!r} is not an integer") from None
        return cls(weights)

    def __call__(self, label: str) -> int:
        return self.weights.get(label, 0)

    def __repr__(self):
        return f"Milestone({self.weights})"

    def scaled(self, k: int) -> "Milestone":
        return Milestone({a: k * w for a, w in self.weights.items()})

    @property
    def max_weight(self) -> int:
        return max(self.weights.values(), default=0)


def reward(v, m: Milestone) -> int:
    """Milestone weight of a Verifier vertex's challenge; 0 elsewhere."""
    return m(v.label) if v.cls == V else 0


def rewards(g: GameGraph, m: Milestone) -> np.ndarray:
    return np.array([reward(v, m) for v in g.vertices], dtype=float)


def _min_positive_prob(h: GameGraph) -> Fraction:
    return min((x for ps in h.prob.values() for x in ps), default=Fraction(1))


def compute_bound(g: GameGraph, m: Milestone, snippet: GameGraph | None = None,
                  cap: int = DEFAULT_CELL_CAP) -> Fraction:
    """The crude bound ``r_max * N / p_min**N`` over the vertex snippet
    (``N`` snippet vertices, ``p_min`` the least positive coupling weight).

    Exact, but astronomically large on anything but toy games.
    """
    r_max = m.max_weight
    if r_max == 0:
        return Fraction(0)
    h = snippet if snippet is not None else build_snippet(g, cap)
    n = len(h)
    return Fraction(r_max * n) / _min_positive_prob(h) ** n


def attractor_levels(g: GameGraph) -> dict:
    """Levels of the fair-Refuter attractor of the error vertex.

    Level ``k`` vertices reach a lower level in one step: Refuter vertices
    through some successor, Verifier vertices through all successors and
    probabilistic vertices with positive probability under every coupling.
    """
    from .analysis import _forall_member

    levels = {g.err: 0}
    frontier = {g.err}
    k = 0
    while frontier:
        k += 1
        cand = sorted({p for j in frontier for p in g.pred[j] if p not in levels})
        frontier = {i for i in cand if _forall_member(g, i, levels)}
        for i in frontier:
            levels[i] = k
    return levels


def _coupling_weight_floor(mu, mu2) -> Fraction:
    # every vertex coupling is an integer combination of the marginal
    # weights, so its positive entries are multiples of 1/lcm(denominators)
    d = 1
    for _, w in mu.items() + mu2.items():
        d = d * w.denominator // math.gcd(d, w.denominator)
    return Fraction(1, d)


def attractor_bound(g: GameGraph, m: Milestone) -> Fraction:
    """Upper bound on the game value at every vertex reachable from the
    initial one, from the Refuter strategy that always moves one attractor
    level down.

    That strategy is fair on a failing game and from any vertex reaches
    the error vertex within ``L`` steps (``L`` the largest level) with
    probability at least ``p**k``, where ``k = ceil(L/3)`` bounds the
    probabilistic steps on the way and ``p`` bounds the weight a vertex
    coupling puts on its lower-level cells.  At most ``k`` rewards are
    collected per block of ``L`` steps, hence ``r_max * k / p**k``.
    """
    r_max = m.max_weight
    if r_max == 0:
        return Fraction(0)
    levels = attractor_levels(g)
    reach = g.reachable()
    missing = reach - set(levels)
    if missing:
        raise PreconditionError("game is not almost surely failing; no finite bound exists")
    depth = max(levels[i] for i in reach)
    k = max(1, -(-depth // 3))
    p = min((_coupling_weight_floor(g.vertices[i].mu, g.vertices[i].mu2)
             for i in g.ids(P)), default=Fraction(1))
    return Fraction(r_max * k) / p ** k


# ---------------------------------------------------------------------------
# the operator

def _as_vector(g: GameGraph, f) -> np.ndarray:
    if isinstance(f, Mapping):
        return np.array([float(f.get(i, 0.0)) for i in range(len(g))])
    return np.asarray(f, dtype=float)


def value_step(g: GameGraph, m: Milestone, bound, f) -> np.ndarray:
    """One synchronous application of the value operator (reference
    implementation; each probabilistic vertex solves an exact LP)."""
    f = _as_vector(g, f)
    U = float(bound)
    out = np.empty(len(g))
    for i, v in enumerate(g.vertices):
        c = g.cls[i]
        succ = g.succ[i]
        if c == ERR:
            out[i] = 0.0
        elif c == R:
            out[i] = min(f[j] for j in succ)
        elif c == V:
            out[i] = reward(v, m) + max(f[j] for j in succ)
        elif i in g.prob:  # snippet vertex with a fixed coupling
            out[i] = sum(float(x) * f[j] for j, x in zip(succ, g.prob[i]))
        else:
            targets = g.cell_targets(i)
            value, _ = maximize(build_system(v.mu, v.mu2),
                                {cell: Fraction(f[j]) for cell, j in targets.items()})
            out[i] = float(value)
    return np.minimum(out, U)


class ValueOperator:
    """Vectorised value operator for repeated application.

    Refuter and Verifier vertices are handled with segment reductions.
    Each probabilistic vertex keeps an optimal basis of its coupling LP;
    its value is the product of the basic coupling with ``f`` and the
    basis is only re-optimised (exactly, warm-started) when some reduced
    cost turns positive beyond rounding noise.
    """

    #: relative slack on reduced costs, far below float resolution of the
    #: values yet above the rounding noise of the potentials
    RC_TOL = 1e-14

    def __init__(self, g: GameGraph, m: Milestone, bound):
        self.g = g
        self.U = float(bound)
        n = len(g)
        self.n = n
        self.r = rewards(g, m)
        self.err = g.err
        self.R_ids = np.array(g.ids(R), dtype=np.int64)
        self.V_ids = np.array(g.ids(V), dtype=np.int64)
        self.R_idx, self.R_ptr = self._segments(self.R_ids)
        self.V_idx, self.V_ptr = self._segments(self.V_ids)
        self.lp_solves = 0
        self.P_ids = g.ids(P)
        self._fixed_rows: list = []  # (P id, target id, weight) of single-point polytopes
        self._lp: dict = {}  # P id -> state for non-trivial polytopes
        for i in self.P_ids:
            v = g.vertices[i]
            targets = g.cell_targets(i)
            if i in g.prob:
                for j, x in zip(g.succ[i], g.prob[i]):
                    self._fixed_rows.append((i, j, float(x)))
            elif v.mu.is_dirac() or v.mu2.is_dirac():
                for (a, b), j in targets.items():
                    self._fixed_rows.append((i, j, float(v.mu[a] * v.mu2[b])))
            else:
                self._lp[i] = {"sys": build_system(v.mu, v.mu2), "targets": targets, "basis": None}
        self.W = None
        self.RC = None
        self._rc_owner = np.zeros(0, dtype=np.int64)

    def _segments(self, ids):
        idx = []
        ptr = []
        for i in ids:
            ptr.append(len(idx))
            idx.extend(self.g.succ[i])
        return np.array(idx, dtype=np.int64), np.array(ptr, dtype=np.int64)

    # LP bookkeeping -------------------------------------------------------

    def _solve(self, i: int, f: np.ndarray):
        st = self._lp[i]
        obj = {cell: Fraction(float(f[j])) for cell, j in st["targets"].items()}
        res = solve(st["sys"], obj, basis=st["basis"])
        self.lp_solves += 1
        st["basis"] = res.basis
        st["coupling"] = res.coupling
        st["rc"] = self._reduced_costs(st)

    @staticmethod
    def _reduced_costs(st) -> list:
        """Reduced cost of every non-basic cell as a sparse linear form in
        the cell costs: ``[(coef, cell), ...]`` per non-basic cell."""
        sys = st["sys"]
        basis = list(st["basis"])
        u: dict = {sys.rows[0]: {}}
        vpot: dict = {}
        pending = deque(basis)
        stall = 0
        while pending and stall <= len(pending):
            s, t = cell = pending.popleft()
            if s in u and t not in vpot:
                d = dict(u[s])
                for k, x in list(d.items()):
                    d[k] = -x
                d[cell] = d.get(cell, 0) + 1
                vpot[t] = d
                stall = 0
            elif t in vpot and s not in u:
                d = {k: -x for k, x in vpot[t].items()}
                d[cell] = d.get(cell, 0) + 1
                u[s] = d
                stall = 0
            elif s in u and t in vpot:
                stall = 0
            else:
                pending.append(cell)
                stall += 1
        basic = set(basis)
        forms = []
        for s in sys.rows:
            for t in sys.cols:
                cell = (s, t)
                if cell in basic:
                    continue
                d: dict = {cell: 1}
                for k, x in u[s].items():
                    d[k] = d.get(k, 0) - x
                for k, x in vpot[t].items():
                    d[k] = d.get(k, 0) - x
                forms.append([(x, k) for k, x in d.items() if x])
        return forms

    def _rebuild(self):
        rows, cols, vals = [], [], []
        for i, j, x in self._fixed_rows:
            rows.append(i)
            cols.append(j)
            vals.append(x)
        rc_rows, rc_cols, rc_vals, owner = [], [], [], []
        for i, st in self._lp.items():
            targets = st["targets"]
            for cell, x in st["coupling"].items():
                rows.append(i)
                cols.append(targets[cell])
                vals.append(float(x))
            for form in st["rc"]:
                r = len(owner)
                owner.append(i)
                for x, cell in form:
                    rc_rows.append(r)
                    rc_cols.append(targets[cell])
                    rc_vals.append(float(x))
        n = self.n
        self.W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.RC = sp.csr_matrix((rc_vals, (rc_rows, rc_cols)), shape=(len(owner), n))
        self._rc_owner = np.array(owner, dtype=np.int64)

    def initialise(self, f: np.ndarray):
        for i in self._lp:
            self._solve(i, f)
        self._rebuild()

    def apply(self, f: np.ndarray) -> np.ndarray:
        """One operator application to a vector ``f`` (call :meth:`initialise` first)."""
        if self.RC.shape[0]:
            rc = self.RC @ f
            scale = self.RC_TOL * max(1.0, float(np.max(np.abs(f))))
            bad = np.unique(self._rc_owner[rc > scale])
            if bad.size:
                for i in bad:
                    self._solve(int(i), f)
                self._rebuild()
        out = self.W @ f
        if self.R_ids.size:
            out[self.R_ids] = np.minimum.reduceat(f[self.R_idx], self.R_ptr)
        if self.V_ids.size:
            out[self.V_ids] = self.r[self.V_ids] + np.maximum.reduceat(f[self.V_idx], self.V_ptr)
        out[self.err] = 0.0
        np.minimum(out, self.U, out=out)
        return out


# ---------------------------------------------------------------------------
# solver

@dataclass
class ValueResult:
    value: float
    iterations: int
    converged: bool
    bound: Fraction
    residual: float
    rate: float | None = None
    values: np.ndarray | None = field(default=None, repr=False)
    deltas: list = field(default_factory=list, repr=False)
    lp_solves: int = 0
    bound_source: str = "attractor"

    @property
    def error_estimate(self) -> float:
        if self.rate is None or self.rate >= 1:
            return math.inf if self.residual else 0.0
        return self.residual / (1 - self.rate)


def solve_value(g: GameGraph, m: Milestone, epsilon: float = 1e-9, max_iters: int = 1_000_000,
                bound_override=None, stop: str = "rate", window: int = 24,
                check_precondition: bool = True) -> ValueResult:
    """Iterate the value operator from the top element until it settles.

    ``stop="rate"`` (the default) stops once the last change is below
    ``epsilon`` and the geometric tail estimated from the recent rate of
    decrease is below ``epsilon`` too, so the returned upper estimate is
    within about ``epsilon`` of the fixpoint.  ``stop="residual"`` stops as
    soon as the last change is below ``epsilon``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if stop not in ("rate", "residual"):
        raise ValueError(f"unknown stopping rule {stop!r}")
    if check_precondition and not check_failing(g):
        raise PreconditionError(
            "the game is not almost surely failing under fairness; its value is unbounded")
    if bound_override is not None:
        bound = Fraction(bound_override)
        source = "user"
    else:
        bound = attractor_bound(g, m)
        source = "attractor"
    if bound < 0:
        raise ValueError("bound must be non-negative")
    op = ValueOperator(g, m, bound)
    f = np.full(len(g), float(bound))
    f[g.err] = 0.0
    op.initialise(f)
    deltas: list = []
    converged = False
    rate = None
    it = 0
    while it < max_iters:
        it += 1
        nf = op.apply(f)
        tol = 1e-12 * max(1.0, float(np.max(f)))
        if np.any(nf > f + tol):
            raise ArithmeticError("value iteration is not descending")
        delta = float(np.max(np.abs(nf - f)))
        deltas.append(delta)
        f = nf
        if delta == 0.0:
            converged = True
            rate = 0.0
            break
        if delta < epsilon:
            if stop == "residual":
                converged = True
                break
            if len(deltas) > window and deltas[-1 - window] > 0:
                rate = (delta / deltas[-1 - window]) ** (1.0 / window)
                if rate < 1 and delta / (1 - rate) < epsilon:
                    converged = True
                    break
    if rate is None and len(deltas) > window and deltas[-1 - window] > 0:
        rate = (deltas[-1] / deltas[-1 - window]) ** (1.0 / window)
    log.info("value iteration: %d iterations, %d LP solves, residual %.3g",
             it, op.lp_solves, deltas[-1] if deltas else 0.0)
    return ValueResult(
        value=float(f[g.initial]), iterations=it, converged=converged, bound=bound,
        residual=deltas[-1] if deltas else 0.0, rate=rate, values=f, deltas=deltas,
        lp_solves=op.lp_solves, bound_source=source,
    )
