"""Masking fault-tolerance for probabilistic systems.

Decides whether an implementation model masks the faults of a nominal
model, and measures how many milestones an almost surely failing
implementation achieves before its first unmasked fault.
"""
from .analysis import (
    VertexSet, analyse_masking, check_failing, compute_u_set, decide_masking,
    pre_exists, pre_forall,
)
from .game import (
    ErrV, GameGraph, ProbV, RefuterV, SnippetP, VerifierV, build_snippet,
    build_symbolic, emit_graph, load_graph_json,
)
from .model import Dist, ModelError, Pts, dirac, format_pts, reachable_states, validate_pair
from .oracle import oracle_failing, oracle_reach_positive, oracle_value
from .parser import ModelSyntaxError, load_model, parse_model
from .polytope import (
    Coupling, CouplingSystem, build_system, enumerate_vertices, feasible, maximize, respects,
)
from .quantitative import (
    ValueOperator, Milestone, PreconditionError, ValueResult, attractor_bound, compute_bound,
    value_step, reward, solve_value,
)

__version__ = "0.1.0"
