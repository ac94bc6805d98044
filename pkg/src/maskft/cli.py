"""Command-line interface.

Exit codes: 0 positive verdict or success, 1 negative verdict or
non-convergence, 2 usage or model error, 3 refusal because the game is not
almost surely failing.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .analysis import analyse_masking, check_failing
from .game import build_snippet, build_symbolic, emit_graph
from .model import ModelError, validate_pair
from .oracle import OracleCapError, oracle_failing, oracle_value
from .parser import load_model, parse_model
from .polytope import CapExceededError
from .quantitative import Milestone, PreconditionError, compute_bound, solve_value

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_REFUSED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def bundled_models() -> list:
    root = resources.files("maskft") / "models"
    return sorted(p.name[:-3] for p in root.iterdir() if p.name.endswith(".pm"))


def read_model(spec: str):
    """Load a model from a path, or by name from the bundled models."""
    path = Path(spec)
    if path.is_file():
        try:
            return load_model(path)
        except ModelError as exc:
            raise ModelError(f"{spec}: {exc}") from None
    name = path.name[:-3] if path.name.endswith(".pm") else path.name
    if name in bundled_models():
        text = (resources.files("maskft") / "models" / f"{name}.pm").read_text(encoding="utf-8")
        return parse_model(text, name=name)
    raise UsageError(f"no such model file: {spec}")


def _load_pair(args):
    nominal = read_model(args.nominal)
    impl = read_model(args.impl)
    validate_pair(nominal, impl)
    return nominal, impl


def _log10(x: Fraction) -> float:
    if x <= 0:
        return -math.inf
    return math.log10(x.numerator) - math.log10(x.denominator)


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit(args, report: dict, lines: list):
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True, default=_fmt))
    else:
        print("\n".join(lines))


def _timing(args, report, t0):
    if getattr(args, "timing", False):
        report["wall_time_s"] = round(time.perf_counter() - t0, 4)


def cmd_check(args) -> int:
    t0 = time.perf_counter()
    nominal, impl = _load_pair(args)
    res = analyse_masking(nominal, impl)
    g, u = res.game, res.u
    verdict = "masking" if res.masking else "not-masking"
    report = {
        "command": "check",
        "verdict": verdict,
        "graph": g.counts(),
        "u_size": len(u),
        "u_levels": max(u.level(i) for i in u),
        "trace": [{"level": lv, "vertex": g.describe(i)} for lv, i in res.trace],
    }
    _timing(args, report, t0)
    lines = [
        f"verdict: {verdict}",
        "game: {refuter} refuter, {verifier} verifier, {probabilistic} probabilistic vertices, "
        "{edges} edges".format(**g.counts()),
        f"U-set: {len(u)} vertices in {report['u_levels'] + 1} levels",
    ]
    if res.trace:
        lines.append("offending path (U level, vertex):")
        lines += [f"  {lv:4d}  {g.describe(i)}" for lv, i in res.trace]
    if "wall_time_s" in report:
        lines.append(f"wall time: {report['wall_time_s']} s")
    if args.report_dir:
        from .report import write_check_report

        files = write_check_report(args.report_dir, g, u, report)
        lines.append("report: " + ", ".join(str(f) for f in files))
    _emit(args, report, lines)
    return EXIT_OK if res.masking else EXIT_NEGATIVE


def cmd_failing(args) -> int:
    t0 = time.perf_counter()
    nominal, impl = _load_pair(args)
    g = build_symbolic(nominal, impl)
    failing = check_failing(g)
    report = {"command": "failing", "failing": failing, "level": "snippet-level", "graph": g.counts()}
    lines = [f"almost-sure failing under fairness: {str(failing).lower()} (snippet-level verdict)"]
    if args.oracle:
        try:
            of = oracle_failing(build_snippet(g))
            report["oracle_failing"] = of
            lines.append(f"oracle: {str(of).lower()} ({'agrees' if of == failing else 'DISAGREES'})")
        except CapExceededError as exc:
            report["oracle_failing"] = None
            lines.append(f"oracle: skipped ({exc})")
    _timing(args, report, t0)
    if "wall_time_s" in report:
        lines.append(f"wall time: {report['wall_time_s']} s")
    _emit(args, report, lines)
    return EXIT_OK if failing else EXIT_NEGATIVE


def _milestone(args, impl) -> Milestone:
    m = Milestone.parse(args.milestone or [])
    unknown = sorted(set(m.weights) - impl.actions)
    if unknown:
        raise UsageError(f"milestone labels {unknown} are not implementation actions")
    return m


def cmd_value(args) -> int:
    t0 = time.perf_counter()
    nominal, impl = _load_pair(args)
    try:
        m = _milestone(args, impl)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    g = build_symbolic(nominal, impl)
    if not check_failing(g):
        msg = ("refusing: the game is not almost surely failing under fairness, "
               "so the expected milestones before failure are not well defined")
        if args.json:
            print(json.dumps({"command": "value", "refused": True, "reason": msg}, indent=2, sort_keys=True))
        else:
            print(msg, file=sys.stderr)
        return EXIT_REFUSED
    bound = None
    if args.bound is not None:
        try:
            bound = Fraction(args.bound)
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"--bound must be a rational number, got {args.bound!r}") from None
    res = solve_value(g, m, epsilon=args.epsilon, max_iters=args.max_iters, bound_override=bound,
                      stop=args.stop, check_precondition=False)
    try:
        crude = compute_bound(g, m)
        crude_log = round(_log10(crude), 3) if crude else None
    except CapExceededError:
        crude_log = None
    report = {
        "command": "value",
        "milestone": dict(sorted(m.weights.items())),
        "value": res.value,
        "converged": res.converged,
        "iterations": res.iterations,
        "residual": res.residual,
        "rate": res.rate,
        "error_estimate": res.error_estimate,
        "epsilon": args.epsilon,
        "bound": float(res.bound),
        "bound_source": res.bound_source,
        "snippet_bound_log10": crude_log,
        "lp_solves": res.lp_solves,
        "graph": g.counts(),
    }
    lines = [
        f"value: {res.value!r}" + ("" if res.converged else "  (NOT converged, partial upper estimate)"),
        f"milestone: {', '.join(f'{k}={v}' for k, v in sorted(m.weights.items())) or '(none)'}",
        f"iterations: {res.iterations}, last change {res.residual:.3g}, "
        f"estimated distance to fixpoint {res.error_estimate:.3g}",
        f"upper bound used: {float(res.bound):.6g} ({res.bound_source})",
    ]
    if crude_log is not None:
        lines.append(f"snippet-size bound: 10^{crude_log}")
    if args.oracle:
        try:
            ov = oracle_value(build_snippet(g), m)
            report["oracle_value"] = str(ov.inf_sup)
            report["oracle_difference"] = abs(res.value - float(ov.inf_sup))
            lines.append(f"oracle: {ov.inf_sup} (= {float(ov.inf_sup)!r}), "
                         f"difference {report['oracle_difference']:.3g}")
        except (CapExceededError, OracleCapError) as exc:
            lines.append(f"oracle: skipped ({exc})")
    _timing(args, report, t0)
    if "wall_time_s" in report:
        lines.append(f"wall time: {report['wall_time_s']} s")
    if args.report_dir:
        from .report import write_value_report

        files = write_value_report(args.report_dir, g, res, report, args.epsilon)
        lines.append("report: " + ", ".join(str(f) for f in files))
    _emit(args, report, lines)
    return EXIT_OK if res.converged else EXIT_NEGATIVE


def cmd_graph(args) -> int:
    nominal, impl = _load_pair(args)
    g = build_symbolic(nominal, impl)
    if args.snippet:
        g = build_snippet(g)
    sys.stdout.write(emit_graph(g, args.format))
    return EXIT_OK


def cmd_oracle(args) -> int:
    nominal, impl = _load_pair(args)
    m = _milestone(args, impl)
    h = build_snippet(build_symbolic(nominal, impl))
    failing = oracle_failing(h)
    report = {"command": "oracle", "oracle_failing": failing}
    lines = [f"oracle failing: {str(failing).lower()}"]
    if failing:
        ov = oracle_value(h, m)
        report.update(inf_sup=str(ov.inf_sup), sup_inf=str(ov.sup_inf), method=ov.method)
        lines.append(f"inf-sup = sup-inf = {ov.inf_sup} ({ov.method})")
    _emit(args, report, lines)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="maskft",
        description="Masking fault-tolerance of probabilistic implementations.",
    )
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def pair(p):
        p.add_argument("nominal", help="nominal model file (or bundled model name)")
        p.add_argument("impl", help="implementation model file (or bundled model name)")
        p.add_argument("--json", action="store_true", help="print a JSON report")
        return p

    p = pair(sub.add_parser("check", help="decide masking fault-tolerance"))
    p.add_argument("--report-dir", help="write CSV tables and a U-level figure here")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    p.set_defaults(func=cmd_check)

    p = pair(sub.add_parser("failing", help="decide almost-sure failing under fairness"))
    p.add_argument("--oracle", action="store_true", help="cross-check with the brute-force oracle")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_failing)

    p = pair(sub.add_parser("value", help="expected milestones collected before failure"))
    p.add_argument("--milestone", action="append", metavar="LABEL=W",
                   help="milestone weight of a label (repeatable)")
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--max-iters", type=int, default=1_000_000)
    p.add_argument("--bound", help="upper bound on the value (rational); default: computed")
    p.add_argument("--stop", choices=("rate", "residual"), default="rate",
                   help="stopping rule (default: rate-corrected)")
    p.add_argument("--oracle", action="store_true", help="compare with the exact oracle value")
    p.add_argument("--report-dir", help="write CSV tables and a convergence figure here")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_value)

    p = pair(sub.add_parser("graph", help="print the symbolic game graph"))
    p.add_argument("--format", choices=("dot", "json"), default="json")
    p.add_argument("--snippet", action="store_true", help="print the vertex snippet instead")
    p.set_defaults(func=cmd_graph)

    p = pair(sub.add_parser("oracle", help=argparse.SUPPRESS))
    p.add_argument("--milestone", action="append", metavar="LABEL=W")
    p.set_defaults(func=cmd_oracle)
    # keep the hidden command out of the usage line
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "oracle"]
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "epsilon", 1.0) <= 0:
        print("error: --epsilon must be positive", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "max_iters", 1) < 1:
        print("error: --max-iters must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(f"refusing: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
