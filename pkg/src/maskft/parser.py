"""Parser for the guarded-command model language.

A model file declares constants, optional fault labels, bounded integer
variables and guarded commands::

    const p = 1/10;
    faults: fault;
    var s : [0..2] init 0;
    [tick] (s!=2) -> p: (s'=2) + (1-p): true;

An optional ``module NAME`` / ``endmodule`` wrapper is accepted.  Parsing
explores the reachable valuations and returns the resulting :class:`Pts`.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

from .model import Dist, ModelError, Pts, Transition, Variable, check_total


class ModelSyntaxError(ModelError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + msg)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|\.\.|!=|<=|>=|[=<>&|!+\-*/?:;,()\[\]'])
    """,
    re.VERBOSE,
)

KEYWORDS = {"const", "var", "faults", "init", "true", "false", "module", "endmodule"}


@dataclass(frozen=True)
class Token:
    kind: str  # int | ident | op | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        for nl in re.finditer("\n", m.group()):
            line += 1
            line_start = pos + nl.end()
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# Expression AST nodes are tuples: ("num", Fraction), ("name", str),
# ("bool", bool), ("neg", e), ("not", e), (binop, a, b), ("ite", c, a, b).

_CMP = {"=", "!=", "<", "<=", ">", ">="}


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        found = tok.text or "end of input"
        raise ModelSyntaxError(f"{msg} (found {found!r})", tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "eof"

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> str:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.error("expected identifier")
        self.i += 1
        return tok.text

    def integer(self) -> int:
        neg = self.accept("-")
        tok = self.tok
        if tok.kind != "int":
            self.error("expected integer")
        self.i += 1
        return -int(tok.text) if neg else int(tok.text)

    # expressions
    def expr(self):
        cond = self.or_expr()
        if self.accept("?"):
            a = self.expr()
            self.expect(":")
            b = self.expr()
            return ("ite", cond, a, b)
        return cond

    def or_expr(self):
        e = self.and_expr()
        while self.accept("|"):
            e = ("|", e, self.and_expr())
        return e

    def and_expr(self):
        e = self.not_expr()
        while self.accept("&"):
            e = ("&", e, self.not_expr())
        return e

    def not_expr(self):
        if self.accept("!"):
            return ("not", self.not_expr())
        return self.cmp_expr()

    def cmp_expr(self):
        e = self.add_expr()
        if self.tok.text in _CMP and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = (op, e, self.add_expr())
        return e

    def add_expr(self):
        e = self.mul_expr()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = (op, e, self.mul_expr())
        return e

    def mul_expr(self):
        e = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = (op, e, self.unary())
        return e

    def unary(self):
        if self.accept("-"):
            return ("neg", self.unary())
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return ("num", Fraction(int(tok.text)))
        if self.accept("true"):
            return ("bool", True)
        if self.accept("false"):
            return ("bool", False)
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            self.i += 1
            # primed names only appear on the left of assignments
            if self.at("'"):
                self.error("primed variable outside an assignment")
            return ("name", tok.text, tok.line, tok.col)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.error("expected expression")

    # probabilities: rationals, constants, + - * / and parentheses
    def prob_expr(self):
        e = self.prob_term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = (op, e, self.prob_term())
        return e

    def prob_term(self):
        e = self.prob_atom()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = (op, e, self.prob_atom())
        return e

    def prob_atom(self):
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return ("num", Fraction(int(tok.text)))
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            self.i += 1
            return ("name", tok.text, tok.line, tok.col)
        if self.accept("("):
            e = self.prob_expr()
            self.expect(")")
            return e
        self.error("expected probability")

    # declarations
    def model(self):
        consts: dict[str, Fraction] = {}
        faults: list[str] = []
        variables: list[Variable] = []
        commands: list[tuple] = []
        wrapped = self.accept("module")
        if wrapped:
            self.ident()
        while self.tok.kind != "eof" and not self.at("endmodule"):
            tok = self.tok
            if self.accept("const"):
                name = self.ident()
                self.expect("=")
                value = self.rational()
                self.expect(";")
                if name in consts:
                    self.error(f"constant {name!r} declared twice", tok)
                consts[name] = value
            elif self.accept("faults"):
                self.expect(":")
                faults.append(self.ident())
                while self.accept(","):
                    faults.append(self.ident())
                self.expect(";")
            elif self.accept("var"):
                name = self.ident()
                self.expect(":")
                self.expect("[")
                lo = self.integer()
                self.expect("..")
                hi = self.integer()
                self.expect("]")
                self.expect("init")
                init = self.integer()
                self.expect(";")
                if lo > hi or not lo <= init <= hi:
                    self.error(f"bad range or initial value for variable {name!r}", tok)
                if any(v.name == name for v in variables):
                    self.error(f"variable {name!r} declared twice", tok)
                variables.append(Variable(name, lo, hi, init))
            elif self.at("["):
                commands.append(self.command())
            else:
                self.error("expected declaration or command")
        if wrapped:
            self.expect("endmodule")
        if self.tok.kind != "eof":
            self.error("unexpected input after model")
        if not variables:
            self.error("model declares no variables")
        if not commands:
            self.error("model has no commands")
        return consts, faults, variables, commands

    def rational(self) -> Fraction:
        neg = self.accept("-")
        num = self.integer()
        value = Fraction(num)
        if self.accept("/"):
            tok = self.tok
            den = self.integer()
            if den == 0:
                self.error("zero denominator", tok)
            value = Fraction(num, den)
        return -value if neg else value

    def command(self):
        start = self.expect("[")
        label = self.ident()
        self.expect("]")
        guard = self.expr()
        self.expect("->")
        branches = [self.branch()]
        while self.accept("+"):
            branches.append(self.branch())
        self.expect(";")
        return (label, guard, branches, start)

    def branch(self):
        mark = self.i
        prob = None
        try:
            prob = self.prob_expr()
            if not self.accept(":"):
                raise ModelSyntaxError("not a probability")
        except ModelSyntaxError:
            self.i = mark
            prob = None
        tok = self.tok
        return (prob, self.update(), tok)

    def update(self):
        if self.accept("true"):
            return ()
        assigns = [self.assign()]
        while self.accept("&"):
            assigns.append(self.assign())
        names = [a[0] for a in assigns]
        if len(set(names)) != len(names):
            self.error("variable assigned twice in one update")
        return tuple(assigns)

    def assign(self):
        self.expect("(")
        tok = self.tok
        name = self.ident()
        self.expect("'")
        self.expect("=")
        e = self.expr()
        self.expect(")")
        return (name, e, tok)


def _eval(e, env: dict):
    tag = e[0]
    if tag == "num":
        return e[1]
    if tag == "bool":
        return e[1]
    if tag == "name":
        try:
            return env[e[1]]
        except KeyError:
            raise ModelSyntaxError(f"unknown identifier {e[1]!r}", e[2], e[3]) from None
    if tag == "neg":
        return -_num(_eval(e[1], env))
    if tag == "not":
        return not _bool(_eval(e[1], env))
    if tag == "ite":
        return _eval(e[2], env) if _bool(_eval(e[1], env)) else _eval(e[3], env)
    if tag == "&":
        return _bool(_eval(e[1], env)) and _bool(_eval(e[2], env))
    if tag == "|":
        return _bool(_eval(e[1], env)) or _bool(_eval(e[2], env))
    a, b = _num(_eval(e[1], env)), _num(_eval(e[2], env))
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    if tag == "/":
        if b == 0:
            raise ModelError("division by zero")
        return Fraction(a) / b
    return {
        "=": a == b, "!=": a != b, "<": a < b,
        "<=": a <= b, ">": a > b, ">=": a >= b,
    }[tag]


def _num(x):
    if isinstance(x, bool):
        raise ModelError("boolean used where a number is expected")
    return x


def _bool(x):
    if not isinstance(x, bool):
        raise ModelError("number used where a boolean is expected")
    return x


def _as_int(x, what: str) -> int:
    x = _num(x)
    if Fraction(x).denominator != 1:
        raise ModelError(f"{what} evaluates to non-integer {x}")
    return int(x)


def _check_prob_names(e, consts: dict):
    if e[0] == "name":
        if e[1] not in consts:
            raise ModelSyntaxError(f"probability refers to non-constant {e[1]!r}", e[2], e[3])
    elif e[0] not in ("num", "bool"):
        for sub in e[1:]:
            _check_prob_names(sub, consts)


def parse_model(text: str, name: str = "") -> Pts:
    """Parse a model and return the PTS over its reachable valuations."""
    consts, faults, variables, commands = _Parser(text).model()
    names = [v.name for v in variables]
    clash = set(names) & set(consts)
    if clash:
        raise ModelError(f"names declared as both variable and constant: {sorted(clash)}")

    compiled = []
    for label, guard, branches, tok in commands:
        omitted = [b for b in branches if b[0] is None]
        if len(omitted) > 1:
            raise ModelSyntaxError(f"command [{label}] omits more than one probability", tok.line, tok.col)
        probs = []
        for prob, update, btok in branches:
            if prob is None:
                probs.append(None)
                continue
            _check_prob_names(prob, consts)
            p = Fraction(_num(_eval(prob, consts)))
            if not 0 <= p <= 1:
                raise ModelSyntaxError(f"command [{label}]: probability {p} outside [0,1]", btok.line, btok.col)
            probs.append(p)
        given = sum(p for p in probs if p is not None)
        if None in probs:
            probs = [1 - given if p is None else p for p in probs]
            if probs[branches.index(omitted[0])] < 0:
                raise ModelSyntaxError(f"command [{label}]: probabilities exceed 1", tok.line, tok.col)
        elif given != 1:
            raise ModelSyntaxError(f"command [{label}]: probabilities sum to {given}, not 1", tok.line, tok.col)
        for _, update, _ in branches:
            for var, _, atok in update:
                if var not in names:
                    raise ModelSyntaxError(f"assignment to undeclared variable {var!r}", atok.line, atok.col)
        compiled.append((label, guard, list(zip(probs, [b[1] for b in branches])), tok))

    actions = frozenset(c[0] for c in compiled) | frozenset(faults)
    index = {n: k for k, n in enumerate(names)}
    initial = tuple(v.init for v in variables)
    transitions = []
    seen = {initial}
    todo = deque([initial])
    while todo:
        s = todo.popleft()
        env = dict(consts)
        env.update(zip(names, s))
        for label, guard, branches, tok in compiled:
            try:
                enabled = _bool(_eval(guard, env))
            except ModelSyntaxError:
                raise
            except ModelError as exc:
                raise ModelSyntaxError(f"guard of [{label}]: {exc}", tok.line, tok.col) from None
            if not enabled:
                continue
            weights: dict = {}
            for p, update in branches:
                if p == 0:
                    continue
                target = list(s)
                for var, e, atok in update:
                    val = _as_int(_eval(e, env), f"update of {var}")
                    v = variables[index[var]]
                    if not v.lo <= val <= v.hi:
                        raise ModelSyntaxError(
                            f"[{label}] sets {var}={val} outside [{v.lo}..{v.hi}] "
                            f"in state {dict(zip(names, s))}",
                            atok.line, atok.col,
                        )
                    target[index[var]] = val
                target = tuple(target)
                weights[target] = weights.get(target, Fraction(0)) + p
            dist = Dist(weights)
            transitions.append(Transition(s, label, dist))
            for t in dist:
                if t not in seen:
                    seen.add(t)
                    todo.append(t)

    pts = Pts(tuple(variables), actions, frozenset(faults), tuple(transitions), initial, name)
    check_total(pts)
    return pts


def load_model(path) -> Pts:
    from pathlib import Path

    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), name=path.stem)
