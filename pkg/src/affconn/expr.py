"""Small symbolic expression language for coordinate formulas.

All geometric data in this package (anchor entries, connection
coefficients, curves, sections, Lagrangians) is written as expression
trees over named real variables.  The node set is deliberately tiny:
constants, variables, arithmetic, powers with a constant real exponent
and a handful of analytic functions.  Keeping the language this small
makes exact differentiation, substitution and compilation to flat
evaluation tapes straightforward.

Variables follow the chart naming convention: base coordinates x1..xn,
fibre coordinates y1..yk, the curve parameter u, plus declared parameter
names.  ``parse`` enforces the convention; trees built directly through
the node constructors may use any variable names.

Folding is intentionally light: constant arithmetic, additive and
multiplicative identities, annihilating zeros and a structural a-a -> 0
rule.  No general simplification ever happens behind the caller's back.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

__all__ = [
    "Expr", "Const", "Var", "Neg", "Sin", "Cos", "Exp", "Log", "Sqrt",
    "Add", "Sub", "Mul", "Div", "Pow",
    "ExprError", "ParseError", "EvalDomainError",
    "parse", "to_str", "evaluate", "differentiate", "subst", "fold",
    "free_vars", "is_zero", "con", "esum", "ZERO_TOL",
]

ZERO_TOL = 1e-10


class ExprError(ValueError):
    """Base class for errors raised by the expression layer."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvalDomainError(ExprError):
    """Evaluation hit a point outside an operation's domain."""


@dataclass(frozen=True)
class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add(self, _as_expr(other))

    def __radd__(self, other):
        return Add(_as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, _as_expr(other))

    def __rsub__(self, other):
        return Sub(_as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, _as_expr(other))

    def __rmul__(self, other):
        return Mul(_as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return Div(_as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, exponent):
        return Pow(self, float(exponent))

    def __str__(self):
        return to_str(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True)
class Sin(Expr):
    a: Expr


@dataclass(frozen=True)
class Cos(Expr):
    a: Expr


@dataclass(frozen=True)
class Exp(Expr):
    a: Expr


@dataclass(frozen=True)
class Log(Expr):
    a: Expr


@dataclass(frozen=True)
class Sqrt(Expr):
    a: Expr


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Pow(Expr):
    a: Expr
    exponent: float


_FUNCTIONS = {"sin": Sin, "cos": Cos, "exp": Exp, "log": Log, "sqrt": Sqrt}
_UNARY = (Neg, Sin, Cos, Exp, Log, Sqrt)
_BINARY = (Add, Sub, Mul, Div)

_VAR_PATTERN = re.compile(r"^(?:[xy][1-9][0-9]*|u)$")


def _as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Const(float(v))
    raise TypeError(f"cannot use {v!r} as an expression")


def con(v) -> Const:
    return Const(float(v))


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, params):
        self.tokens = _tokenize(text)
        self.i = 0
        self.params = frozenset(params)

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected '{op}'", off)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {val!r}", off)
        return e

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if val == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> Expr:
        # A leading minus negates the whole product: -x1*y1 == -(x1*y1).
        negate = False
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            negate = True
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul(node, rhs) if val == "*" else Div(node, rhs)
            else:
                break
        return Neg(node) if negate else node

    def factor(self) -> Expr:
        node = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            sign = 1.0
            kind, val, off = self.peek()
            if kind == "op" and val == "-":
                self.advance()
                sign = -1.0
            kind, val, off = self.peek()
            if kind != "num":
                raise ParseError("exponent must be a number", off)
            self.advance()
            node = Pow(node, sign * float(val))
        return node

    def base(self) -> Expr:
        kind, val, off = self.advance()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            pk, pv, _ = self.peek()
            if pk == "op" and pv == "(":
                cls = _FUNCTIONS.get(val)
                if cls is None:
                    raise ParseError(f"unknown function '{val}'", off)
                self.advance()
                inner = self.expr()
                self.expect_op(")")
                return cls(inner)
            if _VAR_PATTERN.match(val) or val in self.params:
                return Var(val)
            raise ParseError(f"unknown variable '{val}'", off)
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        if kind == "op" and val == "-":
            return Neg(self.base())
        if kind == "end":
            raise ParseError("unexpected end of input", off)
        raise ParseError(f"unexpected token {val!r}", off)


def parse(text: str, params=()) -> Expr:
    """Parse ``text`` into an expression tree.

    ``params`` lists extra identifiers allowed as variables besides the
    chart names x1.., y1.. and u.  Raises ParseError with the byte offset
    of the offending token.
    """
    return _Parser(text, params).parse()


# ---------------------------------------------------------------------------
# Printing

def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


# Precedence: additive 10, negation 12, multiplicative 20, power 30, atoms 100.
def _prec(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return 10
    if isinstance(e, Neg):
        return 12
    if isinstance(e, (Mul, Div)):
        return 20
    if isinstance(e, Pow):
        return 30
    if isinstance(e, Const) and e.value < 0:
        return 12
    return 100


def _wrap(e: Expr, need: int) -> str:
    s = to_str(e)
    return f"({s})" if _prec(e) < need else s


def to_str(e: Expr) -> str:
    """Serialize a tree; parse(to_str(t)) == t for parser-producible trees."""
    if isinstance(e, Const):
        # Negative constants print exactly like Neg of the positive one,
        # so reprinting after a parse reproduces the same text.
        if e.value < 0:
            return f"-{_fmt_num(-e.value)}"
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"-{_wrap(e.a, 20)}"
    if isinstance(e, Add):
        return f"{_wrap(e.a, 10)} + {_wrap(e.b, 11)}"
    if isinstance(e, Sub):
        return f"{_wrap(e.a, 10)} - {_wrap(e.b, 11)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.a, 20)}*{_wrap(e.b, 21)}"
    if isinstance(e, Div):
        return f"{_wrap(e.a, 20)}/{_wrap(e.b, 21)}"
    if isinstance(e, Pow):
        exp = e.exponent
        exp_s = _fmt_num(exp) if exp >= 0 else f"-{_fmt_num(-exp)}"
        return f"{_wrap(e.a, 31)}^{exp_s}"
    for name, cls in _FUNCTIONS.items():
        if isinstance(e, cls):
            return f"{name}({to_str(e.a)})"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation

def _env_text(env) -> str:
    return ", ".join(f"{k}={env[k]}" for k in sorted(env))


def evaluate(e: Expr, env: dict) -> float:
    """Evaluate at a point; raises EvalDomainError with the assignment."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise ExprError(f"unbound variable '{e.name}'") from None
    if isinstance(e, Neg):
        return -evaluate(e.a, env)
    if isinstance(e, Add):
        return evaluate(e.a, env) + evaluate(e.b, env)
    if isinstance(e, Sub):
        return evaluate(e.a, env) - evaluate(e.b, env)
    if isinstance(e, Mul):
        return evaluate(e.a, env) * evaluate(e.b, env)
    if isinstance(e, Div):
        num = evaluate(e.a, env)
        den = evaluate(e.b, env)
        if den == 0.0:
            raise EvalDomainError(f"division by zero with {_env_text(env)}")
        return num / den
    if isinstance(e, Pow):
        base = evaluate(e.a, env)
        p = e.exponent
        if base == 0.0 and p < 0:
            raise EvalDomainError(
                f"zero raised to negative power with {_env_text(env)}")
        if base < 0.0 and p != int(p):
            raise EvalDomainError(
                f"negative base with fractional exponent with {_env_text(env)}")
        try:
            return math.pow(base, p)
        except (OverflowError, ValueError):
            raise EvalDomainError(f"power overflow with {_env_text(env)}") from None
    if isinstance(e, Sin):
        return math.sin(evaluate(e.a, env))
    if isinstance(e, Cos):
        return math.cos(evaluate(e.a, env))
    if isinstance(e, Exp):
        try:
            return math.exp(evaluate(e.a, env))
        except OverflowError:
            raise EvalDomainError(f"exp overflow with {_env_text(env)}") from None
    if isinstance(e, Log):
        v = evaluate(e.a, env)
        if v <= 0.0:
            raise EvalDomainError(
                f"log of non-positive value with {_env_text(env)}")
        return math.log(v)
    if isinstance(e, Sqrt):
        v = evaluate(e.a, env)
        if v < 0.0:
            raise EvalDomainError(
                f"sqrt of negative value with {_env_text(env)}")
        return math.sqrt(v)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Folding

def _const_unary(e: Expr, v: float):
    try:
        if isinstance(e, Neg):
            r = -v
        elif isinstance(e, Sin):
            r = math.sin(v)
        elif isinstance(e, Cos):
            r = math.cos(v)
        elif isinstance(e, Exp):
            r = math.exp(v)
        elif isinstance(e, Log):
            if v <= 0.0:
                return None
            r = math.log(v)
        elif isinstance(e, Sqrt):
            if v < 0.0:
                return None
            r = math.sqrt(v)
        else:
            return None
    except (OverflowError, ValueError):
        return None
    return Const(r) if math.isfinite(r) else None


def fold(e: Expr) -> Expr:
    """One bottom-up pass of light constant folding.

    Rules: constant arithmetic (only where finite and in-domain),
    0+f, f+0, f-0, 0-f, f*0, 0*f, 1*f, f*1, -1*f, f*-1, 0/f, f/1,
    f^0, f^1, double negation, and the structural cancellations
    a-a -> 0 and a+(-a) -> 0.
    """
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, _UNARY):
        a = fold(e.a)
        if isinstance(a, Const):
            r = _const_unary(e, a.value)
            if r is not None:
                return r
        if isinstance(e, Neg) and isinstance(a, Neg):
            return a.a
        return type(e)(a)
    if isinstance(e, Pow):
        a = fold(e.a)
        p = e.exponent
        if p == 0.0:
            return Const(1.0)
        if p == 1.0:
            return a
        if isinstance(a, Const):
            v = a.value
            if not (v == 0.0 and p < 0) and not (v < 0 and p != int(p)):
                try:
                    r = math.pow(v, p)
                    if math.isfinite(r):
                        return Const(r)
                except (OverflowError, ValueError):
                    pass
        return Pow(a, p)
    if isinstance(e, _BINARY):
        a = fold(e.a)
        b = fold(e.b)
        az = isinstance(a, Const) and a.value == 0.0
        bz = isinstance(b, Const) and b.value == 0.0
        if isinstance(a, Const) and isinstance(b, Const):
            if not (isinstance(e, Div) and b.value == 0.0):
                if isinstance(e, Add):
                    r = a.value + b.value
                elif isinstance(e, Sub):
                    r = a.value - b.value
                elif isinstance(e, Mul):
                    r = a.value * b.value
                else:
                    r = a.value / b.value
                if math.isfinite(r):
                    return Const(r)
        if isinstance(e, Add):
            if az:
                return b
            if bz:
                return a
            if isinstance(b, Neg) and a == b.a:
                return Const(0.0)
            if isinstance(a, Neg) and b == a.a:
                return Const(0.0)
            return Add(a, b)
        if isinstance(e, Sub):
            if bz:
                return a
            if a == b:
                return Const(0.0)
            if az:
                return Neg(b)
            return Sub(a, b)
        if isinstance(e, Mul):
            if az or bz:
                return Const(0.0)
            if isinstance(a, Const):
                if a.value == 1.0:
                    return b
                if a.value == -1.0:
                    return Neg(b)
            if isinstance(b, Const):
                if b.value == 1.0:
                    return a
                if b.value == -1.0:
                    return Neg(a)
            return Mul(a, b)
        # Div
        if az and not bz:
            return Const(0.0)
        if isinstance(b, Const):
            if b.value == 1.0:
                return a
            if b.value == -1.0:
                return Neg(a)
        return Div(a, b)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Differentiation and substitution

def differentiate(e: Expr, name: str) -> Expr:
    """Exact partial derivative with respect to the named variable."""
    return fold(_diff(e, name))


def _diff(e: Expr, name: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.name == name else Const(0.0)
    if isinstance(e, Neg):
        return Neg(_diff(e.a, name))
    if isinstance(e, Add):
        return Add(_diff(e.a, name), _diff(e.b, name))
    if isinstance(e, Sub):
        return Sub(_diff(e.a, name), _diff(e.b, name))
    if isinstance(e, Mul):
        return Add(Mul(_diff(e.a, name), e.b), Mul(e.a, _diff(e.b, name)))
    if isinstance(e, Div):
        return Div(Sub(Mul(_diff(e.a, name), e.b), Mul(e.a, _diff(e.b, name))),
                   Pow(e.b, 2.0))
    if isinstance(e, Pow):
        return Mul(Mul(Const(e.exponent), Pow(e.a, e.exponent - 1.0)),
                   _diff(e.a, name))
    if isinstance(e, Sin):
        return Mul(Cos(e.a), _diff(e.a, name))
    if isinstance(e, Cos):
        return Neg(Mul(Sin(e.a), _diff(e.a, name)))
    if isinstance(e, Exp):
        return Mul(e, _diff(e.a, name))
    if isinstance(e, Log):
        return Div(_diff(e.a, name), e.a)
    if isinstance(e, Sqrt):
        return Div(_diff(e.a, name), Mul(Const(2.0), e))
    raise TypeError(f"not an expression node: {e!r}")


def subst(e: Expr, mapping: dict) -> Expr:
    """Replace variables by expression trees (no folding)."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, _UNARY):
        return type(e)(subst(e.a, mapping))
    if isinstance(e, Pow):
        return Pow(subst(e.a, mapping), e.exponent)
    if isinstance(e, _BINARY):
        return type(e)(subst(e.a, mapping), subst(e.b, mapping))
    raise TypeError(f"not an expression node: {e!r}")


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, (*_UNARY, Pow)):
        return free_vars(e.a)
    return free_vars(e.a) | free_vars(e.b)


def var_sort_key(name: str):
    """Deterministic variable ordering: letter group, then numeric index."""
    m = re.match(r"^([A-Za-z_]+?)([0-9]+)$", name)
    if m:
        return (m.group(1), int(m.group(2)))
    return (name, -1)


def is_zero(e: Expr, sampler=None) -> bool:
    """Decide whether a tree vanishes identically on the sample box.

    Folds first; a constant result decides immediately.  Otherwise the
    tree is evaluated on a low-discrepancy point set and must stay within
    ZERO_TOL everywhere.  Domain errors at sample points propagate.
    """
    f = fold(e)
    if isinstance(f, Const):
        return abs(f.value) <= ZERO_TOL
    if sampler is None:
        from .sampling import SampleBox
        sampler = SampleBox()
    names = sorted(free_vars(f), key=var_sort_key)
    for env in sampler.envs(names):
        if abs(evaluate(f, env)) > ZERO_TOL:
            return False
    return True


def esum(terms) -> Expr:
    """Left-associated sum of a term iterable; Const(0) when empty."""
    acc = None
    for t in terms:
        acc = t if acc is None else Add(acc, t)
    return Const(0.0) if acc is None else acc
