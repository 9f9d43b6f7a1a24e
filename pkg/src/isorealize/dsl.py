"""A small arithmetic language for defining fields as text.

Grammar, from loosest to tightest binding::

    expr   := expr ('+' | '-') expr
            | expr ('*' | '/') expr
            | '-' expr
            | expr '^' expr            (right associative)
            | NAME '(' expr ')' | NAME | NUMBER | '(' expr ')'

Variables are ``x``, ``y`` and ``z``; ``pi`` is the only named constant.
Evaluation is vectorised over numpy arrays.
"""

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import EvalDomain, ExprSyntaxError
from .fields import VectorField

VARIABLES = ("x", "y", "z")
CONSTANTS = {"pi": np.pi}
FUNCTIONS = ("sin", "cos", "sinh", "cosh", "tanh", "exp", "ln", "sqrt", "abs",
             "asinh", "atanh")

# binding powers
_ADD = 10
_MUL = 20
_NEG = 25
_POW = 30


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            offset = len(src[:pos].encode("utf-8"))
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", offset)
        kind = m.lastgroup
        if kind != "ws":
            offset = len(src[:pos].encode("utf-8"))
            tokens.append((kind, m.group(), offset))
        pos = m.end()
    tokens.append(("end", "", len(src.encode("utf-8"))))
    return tokens


_EXPR_START = {"number", "name", "'('", "'-'"}


class _Parser:
    def __init__(self, src):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text, opened_at=None):
        kind, value, offset = self.peek()
        if value != text or kind == "end":
            if kind == "end" and opened_at is not None:
                raise ExprSyntaxError("unclosed '('", opened_at, {f"'{text}'"})
            raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}",
                                  offset, {f"'{text}'"})
        self.advance()

    def lbp(self, tok):
        kind, value, _ = tok
        if kind != "op":
            return 0
        return {"+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL, "^": _POW}.get(value, 0)

    def expression(self, rbp=0, opened_at=None):
        left = self.nud(self.advance(), opened_at)
        while rbp < self.lbp(self.peek()):
            tok = self.advance()
            left = self.led(tok, left, opened_at)
        return left

    def nud(self, tok, opened_at):
        kind, value, offset = tok
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in VARIABLES:
                return Var(value)
            if value in CONSTANTS:
                return Const(value)
            if value in FUNCTIONS:
                self.expect("(")
                paren = self.tokens[self.i - 1][2]
                arg = self.expression(0, opened_at=paren)
                self.expect(")", opened_at=paren)
                return Call(value, arg)
            raise ExprSyntaxError(f"unknown name {value!r}", offset,
                                  set(VARIABLES) | set(CONSTANTS) | set(FUNCTIONS))
        if value == "(":
            inner = self.expression(0, opened_at=offset)
            self.expect(")", opened_at=offset)
            return inner
        if value == "-":
            return Neg(self.expression(_NEG, opened_at))
        if kind == "end" and opened_at is not None:
            raise ExprSyntaxError("unclosed '('", opened_at, _EXPR_START)
        raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", offset,
                              _EXPR_START)

    def led(self, tok, left, opened_at):
        op = tok[1]
        if op == "^":
            return BinOp("^", left, self.expression(_POW - 1, opened_at))
        return BinOp(op, left, self.expression(self.lbp(tok), opened_at))


def parse_expr(src):
    """Parse ``src`` into an expression tree."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0, _EXPR_START)
    parser = _Parser(src)
    tree = parser.expression()
    kind, value, offset = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {value!r}", offset,
                              {"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"})
    return tree


def _prec(e):
    if isinstance(e, BinOp):
        return {"+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL, "^": _POW}[e.op]
    if isinstance(e, Neg):
        return _NEG
    return 100


def to_text(e):
    """Print an expression with the minimal parentheses that re-parse to it."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.operand)
        if _prec(e.operand) < _NEG or isinstance(e.operand, Neg):
            inner = f"({inner})"
        return f"-{inner}"
    p = _prec(e)
    lt, rt = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            lt = f"({lt})"
        if _prec(e.right) < p:
            rt = f"({rt})"
    else:
        if _prec(e.left) < p:
            lt = f"({lt})"
        if _prec(e.right) <= p:
            rt = f"({rt})"
    return f"{lt} {e.op} {rt}" if p == _ADD else f"{lt}{e.op}{rt}"


def _domain(ok, message):
    if not np.all(ok):
        raise EvalDomain(message)


def eval_expr(e, p):
    """Evaluate at a point ``(x, y, z)`` or an array of points ``(..., 3)``."""
    p = np.asarray(p, dtype=float)
    env = {"x": p[..., 0], "y": p[..., 1], "z": p[..., 2]}
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    out = np.broadcast_to(out, p.shape[:-1]).astype(float)
    return float(out) if out.ndim == 0 else out.copy()


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, Call):
        a = np.asarray(_eval(e.arg, env), dtype=float)
        f = e.func
        if f == "ln":
            _domain(a > 0, "ln of a non-positive number")
            return np.log(a)
        if f == "sqrt":
            _domain(a >= 0, "sqrt of a negative number")
            return np.sqrt(a)
        if f == "atanh":
            _domain(np.abs(a) < 1, "atanh outside (-1, 1)")
            return np.arctanh(a)
        return {"sin": np.sin, "cos": np.cos, "sinh": np.sinh, "cosh": np.cosh,
                "tanh": np.tanh, "exp": np.exp, "abs": np.abs,
                "asinh": np.arcsinh}[f](a)
    a = np.asarray(_eval(e.left, env), dtype=float)
    b = np.asarray(_eval(e.right, env), dtype=float)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        _domain(b != 0, "division by zero")
        return a / b
    integral = b == np.round(b)
    _domain((a >= 0) | integral, "non-integer power of a negative number")
    _domain((a != 0) | (b >= 0), "negative power of zero")
    return np.power(a, b)


@dataclass(frozen=True)
class FieldSpec:
    jx: object
    jy: object
    jz: object
    curl: tuple = None
    periodic: tuple = (False, False, False)

    @classmethod
    def from_strings(cls, jx, jy, jz, curl=None, periodic=(False, False, False)):
        parsed_curl = None if curl is None else tuple(parse_expr(c) for c in curl)
        return cls(parse_expr(jx), parse_expr(jy), parse_expr(jz), parsed_curl,
                   tuple(bool(v) for v in periodic))

    @classmethod
    def from_json(cls, text):
        """Parse the field-file format (keys jx, jy, jz, curl, periodic)."""
        data = json.loads(text)
        missing = [k for k in ("jx", "jy", "jz") if k not in data]
        if missing:
            raise ValueError(f"field file lacks {', '.join(missing)}")
        curl = data.get("curl")
        if curl is not None and len(curl) != 3:
            raise ValueError("'curl' must list three expressions")
        per = data.get("periodic", {})
        return cls.from_strings(data["jx"], data["jy"], data["jz"], curl,
                                tuple(bool(per.get(k, False)) for k in "xyz"))

    @classmethod
    def from_tuple_text(cls, text, periodic=(False, False, False)):
        """Parse ``"(jx, jy, jz)"``; commas inside calls are not allowed anyway."""
        body = text.strip()
        if body.startswith("(") and body.endswith(")"):
            body = body[1:-1]
        parts, depth, cur = [], 0, []
        for ch in body:
            if ch == "," and depth == 0:
                parts.append("".join(cur))
                cur = []
                continue
            depth += ch == "("
            depth -= ch == ")"
            cur.append(ch)
        parts.append("".join(cur))
        if len(parts) != 3:
            raise ValueError(f"expected three components, got {len(parts)}")
        return cls.from_strings(*parts, periodic=periodic)

    def to_json(self):
        data = {"jx": to_text(self.jx), "jy": to_text(self.jy), "jz": to_text(self.jz)}
        if self.curl is not None:
            data["curl"] = [to_text(c) for c in self.curl]
        data["periodic"] = dict(zip("xyz", self.periodic))
        return json.dumps(data, sort_keys=True)


def _vector(exprs):
    def fn(p):
        p = np.asarray(p, dtype=float)
        return np.stack([np.broadcast_to(eval_expr(e, p), p.shape[:-1]) for e in exprs],
                        axis=-1)
    return fn


def compile_field(spec, name="expr"):
    """Turn a :class:`FieldSpec` into a :class:`VectorField`."""
    curl = None if spec.curl is None else _vector(spec.curl)
    return VectorField(_vector((spec.jx, spec.jy, spec.jz)), analytic_curl=curl,
                       periodic=spec.periodic, name=name)


def compile_scalar(src):
    """Compile a scalar expression into a vectorised callable on ``(..., 3)``."""
    tree = parse_expr(src) if isinstance(src, str) else src
    return lambda p: eval_expr(tree, p)


def _is_num(e, value=None):
    return isinstance(e, Num) and (value is None or e.value == value)


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _pow(a, b):
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return Num(1.0)
    return BinOp("^", a, b)


def _depends(e, var):
    if isinstance(e, Var):
        return e.name == var
    if isinstance(e, Neg):
        return _depends(e.operand, var)
    if isinstance(e, Call):
        return _depends(e.arg, var)
    if isinstance(e, BinOp):
        return _depends(e.left, var) or _depends(e.right, var)
    return False


def differentiate(e, var):
    """Symbolic partial derivative of ``e`` with respect to ``var``."""
    if not _depends(e, var):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, Neg):
        return _neg(differentiate(e.operand, var))
    if isinstance(e, Call):
        a = e.arg
        da = differentiate(a, var)
        outer = {
            "sin": lambda: Call("cos", a),
            "cos": lambda: _neg(Call("sin", a)),
            "sinh": lambda: Call("cosh", a),
            "cosh": lambda: Call("sinh", a),
            "tanh": lambda: _sub(Num(1.0), _pow(Call("tanh", a), Num(2.0))),
            "exp": lambda: Call("exp", a),
            "ln": lambda: _div(Num(1.0), a),
            "sqrt": lambda: _div(Num(0.5), Call("sqrt", a)),
            "abs": lambda: _div(a, Call("abs", a)),
            "asinh": lambda: _div(Num(1.0), Call("sqrt", _add(_pow(a, Num(2.0)), Num(1.0)))),
            "atanh": lambda: _div(Num(1.0), _sub(Num(1.0), _pow(a, Num(2.0)))),
        }[e.func]()
        return _mul(outer, da)
    a, b = e.left, e.right
    da, db = differentiate(a, var), differentiate(b, var)
    if e.op == "+":
        return _add(da, db)
    if e.op == "-":
        return _sub(da, db)
    if e.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if e.op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2.0)))
    if not _depends(b, var):
        return _mul(_mul(b, _pow(a, _sub(b, Num(1.0)))), da)
    # a^b = exp(b ln a)
    return _mul(e, _add(_mul(db, Call("ln", a)), _mul(b, _div(da, a))))
