"""Implicit scalar fields: analytic builtins plus a small expression DSL.

A field is a map F: R^3 -> R whose zero set is the surface of interest.
Points inside the surface have F < 0, points outside F > 0.  Every field
evaluates both single points (shape ``(3,)``) and point batches
(shape ``(N, 3)``), and exposes a gradient, either analytic or by central
finite differences with step ``h = 1e-5 * (1 + |p|)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class FieldError(Exception):
    pass


class ParseError(FieldError):
    """Syntax or semantic error in DSL source, with 1-based position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class EvalDomainError(FieldError):
    """Evaluation left the real domain (e.g. sqrt of a negative)."""


# ---------------------------------------------------------------------------
# scalar field container

FieldFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    """Deterministic scalar field with a gradient.

    ``fn`` maps coordinate arrays (x, y, z) to values; it must accept both
    scalars and same-shaped ndarrays.  ``grad_fn`` maps (x, y, z) to a
    component tuple.  When ``grad_fn`` is None or ``gradient_mode`` is
    ``"fd"``, gradients fall back to central finite differences.
    Instances are immutable and safe to evaluate concurrently.
    """

    fn: FieldFn
    grad_fn: Callable | None = None
    gradient_mode: str = "analytic"  # "analytic" | "fd"
    name: str = "field"

    def __post_init__(self):
        if self.gradient_mode not in ("analytic", "fd"):
            raise FieldError(f"unknown gradient mode {self.gradient_mode!r}")

    def value(self, p) -> float:
        """F at a single point ``p`` (length-3). Raises on non-finite result."""
        p = np.asarray(p, dtype=float)
        with np.errstate(all="ignore"):
            v = self.fn(p[0], p[1], p[2])
        v = float(v)
        if not math.isfinite(v):
            raise EvalDomainError(f"field {self.name!r} non-finite at {p.tolist()}")
        return v

    def values(self, pts: np.ndarray) -> np.ndarray:
        """F at an (N, 3) batch. Non-finite entries are returned as NaN."""
        pts = np.asarray(pts, dtype=float)
        with np.errstate(all="ignore"):
            v = self.fn(pts[..., 0], pts[..., 1], pts[..., 2])
        return np.broadcast_to(np.asarray(v, dtype=float), pts.shape[:-1]).copy()

    def gradient(self, p) -> np.ndarray:
        """Gradient of F at a single point."""
        p = np.asarray(p, dtype=float)
        if self.gradient_mode == "analytic" and self.grad_fn is not None:
            with np.errstate(all="ignore"):
                gx, gy, gz = self.grad_fn(p[0], p[1], p[2])
            return np.array([float(gx), float(gy), float(gz)])
        return self.fd_gradient(p)

    def gradients(self, pts: np.ndarray) -> np.ndarray:
        """Gradients at an (N, 3) batch."""
        pts = np.asarray(pts, dtype=float)
        if self.gradient_mode == "analytic" and self.grad_fn is not None:
            x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
            with np.errstate(all="ignore"):
                gx, gy, gz = self.grad_fn(x, y, z)
            out = np.empty_like(pts)
            out[..., 0] = gx
            out[..., 1] = gy
            out[..., 2] = gz
            return out
        return self.fd_gradients(pts)

    def fd_gradient(self, p, h: float | None = None) -> np.ndarray:
        """Central finite-difference gradient at a single point."""
        return self.fd_gradients(np.asarray(p, dtype=float)[None, :], h)[0]

    def fd_gradients(self, pts: np.ndarray, h: float | None = None) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if h is None:
            steps = 1e-5 * (1.0 + np.linalg.norm(pts, axis=-1))
        else:
            steps = np.full(pts.shape[:-1], float(h))
        out = np.empty_like(pts)
        for axis in range(3):
            lo = pts.copy()
            hi = pts.copy()
            lo[..., axis] -= steps
            hi[..., axis] += steps
            out[..., axis] = (self.values(hi) - self.values(lo)) / (2.0 * steps)
        return out

    def with_gradient_mode(self, mode: str) -> "ScalarField":
        return ScalarField(self.fn, self.grad_fn, mode, self.name)


# ---------------------------------------------------------------------------
# analytic builtins

def sphere(center=(0.0, 0.0, 0.0), radius=1.0) -> ScalarField:
    """|p - c|^2 - r^2 (negative inside)."""
    if radius <= 0:
        raise FieldError("sphere radius must be positive")
    cx, cy, cz = (float(c) for c in center)
    r2 = float(radius) ** 2

    def fn(x, y, z):
        return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 - r2

    def grad(x, y, z):
        return 2.0 * (x - cx), 2.0 * (y - cy), 2.0 * (z - cz)

    return ScalarField(fn, grad, name=f"sphere(r={radius})")


def torus(major=2.0, minor=1.0) -> ScalarField:
    """(sqrt(x^2 + y^2) - R)^2 + z^2 - r^2, ring in the xy plane."""
    if not (minor > 0 and major > minor):
        raise FieldError("torus requires major > minor > 0")
    R, r = float(major), float(minor)

    def fn(x, y, z):
        rho = np.sqrt(x * x + y * y)
        return (rho - R) ** 2 + z * z - r * r

    def grad(x, y, z):
        rho = np.sqrt(x * x + y * y)
        s = 2.0 * (rho - R) / rho
        return s * x, s * y, 2.0 * z

    return ScalarField(fn, grad, name=f"torus(R={major},r={minor})")


def plane(normal=(0.0, 0.0, 1.0), offset=0.0) -> ScalarField:
    """n . p - d; the normal points toward the positive half-space."""
    n = np.asarray(normal, dtype=float)
    if np.linalg.norm(n) == 0:
        raise FieldError("plane normal must be nonzero")
    nx, ny, nz = (float(c) for c in n)
    d = float(offset)

    def fn(x, y, z):
        return nx * x + ny * y + nz * z - d

    def grad(x, y, z):
        shape = np.shape(x)
        return (np.full(shape, nx), np.full(shape, ny), np.full(shape, nz))

    return ScalarField(fn, grad, name="plane")


def gyroid(scale=1.0) -> ScalarField:
    """sin(sx)cos(sy) + sin(sy)cos(sz) + sin(sz)cos(sx) with s = scale."""
    s = float(scale)
    if s == 0:
        raise FieldError("gyroid scale must be nonzero")

    def fn(x, y, z):
        return (np.sin(s * x) * np.cos(s * y)
                + np.sin(s * y) * np.cos(s * z)
                + np.sin(s * z) * np.cos(s * x))

    def grad(x, y, z):
        gx = s * np.cos(s * x) * np.cos(s * y) - s * np.sin(s * z) * np.sin(s * x)
        gy = s * np.cos(s * y) * np.cos(s * z) - s * np.sin(s * x) * np.sin(s * y)
        gz = s * np.cos(s * z) * np.cos(s * x) - s * np.sin(s * y) * np.sin(s * z)
        return gx, gy, gz

    return ScalarField(fn, grad, name="gyroid")


def blend(fields: Sequence[ScalarField], smoothness=8.0) -> ScalarField:
    """Exponential smooth minimum: -(1/k) * log(sum_i exp(-k * F_i)).

    Larger ``smoothness`` (k) approaches the hard minimum; the blend is
    strictly below every operand, so the union grows slightly.  The gradient
    is the softmax-weighted combination of the operand gradients.
    """
    if len(fields) < 2:
        raise FieldError("blend needs at least two fields")
    k = float(smoothness)
    if k <= 0:
        raise FieldError("blend smoothness must be positive")
    fields = tuple(fields)

    def fn(x, y, z):
        vals = np.stack([f.fn(x, y, z) for f in fields])
        m = np.min(vals, axis=0)
        return m - np.log(np.sum(np.exp(-k * (vals - m)), axis=0)) / k

    def grad(x, y, z):
        vals = np.stack([f.fn(x, y, z) for f in fields])
        m = np.min(vals, axis=0)
        w = np.exp(-k * (vals - m))
        w /= np.sum(w, axis=0)
        parts = [f.grad_fn(x, y, z) for f in fields]
        gx = sum(w[i] * parts[i][0] for i in range(len(fields)))
        gy = sum(w[i] * parts[i][1] for i in range(len(fields)))
        gz = sum(w[i] * parts[i][2] for i in range(len(fields)))
        return gx, gy, gz

    if any(f.grad_fn is None for f in fields):
        return ScalarField(fn, None, gradient_mode="fd", name="blend")
    return ScalarField(fn, grad, name="blend")


def builtin_field(name: str, **params) -> ScalarField:
    """Construct a builtin by name: sphere, torus, plane, gyroid, blend."""
    makers = {"sphere": sphere, "torus": torus, "plane": plane,
              "gyroid": gyroid, "blend": blend}
    if name not in makers:
        raise FieldError(f"unknown builtin field {name!r}")
    return makers[name](**params)


# ---------------------------------------------------------------------------
# expression DSL
#
#   expr   := term (('+'|'-') term)*
#   term   := factor (('*'|'/') factor)*
#   factor := atom ('^' factor)?        -- '^' is right-associative
#   atom   := number | 'x'|'y'|'z' | ident '(' expr (',' expr)* ')'
#           | '(' expr ')' | '-' atom
#
# Binding strength is ^ over unary minus over * / over + -, so "-x^2"
# evaluates as -(x^2).

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Select:
    """Internal node: pick ``lo`` where a <= b else ``hi``.

    Produced only by symbolic differentiation of min/max/abs; never emitted
    by the parser or the printer.
    """
    a: object
    b: object
    lo: object
    hi: object


# arity: exact int, or (min, None) for variadic
_FUNCTIONS = {
    "sin": 1, "cos": 1, "exp": 1, "sqrt": 1, "abs": 1,
    "min": (2, None), "max": (2, None),
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str):
    tokens = []
    line, col = 1, 1
    i = 0
    while i < len(source):
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        m = _TOKEN_RE.match(source, i)
        if not m or m.start() != i:
            raise ParseError(f"unexpected character {ch!r}", line, col)
        text = m.group().strip()
        kind = "num" if m.group("num") else ("ident" if m.group("ident") else "op")
        tokens.append((kind, text, line, col))
        col += m.end() - i
        i = m.end()
    tokens.append(("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, line, col = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}, found {text or 'end of input'!r}",
                             line, col)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, text, line, col = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", line, col)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, text, _, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, text, _, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.factor())
            else:
                return node

    def factor(self):
        kind, text, _, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        node = self.atom()
        kind, text, _, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            node = BinOp("^", node, self.factor())
        return node

    def atom(self):
        kind, text, line, col = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text in ("x", "y", "z"):
                return Var(text)
            if text in _FUNCTIONS:
                self.expect_op("(")
                args = [self.expr()]
                while True:
                    k, t, _, _ = self.peek()
                    if k == "op" and t == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                arity = _FUNCTIONS[text]
                if isinstance(arity, int):
                    if len(args) != arity:
                        raise ParseError(
                            f"{text} takes {arity} argument(s), got {len(args)}",
                            line, col)
                elif len(args) < arity[0]:
                    raise ParseError(
                        f"{text} takes at least {arity[0]} arguments, got {len(args)}",
                        line, col)
                return Call(text, tuple(args))
            raise ParseError(f"unknown identifier {text!r}", line, col)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and text == "-":
            return Neg(self.atom())
        raise ParseError(f"unexpected {text or 'end of input'!r}", line, col)


@dataclass(frozen=True)
class FieldExpr:
    """Parsed DSL expression over the variables x, y, z."""

    root: object
    source: str

    def __call__(self, x, y, z):
        return eval_node(self.root, x, y, z)

    def to_source(self) -> str:
        return print_node(self.root)


def parse_field(source: str) -> FieldExpr:
    """Parse DSL text into an expression tree."""
    return FieldExpr(_Parser(source).parse(), source)


def field_from_expr(expr: FieldExpr | str, gradient_mode: str = "analytic") -> ScalarField:
    """Wrap a DSL expression as a ScalarField.

    Analytic gradients come from symbolic differentiation of the tree;
    ``gradient_mode="fd"`` forces central differences instead.
    """
    if isinstance(expr, str):
        expr = parse_field(expr)

    def fn(x, y, z):
        return eval_node(expr.root, x, y, z)

    dx, dy, dz = (differentiate(expr.root, v) for v in "xyz")

    def grad(x, y, z):
        return (eval_node(dx, x, y, z), eval_node(dy, x, y, z),
                eval_node(dz, x, y, z))

    return ScalarField(fn, grad, gradient_mode=gradient_mode,
                       name=f"expr({expr.source!r})")


_EVAL_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
    "abs": np.abs, "log": np.log,
    "sign": np.sign,
}


def eval_node(node, x, y, z):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return {"x": x, "y": y, "z": z}[node.name]
    if isinstance(node, Neg):
        return -eval_node(node.arg, x, y, z)
    if isinstance(node, BinOp):
        a = eval_node(node.left, x, y, z)
        b = eval_node(node.right, x, y, z)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        if node.op == "^":
            return np.power(np.asarray(a, dtype=float), b)
        raise FieldError(f"unknown operator {node.op!r}")
    if isinstance(node, Call):
        args = [eval_node(a, x, y, z) for a in node.args]
        if node.func == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if node.func == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        return _EVAL_FUNCS[node.func](*args)
    if isinstance(node, Select):
        a = eval_node(node.a, x, y, z)
        b = eval_node(node.b, x, y, z)
        lo = eval_node(node.lo, x, y, z)
        hi = eval_node(node.hi, x, y, z)
        return np.where(np.asarray(a) <= b, lo, hi)
    raise FieldError(f"cannot evaluate node {node!r}")


def differentiate(node, var: str):
    """Symbolic partial derivative of a DSL tree with respect to x, y or z."""
    zero, one = Num(0.0), Num(1.0)
    if isinstance(node, Num):
        return zero
    if isinstance(node, Var):
        return one if node.name == var else zero
    if isinstance(node, Neg):
        return Neg(differentiate(node.arg, var))
    if isinstance(node, BinOp):
        u, v = node.left, node.right
        du, dv = differentiate(u, var), differentiate(v, var)
        if node.op == "+":
            return BinOp("+", du, dv)
        if node.op == "-":
            return BinOp("-", du, dv)
        if node.op == "*":
            return BinOp("+", BinOp("*", du, v), BinOp("*", u, dv))
        if node.op == "/":
            num = BinOp("-", BinOp("*", du, v), BinOp("*", u, dv))
            return BinOp("/", num, BinOp("*", v, v))
        if node.op == "^":
            if isinstance(v, Num):
                # c * u^(c-1) * u'
                return BinOp("*", BinOp("*", v, BinOp("^", u, Num(v.value - 1.0))), du)
            # general: u^v * (v' log u + v u' / u)
            term = BinOp("+", BinOp("*", dv, Call("log", (u,))),
                         BinOp("/", BinOp("*", v, du), u))
            return BinOp("*", node, term)
    if isinstance(node, Call):
        if node.func == "min" or node.func == "max":
            # fold pairwise; derivative follows the selected branch
            def fold(args):
                if len(args) == 1:
                    return args[0], differentiate(args[0], var)
                a, da = fold(args[:-1])
                b = args[-1]
                db = differentiate(b, var)
                if node.func == "min":
                    return (Call("min", (a, b)), Select(a, b, da, db))
                return (Call("max", (a, b)), Select(a, b, db, da))
            return fold(list(node.args))[1]
        (u,) = node.args
        du = differentiate(u, var)
        if node.func == "sin":
            outer = Call("cos", (u,))
        elif node.func == "cos":
            outer = Neg(Call("sin", (u,)))
        elif node.func == "exp":
            outer = Call("exp", (u,))
        elif node.func == "sqrt":
            outer = BinOp("/", Num(0.5), Call("sqrt", (u,)))
        elif node.func == "abs":
            outer = Call("sign", (u,))
        elif node.func == "log":
            outer = BinOp("/", one, u)
        else:
            raise FieldError(f"cannot differentiate {node.func}")
        return BinOp("*", outer, du)
    if isinstance(node, Select):
        return Select(node.a, node.b, differentiate(node.lo, var),
                      differentiate(node.hi, var))
    raise FieldError(f"cannot differentiate node {node!r}")


# precedence levels for the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def print_node(node, parent_prec: int = 0) -> str:
    if isinstance(node, Num):
        text = repr(node.value)
        return text if node.value >= 0 else f"({text})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = print_node(node.arg, _PREC["neg"])
        text = f"-{inner}"
        return f"({text})" if parent_prec > _PREC["neg"] else text
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        # left operand of right-assoc '^' needs parens at equal precedence
        left = print_node(node.left, prec + 1 if node.op == "^" else prec)
        right = print_node(node.right, prec if node.op == "^" else prec + 1)
        text = f"{left}{node.op}{right}"
        return f"({text})" if parent_prec > prec else text
    if isinstance(node, Call):
        args = ",".join(print_node(a) for a in node.args)
        return f"{node.func}({args})"
    raise FieldError(f"cannot print node {node!r}")
