"""Expression trees standing in for smooth functions on R^n.

An :class:`Expression` is an immutable tree over the variables ``x_1..x_n``
with complex constants.  It can be evaluated pointwise or as a jet of any
order (see :func:`jet_eval`), which is how every derivative in the package is
obtained.

Text form
---------
Expressions serialize to prefix s-expressions.  Variables are 1-based::

    (var i)                    x_i
    (const re) (const re im)   complex constant
    (add e1 e2 ...)  (mul e1 e2 ...)   n-ary sum / product
    (sub a b)  (div a b)  (neg a)
    (pow a k)                  integer power, k may be negative
    (exp a)  (sin a)  (cos a)
    (rexp a)                   exp(-1/a) for a > 0, 0 for a <= 0
    (powr a s)                 a**s for a > 0, 0 for a <= 0 (real s)
    (step k a)                 C^k smoothstep: 0 for a <= 0, 1 for a >= 1
    (deriv i a)                partial derivative of a along x_i
    (subst a c1 ... cn)        a evaluated at (c1, ..., cn)
    (integral j re im a)       x -> int_0^{x_j} a(x^(j,t)) exp(lam (x_j - t)) dt

Example::

    >>> parse("(mul (exp (var 1)) (sin (var 2)))")
    Mul(Exp(Var(1)), Sin(Var(2)))
"""

from __future__ import annotations

import numbers
import re

import numpy as np

from .jets import DomainError, Jet, jet_space


class EvaluationError(ValueError):
    """Evaluation hit a singular node; ``node`` is the offending subtree."""

    def __init__(self, message: str, node: "Expression | None" = None):
        super().__init__(message if node is None else f"{message} in {node.to_sexpr()}")
        self.node = node


class ParseError(ValueError):
    pass


def _fmt(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _wrap(value) -> "Expression":
    if isinstance(value, Expression):
        return value
    if isinstance(value, numbers.Number):
        return Const(value)
    raise TypeError(f"cannot use {type(value).__name__} in an expression")


class Expression:
    """Base node.  Subclasses implement ``_jet`` and ``to_sexpr``."""

    children: tuple["Expression", ...] = ()

    def _jet(self, ev: "_JetEvaluator") -> np.ndarray:
        raise NotImplementedError

    def to_sexpr(self) -> str:
        raise NotImplementedError

    def rebuild(self, children) -> "Expression":
        """Same node kind with new children."""
        raise NotImplementedError

    def __str__(self):
        return self.to_sexpr()

    # building helpers
    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)

    def __truediv__(self, other):
        return Div(self, _wrap(other))

    def __rtruediv__(self, other):
        return Div(_wrap(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k):
        if isinstance(k, numbers.Integral):
            return Pow(self, int(k))
        return Powr(self, float(k))


class Var(Expression):
    def __init__(self, index: int):
        if index < 1:
            raise ValueError("variables are 1-based")
        self.index = int(index)

    def _jet(self, ev):
        axis = self.index - 1
        if axis >= ev.n:
            raise EvaluationError(f"variable x_{self.index} outside dimension {ev.n}", self)
        c = ev.space.constant(ev.points[:, axis])
        if ev.m >= 1:
            c[:, ev.space.unit(axis)] = 1.0
        return c

    def to_sexpr(self):
        return f"(var {self.index})"

    def rebuild(self, children):
        return self

    def __repr__(self):
        return f"Var({self.index})"


class Const(Expression):
    def __init__(self, value):
        self.value = complex(value)

    def _jet(self, ev):
        return ev.space.constant(np.full(ev.batch, self.value))

    def to_sexpr(self):
        if self.value.imag == 0:
            return f"(const {_fmt(self.value.real)})"
        return f"(const {_fmt(self.value.real)} {_fmt(self.value.imag)})"

    def rebuild(self, children):
        return self

    def __repr__(self):
        return f"Const({self.value!r})"


class _Nary(Expression):
    tag = ""

    def __init__(self, *args):
        if len(args) < 2:
            raise ValueError(f"{self.tag} needs at least two operands")
        self.children = tuple(_wrap(a) for a in args)

    def to_sexpr(self):
        return f"({self.tag} " + " ".join(c.to_sexpr() for c in self.children) + ")"

    def rebuild(self, children):
        return type(self)(*children)

    def __repr__(self):
        return f"{type(self).__name__}(" + ", ".join(map(repr, self.children)) + ")"


class Add(_Nary):
    tag = "add"

    def _jet(self, ev):
        out = ev.visit(self.children[0])
        for c in self.children[1:]:
            out = out + ev.visit(c)
        return out


class Mul(_Nary):
    tag = "mul"

    def _jet(self, ev):
        out = ev.visit(self.children[0])
        for c in self.children[1:]:
            out = ev.space.mul(out, ev.visit(c))
        return out


class Sub(_Nary):
    tag = "sub"

    def __init__(self, a, b):
        super().__init__(a, b)

    def _jet(self, ev):
        return ev.visit(self.children[0]) - ev.visit(self.children[1])


class Div(_Nary):
    tag = "div"

    def __init__(self, a, b):
        super().__init__(a, b)

    def _jet(self, ev):
        num = ev.visit(self.children[0])
        den = ev.visit(self.children[1])
        if np.any(den[:, 0] == 0):
            raise EvaluationError("division by zero", self.children[1])
        return ev.space.mul(num, ev.kernel("recip", den))


class _Unary(Expression):
    tag = ""
    kernel = ""

    def __init__(self, arg):
        self.children = (_wrap(arg),)

    @property
    def arg(self):
        return self.children[0]

    def _jet(self, ev):
        return ev.kernel(self.kernel, ev.visit(self.arg))

    def to_sexpr(self):
        return f"({self.tag} {self.arg.to_sexpr()})"

    def rebuild(self, children):
        return type(self)(*children)

    def __repr__(self):
        return f"{type(self).__name__}({self.arg!r})"


class Neg(_Unary):
    tag = "neg"

    def _jet(self, ev):
        return -ev.visit(self.arg)


class Exp(_Unary):
    tag = kernel = "exp"


class Sin(_Unary):
    tag = kernel = "sin"


class Cos(_Unary):
    tag = kernel = "cos"


class Rexp(_Unary):
    """exp(-1/u) for u > 0 and 0 otherwise; C^infinity, flat at u = 0."""

    tag = kernel = "rexp"


class Pow(Expression):
    def __init__(self, arg, k: int):
        self.children = (_wrap(arg),)
        self.k = int(k)

    def _jet(self, ev):
        a = ev.visit(self.children[0])
        if self.k >= 0:
            return ev.space.power(a, self.k)
        if np.any(a[:, 0] == 0):
            raise EvaluationError("negative power of zero", self.children[0])
        return ev.space.power(ev.kernel("recip", a), -self.k)

    def to_sexpr(self):
        return f"(pow {self.children[0].to_sexpr()} {self.k})"

    def rebuild(self, children):
        return Pow(children[0], self.k)

    def __repr__(self):
        return f"Pow({self.children[0]!r}, {self.k})"


class Powr(Expression):
    """Real power u**s for u > 0, guarded to 0 for u <= 0."""

    def __init__(self, arg, s: float):
        self.children = (_wrap(arg),)
        self.s = float(s)

    def _jet(self, ev):
        return ev.kernel("powr", ev.visit(self.children[0]), self.s)

    def to_sexpr(self):
        return f"(powr {self.children[0].to_sexpr()} {_fmt(self.s)})"

    def rebuild(self, children):
        return Powr(children[0], self.s)

    def __repr__(self):
        return f"Powr({self.children[0]!r}, {self.s!r})"


class Step(Expression):
    """C^k polynomial ramp: 0 for u <= 0, 1 for u >= 1."""

    def __init__(self, k: int, arg):
        self.k = int(k)
        self.children = (_wrap(arg),)

    def _jet(self, ev):
        return ev.kernel("step", ev.visit(self.children[0]), self.k)

    def to_sexpr(self):
        return f"(step {self.k} {self.children[0].to_sexpr()})"

    def rebuild(self, children):
        return Step(self.k, children[0])

    def __repr__(self):
        return f"Step({self.k}, {self.children[0]!r})"


class Deriv(Expression):
    """Partial derivative along ``x_axis`` (1-based), evaluated through jets."""

    def __init__(self, axis: int, arg):
        self.axis = int(axis)
        self.children = (_wrap(arg),)

    def _jet(self, ev):
        inner = ev.child_evaluator(ev.points, ev.m + 1)
        coeffs = inner.visit(self.children[0])
        return inner.space.derivative(coeffs, self.axis - 1, ev.space)

    def to_sexpr(self):
        return f"(deriv {self.axis} {self.children[0].to_sexpr()})"

    def rebuild(self, children):
        return Deriv(self.axis, children[0])

    def __repr__(self):
        return f"Deriv({self.axis}, {self.children[0]!r})"


class Subst(Expression):
    """``body(c_1(x), ..., c_n(x))``: composition with a smooth map."""

    def __init__(self, body, components):
        self.body = _wrap(body)
        self.components = tuple(_wrap(c) for c in components)
        self.children = (self.body,) + self.components

    def _jet(self, ev):
        comps = [ev.visit(c) for c in self.components]
        z = np.stack([c[:, 0] for c in comps], axis=-1)
        if np.any(np.abs(z.imag) > 1e-12 * np.maximum(1.0, np.abs(z))):
            raise EvaluationError("substituted coordinates must be real", self)
        z = z.real
        inner = ev.child_evaluator(z, ev.m)
        g = inner.visit(self.body)
        return compose_jets(ev.space, g, comps, z)

    def to_sexpr(self):
        parts = " ".join(c.to_sexpr() for c in self.children)
        return f"(subst {parts})"

    def rebuild(self, children):
        return Subst(children[0], children[1:])

    def __repr__(self):
        return f"Subst({self.body!r}, {list(self.components)!r})"


def compose_jets(space, outer: np.ndarray, comps: list[np.ndarray], z: np.ndarray) -> np.ndarray:
    """Jet of ``G(c_1, ..., c_k)`` from the jet of ``G`` at ``z`` and the jets of ``c_i``.

    ``outer`` is expressed in a jet space of dimension ``len(comps)``; the
    result lives in ``space``.
    """
    k = len(comps)
    outer_space = jet_space(k, space.m)
    h = []
    for c in comps:
        d = c.copy()
        d[:, 0] = 0.0
        h.append(d)
    powers = [[space.constant(np.ones(d.shape[0]))] for d in h]
    for i in range(k):
        for _ in range(space.m):
            powers[i].append(space.mul(powers[i][-1], h[i]))
    out = np.zeros(comps[0].shape, dtype=complex)
    for pos, alpha in enumerate(outer_space.indices):
        coef = outer[:, pos]
        if not np.any(coef):
            continue
        term = None
        for i, ai in enumerate(alpha):
            if ai:
                term = powers[i][ai] if term is None else space.mul(term, powers[i][ai])
        if term is None:
            out[:, 0] += coef
        else:
            out += coef[:, None] * term
    return out


class _JetEvaluator:
    """Evaluates jets of an expression DAG at a flat batch of points."""

    def __init__(self, points: np.ndarray, m: int):
        self.points = points
        self.batch = points.shape[0]
        self.n = points.shape[1]
        self.m = m
        self.space = jet_space(self.n, m)
        self._memo: dict[int, np.ndarray] = {}
        self._keep: list[Expression] = []

    def child_evaluator(self, points, m) -> "_JetEvaluator":
        return _JetEvaluator(np.asarray(points, dtype=float), m)

    def kernel(self, name, a, param=None):
        from .jets import univariate_series

        series = univariate_series(name, a[:, 0], self.m, param)
        return self.space.compose_univariate(series, a)

    def visit(self, node: Expression) -> np.ndarray:
        key = id(node)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        try:
            out = node._jet(self)
        except DomainError as exc:
            raise EvaluationError(str(exc), node) from exc
        except ZeroDivisionError as exc:
            raise EvaluationError("division by zero", node) from exc
        self._memo[key] = out
        self._keep.append(node)
        return out


def jet_eval(expr: Expression, points, m: int) -> Jet:
    """Jet of order ``m`` of ``expr`` at ``points`` (shape ``(n,)`` or ``(..., n)``)."""
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, pts.shape[-1])
    ev = _JetEvaluator(flat, m)
    with np.errstate(divide="raise", invalid="ignore", over="ignore"):
        try:
            coeffs = ev.visit(expr)
        except FloatingPointError as exc:
            raise EvaluationError(str(exc), expr) from exc
    return Jet(coeffs.reshape(pts.shape[:-1] + (ev.space.size,)), pts, m)


def evaluate(expr: Expression, points) -> np.ndarray:
    """Complex values of ``expr`` at ``points``."""
    return jet_eval(expr, points, 0).value


# -- structural helpers ----------------------------------------------------


def is_zero(expr: Expression) -> bool:
    return isinstance(expr, Const) and expr.value == 0


def is_constant(expr: Expression) -> bool:
    """True when no variable occurs anywhere in the tree."""
    if isinstance(expr, Var):
        return False
    return all(is_constant(c) for c in getattr(expr, "children", ()))


def variables(n: int) -> list[Var]:
    return [Var(i + 1) for i in range(n)]


def linear_form(coeffs) -> Expression:
    """``sum_i c_i x_i`` with exact unit/zero coefficients kept symbolic."""
    terms = []
    for i, c in enumerate(coeffs):
        c = float(c)
        if c == 0.0:
            continue
        v = Var(i + 1)
        terms.append(v if c == 1.0 else Neg(v) if c == -1.0 else Mul(Const(c), v))
    if not terms:
        return Const(0)
    return terms[0] if len(terms) == 1 else Add(*terms)


def substitute(expr: Expression, components) -> Expression:
    """Rewrite ``expr`` with ``x_i`` replaced by ``components[i]``.

    Opaque nodes (integrals, derivatives, substitutions) are wrapped in a
    :class:`Subst` instead of being rewritten internally.
    """
    components = [_wrap(c) for c in components]
    memo: dict[int, Expression] = {}

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Var):
            out = components[node.index - 1]
        elif isinstance(node, Const):
            out = node
        elif isinstance(node, Subst):
            out = Subst(node.body, [go(c) for c in node.components])
        elif isinstance(node, Deriv) or not _rewritable(node):
            out = Subst(node, components)
        else:
            out = node.rebuild([go(c) for c in node.children])
        memo[key] = out
        return out

    return go(expr)


_REWRITABLE = (Add, Mul, Sub, Div, Neg, Exp, Sin, Cos, Rexp, Pow, Powr, Step)


def _rewritable(node) -> bool:
    return isinstance(node, _REWRITABLE)


def differentiate(expr: Expression, axis: int) -> Expression:
    """Symbolic partial derivative along the 0-based ``axis``.

    Elementary nodes use the usual rules.  Nodes without a closed derivative
    in the grammar (rexp, step, integral, ...) fall back to :class:`Deriv`.
    """

    memo: dict[int, Expression] = {}

    def add(a, b):
        if is_zero(a):
            return b
        if is_zero(b):
            return a
        return Add(a, b)

    def mul(a, b):
        if is_zero(a) or is_zero(b):
            return Const(0)
        if isinstance(a, Const) and a.value == 1:
            return b
        if isinstance(b, Const) and b.value == 1:
            return a
        return Mul(a, b)

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Var):
            out = Const(1 if node.index == axis + 1 else 0)
        elif isinstance(node, Const):
            out = Const(0)
        elif isinstance(node, Add):
            out = Const(0)
            for c in node.children:
                out = add(out, go(c))
        elif isinstance(node, Sub):
            db = go(node.children[1])
            out = add(go(node.children[0]), Const(0) if is_zero(db) else Neg(db))
        elif isinstance(node, Neg):
            d = go(node.arg)
            out = Const(0) if is_zero(d) else Neg(d)
        elif isinstance(node, Mul):
            out = Const(0)
            for i, c in enumerate(node.children):
                rest = [x for j, x in enumerate(node.children) if j != i]
                others = rest[0] if len(rest) == 1 else Mul(*rest)
                out = add(out, mul(go(c), others))
        elif isinstance(node, Div):
            a, b = node.children
            da, db = go(a), go(b)
            first = Const(0) if is_zero(da) else Div(da, b)
            second = Const(0) if is_zero(db) else Neg(Div(mul(a, db), Pow(b, 2)))
            out = add(first, second)
        elif isinstance(node, Pow):
            u = node.children[0]
            du = go(u)
            if node.k == 0 or is_zero(du):
                out = Const(0)
            elif node.k == 1:
                out = du
            else:
                out = mul(mul(Const(node.k), Pow(u, node.k - 1)), du)
        elif isinstance(node, Powr):
            u = node.children[0]
            du = go(u)
            out = Const(0) if is_zero(du) else mul(mul(Const(node.s), Powr(u, node.s - 1)), du)
        elif isinstance(node, Exp):
            out = mul(node, go(node.arg))
        elif isinstance(node, Sin):
            out = mul(Cos(node.arg), go(node.arg))
        elif isinstance(node, Cos):
            out = mul(Neg(Sin(node.arg)), go(node.arg))
        else:
            out = Deriv(axis + 1, node)
        memo[key] = out
        return out

    return go(expr)


# -- parsing ---------------------------------------------------------------

_TOKEN = re.compile(r"\s*(\(|\)|[^\s()]+)")


def _tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        out.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


def _read(tokens, pos):
    if pos >= len(tokens):
        raise ParseError("unexpected end of expression")
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while True:
            if pos >= len(tokens):
                raise ParseError("missing ')'")
            if tokens[pos] == ")":
                return items, pos + 1
            item, pos = _read(tokens, pos)
            items.append(item)
    if tok == ")":
        raise ParseError("unexpected ')'")
    return tok, pos + 1


def _number(tok, kind=float):
    if isinstance(tok, list):
        raise ParseError(f"expected a number, got a list {tok!r}")
    try:
        return kind(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}") from None


def _build(item) -> Expression:
    if not isinstance(item, list) or not item:
        raise ParseError(f"expected a parenthesised form, got {item!r}")
    head, args = item[0], item[1:]
    if isinstance(head, list):
        raise ParseError("form head must be a symbol")

    def arity(k):
        if len(args) != k:
            raise ParseError(f"({head} ...) takes {k} argument(s), got {len(args)}")

    if head == "var":
        arity(1)
        return Var(_number(args[0], int))
    if head == "const":
        if len(args) not in (1, 2):
            raise ParseError("(const re [im])")
        im = _number(args[1]) if len(args) == 2 else 0.0
        return Const(complex(_number(args[0]), im))
    if head in ("add", "mul"):
        if len(args) < 2:
            raise ParseError(f"({head} ...) needs at least two operands")
        return (Add if head == "add" else Mul)(*[_build(a) for a in args])
    if head in ("sub", "div"):
        arity(2)
        return (Sub if head == "sub" else Div)(_build(args[0]), _build(args[1]))
    unary = {"neg": Neg, "exp": Exp, "sin": Sin, "cos": Cos, "rexp": Rexp}
    if head in unary:
        arity(1)
        return unary[head](_build(args[0]))
    if head == "pow":
        arity(2)
        return Pow(_build(args[0]), _number(args[1], int))
    if head == "powr":
        arity(2)
        return Powr(_build(args[0]), _number(args[1]))
    if head == "step":
        arity(2)
        return Step(_number(args[0], int), _build(args[1]))
    if head == "deriv":
        arity(2)
        return Deriv(_number(args[0], int), _build(args[1]))
    if head == "subst":
        if len(args) < 2:
            raise ParseError("(subst body c1 ...) needs a body and components")
        return Subst(_build(args[0]), [_build(a) for a in args[1:]])
    if head == "integral":
        arity(4)
        from .core_inverse import Integral

        lam = complex(_number(args[1]), _number(args[2]))
        return Integral(_build(args[3]), _number(args[0], int), lam)
    raise ParseError(f"unknown form {head!r}")


def parse(text: str) -> Expression:
    """Parse the s-expression text form."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty expression")
    item, pos = _read(tokens, 0)
    if pos != len(tokens):
        raise ParseError(f"trailing tokens after expression: {tokens[pos:]}")
    return _build(item)


def as_expression(value) -> Expression:
    """Accept an Expression, a number, or s-expression text."""
    if isinstance(value, str):
        return parse(value)
    return _wrap(value)


def jet_coeffs(expr: Expression, points: np.ndarray, m: int) -> np.ndarray:
    """Raw coefficient array ``(B, N)`` of ``expr`` at a flat batch ``(B, n)``."""
    return _JetEvaluator(np.asarray(points, dtype=float), m).visit(expr)
