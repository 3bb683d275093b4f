"""Truncated multivariate Taylor arithmetic.

A jet of order ``m`` in ``n`` variables stores the Taylor coefficients
``D^a F(p) / a!`` for every multi-index ``|a| <= m``.  Coefficients live in a
flat complex array ordered graded-lexicographically::

    n = 2, m = 2:   (0,0) | (1,0) (0,1) | (2,0) (1,1) (0,2)

Inside a degree the order is lexicographic with ``x_1`` largest, so the
position of a multi-index never depends on ``m``.  This makes a lower-order
jet a prefix of a higher-order one.

Jets may carry leading batch dimensions: ``coeffs`` has shape ``(..., N)`` and
``point`` has shape ``(..., n)``.  All operations broadcast over the batch.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

MAX_ORDER = 6
# internal headroom for derivative nodes and operator application
_SPACE_LIMIT = 10


class JetError(ValueError):
    """Base class for jet arithmetic failures."""


class ShapeError(JetError):
    """Jets with different dimension, order or base point were combined."""


class DomainError(JetError):
    """A univariate kernel was applied outside its domain."""


class InsufficientOrderError(JetError):
    """The jet is too short for the requested derivative."""


def _multi_indices(n: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    # combinations_with_replacement yields variable tuples in lex order,
    # which maps to exponent tuples in descending lex order.
    for combo in combinations_with_replacement(range(n), degree):
        alpha = [0] * n
        for i in combo:
            alpha[i] += 1
        out.append(tuple(alpha))
    return out


class JetSpace:
    """Index tables for jets of fixed dimension and order.

    Use :func:`jet_space` to get a cached instance.
    """

    def __init__(self, n: int, m: int):
        if n < 1:
            raise JetError(f"dimension must be >= 1, got {n}")
        if not 0 <= m <= _SPACE_LIMIT:
            raise JetError(f"jet order must be in [0, {_SPACE_LIMIT}], got {m}")
        self.n = n
        self.m = m
        self.indices: list[tuple[int, ...]] = []
        for d in range(m + 1):
            self.indices.extend(_multi_indices(n, d))
        self.size = len(self.indices)
        self.position = {a: k for k, a in enumerate(self.indices)}
        self.degrees = np.array([sum(a) for a in self.indices])
        self.factorials = np.array(
            [math.prod(math.factorial(ai) for ai in a) for a in self.indices], dtype=float
        )

        N = self.size
        table = np.zeros((N * N, N))
        for i, a in enumerate(self.indices):
            for j, b in enumerate(self.indices):
                c = tuple(x + y for x, y in zip(a, b))
                k = self.position.get(c)
                if k is not None:
                    table[i * N + j, k] = 1.0
        self._mul_table = table

        # derivative along axis i: coefficient at a of D_i J is (a_i+1) J[a+e_i]
        self._deriv_src = []
        self._deriv_scale = []
        for i in range(n):
            src, scale = [], []
            for a in self.indices:
                if sum(a) == m:
                    src.append(-1)
                    scale.append(0.0)
                    continue
                b = list(a)
                b[i] += 1
                src.append(self.position[tuple(b)])
                scale.append(float(b[i]))
            self._deriv_src.append(np.array(src))
            self._deriv_scale.append(np.array(scale))

    def __repr__(self) -> str:
        return f"JetSpace(n={self.n}, m={self.m}, size={self.size})"

    def unit(self, axis: int) -> int:
        alpha = [0] * self.n
        alpha[axis] = 1
        return self.position[tuple(alpha)]

    # -- raw coefficient kernels (no validation) ---------------------------

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a, b = np.broadcast_arrays(a, b)
        N = self.size
        outer = a[..., :, None] * b[..., None, :]
        return outer.reshape(*a.shape[:-1], N * N) @ self._mul_table

    def power(self, a: np.ndarray, k: int) -> np.ndarray:
        result = self.constant(np.ones(a.shape[:-1], dtype=complex))
        base = a
        while k:
            if k & 1:
                result = self.mul(result, base)
            k >>= 1
            if k:
                base = self.mul(base, base)
        return result

    def constant(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=complex)
        out = np.zeros(value.shape + (self.size,), dtype=complex)
        out[..., 0] = value
        return out

    def compose_univariate(self, series: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Evaluate ``sum_k series[k] * (a - a_0)^k`` truncated at order m.

        ``series`` has shape ``(..., m+1)`` and holds the Taylor coefficients
        of the outer function at the constant term of ``a``.
        """
        h = a.copy()
        h[..., 0] = 0.0
        result = self.constant(series[..., self.m])
        for k in range(self.m - 1, -1, -1):
            result = self.mul(result, h)
            result[..., 0] += series[..., k]
        return result

    def derivative(self, a: np.ndarray, axis: int, target: "JetSpace") -> np.ndarray:
        """Coefficients of ``D_axis`` of ``a``, truncated to ``target``'s order."""
        src = self._deriv_src[axis][: target.size]
        scale = self._deriv_scale[axis][: target.size]
        return a[..., src] * scale

    def to_derivatives(self, a: np.ndarray) -> np.ndarray:
        return a * self.factorials

    def from_derivatives(self, d: np.ndarray) -> np.ndarray:
        return np.asarray(d, dtype=complex) / self.factorials


@functools.lru_cache(maxsize=None)
def jet_space(n: int, m: int) -> JetSpace:
    return JetSpace(n, m)


# -- univariate Taylor series of the elementary kernels --------------------


def _series_exp(a0, m):
    k = np.arange(m + 1)
    fact = np.array([math.factorial(i) for i in k], dtype=float)
    return np.exp(a0)[..., None] / fact


def _series_sin(a0, m):
    k = np.arange(m + 1)
    fact = np.array([math.factorial(i) for i in k], dtype=float)
    return np.sin(a0[..., None] + k * np.pi / 2) / fact


def _series_cos(a0, m):
    k = np.arange(m + 1)
    fact = np.array([math.factorial(i) for i in k], dtype=float)
    return np.cos(a0[..., None] + k * np.pi / 2) / fact


def _series_recip(a0, m):
    if np.any(a0 == 0):
        raise DomainError("reciprocal of a jet with zero constant term")
    k = np.arange(m + 1)
    return (-1.0) ** k / a0[..., None] ** (k + 1)


def _real_argument(a0, name):
    if np.any(np.abs(np.imag(a0)) > 1e-12 * np.maximum(1.0, np.abs(a0))):
        raise DomainError(f"{name} needs a real argument")
    return np.real(a0)


def _series_exp_of(w):
    """Taylor coefficients of exp(w(h)) given those of w (last axis)."""
    m = w.shape[-1] - 1
    y = np.zeros_like(w)
    y[..., 0] = np.exp(w[..., 0])
    for k in range(1, m + 1):
        acc = 0
        for i in range(1, k + 1):
            acc = acc + i * w[..., i] * y[..., k - i]
        y[..., k] = acc / k
    return y


def _series_rexp(a0, m):
    """exp(-1/u) for u > 0, identically 0 for u <= 0."""
    u = _real_argument(a0, "rexp")
    out = np.zeros(u.shape + (m + 1,), dtype=complex)
    pos = u > 0
    if np.any(pos):
        up = u[pos]
        k = np.arange(m + 1)
        w = -((-1.0) ** k) / up[:, None] ** (k + 1)
        out[pos] = _series_exp_of(w.astype(complex))
    return out


def _series_powr(a0, m, s):
    """u**s for u > 0, identically 0 for u <= 0 (C^floor(s) at the origin)."""
    u = _real_argument(a0, "powr")
    out = np.zeros(u.shape + (m + 1,), dtype=complex)
    pos = u > 0
    if np.any(u == 0) and m >= s:
        raise DomainError(f"powr with exponent {s} is not {m} times differentiable at 0")
    if np.any(pos):
        up = u[pos]
        coef = np.ones(m + 1)
        for k in range(1, m + 1):
            coef[k] = coef[k - 1] * (s - k + 1) / k
        k = np.arange(m + 1)
        out[pos] = coef * up[:, None] ** (s - k)
    return out


@functools.lru_cache(maxsize=None)
def smoothstep_polynomial(k: int) -> np.polynomial.Polynomial:
    """The degree 2k+1 polynomial ramp from 0 to 1 on [0, 1] that is C^k at both ends."""
    coef = np.zeros(2 * k + 2)
    for i in range(k + 1):
        coef[k + 1 + i] = math.comb(k + i, i) * math.comb(2 * k + 1, k - i) * (-1) ** i
    return np.polynomial.Polynomial(coef)


def _series_step(a0, m, k):
    u = _real_argument(a0, "step")
    out = np.zeros(u.shape + (m + 1,), dtype=complex)
    out[..., 0] = np.where(u >= 1, 1.0, 0.0)
    mid = (u > 0) & (u < 1)
    if np.any(mid):
        p = smoothstep_polynomial(k)
        um = u[mid]
        cols = []
        for d in range(m + 1):
            cols.append(p.deriv(d)(um) / math.factorial(d) if d else p(um))
        out[mid] = np.stack(cols, axis=-1)
    return out


def univariate_series(kernel: str, a0: np.ndarray, m: int, param=None) -> np.ndarray:
    """Taylor coefficients (last axis, length m+1) of a kernel at ``a0``."""
    a0 = np.asarray(a0, dtype=complex)
    if kernel == "exp":
        return _series_exp(a0, m)
    if kernel == "sin":
        return _series_sin(a0, m)
    if kernel == "cos":
        return _series_cos(a0, m)
    if kernel == "recip":
        return _series_recip(a0, m)
    if kernel == "rexp":
        return _series_rexp(a0, m)
    if kernel == "powr":
        return _series_powr(a0, m, float(param))
    if kernel == "step":
        return _series_step(a0, m, int(param))
    raise JetError(f"unknown kernel {kernel!r}")


# -- public jet value ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Jet:
    """Truncated Taylor expansion of a function at a base point.

    ``coeffs[..., k]`` is ``D^a F(point) / a!`` for ``a = space.indices[k]``.
    """

    coeffs: np.ndarray
    point: np.ndarray
    order: int

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        point = np.asarray(self.point, dtype=float)
        space = jet_space(point.shape[-1], self.order)
        if coeffs.shape[-1] != space.size:
            raise ShapeError(
                f"expected {space.size} coefficients for n={space.n}, m={self.order}, "
                f"got {coeffs.shape[-1]}"
            )
        coeffs.setflags(write=False)
        point.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "point", point)

    @property
    def dimension(self) -> int:
        return self.point.shape[-1]

    @property
    def space(self) -> JetSpace:
        return jet_space(self.dimension, self.order)

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def __len__(self):
        return self.coeffs.shape[0] if self.coeffs.ndim > 1 else 1

    def __getitem__(self, idx) -> "Jet":
        return Jet(self.coeffs[idx], self.point[idx], self.order)

    def coeff(self, alpha) -> np.ndarray:
        return self.coeffs[..., self.space.position[tuple(alpha)]]

    def derivative_value(self, alpha) -> np.ndarray:
        """``D^alpha F(point)``, i.e. the coefficient times ``alpha!``."""
        alpha = tuple(alpha)
        return self.coeff(alpha) * math.prod(math.factorial(a) for a in alpha)

    def derivatives(self) -> np.ndarray:
        return self.space.to_derivatives(self.coeffs)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise InsufficientOrderError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[..., : jet_space(self.dimension, order).size], self.point, order)

    def partial(self, axis: int) -> "Jet":
        """Jet of ``D_axis F``; the order drops by one."""
        if self.order < 1:
            raise InsufficientOrderError("cannot differentiate an order-0 jet")
        target = jet_space(self.dimension, self.order - 1)
        return Jet(self.space.derivative(self.coeffs, axis, target), self.point, self.order - 1)

    def directional(self, v) -> "Jet":
        """Jet of ``D_v F = sum_j v_j D_j F``; the order drops by one."""
        if self.order < 1:
            raise InsufficientOrderError("cannot differentiate an order-0 jet")
        v = np.asarray(v, dtype=float)
        target = jet_space(self.dimension, self.order - 1)
        acc = np.zeros(self.coeffs.shape[:-1] + (target.size,), dtype=complex)
        for j, vj in enumerate(v):
            if vj != 0.0:
                acc = acc + vj * self.space.derivative(self.coeffs, j, target)
        return Jet(acc, self.point, self.order - 1)

    def _check(self, other: "Jet"):
        if not isinstance(other, Jet):
            raise TypeError(f"expected Jet, got {type(other).__name__}")
        if other.dimension != self.dimension or other.order != self.order:
            raise ShapeError(
                f"jet shapes differ: (n={self.dimension}, m={self.order}) vs "
                f"(n={other.dimension}, m={other.order})"
            )
        if self.point.shape != other.point.shape or not np.array_equal(self.point, other.point):
            raise ShapeError("jets have different base points")

    def __add__(self, other):
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[..., 0] += other
            return Jet(c, self.point, self.order)
        self._check(other)
        return Jet(self.coeffs + other.coeffs, self.point, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.point, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return Jet(self.coeffs * other, self.point, self.order)
        self._check(other)
        return Jet(self.space.mul(self.coeffs, other.coeffs), self.point, self.order)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Jet(n={self.dimension}, order={self.order}, batch={self.coeffs.shape[:-1]})"


def constant_jet(value, point, order: int) -> Jet:
    point = np.asarray(point, dtype=float)
    space = jet_space(point.shape[-1], order)
    return Jet(space.constant(np.broadcast_to(value, point.shape[:-1])), point, order)


def variable_jet(axis: int, point, order: int) -> Jet:
    point = np.asarray(point, dtype=float)
    space = jet_space(point.shape[-1], order)
    c = space.constant(point[..., axis])
    if order >= 1:
        c[..., space.unit(axis)] = 1.0
    return Jet(c, point, order)


def jet_add(a: Jet, b: Jet) -> Jet:
    return a + b


def jet_mul(a: Jet, b: Jet) -> Jet:
    return a * b


def jet_compose_univariate(kernel: str, a: Jet, param=None) -> Jet:
    """Jet of ``g(F)`` for an elementary kernel ``g`` given the jet of ``F``.

    Kernels: ``exp``, ``sin``, ``cos``, ``recip``, ``rexp`` (``exp(-1/u)``
    guarded to 0 for ``u <= 0``), ``powr`` (real power ``param``, guarded the
    same way) and ``step`` (C^``param`` smoothstep ramp on [0, 1]).
    """
    series = univariate_series(kernel, a.coeffs[..., 0], a.order, param)
    return Jet(a.space.compose_univariate(series, a.coeffs), a.point, a.order)


def directional_derivative(a: Jet, v) -> np.ndarray:
    """``D_v F`` at the base point."""
    if a.order < 1:
        raise InsufficientOrderError("directional derivative needs a jet of order >= 1")
    sp = a.space
    v = np.asarray(v, dtype=float)
    return sum(v[j] * a.coeffs[..., sp.unit(j)] for j in range(a.dimension))
