"""The transport integral along a coordinate axis, restriction to a set, flat cutoffs.

For an axis ``j`` and ``lam`` the integral operator is::

    (S F)(x) = int_0^{x_j} F(x^(j,t)) exp(lam (x_j - t)) dt

where ``x^(j,t)`` is ``x`` with its ``j``-th coordinate replaced by ``t``.  It
satisfies ``(D_j - lam) S F = F`` on all of R^n.

Jets of ``S F`` are not obtained by differentiating quadrature output.
Derivatives free of ``D_j`` go under the integral sign, and every ``D_j``
trades for a boundary term::

    D_j^b D^a (S F) = sum_{l<b} lam^l D_j^(b-l-1) D^a F + lam^b S(D^a F)     (a_j = 0)

So one jet-valued quadrature plus the jet of ``F`` at ``x`` gives the whole
jet of ``S F``.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .expression import (
    Const,
    Expression,
    Mul,
    Step,
    Sub,
    as_expression,
    jet_coeffs,
    jet_eval,
    linear_form,
)
from .geometry import Hyperplane, NormalSetDescriptor, SampleCloud
from .jets import Jet, jet_space
from .quadrature import QuadratureConfig, integrate_unit

# cap on jet evaluations held in memory by one quadrature sweep
_CHUNK_EVALS = 250_000


@functools.lru_cache(maxsize=None)
def _assembly_plan(n, m, axis):
    """For each target index: (alpha position, beta, [(l, k, position of alpha+k e_j)])."""
    sp = jet_space(n, m)
    plan = []
    for gamma in sp.indices:
        beta = gamma[axis]
        alpha = list(gamma)
        alpha[axis] = 0
        ia = sp.position[tuple(alpha)]
        terms = []
        for l in range(beta):
            k = beta - l - 1
            src = list(alpha)
            src[axis] = k
            terms.append((l, math.factorial(k), sp.position[tuple(src)]))
        plan.append((ia, beta, terms))
    return plan


def _segment_integral(body, axis, lam, X, m, config):
    """Jet-valued int_0^{x_j} J_body(x^(j,t)) exp(lam (x_j - t)) dt for each row of X."""
    B, n = X.shape
    N = jet_space(n, m).size
    L = X[:, axis]
    out = np.zeros((B, N), dtype=complex)
    live = np.flatnonzero(L != 0.0)
    if live.size == 0:
        return out
    per_point = 3 * config.order * config.panels
    chunk = max(1, _CHUNK_EVALS // per_point)
    for start in range(0, live.size, chunk):
        sel = live[start:start + chunk]
        Xs, Ls = X[sel], L[sel]

        def integrand(owner, s, Xs=Xs, Ls=Ls):
            P, q = s.shape
            Y = np.repeat(Xs[owner][:, None, :], q, axis=1)
            Y[..., axis] = s * Ls[owner][:, None]
            vals = jet_coeffs(body, Y.reshape(-1, n), m).reshape(P, q, N)
            kern = np.exp(lam * Ls[owner][:, None] * (1.0 - s))
            return vals * kern[..., None]

        res = integrate_unit(integrand, sel.size, config, scale=Ls)
        out[sel] = res * np.sign(Ls)[:, None]
    return out


def stilde_coeffs(body, axis, lam, X, m, config):
    """Raw jet coefficients ``(B, N)`` of the integral operator applied to ``body``."""
    X = np.asarray(X, dtype=float)
    B, n = X.shape
    lam = complex(lam)
    Q = _segment_integral(body, axis, lam, X, m, config)
    if m == 0:
        return Q
    J = jet_coeffs(body, X, m)
    out = np.empty_like(Q)
    for pos, (ia, beta, terms) in enumerate(_assembly_plan(n, m, axis)):
        if beta == 0:
            out[:, pos] = Q[:, ia]
            continue
        acc = lam ** beta * Q[:, ia]
        for l, kfact, src in terms:
            acc = acc + lam ** l * kfact * J[:, src]
        out[:, pos] = acc / math.factorial(beta)
    return out


class Integral(Expression):
    """Expression node for the integral operator along a 1-based axis.

    Making the operator's output an expression lets later stages pull it back
    along maps and integrate it again.
    """

    def __init__(self, body, axis: int, lam=0.0, config: QuadratureConfig | None = None):
        self.body = as_expression(body)
        self.children = (self.body,)
        self.axis = int(axis)
        self.lam = complex(lam)
        self.config = config or QuadratureConfig()

    def _jet(self, ev):
        if self.axis > ev.n:
            raise ValueError(f"integration axis {self.axis} outside dimension {ev.n}")
        return stilde_coeffs(self.body, self.axis - 1, self.lam, ev.points, ev.m, self.config)

    def to_sexpr(self):
        from .expression import _fmt

        return (f"(integral {self.axis} {_fmt(self.lam.real)} {_fmt(self.lam.imag)} "
                f"{self.body.to_sexpr()})")

    def rebuild(self, children):
        return Integral(children[0], self.axis, self.lam, self.config)

    def __repr__(self):
        return f"Integral({self.body!r}, axis={self.axis}, lam={self.lam!r})"


def stilde_apply(F, axis: int, lam, x, q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Values of the integral operator along the 0-based ``axis`` at ``x``."""
    return stilde_jet(F, axis, lam, x, 0, q).value


def stilde_jet(F, axis: int, lam, x, m: int, q: QuadratureConfig = QuadratureConfig()) -> Jet:
    """Order-``m`` jet of the integral operator applied to ``F`` at ``x``."""
    F = as_expression(F)
    pts = np.asarray(x, dtype=float)
    flat = pts.reshape(-1, pts.shape[-1])
    coeffs = stilde_coeffs(F, axis, lam, flat, m, q)
    return Jet(coeffs.reshape(pts.shape[:-1] + (coeffs.shape[-1],)), pts, m)


# -- restriction ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WhitneyJetField:
    """Jets of one function at every point of a sample cloud."""

    cloud: SampleCloud
    order: int
    jets: Jet

    def __post_init__(self):
        if not np.array_equal(self.jets.point, self.cloud.points):
            raise ValueError("jet base points must equal the cloud points")
        if self.jets.order != self.order:
            raise ValueError("jet order mismatch")

    def rows(self):
        """(point index, point, multi-index, re, im) in graded-lex order."""
        sp = self.jets.space
        for k, p in enumerate(self.cloud.points):
            for pos, alpha in enumerate(sp.indices):
                c = self.jets.coeffs[k, pos]
                yield k, p, alpha, float(c.real), float(c.imag)

    def to_json(self) -> str:
        rows = [
            {"point": [float(x) for x in p], "multi_index": list(a), "re": re, "im": im}
            for _, p, a, re, im in self.rows()
        ]
        return json.dumps({"order": self.order, "rows": rows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.cloud.points.shape[1]
        w.writerow(["point_index"] + [f"x{i + 1}" for i in range(n)]
                   + [f"a{i + 1}" for i in range(n)] + ["re", "im"])
        for k, p, a, re, im in self.rows():
            w.writerow([k] + [repr(float(x)) for x in p] + list(a) + [repr(re), repr(im)])
        return buf.getvalue()

    @staticmethod
    def coefficients_from_json(text: str, n: int):
        """Parse :meth:`to_json` output into (points, order, coeffs)."""
        doc = json.loads(text)
        m = doc["order"]
        sp = jet_space(n, m)
        rows = doc["rows"]
        count = len(rows) // sp.size
        coeffs = np.zeros((count, sp.size), dtype=complex)
        points = np.zeros((count, n))
        for r_i, row in enumerate(rows):
            k, pos = divmod(r_i, sp.size)
            if tuple(row["multi_index"]) != sp.indices[pos]:
                raise ValueError("rows are not in graded-lex order")
            coeffs[k, pos] = complex(row["re"], row["im"])
            points[k] = row["point"]
        return points, m, coeffs


def restrict(F, cloud: SampleCloud, m: int) -> WhitneyJetField:
    """Jets of ``F`` up to order ``m`` at every cloud point."""
    return WhitneyJetField(cloud, m, jet_eval(as_expression(F), cloud.points, m))


# -- flat functions ---------------------------------------------------------


def _window(u: Expression, lo: float, hi: float, eps: float, k: int) -> Expression:
    """1 on [lo - eps, hi + eps], 0 beyond distance 2 eps, C^k in between."""
    up = Step(k, (u - (hi + eps)) * (1.0 / eps))
    down = Step(k, ((lo - eps) - u) * (1.0 / eps))
    return Sub(Sub(Const(1), up), down)


def cutoff_flat(d: NormalSetDescriptor, eps: float, k: int = 4, grid=None) -> Expression:
    """An expression that vanishes on an ``eps``-neighborhood of the set's bounding box.

    The box is taken in the coordinates (fiber parameter ``t = <x, v>``,
    tangent-frame coordinates of the base), using the base samples and the
    bounds at them.  The result is 1 wherever some coordinate is more than
    ``2 eps`` outside the box, and C^k throughout, so its jets up to order
    ``k`` vanish on the set.

    If ``grid`` is given and the cutoff is identically zero on it, a
    ``RuntimeWarning`` is issued.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    v = d.direction
    plane = Hyperplane.orthogonal_to(v)
    lo_t = float(np.min(d.phi_values()))
    hi_t = float(np.max(d.psi_values()))
    factors = [_window(linear_form(v), lo_t, hi_t, eps, k)]
    coords = plane.coordinates(d.base_samples)
    for i, f in enumerate(plane.frame):
        factors.append(_window(linear_form(f), float(coords[:, i].min()),
                               float(coords[:, i].max()), eps, k))
    inside = factors[0] if len(factors) == 1 else Mul(*factors)
    out = Sub(Const(1), inside)
    if grid is not None:
        vals = jet_eval(out, np.asarray(grid, dtype=float), 0).value
        if np.all(vals == 0):
            warnings.warn("cutoff is identically zero on the supplied grid", RuntimeWarning,
                          stacklevel=2)
    return out
