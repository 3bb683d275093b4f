"""Normal sets K = {t v + x : x in K_v, phi(x) <= t <= psi(x)} and their samples.

A set is described by a unit direction ``v``, a finite sample of its base
``K_v`` inside the hyperplane orthogonal to ``v``, the bounds ``phi`` and
``psi`` along each fiber, and a surface ``Gamma`` with ``phi <= Gamma <= psi``.
Bounds are expressions in the ambient coordinates, or values tabulated at the
base samples when no closed form is convenient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .expression import (
    Add,
    Const,
    Expression,
    Powr,
    Rexp,
    Sin,
    Var,
    as_expression,
    evaluate,
)

UNIT_TOL = 1e-12
PLANE_TOL = 1e-12
SURFACE_TOL = 1e-12


class GeometryError(ValueError):
    pass


class NormalizationError(GeometryError):
    """A direction that must be a unit vector is not."""


class NotNormalError(GeometryError):
    """The surface leaves [phi, psi] at some base sample."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class DegenerateIntervalError(GeometryError):
    """psi < phi at some base sample."""


class OutsideSetError(GeometryError):
    """A point does not decompose as t v + x with x in K_v and t in [phi, psi]."""


def unit_vector(v, tol=UNIT_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > tol:
        raise NormalizationError(f"direction {v.tolist()} has norm {norm!r}, expected 1")
    return v


def complete_basis(v) -> np.ndarray:
    """Orthonormal basis whose first column is ``v``.

    The standard basis vector most collinear with ``v`` (largest ``|v_i|``,
    lowest index on ties) is dropped, the rest are appended to ``v`` in index
    order, and the list is orthonormalized with two passes of modified
    Gram-Schmidt.
    """
    v = unit_vector(v)
    n = v.shape[0]
    drop = int(np.argmax(np.abs(v)))
    cols = [v.copy()]
    for i in range(n):
        if i == drop:
            continue
        w = np.zeros(n)
        w[i] = 1.0
        for _ in range(2):
            for c in cols:
                w = w - np.dot(c, w) * c
        w = w / np.linalg.norm(w)
        cols.append(w)
    return np.column_stack(cols)


@dataclass(frozen=True)
class Hyperplane:
    """The hyperplane through 0 orthogonal to ``normal``, with a tangent frame."""

    normal: np.ndarray
    frame: np.ndarray  # shape (n-1, n)

    @classmethod
    def orthogonal_to(cls, v) -> "Hyperplane":
        basis = complete_basis(v)
        return cls(basis[:, 0].copy(), basis[:, 1:].T.copy())

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - np.outer(x @ self.normal, self.normal).reshape(x.shape)

    def coordinates(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.frame.T


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Bound values given at the base samples only."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def _bound_values(bound, samples) -> np.ndarray:
    if isinstance(bound, Tabulated):
        if bound.values.shape != (len(samples),):
            raise GeometryError(
                f"tabulated bound has {bound.values.shape[0]} values for {len(samples)} samples"
            )
        return bound.values
    vals = evaluate(bound, samples)
    if np.any(np.abs(vals.imag) > 1e-12):
        raise GeometryError(f"bound {bound.to_sexpr()} is not real-valued on the base")
    return vals.real


def _bound_to_json(bound):
    if isinstance(bound, Tabulated):
        return [float(x) for x in bound.values]
    return bound.to_sexpr()


def _bound_from_json(obj):
    if isinstance(obj, list):
        return Tabulated(np.array(obj, dtype=float))
    return as_expression(obj)


@dataclass(frozen=True, eq=False)
class NormalSetDescriptor:
    direction: np.ndarray
    base_samples: np.ndarray
    phi: Expression | Tabulated
    psi: Expression | Tabulated
    surface: Expression
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))
        base = np.atleast_2d(np.asarray(self.base_samples, dtype=float))
        object.__setattr__(self, "base_samples", base)

    @property
    def dimension(self) -> int:
        return self.direction.shape[0]

    def phi_values(self) -> np.ndarray:
        return _bound_values(self.phi, self.base_samples)

    def psi_values(self) -> np.ndarray:
        return _bound_values(self.psi, self.base_samples)

    def surface_values(self) -> np.ndarray:
        return _bound_values(self.surface, self.base_samples)

    def validate(self) -> "NormalSetDescriptor":
        v = unit_vector(self.direction)
        if self.base_samples.shape[1] != v.shape[0]:
            raise GeometryError("base samples and direction have different dimensions")
        off = np.abs(self.base_samples @ v)
        if np.any(off > PLANE_TOL):
            k = int(np.argmax(off))
            raise GeometryError(
                f"base sample {k} {self.base_samples[k].tolist()} is not in the hyperplane "
                f"orthogonal to v (offset {off[k]:.3g})"
            )
        lo, hi, g = self.phi_values(), self.psi_values(), self.surface_values()
        for k in range(len(g)):
            if not (lo[k] - SURFACE_TOL <= g[k] <= hi[k] + SURFACE_TOL):
                raise NotNormalError(
                    f"surface value {float(g[k])!r} outside [{float(lo[k])!r}, {float(hi[k])!r}] at base sample "
                    f"{k} {self.base_samples[k].tolist()}",
                    sample_index=k,
                )
        return self

    # -- membership ------------------------------------------------------

    def decompose(self, points, tol: float = 1e-9):
        """Split points as ``t v + x``; return ``(inside, base_index, t)``.

        With expression bounds the base point must lie in the bounding box of
        the base samples and the bounds are evaluated at its projection
        (``base_index`` is then the nearest sample).  With tabulated bounds
        the projection must be within ``tol`` of a sample.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.direction
        t = pts @ v
        base = pts - np.outer(t, v)
        d2 = ((base[:, None, :] - self.base_samples[None, :, :]) ** 2).sum(-1)
        nearest = np.argmin(d2, axis=1)
        dist = np.sqrt(d2[np.arange(len(pts)), nearest])
        tabulated = isinstance(self.phi, Tabulated) or isinstance(self.psi, Tabulated)
        if tabulated:
            ok = dist <= tol
            lo = self.phi_values()[nearest]
            hi = self.psi_values()[nearest]
        else:
            bmin = self.base_samples.min(axis=0) - tol
            bmax = self.base_samples.max(axis=0) + tol
            ok = np.all((base >= bmin) & (base <= bmax), axis=1)
            lo = evaluate(self.phi, base).real
            hi = evaluate(self.psi, base).real
        inside = ok & (t >= lo - tol) & (t <= hi + tol)
        return inside, nearest, t

    def require_inside(self, points, tol: float = 1e-9):
        inside, _, _ = self.decompose(points, tol)
        if not np.all(inside):
            k = int(np.argmin(inside))
            pts = np.atleast_2d(points)
            raise OutsideSetError(f"point {k} {pts[k].tolist()} is not in the set {self.name!r}")

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "dimension": self.dimension,
            "direction": [float(x) for x in self.direction],
            "base_samples": [[float(x) for x in p] for p in self.base_samples],
            "phi": _bound_to_json(self.phi),
            "psi": _bound_to_json(self.psi),
            "surface": self.surface.to_sexpr(),
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, doc: dict, validate: bool = True) -> "NormalSetDescriptor":
        missing = {"direction", "base_samples", "phi", "psi", "surface"} - set(doc)
        if missing:
            raise GeometryError(f"descriptor is missing fields {sorted(missing)}")
        d = cls(
            np.array(doc["direction"], dtype=float),
            np.array(doc["base_samples"], dtype=float),
            _bound_from_json(doc["phi"]),
            _bound_from_json(doc["psi"]),
            as_expression(doc["surface"]),
            doc.get("name", ""),
        )
        if "dimension" in doc and int(doc["dimension"]) != d.dimension:
            raise GeometryError(
                f"dimension {doc['dimension']} does not match direction of length {d.dimension}"
            )
        return d.validate() if validate else d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def make_descriptor(v, base_samples, phi, psi, surface, name="", validate=True):
    """Build and (by default) validate a descriptor.

    ``phi``/``psi`` may be expressions, s-expression text, numbers, or
    :class:`Tabulated` values.
    """
    def bound(b):
        if isinstance(b, Tabulated):
            return b
        if isinstance(b, (list, tuple, np.ndarray)):
            return Tabulated(np.asarray(b, dtype=float))
        return as_expression(b)

    d = NormalSetDescriptor(
        np.asarray(v, dtype=float), np.asarray(base_samples, dtype=float),
        bound(phi), bound(psi), as_expression(surface), name,
    )
    return d.validate() if validate else d


# -- sampling ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleCloud:
    points: np.ndarray
    base_index: np.ndarray
    t: np.ndarray
    direction: np.ndarray
    base_samples: np.ndarray = field(repr=False)

    def __len__(self):
        return self.points.shape[0]


def sample_set(d: NormalSetDescriptor, per_segment: int) -> SampleCloud:
    """``per_segment`` equally spaced points on every fiber (one if the fiber is a point)."""
    if per_segment < 1:
        raise GeometryError("per_segment must be >= 1")
    lo, hi = d.phi_values(), d.psi_values()
    pts, idx, ts = [], [], []
    for k, p in enumerate(d.base_samples):
        if hi[k] < lo[k]:
            raise DegenerateIntervalError(
                f"psi < phi at base sample {k} {p.tolist()}: [{lo[k]!r}, {hi[k]!r}]"
            )
        t = np.array([lo[k]]) if hi[k] == lo[k] else np.linspace(lo[k], hi[k], per_segment)
        pts.append(p + np.outer(t, d.direction))
        idx.append(np.full(t.shape, k))
        ts.append(t)
    return SampleCloud(
        np.concatenate(pts), np.concatenate(idx), np.concatenate(ts),
        d.direction.copy(), d.base_samples.copy(),
    )


def hausdorff(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


# -- fixtures ---------------------------------------------------------------

K2_EXPONENT = math.sqrt(2.0)


def _k1_e2(resolution):
    base = np.column_stack([np.linspace(0, 1, resolution), np.zeros(resolution)])
    return make_descriptor([0, 1], base, Const(0), Rexp(Var(1)), Const(0), name="K1")


def k1_lower_bound_e1(x2) -> np.ndarray:
    """Lower x_1 bound of K1 on the horizontal line at height ``x2``."""
    x2 = np.asarray(x2, dtype=float)
    out = np.zeros_like(x2)
    pos = x2 > 0
    out[pos] = -1.0 / np.log(x2[pos])
    return out


def _k1_e1(resolution):
    heights = np.linspace(0.0, math.exp(-1.0), resolution)
    base = np.column_stack([np.zeros(resolution), heights])
    phi = Tabulated(np.minimum(k1_lower_bound_e1(heights), 1.0))
    # Gamma = 1 is the only constant surface: phi reaches 1 at the top sample
    return make_descriptor([1, 0], base, phi, Const(1), Const(1), name="K1_e1")


def _k2(resolution):
    base = np.column_stack([np.linspace(0, 1, resolution), np.zeros(resolution)])
    lower = Powr(Var(1), K2_EXPONENT)
    return make_descriptor([0, 1], base, lower, Add(lower, Rexp(Var(1))), lower, name="K2")


def _graph(resolution, n=2, f=None):
    f = Sin(Var(1)) if f is None else as_expression(f)
    grid = np.linspace(0, 1, resolution)
    if n == 2:
        base = np.column_stack([grid, np.zeros(resolution)])
    else:
        mesh = np.meshgrid(*([grid] * (n - 1)), indexing="ij")
        base = np.column_stack([m.ravel() for m in mesh] + [np.zeros(mesh[0].size)])
    v = np.zeros(n)
    v[-1] = 1.0
    return make_descriptor(v, base, f, f, f, name="graph")


def _box(resolution):
    """Square rotated by 45 degrees, fibers along (1,1)/sqrt(2), wavy surface."""
    s2 = math.sqrt(2.0)
    v = np.array([1.0, 1.0]) / s2
    w = np.array([-1.0, 1.0]) / s2
    base = np.outer(np.linspace(-0.5, 0.5, resolution), w)
    # 0.2 sin(2 <x, w>) is constant along v
    gamma = Const(0.2) * Sin(Const(s2) * (Var(2) - Var(1)))
    return make_descriptor(v, base, Const(-0.5), Const(0.5), gamma, name="box")


FIXTURES = {
    "K1": (_k1_e2, "0 <= x1 <= 1, 0 <= x2 <= exp(-1/x1); fibers along e2, zero surface"),
    "K1_e1": (_k1_e1, "K1 presented with fibers along e1; tabulated lower bound, surface 1"),
    "K2": (_k2, "x1^sqrt2 <= x2 <= x1^sqrt2 + exp(-1/x1); fibers along e2"),
    "graph": (_graph, "graph of sin(x1) over [0, 1]; fibers along e2, single points"),
    "box": (_box, "rotated square, fibers along (1,1)/sqrt2, surface 0.2 sin(sqrt2 (x2-x1))"),
}


def fixture(name: str, resolution: int = 11, **kwargs) -> NormalSetDescriptor:
    """Named example set with ``resolution`` base samples per base axis."""
    try:
        builder = FIXTURES[name][0]
    except KeyError:
        raise GeometryError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None
    return builder(resolution, **kwargs)


def k1_presentations(resolution: int = 11):
    """K1 with fibers along e1 and along e2, in that order."""
    return fixture("K1_e1", resolution), fixture("K1", resolution)
