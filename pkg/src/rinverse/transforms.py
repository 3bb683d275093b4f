"""Changes of variables: rotations onto e_1, flattening shifts, and pullbacks.

Maps are applied to points as row vectors and to expressions by substitution,
``pullback_expression(F, M) = F o M``.  A :class:`ChainMap` applies its maps in
list order, so ``ChainMap([P, Q])(x) == Q(P(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_inverse import WhitneyJetField, restrict
from .expression import (
    Add,
    Const,
    Expression,
    Sub,
    as_expression,
    evaluate,
    is_zero,
    linear_form,
    substitute,
    variables,
)
from .geometry import (
    GeometryError,
    NormalSetDescriptor,
    SampleCloud,
    Tabulated,
    complete_basis,
    unit_vector,
)

ORTHO_TOL = 1e-12


class TransformError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OrthogonalMap:
    """``x -> A x`` with ``A^T`` used as the inverse.

    ``check=False`` skips the orthogonality test; the inverse is still taken
    to be the transpose, which is what makes a corrupted matrix detectable.
    """

    matrix: np.ndarray
    check: bool = True

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise TransformError("orthogonal map needs a square matrix")
        if self.check and self.orthogonality_defect(A) > ORTHO_TOL:
            raise TransformError(f"matrix is not orthogonal (defect {self.orthogonality_defect(A):.3g})")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @staticmethod
    def orthogonality_defect(A) -> float:
        A = np.asarray(A, dtype=float)
        return float(np.max(np.abs(A.T @ A - np.eye(A.shape[0]))))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def inverse_matrix(self) -> np.ndarray:
        return self.matrix.T

    def is_identity(self) -> bool:
        return np.array_equal(self.matrix, np.eye(self.dimension))

    def is_permutation(self) -> bool:
        A = self.matrix
        return bool(np.all((A == 0) | (np.abs(A) == 1)) and np.all(np.abs(A).sum(0) == 1))

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T

    def inverse(self) -> "OrthogonalMap":
        return OrthogonalMap(self.matrix.T, check=self.check)

    def components(self) -> list[Expression]:
        return [linear_form(row) for row in self.matrix]

    def to_dict(self) -> dict:
        return {"orthogonal": [[float(x) for x in row] for row in self.matrix]}


@dataclass(frozen=True, eq=False)
class ShiftMap:
    """``x -> x + sign * Gamma(x^(j,0)) e_j`` along the 0-based ``axis``.

    ``gamma`` is evaluated with ``x_j`` set to 0, so ``D_j`` of every
    component is ``delta_jl`` for both the map and its inverse.
    """

    axis: int
    gamma: Expression
    dimension: int
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_expression(self.gamma))
        if not 0 <= self.axis < self.dimension:
            raise TransformError(f"shift axis {self.axis} outside dimension {self.dimension}")
        if self.sign not in (1, -1):
            raise TransformError("sign must be +1 or -1")

    def projected_gamma(self) -> Expression:
        comps = list(variables(self.dimension))
        comps[self.axis] = Const(0)
        return substitute(self.gamma, comps)

    def is_identity(self) -> bool:
        return is_zero(self.gamma)

    def apply(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        base = x.copy()
        base[..., self.axis] = 0.0
        g = evaluate(self.gamma, base)
        if np.any(np.abs(g.imag) > 1e-12):
            raise TransformError("shift must be real-valued")
        x[..., self.axis] += self.sign * g.real
        return x

    def inverse(self) -> "ShiftMap":
        return ShiftMap(self.axis, self.gamma, self.dimension, -self.sign)

    def components(self) -> list[Expression]:
        comps = list(variables(self.dimension))
        g = self.projected_gamma()
        xj = comps[self.axis]
        comps[self.axis] = Add(xj, g) if self.sign > 0 else Sub(xj, g)
        return comps

    def to_dict(self) -> dict:
        return {"shift": {"axis": self.axis + 1, "gamma": self.gamma.to_sexpr(),
                          "sign": self.sign}}


@dataclass(frozen=True, eq=False)
class ChainMap:
    """Maps applied in list order; the empty chain is the identity."""

    maps: tuple
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        for m in self.maps:
            if m.dimension != self.dimension:
                raise TransformError("all maps in a chain need the same dimension")

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        for m in self.maps:
            x = m.apply(x)
        return x

    def inverse(self) -> "ChainMap":
        return ChainMap(tuple(m.inverse() for m in reversed(self.maps)), self.dimension)

    def is_identity(self) -> bool:
        return all(m.is_identity() for m in self.maps)

    def components(self) -> list[Expression]:
        comps: list[Expression] = list(variables(self.dimension))
        for m in self.maps:
            if m.is_identity():
                continue
            comps = [substitute(c, comps) for c in m.components()]
        return comps

    def to_dict(self) -> dict:
        return {"chain": [m.to_dict() for m in self.maps]}


SmoothMap = OrthogonalMap | ShiftMap | ChainMap


def map_from_dict(doc: dict, dimension: int | None = None):
    """Inverse of ``to_dict`` for the three map kinds."""
    if "orthogonal" in doc:
        return OrthogonalMap(np.array(doc["orthogonal"], dtype=float), check=doc.get("check", True))
    if "shift" in doc:
        s = doc["shift"]
        if dimension is None:
            raise TransformError("shift maps need the ambient dimension")
        return ShiftMap(int(s["axis"]) - 1, as_expression(s["gamma"]), dimension,
                        int(s.get("sign", 1)))
    if "chain" in doc:
        maps = [map_from_dict(m, dimension) for m in doc["chain"]]
        if dimension is None:
            if not maps:
                raise TransformError("empty chain needs the ambient dimension")
            dimension = maps[0].dimension
        return ChainMap(tuple(maps), dimension)
    raise TransformError(f"unknown map kind in {sorted(doc)}")


def apply_map(M, x) -> np.ndarray:
    return M.apply(x)


def pullback_expression(F, M) -> Expression:
    """The expression ``F o M``."""
    F = as_expression(F)
    if M.is_identity():
        return F
    return substitute(F, M.components())


def restrict_composition(F, M, cloud: SampleCloud, m: int) -> WhitneyJetField:
    """Jets of ``F o M`` at the cloud points."""
    return restrict(pullback_expression(F, M), cloud, m)


def orthogonal_map_to(v) -> OrthogonalMap:
    """Orthogonal ``A`` with ``A e_1 = v`` (first column ``v``)."""
    return OrthogonalMap(complete_basis(unit_vector(v)))


def _pull_bound(bound, M):
    if isinstance(bound, Tabulated):
        return bound
    return pullback_expression(bound, M)


def rotate_descriptor(d: NormalSetDescriptor, A: OrthogonalMap, validate=True) -> NormalSetDescriptor:
    """The descriptor of ``A^{-1}(K)``: fibers along ``A^{-1} v``."""
    Ainv = A.inverse()
    rotated = NormalSetDescriptor(
        Ainv.apply(d.direction),
        Ainv.apply(d.base_samples),
        _pull_bound(d.phi, A),
        _pull_bound(d.psi, A),
        pullback_expression(d.surface, A),
        name=f"{d.name}'" if d.name else "",
    )
    return rotated.validate() if validate else rotated


def axis_of(v, tol: float = 1e-12) -> int:
    """Index ``j`` with ``v = e_j``, or raise."""
    v = np.asarray(v, dtype=float)
    j = int(np.argmax(np.abs(v)))
    e = np.zeros_like(v)
    e[j] = 1.0
    if np.max(np.abs(v - e)) > tol:
        raise GeometryError(f"direction {v.tolist()} is not a coordinate axis")
    return j


def flattening_map(d: NormalSetDescriptor, validate=True):
    """Shift ``Phi`` moving the surface to 0, and the flattened descriptor ``K0``.

    ``Phi(K0) = K`` and ``K0`` has the zero surface with bounds
    ``phi - Gamma`` and ``psi - Gamma``.
    """
    j = axis_of(d.direction)
    n = d.dimension
    gamma = d.surface
    shift = ShiftMap(j, gamma, n)
    if shift.is_identity():
        return shift, d

    g_vals = d.surface_values()

    def flatten(bound):
        if isinstance(bound, Tabulated):
            return Tabulated(bound.values - g_vals)
        return Sub(bound, gamma)

    k0 = NormalSetDescriptor(d.direction.copy(), d.base_samples.copy(), flatten(d.phi),
                             flatten(d.psi), Const(0), name=f"{d.name}_0" if d.name else "")
    return shift, (k0.validate() if validate else k0)


def describe_map(M) -> str:
    if isinstance(M, OrthogonalMap):
        if M.is_identity():
            return "identity"
        return "permutation" if M.is_permutation() else "rotation"
    if isinstance(M, ShiftMap):
        return "identity" if M.is_identity() else "shift"
    return "chain"

