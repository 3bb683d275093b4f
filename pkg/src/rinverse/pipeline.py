"""Right inverses for D_v - lam on a normal set, and for products of such operators.

For a set K with fibers along ``v`` and surface ``Gamma`` the right inverse is
assembled from three changes of variables around the axis-1 integral::

    A    orthogonal, A e_1 = v            K' = A^{-1} K   (fibers along e_1)
    Phi  x -> x + Gamma'(x^(1,0)) e_1     K0 = Phi^{-1} K' (zero surface)

    S F = (S_1 (F o A o Phi)) o Phi^{-1} o A^{-1}

Each map commutes with the operator in the right way, so ``(D_v - lam) S F = F``.
Because the integral starts on the zero surface of ``K0``, the fiber segment
it integrates over stays inside K, and ``S F`` on K depends only on ``F`` on K.

A polynomial operator ``P_1(D_{v_1}) o ... o P_k(D_{v_k})`` is split into
linear factors ``D_v - lam`` with a root finder.  Their right inverses are
composed in reverse operator order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_inverse import Integral
from .expression import Const, Expression, Mul, Subst, as_expression, evaluate, jet_eval
from .geometry import NormalSetDescriptor, unit_vector
from .jets import InsufficientOrderError, Jet
from .quadrature import QuadratureConfig
from .transforms import (
    ChainMap,
    OrthogonalMap,
    describe_map,
    flattening_map,
    orthogonal_map_to,
    pullback_expression,
    rotate_descriptor,
)


class PipelineError(ValueError):
    pass


class RootFindingError(ArithmeticError):
    pass


def _as_complex_list(coeffs) -> list[complex]:
    out = []
    for c in coeffs:
        if isinstance(c, (list, tuple)):
            if len(c) not in (1, 2):
                raise PipelineError(f"coefficient {c!r} must be [re] or [re, im]")
            out.append(complex(c[0], c[1] if len(c) == 2 else 0.0))
        else:
            out.append(complex(c))
    return out


@dataclass(frozen=True, eq=False)
class DirectionalOperator:
    """``D_v - lam``."""

    direction: np.ndarray
    lam: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "direction", unit_vector(self.direction))
        object.__setattr__(self, "lam", complex(self.lam))

    def as_product(self) -> "OperatorProduct":
        return OperatorProduct(((self.direction, (-self.lam, 1.0)),))


@dataclass(frozen=True, eq=False)
class OperatorProduct:
    """``P_1(D_{v_1}) o ... o P_k(D_{v_k})``.

    Each factor is ``(direction, coefficients)`` with coefficients in
    ascending powers, ``coefficients[i]`` multiplying ``D_v^i``.
    """

    factors: tuple

    def __post_init__(self):
        clean = []
        for v, poly in self.factors:
            v = unit_vector(v)
            poly = tuple(_as_complex_list(poly))
            while len(poly) > 1 and poly[-1] == 0:
                poly = poly[:-1]
            if len(poly) < 2:
                raise PipelineError("every factor needs a polynomial of degree >= 1")
            clean.append((v, poly))
        if not clean:
            raise PipelineError("operator needs at least one factor")
        object.__setattr__(self, "factors", tuple(clean))

    @property
    def degree(self) -> int:
        return sum(len(p) - 1 for _, p in self.factors)

    def to_dict(self) -> dict:
        return {"factors": [
            {"direction": [float(x) for x in v], "poly": [[c.real, c.imag] for c in p]}
            for v, p in self.factors
        ]}

    @classmethod
    def from_dict(cls, doc) -> "OperatorProduct":
        if "factors" in doc:
            return cls(tuple((f["direction"], f["poly"]) for f in doc["factors"]))
        if "direction" in doc:
            lam = _as_complex_list([doc.get("lambda", 0.0)])[0]
            return DirectionalOperator(doc["direction"], lam).as_product()
        raise PipelineError("operator needs 'factors' or 'direction'")


# -- root finding -----------------------------------------------------------


def expand_roots(roots, leading=1.0) -> np.ndarray:
    """Ascending coefficients of ``leading * prod (t - r)``."""
    return np.polynomial.polynomial.polyfromroots(roots) * leading if len(roots) else np.array([leading])


def _newton(P, roots, multiplicity, steps=3):
    """Newton on ``P^(multiplicity-1)``, keeping only steps that reduce its residual."""
    f = P.deriv(multiplicity - 1) if multiplicity > 1 else P
    df = f.deriv()
    roots = np.asarray(roots, dtype=complex)
    for _ in range(steps):
        d = df(roots)
        step = np.where(d != 0, f(roots) / np.where(d != 0, d, 1), 0)
        trial = roots - step
        better = np.abs(f(trial)) < np.abs(f(roots))
        roots = np.where(better, trial, roots)
    return roots


def _merge_clusters(P, roots):
    """Replace each cluster of eigenvalues by its polished mean, repeated.

    A root of multiplicity k splits into a ring of radius ~eps^(1/k); the
    ring's mean is well conditioned and is a simple root of ``P^(k-1)``.
    Clusters are single-linkage groups at that worst-case radius.
    """
    roots = np.asarray(roots, dtype=complex)
    radius = 10 * np.finfo(float).eps ** (1 / max(len(roots), 1))
    label = list(range(len(roots)))
    for i in range(len(roots)):
        for j in range(i):
            if abs(roots[i] - roots[j]) <= radius * (1 + abs(roots[j])):
                old, new = label[i], label[j]
                label = [new if x == old else x for x in label]
    out = []
    for g in sorted(set(label)):
        group = roots[[k for k, x in enumerate(label) if x == g]]
        out.extend([_newton(P, [group.mean()], len(group))[0]] * len(group))
    return np.array(out)


def factor_polynomial(coeffs, tol: float = 1e-8) -> list[complex]:
    """Complex roots, repeated by multiplicity, sorted by (real, imag).

    Roots come from companion-matrix eigenvalues followed by a few Newton
    steps on the original polynomial.  Clusters of eigenvalues are also tried
    as a single multiple root, and whichever set re-expands better is kept.  Raises :class:`RootFindingError` if
    ``leading * prod (t - r)`` does not reproduce the coefficients to ``tol``
    (relative to the largest coefficient).
    """
    c = np.array(_as_complex_list(coeffs), dtype=complex)
    while c.size > 1 and c[-1] == 0:
        c = c[:-1]
    if c.size < 2:
        raise PipelineError("polynomial must have degree >= 1")
    P = np.polynomial.Polynomial(c)
    raw = np.polynomial.polynomial.polyroots(c).astype(complex)

    def reexpansion_error(r):
        return np.max(np.abs(expand_roots(r, c[-1]) - c)) / np.max(np.abs(c))

    candidates = [_newton(P, raw, 1), _merge_clusters(P, raw)]
    roots = min(candidates, key=reexpansion_error)
    roots = sorted(roots.tolist(), key=lambda z: (z.real, z.imag))
    err = reexpansion_error(roots)
    if not err <= tol:
        raise RootFindingError(f"root re-expansion error {err:.3g} exceeds {tol:g}")
    return roots


# -- single linear factor ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class RightInverseOperator:
    descriptor: NormalSetDescriptor
    operator: DirectionalOperator
    rotation: OrthogonalMap
    rotated: NormalSetDescriptor
    shift: object  # ShiftMap
    flattened: NormalSetDescriptor
    config: QuadratureConfig
    provenance: dict = field(default_factory=dict)

    @property
    def lam(self) -> complex:
        return self.operator.lam

    @property
    def dimension(self) -> int:
        return self.descriptor.dimension

    def forward_map(self) -> ChainMap:
        """``A o Phi`` as a chain (Phi first): flattened coordinates -> K."""
        return ChainMap((self.shift, self.rotation), self.dimension)

    def backward_map(self) -> ChainMap:
        """``Phi^{-1} o A^{-1}`` (A^{-1} first): K -> flattened coordinates."""
        return ChainMap((self.rotation.inverse(), self.shift.inverse()), self.dimension)

    def flat_integral(self, F) -> Integral:
        """The axis-1 integral of ``F o A o Phi``, living on the flattened set."""
        return Integral(pullback_expression(F, self.forward_map()), 1, self.lam, self.config)

    def expression(self, F) -> Expression:
        """``S F`` as an expression, usable as input to further stages."""
        inner = self.flat_integral(as_expression(F))
        back = self.backward_map()
        if back.is_identity():
            return inner
        return Subst(inner, back.components())

    def apply(self, F, x, m: int, check: bool = True) -> Jet:
        x = np.asarray(x, dtype=float)
        if check:
            self.descriptor.require_inside(x.reshape(-1, self.dimension))
        return jet_eval(self.expression(F), x, m)


def build_right_inverse(d: NormalSetDescriptor, op: DirectionalOperator,
                        q: QuadratureConfig = QuadratureConfig(),
                        rotation: OrthogonalMap | None = None) -> RightInverseOperator:
    """Right inverse of ``D_v - lam`` on the set described by ``d``.

    ``rotation`` overrides the computed orthogonal map (used by negative
    controls); the provenance records which stages are active.
    """
    if np.max(np.abs(d.direction - op.direction)) > 1e-12:
        raise PipelineError(
            f"descriptor direction {d.direction.tolist()} does not match operator direction "
            f"{op.direction.tolist()}"
        )
    d.validate()
    A = orthogonal_map_to(op.direction) if rotation is None else rotation
    rotated = rotate_descriptor(d, A, validate=rotation is None)
    e1 = np.zeros(d.dimension)
    e1[0] = 1.0
    if rotation is None and np.max(np.abs(rotated.direction - e1)) > 1e-12:
        raise PipelineError("rotation does not map the direction onto e_1")
    # snap to the exact axis; an overriding matrix is trusted as given
    rotated = NormalSetDescriptor(e1, rotated.base_samples, rotated.phi, rotated.psi,
                                  rotated.surface, rotated.name)
    shift, flattened = flattening_map(rotated, validate=rotation is None)

    provenance = {
        "set": d.name,
        "direction": [float(x) for x in op.direction],
        "lambda": [op.lam.real, op.lam.imag],
        "stages": [
            {"stage": "rotation", "kind": describe_map(A), "skipped": A.is_identity(),
             "matrix": [[float(x) for x in row] for row in A.matrix]},
            {"stage": "shift", "kind": describe_map(shift), "skipped": shift.is_identity(),
             "axis": 1, "gamma": shift.gamma.to_sexpr()},
            {"stage": "integrate", "axis": 1, "lambda": [op.lam.real, op.lam.imag],
             "quadrature": q.to_dict()},
        ],
    }
    return RightInverseOperator(d, op, A, rotated, shift, flattened, q, provenance)


def apply_right_inverse(S, F, x, m: int) -> Jet:
    """Order-``m`` jet of ``S F`` at points ``x`` of the set."""
    return S.apply(F, x, m)


# -- operators --------------------------------------------------------------


def apply_operator_jet(op, jet: Jet) -> Jet:
    """Jet of ``P(D) F`` from a jet of ``F``; the order drops by the total degree."""
    prod = op.as_product() if isinstance(op, DirectionalOperator) else op
    if jet.order < prod.degree:
        raise InsufficientOrderError(
            f"operator of degree {prod.degree} needs a jet of order >= {prod.degree}, got {jet.order}"
        )
    for v, poly in reversed(prod.factors):
        target = jet.order - (len(poly) - 1)
        powers = [jet]
        for _ in range(len(poly) - 1):
            powers.append(powers[-1].directional(v))
        acc = None
        for c, term in zip(poly, powers):
            if c == 0:
                continue
            term = term.truncate(target) * c
            acc = term if acc is None else acc + term
        jet = acc
    return jet


def apply_operator(op, F, x, m: int = 0) -> Jet:
    """Order-``m`` jet of ``P(D) F`` at ``x``; ``F`` is jet-evaluated at order ``m + degree``."""
    prod = op.as_product() if isinstance(op, DirectionalOperator) else op
    return apply_operator_jet(prod, jet_eval(as_expression(F), x, m + prod.degree))


# -- products ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProductRightInverse:
    """``S_r o ... o S_1`` (``S_1`` applied first), scaled by ``1 / leading``."""

    operator: OperatorProduct
    stages: tuple
    scale: complex
    descriptors: tuple

    @property
    def provenance(self) -> dict:
        return {
            "scale": [self.scale.real, self.scale.imag],
            "stages": [s.provenance for s in self.stages],
        }

    def expression(self, F) -> Expression:
        g = as_expression(F)
        if self.scale != 1:
            g = Mul(Const(self.scale), g)
        for stage in self.stages:
            g = stage.expression(g)
        return g

    def apply(self, F, x, m: int, check: bool = True) -> Jet:
        x = np.asarray(x, dtype=float)
        if check:
            flat = x.reshape(-1, x.shape[-1])
            checked = False
            for d in self.descriptors:
                if _has_expression_bounds(d):
                    d.require_inside(flat)
                    checked = True
            if not checked:
                self.descriptors[0].require_inside(flat)
        return jet_eval(self.expression(F), x, m)

    def residual(self, F, x) -> np.ndarray:
        """``|P(D) S F - F|`` at ``x``."""
        F = as_expression(F)
        g = self.apply(F, x, self.operator.degree)
        return np.abs(apply_operator_jet(self.operator, g).value - evaluate(F, x))


def _has_expression_bounds(d) -> bool:
    return isinstance(d.phi, Expression) and isinstance(d.psi, Expression)


def _match_descriptor(descriptors, v):
    for d in descriptors:
        if np.max(np.abs(d.direction - v)) <= 1e-12:
            return d
    raise PipelineError(f"no descriptor with direction {np.asarray(v).tolist()}")


def cross_check_descriptors(descriptors, tol: float = 1e-9, per_segment: int = 5):
    """Every descriptor's samples must lie in every set with expression bounds."""
    from .geometry import sample_set

    for i, di in enumerate(descriptors):
        pts = sample_set(di, per_segment).points
        for j, dj in enumerate(descriptors):
            if i == j or not _has_expression_bounds(dj):
                continue
            inside, _, _ = dj.decompose(pts, tol)
            if not np.all(inside):
                k = int(np.argmin(inside))
                raise PipelineError(
                    f"descriptors {i} and {j} describe different sets: point "
                    f"{pts[k].tolist()} of {di.name or i!r} is outside {dj.name or j!r}"
                )


def build_product_inverse(descriptors, opP, q: QuadratureConfig = QuadratureConfig(),
                          nesting_factor: float = 10.0) -> ProductRightInverse:
    """Right inverse of a product operator by composing linear-factor inverses.

    Factors are taken in operator order and their inverses applied in
    reverse, so the inverse of the first linear factor acts first.  The
    quadrature tolerance of the stage nested ``k`` levels deep is divided by
    ``nesting_factor**k``.
    """
    prod = opP.as_product() if isinstance(opP, DirectionalOperator) else opP
    descriptors = tuple(descriptors)
    if len(descriptors) > 1:
        cross_check_descriptors(descriptors)
    linear = []
    scale = 1.0 + 0j
    for index, (v, poly) in enumerate(prod.factors):
        try:
            roots = factor_polynomial(poly)
        except (RootFindingError, PipelineError) as exc:
            raise PipelineError(f"factor {index}: {exc}") from exc
        scale /= poly[-1]
        d = _match_descriptor(descriptors, v)
        linear.extend((d, v, lam) for lam in roots)
    r = len(linear)
    stages = []
    for k, (d, v, lam) in enumerate(linear):
        depth = r - 1 - k
        cfg = q.tightened(nesting_factor ** depth) if depth else q
        try:
            stages.append(build_right_inverse(d, DirectionalOperator(v, lam), cfg))
        except Exception as exc:
            raise PipelineError(f"stage {k}: {exc}") from exc
    return ProductRightInverse(prod, tuple(stages), scale, descriptors)
