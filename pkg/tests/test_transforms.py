import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rinverse.expression import differentiate, evaluate, jet_eval, parse
from rinverse.geometry import fixture, sample_set
from rinverse.transforms import (
    ChainMap,
    OrthogonalMap,
    ShiftMap,
    TransformError,
    axis_of,
    describe_map,
    flattening_map,
    map_from_dict,
    orthogonal_map_to,
    pullback_expression,
    restrict_composition,
    rotate_descriptor,
)

GRID = np.array([[x, y] for x in np.linspace(-1, 1, 7) for y in np.linspace(-1, 1, 7)])
F = parse("(add (mul (exp (var 1)) (sin (var 2))) (mul (var 1) (var 2)))")

directions = st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3
).map(lambda v: np.array(v) / np.linalg.norm(v))


@settings(max_examples=50, deadline=None)
@given(directions)
def test_rotation_onto_direction(v):
    A = orthogonal_map_to(v)
    assert A.orthogonality_defect(A.matrix) <= 1e-12
    assert np.max(np.abs(A.apply(np.eye(len(v))[0]) - v)) <= 1e-12


def test_non_orthogonal_matrix_rejected_unless_unchecked():
    M = np.array([[1.0, 0.3], [0.0, 1.0]])
    with pytest.raises(TransformError):
        OrthogonalMap(M)
    A = OrthogonalMap(M, check=False)
    assert np.array_equal(A.inverse().matrix, M.T)


def test_pullback_evaluates_composition():
    A = orthogonal_map_to([0.6, 0.8])
    G = pullback_expression(F, A)
    assert np.allclose(evaluate(G, GRID), evaluate(F, A.apply(GRID)))


def test_rotation_chain_rule():
    v = np.array([0.6, -0.8])
    A = orthogonal_map_to(v)
    Ainv = A.inverse()
    lhs = jet_eval(pullback_expression(F, Ainv), GRID, 1).directional(v).value
    rhs = evaluate(pullback_expression(differentiate(F, 0), Ainv), GRID)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_shift_roundtrip_and_commutation():
    phi = ShiftMap(1, parse("(mul (const 0.3) (sin (var 1)))"), 2)
    assert np.max(np.abs(phi.inverse().apply(phi.apply(GRID)) - GRID)) <= 1e-12
    assert np.max(np.abs(phi.apply(phi.inverse().apply(GRID)) - GRID)) <= 1e-12
    lam = 1 - 2j
    G = pullback_expression(F, phi)
    J = jet_eval(G, GRID, 1)
    lhs = J.partial(1).value - lam * J.value
    rhs = evaluate(pullback_expression(differentiate(F, 1) - lam * F, phi), GRID)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_shift_ignores_its_own_coordinate():
    phi = ShiftMap(0, parse("(var 1)"), 2)
    assert np.allclose(phi.apply(np.array([[2.0, 3.0]])), [[2.0, 3.0]])


def test_chain_order():
    A = orthogonal_map_to([0.0, 1.0])
    S = ShiftMap(0, parse("(var 2)"), 2)
    chain = ChainMap((S, A), 2)
    assert np.allclose(chain.apply(GRID), A.apply(S.apply(GRID)))
    assert np.allclose(chain.inverse().apply(chain.apply(GRID)), GRID)
    G = pullback_expression(F, chain)
    assert np.allclose(evaluate(G, GRID), evaluate(F, chain.apply(GRID)))
    assert ChainMap((), 2).is_identity()


def test_map_dict_roundtrip():
    chain = ChainMap((ShiftMap(0, parse("(sin (var 2))"), 2, -1), orthogonal_map_to([0.6, 0.8])), 2)
    again = map_from_dict(chain.to_dict(), 2)
    assert again.to_dict() == chain.to_dict()
    assert np.allclose(again.apply(GRID), chain.apply(GRID))
    with pytest.raises(TransformError):
        map_from_dict({"bogus": 1}, 2)


def test_rotate_box_onto_first_axis():
    d = fixture("box", 9)
    A = orthogonal_map_to(d.direction)
    r = rotate_descriptor(d, A)
    assert np.allclose(r.direction, [1, 0], atol=1e-15)
    cloud = sample_set(r, 5)
    assert d.decompose(A.apply(cloud.points))[0].all()


def test_flattening_moves_surface_to_zero():
    d = fixture("K2", 11)
    shift, flat = flattening_map(d)
    assert np.all(flat.surface_values() == 0)
    cloud = sample_set(flat, 5)
    assert d.decompose(shift.apply(cloud.points))[0].all()
    same_shift, same = flattening_map(fixture("K1", 5))
    assert same_shift.is_identity() and same.name == "K1"


def test_axis_and_description():
    assert axis_of([0.0, 1.0]) == 1
    with pytest.raises(Exception):
        axis_of([0.6, 0.8])
    assert describe_map(orthogonal_map_to([1.0, 0.0])) == "identity"
    assert describe_map(orthogonal_map_to([0.0, 1.0])) == "permutation"
    assert describe_map(orthogonal_map_to([0.6, 0.8])) == "rotation"
    assert describe_map(ShiftMap(0, parse("(var 2)"), 2)) == "shift"


def test_restrict_composition_matches_direct_jets():
    A = orthogonal_map_to([0.6, 0.8])
    cloud = sample_set(fixture("K1", 5), 3)
    field = restrict_composition(F, A, cloud, 2)
    assert np.allclose(field.jets.coeffs, jet_eval(pullback_expression(F, A), cloud.points, 2).coeffs)
