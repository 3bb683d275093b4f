import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rinverse.expression import evaluate, parse
from rinverse.geometry import OutsideSetError, fixture, sample_set
from rinverse.jets import InsufficientOrderError
from rinverse.pipeline import (
    DirectionalOperator,
    OperatorProduct,
    PipelineError,
    RootFindingError,
    apply_operator,
    build_product_inverse,
    build_right_inverse,
    cross_check_descriptors,
    expand_roots,
    factor_polynomial,
)
from rinverse.quadrature import QuadratureConfig

from conftest import CORPUS_TEXT

roots_st = st.lists(
    st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), min_size=1, max_size=4
)


@settings(max_examples=100, deadline=None)
@given(roots_st, st.complex_numbers(min_magnitude=0.5, max_magnitude=2))
def test_planted_roots_reexpand(roots, lead):
    c = expand_roots(roots, lead)
    found = factor_polynomial(c)
    back = expand_roots(found, lead)
    assert np.max(np.abs(back - c)) / np.max(np.abs(c)) <= 1e-8


def test_roots_sorted_and_repeated():
    assert np.allclose(factor_polynomial([2, -3, 1]), [1, 2])
    r = factor_polynomial(expand_roots([1j, 1j, -1]))
    assert len(r) == 3 and np.allclose(r[0], -1)
    assert np.allclose(factor_polynomial(expand_roots([2, 2, 2, 2])), 2, atol=1e-12)


def test_degree_zero_rejected():
    with pytest.raises(PipelineError):
        factor_polynomial([3.0])
    with pytest.raises(PipelineError):
        OperatorProduct((([1.0, 0.0], [1.0]),))


def test_root_failure_is_reported():
    with pytest.raises(RootFindingError):
        # roots +-sqrt(2) cannot re-expand exactly in floating point
        factor_polynomial([-2, 0, 1], tol=1e-300)


def test_operator_dict_roundtrip():
    op = OperatorProduct((([1.0, 0.0], [0, 1]), ([0.0, 1.0], [-1j, 1])))
    again = OperatorProduct.from_dict(op.to_dict())
    assert again.to_dict() == op.to_dict()
    assert again.degree == 2
    single = OperatorProduct.from_dict({"direction": [0, 1], "lambda": [2, 1]})
    assert single.factors[0][1] == (-(2 + 1j), 1)


def test_apply_operator_matches_hand_derivative():
    x = np.array([[0.2, 0.4], [0.7, 0.1]])
    v = np.array([0.6, 0.8])
    op = DirectionalOperator(v, 1.5)
    F = parse("(mul (exp (var 1)) (sin (var 2)))")
    a, b = x.T
    expected = 0.6 * np.exp(a) * np.sin(b) + 0.8 * np.exp(a) * np.cos(b) - 1.5 * np.exp(a) * np.sin(b)
    assert np.allclose(apply_operator(op, F, x).value, expected)


def test_provenance_records_stages():
    S = build_right_inverse(fixture("K1", 5), DirectionalOperator([0, 1], 1.0))
    kinds = [s["kind"] for s in S.provenance["stages"][:2]]
    assert kinds == ["permutation", "identity"]
    assert S.provenance["stages"][1]["skipped"]
    S1 = build_right_inverse(fixture("K1_e1", 5), DirectionalOperator([1, 0], 0.0))
    assert S1.provenance["stages"][0]["skipped"]
    assert not S1.provenance["stages"][1]["skipped"]
    Sb = build_right_inverse(fixture("box", 5), DirectionalOperator(fixture("box", 5).direction, 0))
    assert [s["kind"] for s in Sb.provenance["stages"][:2]] == ["rotation", "shift"]


def test_direction_mismatch():
    with pytest.raises(PipelineError):
        build_right_inverse(fixture("K1", 5), DirectionalOperator([1, 0], 0.0))


@pytest.mark.parametrize("name", ["K1", "K1_e1", "K2", "box"])
@pytest.mark.parametrize("lam", [0.0, 2 + 1j])
def test_residual_on_fixtures(name, lam):
    d = fixture(name, 9)
    cloud = sample_set(d, 5)
    S = build_right_inverse(d, DirectionalOperator(d.direction, lam))
    from rinverse.pipeline import ProductRightInverse

    P = ProductRightInverse(DirectionalOperator(d.direction, lam).as_product(), (S,), 1.0, (d,))
    for text in CORPUS_TEXT:
        assert np.max(P.residual(parse(text), cloud.points)) <= 1e-9


@pytest.mark.parametrize("lam", [0.0, 1.0, 1j])
def test_constant_closed_form_with_surface(lam):
    d = fixture("box", 7)
    cloud = sample_set(d, 4)
    S = build_right_inverse(d, DirectionalOperator(d.direction, lam))
    got = S.apply(parse("(const 1)"), cloud.points, 0).value
    s = cloud.t - d.surface_values()[cloud.base_index]
    expected = s if lam == 0 else np.expm1(lam * s) / lam
    assert np.max(np.abs(got - expected)) <= 1e-12


def test_points_outside_are_rejected():
    d = fixture("K1", 5)
    S = build_right_inverse(d, DirectionalOperator([0, 1], 0.0))
    with pytest.raises(OutsideSetError):
        S.apply(parse("(const 1)"), np.array([[0.5, 0.9]]), 0)


def test_product_needs_enough_order():
    d = fixture("K1", 5)
    P = build_product_inverse([d], OperatorProduct((([0, 1], [2, -3, 1]),)))
    with pytest.raises(InsufficientOrderError):
        from rinverse.pipeline import apply_operator_jet

        apply_operator_jet(P.operator, P.apply(parse("(const 1)"), sample_set(d, 2).points, 1))


def test_small_product_residual():
    d = fixture("K1", 5)
    cloud = sample_set(d, 3)
    P = build_product_inverse([d], OperatorProduct((([0, 1], [2, -3, 1]),)))
    assert len(P.stages) == 2
    assert P.stages[0].config.tol < P.stages[1].config.tol
    assert np.max(P.residual(parse("(mul (var 1) (var 2))"), cloud.points)) <= 1e-9


def test_leading_coefficient_is_divided_out():
    d = fixture("K1", 5)
    cloud = sample_set(d, 3)
    P = build_product_inverse([d], OperatorProduct((([0, 1], [-2, 4]),)), QuadratureConfig())
    assert P.scale == pytest.approx(0.25)
    assert np.max(P.residual(parse("(exp (var 2))"), cloud.points)) <= 1e-12


def test_cross_check_catches_different_sets():
    cross_check_descriptors([fixture("K1_e1", 9), fixture("K1", 9)])
    with pytest.raises(PipelineError):
        cross_check_descriptors([fixture("K1", 9), fixture("K2", 9)])


def test_missing_direction_descriptor():
    with pytest.raises(PipelineError):
        build_product_inverse([fixture("K1", 5)], OperatorProduct((([1, 0], [0, 1]),)))


def test_jet_order_limited_by_surface_smoothness():
    from rinverse.expression import EvaluationError

    d = fixture("K2", 5)
    cloud = sample_set(d, 3)
    S = build_right_inverse(d, DirectionalOperator([0, 1], 1.0))
    assert np.all(np.isfinite(S.apply(parse("(var 1)"), cloud.points, 1).coeffs))
    with pytest.raises(EvaluationError):
        S.apply(parse("(var 1)"), cloud.points, 3)
