import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rinverse.expression import (
    Const,
    Deriv,
    EvaluationError,
    Exp,
    ParseError,
    Sin,
    Step,
    Subst,
    Var,
    as_expression,
    differentiate,
    evaluate,
    is_constant,
    is_zero,
    jet_eval,
    linear_form,
    parse,
    substitute,
)

from conftest import central_difference

PTS = np.array([[0.1, 0.2], [0.5, -0.3], [0.9, 0.7], [-0.4, 1.1]])


def _leaf():
    return st.one_of(
        st.integers(1, 2).map(Var),
        st.floats(-2, 2, allow_nan=False).map(Const),
    )


def _grow(children):
    return st.one_of(
        st.tuples(children, children).map(lambda t: t[0] + t[1]),
        st.tuples(children, children).map(lambda t: t[0] * t[1]),
        st.tuples(children, children).map(lambda t: t[0] - t[1]),
        children.map(Exp),
        children.map(Sin),
        children.map(lambda e: -e),
        st.tuples(children, st.integers(0, 3)).map(lambda t: t[0] ** t[1]),
    )


trees = st.recursive(_leaf(), _grow, max_leaves=6)


@settings(max_examples=60, deadline=None)
@given(trees)
def test_sexpr_roundtrip(e):
    text = e.to_sexpr()
    again = parse(text)
    assert again.to_sexpr() == text
    assert np.array_equal(evaluate(again, PTS), evaluate(e, PTS))


@settings(max_examples=40, deadline=None)
@given(trees)
def test_symbolic_derivative_matches_jet(e):
    J = jet_eval(e, PTS, 1)
    for axis in range(2):
        sym = evaluate(differentiate(e, axis), PTS)
        assert np.allclose(sym, J.partial(axis).value, rtol=1e-10, atol=1e-10)


def test_evaluate_against_numpy():
    e = parse("(add (mul (exp (var 1)) (sin (var 2))) (div (var 1) (add (const 2) (var 2))) (pow (var 2) 3))")
    x, y = PTS[:, 0], PTS[:, 1]
    assert np.allclose(evaluate(e, PTS), np.exp(x) * np.sin(y) + x / (2 + y) + y**3)


def test_complex_constants():
    e = parse("(mul (const 0 1) (var 1))")
    assert np.allclose(evaluate(e, PTS), 1j * PTS[:, 0])
    assert parse(e.to_sexpr()).to_sexpr() == e.to_sexpr()


def test_jets_against_central_differences():
    e = parse("(mul (exp (var 1)) (cos (mul (var 1) (var 2))))")
    J = jet_eval(e, PTS, 2)
    f = lambda y: evaluate(e, y).real
    for alpha in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
        fd = central_difference(f, PTS, alpha)
        assert np.allclose(J.derivative_value(alpha).real, fd, rtol=1e-6, atol=1e-7)


def test_rexp_and_step_values():
    u = np.array([[-1.0], [0.0], [0.5], [2.0]])
    r = evaluate(parse("(rexp (var 1))"), u)
    assert np.allclose(r, [0, 0, np.exp(-2), np.exp(-0.5)])
    s = evaluate(Step(3, Var(1)), u)
    assert np.allclose(s[[0, 1, 3]], [0, 0, 1])
    assert s[2] == pytest.approx(0.5)


def test_substitution_is_composition():
    F = parse("(mul (sin (var 1)) (var 2))")
    comps = [parse("(add (var 1) (var 2))"), parse("(mul (var 1) (var 1))")]
    G = substitute(F, comps)
    x, y = PTS[:, 0], PTS[:, 1]
    assert np.allclose(evaluate(G, PTS), np.sin(x + y) * x * x)
    # the opaque node composes through jets and must agree with the rewrite
    H = Subst(F, comps)
    assert np.allclose(jet_eval(H, PTS, 3).coeffs, jet_eval(G, PTS, 3).coeffs)


def test_deriv_node_matches_symbolic():
    F = parse("(mul (exp (var 2)) (sin (mul (var 1) (var 2))))")
    D = Deriv(2, F)
    assert np.allclose(jet_eval(D, PTS, 2).coeffs, jet_eval(differentiate(F, 1), PTS, 2).coeffs)
    assert parse(D.to_sexpr()).to_sexpr() == D.to_sexpr()


def test_linear_form_and_structure():
    L = linear_form([0.0, 1.0])
    assert isinstance(L, Var) and L.index == 2
    assert is_zero(linear_form([0.0, 0.0]))
    assert is_constant(parse("(add (const 1) (const 2))"))
    assert not is_constant(parse("(var 1)"))
    assert np.allclose(evaluate(linear_form([0.5, -2.0]), PTS), 0.5 * PTS[:, 0] - 2 * PTS[:, 1])


@pytest.mark.parametrize("bad", ["(add (var 1)", "(frob 1)", "(var x)", "", "(pow (var 1) 1.5)", "1 2"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse(bad)


def test_division_by_zero_is_reported():
    with pytest.raises(EvaluationError):
        evaluate(parse("(div (const 1) (var 1))"), np.array([[0.0, 1.0]]))


def test_as_expression_accepts_numbers_and_text():
    assert evaluate(as_expression(2.5), PTS[:1])[0] == 2.5
    assert as_expression("(var 1)").to_sexpr() == "(var 1)"
