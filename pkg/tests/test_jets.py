import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as npoly

from rinverse.jets import (
    MAX_ORDER,
    DomainError,
    InsufficientOrderError,
    Jet,
    JetError,
    ShapeError,
    constant_jet,
    directional_derivative,
    jet_compose_univariate,
    jet_space,
    smoothstep_polynomial,
    univariate_series,
    variable_jet,
)

finite = st.floats(-2, 2, allow_nan=False)


def poly2_jet(C, point, m):
    """Exact jet of the 2-D polynomial sum C[i, j] x^i y^j, via numpy.polynomial."""
    sp = jet_space(2, m)
    out = np.zeros(sp.size, dtype=complex)
    for k, (a, b) in enumerate(sp.indices):
        D = npoly.polyder(npoly.polyder(C, a, axis=0), b, axis=1) if C.size else C
        out[k] = npoly.polyval2d(point[0], point[1], D) / (math.factorial(a) * math.factorial(b))
    return out


def jet_of_poly2(C, point, m):
    """Build the same polynomial from jet arithmetic."""
    x = variable_jet(0, point, m)
    y = variable_jet(1, point, m)
    acc = constant_jet(0.0, point, m)
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            term = constant_jet(C[i, j], point, m)
            for _ in range(i):
                term = term * x
            for _ in range(j):
                term = term * y
            acc = acc + term
    return acc


def test_space_sizes_and_order():
    sp = jet_space(2, 3)
    assert sp.size == 10
    assert sp.indices[:3] == [(0, 0), (1, 0), (0, 1)]
    assert all(sum(a) <= sum(b) for a, b in zip(sp.indices, sp.indices[1:]))
    assert jet_space(3, 2).size == math.comb(5, 2)


def test_space_rejects_bad_arguments():
    with pytest.raises(JetError):
        jet_space(0, 2)
    with pytest.raises(JetError):
        jet_space(2, 50)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(finite, min_size=9, max_size=9),
    finite,
    finite,
    st.integers(0, MAX_ORDER),
)
def test_polynomial_jets_match_exact_derivatives(cs, x0, y0, m):
    C = np.array(cs).reshape(3, 3)
    point = np.array([x0, y0])
    got = jet_of_poly2(C, point, m).coeffs
    assert np.allclose(got, poly2_jet(C, point, m), atol=1e-9, rtol=1e-9)


def test_univariate_product_matches_polymul():
    a = np.array([1.0, -2.0, 0.5, 3.0])
    b = np.array([0.25, 1.0, -1.0, 2.0])
    sp = jet_space(1, 3)
    got = sp.mul(a.astype(complex), b.astype(complex))
    assert np.allclose(got, npoly.polymul(a, b)[:4])


jets_2d = st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
                   min_size=10, max_size=10)


@settings(max_examples=50, deadline=None)
@given(jets_2d, jets_2d, jets_2d)
def test_ring_laws(a, b, c):
    p = np.array([0.3, -0.7])
    A, B, Cj = (Jet(np.array(v), p, 3) for v in (a, b, c))
    assert np.allclose((A * B).coeffs, (B * A).coeffs)
    assert np.allclose(((A * B) * Cj).coeffs, (A * (B * Cj)).coeffs, atol=1e-9)
    assert np.allclose((A * (B + Cj)).coeffs, (A * B + A * Cj).coeffs, atol=1e-9)
    one = constant_jet(1.0, p, 3)
    assert np.array_equal((A * one).coeffs, A.coeffs)


@pytest.mark.parametrize(
    "kernel, f, derivs",
    [
        ("exp", np.exp, lambda u, k: np.exp(u)),
        ("sin", np.sin, lambda u, k: np.sin(u + k * np.pi / 2)),
        ("cos", np.cos, lambda u, k: np.cos(u + k * np.pi / 2)),
        ("recip", lambda u: 1 / u, lambda u, k: (-1) ** k * math.factorial(k) / u ** (k + 1)),
    ],
)
def test_univariate_series_closed_forms(kernel, f, derivs):
    u = np.array([0.4, 1.3, -0.9])
    s = univariate_series(kernel, u.astype(complex), 5)
    for k in range(6):
        assert np.allclose(s[..., k], derivs(u, k) / math.factorial(k), rtol=1e-12)


def test_real_power_series():
    r = math.sqrt(2)
    u = np.array([0.2, 0.7, 2.0])
    s = univariate_series("powr", u.astype(complex), 4, r)
    for k in range(5):
        falling = math.prod(r - i for i in range(k))
        assert np.allclose(s[..., k], falling * u ** (r - k) / math.factorial(k), rtol=1e-12)


def test_real_power_guard_and_domain():
    s = univariate_series("powr", np.array([-1.0, 0.0]).astype(complex), 1, math.sqrt(2))
    assert np.all(s == 0)
    with pytest.raises(DomainError):
        univariate_series("powr", np.array([0.0]).astype(complex), 2, math.sqrt(2))


def test_rexp_series_against_finite_differences():
    f = lambda u: np.where(u > 0, np.exp(-1 / np.where(u > 0, u, 1)), 0.0)
    u = np.array([0.3, 0.8])
    s = univariate_series("rexp", u.astype(complex), 2)
    h = 1e-4
    assert np.allclose(s[..., 0], f(u))
    assert np.allclose(s[..., 1], (f(u + h) - f(u - h)) / (2 * h), rtol=1e-7)
    assert np.allclose(2 * s[..., 2], (f(u + h) - 2 * f(u) + f(u - h)) / h**2, rtol=1e-5)
    flat = univariate_series("rexp", np.array([0.0, -0.5]).astype(complex), 4)
    assert np.all(flat == 0)


@pytest.mark.parametrize("k", [1, 2, 4, 6])
def test_smoothstep_is_ck_at_both_ends(k):
    P = smoothstep_polynomial(k)
    assert P(0) == pytest.approx(0, abs=1e-12)
    assert P(1) == pytest.approx(1, abs=1e-12)
    for d in range(1, k + 1):
        D = P.deriv(d)
        assert D(0) == pytest.approx(0, abs=1e-9)
        assert D(1) == pytest.approx(0, abs=1e-9)
    xs = np.linspace(0, 1, 101)
    assert np.all(np.diff(P(xs)) >= -1e-12)


def test_compose_matches_closed_form_chain_rule():
    p = np.array([0.5, -0.25])
    x, y = variable_jet(0, p, 2), variable_jet(1, p, 2)
    g = jet_compose_univariate("sin", x * y)
    # D_x sin(xy) = y cos(xy), D_xx = -y^2 sin(xy), D_xy = cos(xy) - xy sin(xy)
    xy = p[0] * p[1]
    assert g.derivative_value((1, 0)) == pytest.approx(p[1] * np.cos(xy))
    assert g.derivative_value((2, 0)) == pytest.approx(-p[1] ** 2 * np.sin(xy))
    assert g.derivative_value((1, 1)) == pytest.approx(np.cos(xy) - xy * np.sin(xy))


def test_partial_and_directional():
    p = np.array([[0.1, 0.2], [1.0, -1.0]])
    x, y = variable_jet(0, p, 3), variable_jet(1, p, 3)
    f = x * x * y
    dx = f.partial(0)
    assert dx.order == 2
    assert np.allclose(dx.value, 2 * p[:, 0] * p[:, 1])
    v = np.array([0.6, 0.8])
    assert np.allclose(f.directional(v).value, directional_derivative(f, v))
    assert np.allclose(directional_derivative(f, v), 0.6 * 2 * p[:, 0] * p[:, 1] + 0.8 * p[:, 0] ** 2)


def test_derivative_table_roundtrip():
    sp = jet_space(2, 4)
    c = np.arange(sp.size, dtype=complex)
    assert np.allclose(sp.from_derivatives(sp.to_derivatives(c)), c)


def test_errors():
    p = np.array([0.0, 0.0])
    a = constant_jet(1.0, p, 2)
    with pytest.raises(ShapeError):
        a + constant_jet(1.0, p, 3)
    with pytest.raises(ShapeError):
        a + constant_jet(1.0, np.array([1.0, 0.0]), 2)
    with pytest.raises(ShapeError):
        Jet(np.zeros(4), p, 2)
    with pytest.raises(InsufficientOrderError):
        constant_jet(1.0, p, 0).partial(0)
    with pytest.raises(InsufficientOrderError):
        a.truncate(3)


def test_truncate_keeps_prefix():
    p = np.array([0.2, 0.3])
    f = jet_compose_univariate("exp", variable_jet(0, p, 4) * variable_jet(1, p, 4))
    t = f.truncate(2)
    assert t.order == 2
    assert np.array_equal(t.coeffs, f.coeffs[: jet_space(2, 2).size])
