import numpy as np
import pytest

from rinverse.expression import parse

CORPUS_TEXT = [
    "(const 1)",
    "(var 1)",
    "(mul (var 1) (var 2))",
    "(mul (exp (var 1)) (sin (var 2)))",
]


@pytest.fixture
def corpus():
    return [parse(t) for t in CORPUS_TEXT]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def central_difference(f, x, alpha, h=1e-4):
    """Second-order central difference for D^alpha with |alpha| <= 2.

    ``f`` maps an (k, n) array of points to (k,) values.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    axes = [i for i, a in enumerate(alpha) for _ in range(a)]

    def e(i):
        v = np.zeros(n)
        v[i] = h
        return v

    if len(axes) == 0:
        return f(x)
    if len(axes) == 1:
        i = axes[0]
        return (f(x + e(i)) - f(x - e(i))) / (2 * h)
    i, j = axes
    if i == j:
        return (f(x + e(i)) - 2 * f(x) + f(x - e(i))) / h**2
    return (f(x + e(i) + e(j)) - f(x + e(i) - e(j)) - f(x - e(i) + e(j))
            + f(x - e(i) - e(j))) / (4 * h**2)


# fourth-order central stencils (offsets, weights) for derivatives of order 1..3
_STENCIL4 = {
    0: ((0,), (1.0,)),
    1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1.0, 13 / 8, -13 / 8, 1.0, -1 / 8)),
}


def tensor_difference(f, x, alpha, h):
    """Fourth-order accurate D^alpha by tensor products of 1-D stencils."""
    x = np.asarray(x, dtype=float)
    terms = [((), 1.0)]
    for a in alpha:
        offs, ws = _STENCIL4[a]
        terms = [(o + (k,), w0 * w) for o, w0 in terms for k, w in zip(offs, ws)]
    acc = 0.0
    for off, w in terms:
        acc = acc + w * f(x + h * np.array(off, dtype=float))
    return acc / h ** sum(alpha)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
