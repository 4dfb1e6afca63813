from math import factorial

import numpy as np
import pytest

from bfdarcy.quadrature import collapsed_rule, edge_rule, triangle_rule


def monomial(a, b):
    # int_{unit triangle} x^a y^b
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 4, 8, 12])
def test_triangle_rules_exact(degree):
    bary, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(bary >= -1e-14)
    np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-14)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.sum(w * x ** a * y ** b)
            assert approx == pytest.approx(monomial(a, b), abs=1e-14), (a, b)


def test_rule8_is_not_exact_at_degree_10():
    bary, w = triangle_rule(8)
    x = bary[:, 1]
    assert abs(0.5 * np.sum(w * x ** 10) - monomial(10, 0)) > 1e-10


@pytest.mark.parametrize("degree", [12, 20])
def test_collapsed_rule(degree):
    bary, w = collapsed_rule(degree)
    x, y = bary[:, 1], bary[:, 2]
    for a, b in [(degree, 0), (0, degree), (degree // 2, degree // 2), (3, 5)]:
        assert 0.5 * np.sum(w * x ** a * y ** b) == pytest.approx(monomial(a, b), rel=1e-12)


@pytest.mark.parametrize("n", [2, 5, 7])
def test_edge_rule(n):
    s, w = edge_rule(n)
    for k in range(2 * n):
        assert np.sum(w * s ** k) == pytest.approx(1.0 / (k + 1), abs=1e-15)
