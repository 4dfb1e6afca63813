"""Quadrature rules on the reference triangle and on line segments.

Triangle rules are returned in barycentric form: an ``(nq, 3)`` array of
barycentric coordinates and an ``(nq,)`` array of weights summing to one, so
that ``|T| * sum(w * f(x(bary)))`` approximates the integral over ``T``.
Edge rules use the parameter ``s`` in ``[0, 1]`` with weights summing to one.
"""
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["triangle_rule", "edge_rule", "collapsed_rule"]


def _orbit3(a):
    c = 1.0 - 2.0 * a
    return [(c, a, a), (a, c, a), (a, a, c)]


def _orbit6(a, b):
    return sorted(set(permutations((a, b, 1.0 - a - b))))


def _build(groups):
    pts, wts = [], []
    for w, orbit in groups:
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    return np.array(pts), np.array(wts)


# Symmetric rules (Dunavant): degree 2 (3 pts), degree 4 (6 pts), degree 8 (16 pts).
_RULE2 = _build([(1.0 / 3.0, [(0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)])])
_RULE4 = _build([
    (0.223381589678011, _orbit3(0.445948490915965)),
    (0.109951743655322, _orbit3(0.091576213509771)),
])
_RULE8 = _build([
    (0.144315607677787, [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]),
    (0.095091634267285, _orbit3(0.459292588292723)),
    (0.103217370534718, _orbit3(0.170569307751760)),
    (0.032458497623198, _orbit3(0.050547228317031)),
    (0.027230314174435, _orbit6(0.263112829634638, 0.008394777409958)),
])


@lru_cache(maxsize=None)
def collapsed_rule(degree):
    """Conical product (Duffy) rule exact for polynomials of the given degree.

    Built from Gauss-Jacobi points in the collapsed direction, so it works
    for any degree; used for error norms and as a brute-force oracle.
    """
    n = degree // 2 + 1
    xg, wg = np.polynomial.legendre.leggauss(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xg + 1.0)
    t = 0.5 * (xj + 1.0)
    # x = s (1 - t), y = t ; Jacobian (1 - t) absorbed by the Jacobi weight
    S, Tt = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wg, wj) / 8.0
    x = (S * (1.0 - Tt)).ravel()
    y = Tt.ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    w = W.ravel()
    return bary, w / w.sum()


def triangle_rule(degree):
    """Return ``(bary, weights)`` exact for total degree ``degree``."""
    if degree <= 2:
        return _RULE2
    if degree <= 4:
        return _RULE4
    if degree <= 8:
        return _RULE8
    return collapsed_rule(degree)


@lru_cache(maxsize=None)
def edge_rule(npoints):
    """Gauss-Legendre rule on ``[0, 1]`` with ``npoints`` points."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w
