"""
integrals.py

Quadrature kernel shared by the functionals:
- closed forms for the integral of 1/l over segments and triangles, l affine and positive
- Gauss-Legendre rules on intervals and collapsed rules on triangles
- exact integration of polynomials over facet polygons
"""
import logging
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from errors import QuadratureNoConvergence

logger = logging.getLogger(__name__)


def _log_slope(a, b):
    """(ln b - ln a) / (b - a), stable when a and b are close."""
    if b == a:
        return 1.0 / a
    return np.log1p((b - a) / a) / (b - a)


def _xlogx_dd1(a, b):
    # first divided difference of x ln x
    return np.log(b) + a * _log_slope(a, b)


def _xlogx_dd2(a, b, c):
    """Second divided difference of x ln x at three positive nodes."""
    a, b, c = sorted((a, b, c))
    if c - a > 1e-4 * c:
        return (_xlogx_dd1(b, c) - _xlogx_dd1(a, b)) / (c - a)
    # Taylor expansion around the middle node
    ha, hc = a - b, c - b
    return 1.0 / (2 * b) - (ha + hc) / (6 * b ** 2) + (ha * ha + hc * hc + ha * hc) / (12 * b ** 3)


def inverse_linear_segment(length, l0, l1):
    """Integral of 1/l over a segment of the given length, l affine with end values l0, l1."""
    return length * _log_slope(l0, l1)


def _triangle_fallback(area, l0, l1, l2, tol):
    def integrand(v, u):
        return 1.0 / (l0 + u * (l1 - l0) + v * (l2 - l0))

    value, error = integrate.dblquad(integrand, 0.0, 1.0, 0.0, lambda u: 1.0 - u, epsrel=tol)
    if not np.isfinite(value) or error > 100 * tol * abs(value):
        raise QuadratureNoConvergence(f"triangle integral did not converge (estimate {value}, error {error})")
    return 2.0 * area * value


def inverse_linear_triangle(area, l0, l1, l2, tol=1e-7):
    """Integral of 1/l over a triangle: 2|T| times the second divided difference of x ln x."""
    value = 2.0 * area * _xlogx_dd2(l0, l1, l2)
    if np.isfinite(value):
        return value
    logger.debug("closed form failed at %s, using adaptive quadrature", (l0, l1, l2))
    return _triangle_fallback(area, l0, l1, l2, tol)


def inverse_linear_integral(vertices, values, tol=1e-7):
    """Integral of 1/l over a convex segment (n = 2) or polygon (n = 3).

    `vertices` is the ordered boundary cycle in ambient coordinates and `values`
    holds the positive affine function l at those vertices.
    """
    vertices = np.asarray(vertices, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise QuadratureNoConvergence(f"linear form is not positive on the piece: min {values.min()}")
    n = vertices.shape[1]
    if n == 2:
        return inverse_linear_segment(float(np.linalg.norm(vertices[1] - vertices[0])), values[0], values[1])
    total = 0.0
    for k in range(1, len(vertices) - 1):
        area = 0.5 * float(np.linalg.norm(np.cross(vertices[k] - vertices[0], vertices[k + 1] - vertices[0])))
        if area > 0:
            total += inverse_linear_triangle(area, values[0], values[k], values[k + 1], tol)
    return total


@lru_cache(maxsize=None)
def unit_interval_rule(order):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Collapsed Gauss rule on the reference triangle {s, t >= 0, s + t <= 1}."""
    u, wu = unit_interval_rule(order)
    v, wv = unit_interval_rule(order)
    U, V = np.meshgrid(u, v, indexing='ij')
    W = np.outer(wu, wv) * U
    return np.column_stack([(U * (1 - V)).ravel(), (U * V).ravel()]), W.ravel()


def gauss_pieces(func, breakpoints, order):
    """Sum of fixed-order Gauss rules over consecutive breakpoint intervals of a scalar function."""
    nodes, weights = unit_interval_rule(order)
    total = 0.0
    for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
        if hi <= lo:
            continue
        width = hi - lo
        total += width * sum(w * func(lo + width * t) for t, w in zip(nodes, weights))
    return total


def polynomial_integral(vertices, func, degree):
    """Integrate a polynomial of the given degree over a segment or convex polygon.

    `func` maps an (m, n) array of ambient points to m values. Exact up to
    rounding for polynomials of degree <= `degree`.
    """
    vertices = np.asarray(vertices, dtype=float)
    n = vertices.shape[1]
    order = degree // 2 + 2
    if n == 2:
        t, w = unit_interval_rule(order)
        p0, p1 = vertices[0], vertices[1]
        points = p0 + t[:, None] * (p1 - p0)
        return float(np.linalg.norm(p1 - p0) * np.dot(w, func(points)))
    ref, w = triangle_rule(order)
    total = 0.0
    v0 = vertices[0]
    for p, q in zip(vertices[1:-1], vertices[2:]):
        area = 0.5 * float(np.linalg.norm(np.cross(p - v0, q - v0)))
        points = v0 + ref[:, :1] * (p - v0) + ref[:, 1:] * (q - v0)
        total += 2.0 * area * float(np.dot(w, func(points)))
    return total


def adaptive_quad(func, lo, hi, points, limit, tol):
    """scipy.integrate.quad with interior breakpoints; raises when the error estimate is not met."""
    inner = sorted(p for p in set(points) if lo < p < hi)
    value, error, info = integrate.quad(func, lo, hi, points=inner or None, limit=max(limit, 2 * len(inner) + 10),
                                        epsabs=tol * 1e-3, epsrel=tol, full_output=1)[:3]
    if error > 100 * tol * max(abs(value), 1.0):
        raise QuadratureNoConvergence(f"adaptive quadrature on [{lo}, {hi}] stopped at error {error} "
                                      f"after {info.get('neval', '?')} evaluations")
    return value
