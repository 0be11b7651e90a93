import numpy as np
import pytest
from scipy import integrate

from errors import QuadratureNoConvergence
from integrals import (adaptive_quad, gauss_pieces, inverse_linear_integral, inverse_linear_segment,
                       inverse_linear_triangle, polynomial_integral, triangle_rule, unit_interval_rule)


def test_segment_closed_form():
    assert inverse_linear_segment(2.0, 1.0, 1.0) == pytest.approx(2.0)
    assert inverse_linear_segment(1.0, 1.0, 2.0) == pytest.approx(np.log(2.0))
    assert inverse_linear_segment(1.0, 2.0, 1.0) == pytest.approx(np.log(2.0))


def test_triangle_closed_form_matches_dblquad():
    area, l0, l1, l2 = 0.5, 1.0, 2.0, 3.0
    reference = integrate.dblquad(lambda v, u: 1.0 / (l0 + u * (l1 - l0) + v * (l2 - l0)), 0.0, 1.0,
                                  0.0, lambda u: 1.0 - u, epsabs=1e-13, epsrel=1e-13)[0]
    assert inverse_linear_triangle(area, l0, l1, l2) == pytest.approx(2 * area * reference, rel=1e-9)


def test_triangle_with_nearly_equal_values():
    assert inverse_linear_triangle(0.5, 2.0, 2.0, 2.0) == pytest.approx(0.25)
    close = inverse_linear_triangle(0.5, 1.0, 1.0 + 1e-9, 1.0 + 2e-9)
    assert close == pytest.approx(0.5, rel=1e-8)


def test_polygon_integral_of_constant_form():
    square = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    assert inverse_linear_integral(square, np.full(4, 4.0)) == pytest.approx(0.25)
    segment = np.array([[0.0, 0.0], [0.0, 3.0]])
    assert inverse_linear_integral(segment, [1.0, 1.0]) == pytest.approx(3.0)


def test_nonpositive_form_raises():
    with pytest.raises(QuadratureNoConvergence):
        inverse_linear_integral(np.array([[0.0, 0.0], [1.0, 0.0]]), [1.0, 0.0])


def test_gauss_rules():
    nodes, weights = unit_interval_rule(5)
    assert weights.sum() == pytest.approx(1.0)
    assert np.all((nodes > 0) & (nodes < 1))
    points, tri_weights = triangle_rule(4)
    assert tri_weights.sum() == pytest.approx(0.5)
    assert np.all(points.sum(axis=1) <= 1.0 + 1e-12)
    assert gauss_pieces(lambda x: x ** 3, [0.0, 1.0, 2.0], 3) == pytest.approx(4.0)


def test_polynomial_integral_is_exact():
    square = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    assert polynomial_integral(square, lambda p: p[:, 0] ** 2, 2) == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert polynomial_integral(square, lambda p: p[:, 0] ** 3 * p[:, 1], 4) == pytest.approx(1.0 / 8.0, rel=1e-12)
    segment = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert polynomial_integral(segment, lambda p: p[:, 0], 1) == pytest.approx(2.0)


def test_adaptive_quad_with_breakpoints():
    value = adaptive_quad(lambda x: abs(x - 0.3), 0.0, 1.0, [0.3, 2.0], 50, 1e-9)
    assert value == pytest.approx(0.045 + 0.245, rel=1e-9)
