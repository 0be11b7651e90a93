import numpy as np
import pytest

from anisotropy import (WulffShape, anisotropic_perimeter, coarea_gamma, deficit, fraenkel_asymmetry,
                        gamma_integral, gamma_sup, monte_carlo_gamma, oscillation_index, stability_report,
                        surface_gauge_integral)
from data_gen import box_perturbation, facet_bump, sample_rng
from errors import DegenerateError, DimensionMismatch
from parallel import perturb
from polytope import symdiff_volume


def test_surface_tension_and_gauge(square, hexagon):
    assert square.surface_tension(np.array([1.0, 0.0])) == pytest.approx(1.0)
    assert square.surface_tension(np.array([1.0, 1.0]) / np.sqrt(2.0)) == pytest.approx(np.sqrt(2.0))
    assert np.allclose(square.gauge(square.body.vertices), 1.0)
    assert np.allclose(hexagon.gauge(hexagon.body.vertices), 1.0)
    assert square.gauge(np.array([0.5, -0.25])) == pytest.approx(0.5)
    assert square.eccentricity == pytest.approx(1.0 / np.sqrt(2.0))


def test_redundant_wulff_halfspace_rejected():
    normals = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]]
    with pytest.raises(DegenerateError):
        WulffShape.from_arrays(normals, [1.0, 1.0, 1.0, 1.0, 5.0])


def test_wulff_shape_is_the_minimizer(square, cube, hexagon):
    assert anisotropic_perimeter(square.body, square) == pytest.approx(8.0)
    assert anisotropic_perimeter(cube.body, cube) == pytest.approx(24.0)
    for W in (square, cube, hexagon):
        assert abs(deficit(W.body, W)) < 1e-12
        assert deficit(W.body.scale(1.7).translate(np.full(W.dim, 0.3)), W) == pytest.approx(0.0, abs=1e-12)


def test_dimension_mismatch(square, cube):
    with pytest.raises(DimensionMismatch):
        deficit(cube.body, square)


def test_gamma_integral_of_the_wulff_shape(square, cube):
    # I(0) = n |K| / (n - 1)
    assert gamma_integral(square.body, square, np.zeros(2)) == pytest.approx(8.0, rel=1e-10)
    assert gamma_integral(cube.body, cube, np.zeros(3)) == pytest.approx(12.0, rel=1e-10)
    assert surface_gauge_integral(square.body, square, np.zeros(2)) == pytest.approx(8.0, rel=1e-10)


def test_cone_and_coarea_forms_agree(square, hexagon):
    y = np.array([0.2, -0.1])
    for W in (square, hexagon):
        cone = gamma_integral(W.body, W, y)
        assert coarea_gamma(W.body, W, y) == pytest.approx(cone, rel=1e-5)
        assert surface_gauge_integral(W.body, W, y) == pytest.approx(cone, rel=1e-8)


def test_monte_carlo_gamma_band(square):
    y = np.array([0.3, 0.1])
    estimate, stderr = monte_carlo_gamma(square.body, square, y, 200_000, np.random.default_rng(11))
    assert abs(estimate - gamma_integral(square.body, square, y)) <= 5 * stderr


def test_gamma_sup_of_the_square(square):
    result = gamma_sup(square.body, square)
    assert result.value == pytest.approx(8.0, rel=1e-10)
    assert np.allclose(result.y_star, 0.0, atol=1e-6)
    osc = oscillation_index(square.body, square)
    assert osc.beta == pytest.approx(0.0, abs=1e-6)


def test_asymmetry_of_the_box_family(square):
    t = 0.2
    P = perturb(square, box_perturbation(square, t))
    assert P.volume == pytest.approx(4.0)
    assert deficit(P.body, square) == pytest.approx(t ** 2 / (2 * (1 + t)), rel=1e-10)
    assert fraenkel_asymmetry(P.body, square).value == pytest.approx(2 * t / (1 + t), rel=1e-6)
    assert fraenkel_asymmetry(square.body, square).value == pytest.approx(0.0, abs=1e-12)


def test_stability_report_flags_exact_minimizer(square):
    report = stability_report(square.body, square)
    assert 'exact-minimizer' in report.flags
    assert report.ratio is None
    doc = report.to_dict()
    assert set(doc) == {'deficit', 'asymmetry', 'gamma', 'beta', 'beta_surface', 'ratio', 'flags'}
    assert doc['gamma']['value'] == pytest.approx(8.0)


def test_stability_report_of_a_box(square):
    t = 0.1
    P = perturb(square, box_perturbation(square, t))
    report = stability_report(P.body, square)
    assert report.deficit == pytest.approx(t ** 2 / (2 * (1 + t)), rel=1e-10)
    # β² >= 0, so the ratio sits above α² / δ = 8 / (1 + t)
    assert report.ratio >= 8 / (1 + t) - 1e-6
    assert np.isfinite(report.ratio)


@pytest.mark.slow
def test_cube_gamma_sup(cube):
    result = gamma_sup(cube.body, cube)
    assert result.value == pytest.approx(12.0, rel=1e-10)


@pytest.mark.parametrize('t', [0.05, 0.1])
def test_box_oscillation_closed_form(square, t):
    P = perturb(square, box_perturbation(square, t))
    osc = oscillation_index(P.body, square)
    # sup of ∫ 1 / |x - y|_inf over [-u, u] x [-v, v] sits at y = 0
    assert osc.beta_sq == pytest.approx(((1 + t) ** 2 - 1 - 2 * np.log(1 + t)) / (2 * (1 + t)), rel=1e-6)
    assert osc.beta_sq == pytest.approx(osc.beta_sq_surface, abs=1e-5)
    assert np.linalg.norm(osc.gamma.y_star) <= 10 * t


def test_gamma_sup_is_translation_equivariant(square):
    E = facet_bump(square, 0.2)
    v = np.array([0.3, -0.2])
    here, there = gamma_sup(E, square), gamma_sup(E.translate(v), square)
    assert there.value == pytest.approx(here.value, rel=1e-8)
    assert np.allclose(there.y_star, here.y_star + v, atol=1e-4)


@pytest.mark.slow
def test_gamma_sup_is_holder_continuous(hexagon):
    rng = sample_rng(42, 0)
    bound = hexagon.dim * hexagon.volume / (hexagon.dim - 1)
    bodies = [perturb(hexagon, rng.uniform(-0.1, 0.1, hexagon.size)).body for _ in range(51)]
    values = [gamma_sup(E, hexagon).value for E in bodies]
    for k in range(50):
        gap = symdiff_volume(bodies[k], bodies[k + 1])
        assert abs(values[k] - values[k + 1]) <= bound * gap ** 0.5 + 1e-9
