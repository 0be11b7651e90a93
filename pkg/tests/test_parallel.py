import logging

import numpy as np
import pytest

from data_gen import box_perturbation, dilation_perturbation, facet_bump, preset, sample_rng
from errors import DimensionMismatch, NotSingleDirection, NotVolumeNormalized, ParallelityLost
from parallel import (PerturbationVector, ab_decomposition, delta_identity, divergence_identity_residual,
                      facet_area_gap, facet_symdiff, minkowski_closure_residual, neighbor_indices,
                      perturb, perturbed_facet_bound_check, project_to_parallel, renormalize_volume,
                      slab_domination_check)
from polytope import hausdorff_distance, symdiff_volume


def test_perturbation_vector_validation(square):
    with pytest.raises(DimensionMismatch):
        PerturbationVector([0.1, 0.2], square)
    with pytest.raises(ParallelityLost):
        PerturbationVector([1.0, 0.0, 0.0, 0.0], square)
    assert PerturbationVector.zeros(square).norm_inf == 0.0


def test_single_facet_perturbation_of_the_square(square):
    t = 0.3
    P = perturb(square, [t, 0.0, 0.0, 0.0])
    assert P.volume == pytest.approx(4.0 + 2 * t)
    assert np.allclose(P.facet_areas, [2.0, 2.0, 2.0 + t, 2.0 + t])
    assert np.allclose(facet_area_gap(P), [0.0, 0.0, t, t])
    Q = perturb(square, np.zeros(4))
    assert facet_symdiff(P, Q, 2) == pytest.approx(t)
    assert facet_symdiff(P, Q, 0) == pytest.approx(0.0, abs=1e-12)


def test_trapezoid_loses_its_short_side(trapezoid):
    perturb(trapezoid, [0.5, 0.0, 0.0, 0.0])
    with pytest.raises(ParallelityLost):
        perturb(trapezoid, [0.7, 0.0, 0.0, 0.0])


def test_renormalize_volume(hexagon):
    P = renormalize_volume(perturb(hexagon, [0.1, -0.05, 0.02, 0.0, 0.03, -0.04]))
    assert P.volume == pytest.approx(hexagon.volume, rel=1e-12)
    assert np.allclose(P.offsets, P.base.offsets * (1 + P.entries))


def test_box_family_closed_forms(square):
    t = 0.1
    P = perturb(square, box_perturbation(square, t))
    identity = delta_identity(P)
    assert identity.direct == pytest.approx(t ** 2 / (2 * (1 + t)), rel=1e-10)
    assert identity.residual < 1e-12
    assert symdiff_volume(P.body, square.body) / 4.0 == pytest.approx(2 * t / (1 + t))
    assert hausdorff_distance(P.body, square.body) == pytest.approx(t)


def test_delta_identity_needs_volume_normalisation(square):
    with pytest.raises(NotVolumeNormalized):
        delta_identity(perturb(square, dilation_perturbation(square, 0.1)))


def test_delta_identity_on_random_samples(hexagon, cube, rng):
    for W in (hexagon, cube):
        for _ in range(5):
            P = renormalize_volume(perturb(W, rng.uniform(-0.1, 0.1, size=W.size)))
            identity = delta_identity(P)
            assert identity.residual <= 1e-10 * max(1.0, abs(identity.direct))


def test_minkowski_and_divergence_identities(hexagon, cube, rng):
    for W in (hexagon, cube):
        P = renormalize_volume(perturb(W, rng.uniform(-0.1, 0.1, size=W.size)))
        assert minkowski_closure_residual(P).passed
        zero = (0,) * (W.dim - 1)
        linear = (1,) + (0,) * (W.dim - 2)
        for i in range(W.size):
            assert divergence_identity_residual(P, i, {zero: 1.0}).passed
            assert divergence_identity_residual(P, i, {linear: 1.0, zero: 0.5}).passed


def test_neighbors(square, cube):
    Q = perturb(square, np.zeros(4))
    assert neighbor_indices(Q, 0) == frozenset({2, 3})
    assert neighbor_indices(perturb(cube, np.zeros(6)), 0) == frozenset({2, 3, 4, 5})


def test_perturbed_facet_bound(hexagon):
    P = perturb(hexagon, np.zeros(6))
    Q = perturb(hexagon, [0.08, 0.0, 0.0, 0.0, 0.0, 0.0])
    check = perturbed_facet_bound_check(P, Q, 0)
    assert check.passed
    # hexagon neighbors meet at obtuse angles, so no slab records
    assert {r.check for r in check.records} == {'perturbed_facet_bound', 'non_neighbor_zero'}
    with pytest.raises(NotSingleDirection):
        perturbed_facet_bound_check(P, perturb(hexagon, [0.08, 0.01, 0.0, 0.0, 0.0, 0.0]), 0)


def test_slab_family_on_the_trapezoid(trapezoid):
    P = perturb(trapezoid, np.zeros(4))
    Q = perturb(trapezoid, [0.0, 0.08, 0.0, 0.0])
    check = perturbed_facet_bound_check(P, Q, 1)
    slab = [r for r in check.records if r.check == 'slab_family']
    assert len(slab) == 2
    assert check.passed


def test_ab_decomposition_of_the_box(square, rng):
    t = 0.1
    P = perturb(square, box_perturbation(square, t))
    ab = ab_decomposition(P)
    assert ab.holds
    assert ab.coarea_residual < 1e-6
    assert list(ab.per_facet.columns) == ['facet', 'A', 'B']
    # K^a = [-u, u] x [-v, v]; A and B integrate 1 / |x|_inf over K \ K^a and K^a \ K
    u, v = 1 + t, 1 / (1 + t)
    assert ab.A == pytest.approx(8 - 8 * v + 4 * v * np.log(v), rel=1e-8)
    assert ab.B == pytest.approx(4 * v * np.log(u), rel=1e-8)
    points = rng.uniform([-u, -1.0], [u, 1.0], size=(400_000, 2))
    weight = 1.0 / np.max(np.abs(points), axis=1)
    in_K = np.all(np.abs(points) <= 1.0, axis=1)
    in_P = (np.abs(points[:, 0]) <= u) & (np.abs(points[:, 1]) <= v)
    box_area = 4 * u
    for exact, mask in ((ab.A, in_K & ~in_P), (ab.B, in_P & ~in_K)):
        samples = np.where(mask, weight, 0.0)
        estimate = box_area * samples.mean()
        stderr = box_area * samples.std() / np.sqrt(len(samples))
        assert abs(estimate - exact) <= 4 * stderr


def test_slab_domination(hexagon, trapezoid, rng):
    for W in (hexagon, trapezoid):
        P = renormalize_volume(perturb(W, rng.uniform(-0.1, 0.1, size=W.size)))
        for i in range(W.size):
            assert all(r.passed for r in slab_domination_check(P, i, samples=8))


def test_slab_skips_are_logged_once_per_facet(hexagon, caplog):
    P = perturb(hexagon, [0.05, -0.05, 0.0, 0.0, 0.0, -0.05])
    with caplog.at_level(logging.WARNING, logger='parallel'):
        assert slab_domination_check(P, 0, samples=20) == []
    skips = [r for r in caplog.records if r.getMessage().startswith('slab check skips facet 0')]
    assert len(skips) == 1


def test_projection_recovers_a_dilation(square):
    s = 0.1
    P = perturb(square, dilation_perturbation(square, s))
    projection = project_to_parallel(P.mesh, square)
    assert np.allclose(projection.a_star, s, atol=1e-6)
    assert projection.residual <= 1e-7
    assert project_to_parallel(P.mesh, square, initial=P.entries).iterations == 0


def test_octahedron_neighbors_share_a_vertex(octahedron):
    P = perturb(octahedron, np.zeros(8))
    # every facet but the opposite one touches facet 0
    assert neighbor_indices(P, 0) == frozenset(range(1, 7))


def test_unmoved_facets_have_zero_symmetric_difference(octahedron):
    rng = sample_rng(42, 95)
    for _ in range(50):
        a = rng.uniform(-0.1, 0.1, octahedron.size)
        i = int(rng.integers(octahedron.size))
        moved = a.copy()
        moved[i] += rng.uniform(-0.05, 0.05)
        check = perturbed_facet_bound_check(perturb(octahedron, a), perturb(octahedron, moved), i)
        assert check.passed, [r.to_dict() for r in check.records if not r.passed]


def test_coplanar_facets_equal_up_to_rounding(octahedron):
    a = np.linspace(-0.05, 0.05, octahedron.size)
    jittered = a.copy()
    jittered[7] += 1e-13
    P, Q = perturb(octahedron, a), perturb(octahedron, jittered)
    others = perturbed_facet_bound_check(P, Q, 7).others
    assert max(others.values()) == pytest.approx(0.0, abs=1e-9)
    assert facet_symdiff(P, P, 1) == pytest.approx(0.0, abs=1e-12)


def _assert_projection_recovers(W, draws=50):
    rng = sample_rng(42, 0)
    for _ in range(draws):
        a = rng.uniform(-0.05, 0.05, W.size)
        projection = project_to_parallel(perturb(W, a).mesh, W)
        assert np.max(np.abs(projection.a_star - a)) <= 1e-7
        assert projection.residual <= 1e-7


@pytest.mark.parametrize('name', ['square', 'hexagon', 'trapezoid'])
def test_projection_recovers_planar_parallel_polytopes(name):
    _assert_projection_recovers(preset(name))


@pytest.mark.slow
@pytest.mark.parametrize('name', ['cube', 'octahedron', 'hex-prism'])
def test_projection_recovers_parallel_polyhedra(name):
    _assert_projection_recovers(preset(name))


@pytest.mark.slow
def test_projection_of_a_bumped_cube(cube):
    E = facet_bump(cube, 0.05)
    projection = project_to_parallel(E, cube)
    assert projection.residual <= 1e-7
    assert projection.a_star[0] == projection.a_star.max()
    assert projection.a_star[0] > 0
