"""
parallel.py

Parallel polytopes K^a = ⋂ {<x, nu_i> <= d_i (1 + a_i)} and the facet machinery
built on them: volume renormalisation, facet comparisons, the exact deficit
identity, the facet divergence identity, the A/B co-area split with its slab
estimate, and the cone-area projection of a body onto the parallel family.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd
from scipy.spatial import ConvexHull

from anisotropy import (best_translation, boundary_cone_pieces, deficit, facet_slice_area, gamma_integral,
                        oscillation_index, slice_breakpoints)
from errors import (DimensionMismatch, IndexOutOfRange, NoConvergence, NotSingleDirection, NotVolumeNormalized,
                    ParallelityLost)
from integrals import gauss_pieces, polynomial_integral
from polytope import BodyMesh, as_body, polytope_from_inequalities, section_inequalities
from records import ResidualRecord
from settings import DEFAULT_TOLERANCES

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PerturbationVector:
    entries: np.ndarray
    base: object

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float).ravel()
        object.__setattr__(self, 'entries', entries)
        if entries.size != self.base.size:
            raise DimensionMismatch(f"perturbation has {entries.size} entries, base has {self.base.size} facets")
        if self.norm_inf >= 1:
            raise ParallelityLost(f"|a|_inf = {self.norm_inf:.6g} must stay below 1")

    @property
    def norm_inf(self):
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0

    @classmethod
    def zeros(cls, base):
        return cls(np.zeros(base.size), base)


@dataclass(frozen=True, eq=False)
class ParallelPolytope:
    base: object
    a: PerturbationVector
    body: object

    @property
    def entries(self):
        return self.a.entries

    @property
    def offsets(self):
        return self.base.offsets * (1.0 + self.entries)

    @cached_property
    def facet_areas(self):
        return self.body.facet_areas()

    @property
    def volume(self):
        return self.body.volume

    @property
    def dim(self):
        return self.body.dim

    @cached_property
    def mesh(self):
        return BodyMesh.from_polytope(self.body)

    @cached_property
    def M_phi(self):
        return float(np.max(np.linalg.norm(self.body.vertices, axis=1)))

    def to_dict(self):
        return {'base': self.base.to_dict(), 'a': self.entries.tolist(), 'polytope': self.body.to_dict()}


def perturb(W, a, tol=DEFAULT_TOLERANCES):
    """K^a for the base W; every facet of K must survive."""
    a = a if isinstance(a, PerturbationVector) else PerturbationVector(a, W)
    offsets = W.offsets * (1.0 + a.entries)
    body = polytope_from_inequalities(W.normals, offsets, tol)
    if body is None:
        raise ParallelityLost(f"K^a is empty or flat for a = {a.entries.tolist()}")
    lost = [k for k in range(W.size) if body.facet(k) is None]
    if lost:
        raise ParallelityLost(f"facets {lost} vanish for a = {np.round(a.entries, 12).tolist()}")
    return ParallelPolytope(W, a, body)


def renormalize_volume(P):
    """Dilate K^a to the volume of K: a'_i = lambda (1 + a_i) - 1."""
    W = P.base
    lam = (W.volume / P.volume) ** (1.0 / W.dim)
    if lam == 1.0:
        return P
    entries = lam * (1.0 + P.entries) - 1.0
    if np.max(np.abs(entries)) >= 1:
        raise ParallelityLost(f"renormalized perturbation leaves the unit ball: {entries.tolist()}")
    return ParallelPolytope(W, PerturbationVector(entries, W), P.body.scale(lam))


def _require_normalized(P, tol=1e-9):
    if abs(P.volume - P.base.volume) > tol * P.base.volume:
        raise NotVolumeNormalized(f"|K^a| = {P.volume:.12g} differs from |K| = {P.base.volume:.12g}")


def _check_pair(P, Q, i):
    if P.base is not Q.base and (P.base.size != Q.base.size or not np.allclose(P.base.normals, Q.base.normals)):
        raise DimensionMismatch("parallel polytopes have different bases")
    if not 0 <= i < P.base.size:
        raise IndexOutOfRange(f"facet index {i} outside 0..{P.base.size - 1}")


def _coplanar_symdiff(first, second, basis):
    """Measure of the symmetric difference of two convex facets lying in one plane."""
    A, B = first @ basis, second @ basis
    k = basis.shape[1]
    if k == 1:
        lo, hi = max(A.min(), B.min()), min(A.max(), B.max())
        return float(np.ptp(A) + np.ptp(B) - 2.0 * max(0.0, hi - lo))
    hulls = [ConvexHull(X) for X in (A, B)]
    parts = [polytope_from_inequalities(h.equations[:, :-1], -h.equations[:, -1]) for h in hulls]
    both = polytope_from_inequalities(np.vstack([h.equations[:, :-1] for h in hulls]),
                                      np.concatenate([-h.equations[:, -1] for h in hulls]))
    return float(sum(p.volume for p in parts if p is not None) - 2.0 * (both.volume if both is not None else 0.0))


def facet_symdiff(P, Q, i):
    """|F_i^a Δ (F_i^a' + u_i)| with u_i = d_i (a_i - a'_i) nu_i."""
    _check_pair(P, Q, i)
    W = P.base
    shift = W.offsets[i] * (P.entries[i] - Q.entries[i]) * W.normals[i]
    return _coplanar_symdiff(P.body.facet(i).vertices, Q.body.facet(i).vertices + shift, W.plane_bases[i])


def facet_area_gap(P):
    return np.abs(P.facet_areas - P.base.facet_areas)


@dataclass(frozen=True)
class IdentityResult:
    direct: float
    identity: float

    @property
    def residual(self):
        return abs(self.direct - self.identity)


def delta_identity(P):
    """δ(K^a) directly and as -(1/(n|K|)) Σ d_i a_i m^a_i."""
    _require_normalized(P)
    W = P.base
    direct = deficit(P.body, W)
    identity = -float(np.sum(W.offsets * P.entries * P.facet_areas)) / (W.dim * W.volume)
    return IdentityResult(direct, identity)


def _polynomial(phi, basis):
    degree = max((sum(e) for e in phi), default=0)

    def evaluate(points):
        s = points @ basis
        return sum(c * np.prod(s ** np.asarray(e), axis=1) for e, c in phi.items())

    return evaluate, degree


def divergence_identity_residual(P, i, phi):
    """Residual of ∫_{F_i} phi = Σ_{j != i} cos θ_ij ∫_{F_j} phi.

    `phi` maps exponent tuples over the coordinates of nu_i's orthogonal frame
    to coefficients, so it is constant along nu_i.
    """
    _check_pair(P, P, i)
    W = P.base
    func, degree = _polynomial(phi, W.plane_bases[i])
    lhs = polynomial_integral(P.body.facet(i).vertices, func, degree)
    rhs = 0.0
    for j in range(W.size):
        if j != i:
            cos = -float(W.normals[i] @ W.normals[j])
            rhs += cos * polynomial_integral(P.body.facet(j).vertices, func, degree)
    return ResidualRecord.identity('divergence_identity', lhs, rhs, 1e-12, abs(lhs) + abs(rhs) + 1.0,
                                   detail=f"facet {i}, degree {degree}")


def minkowski_closure_residual(P):
    """Worst |m_i - Σ_{j != i} cos θ_ij m_j| over facets, relative to the largest facet."""
    W = P.base
    m = P.facet_areas
    cos = -(W.normals @ W.normals.T)
    np.fill_diagonal(cos, 0.0)
    gaps = np.abs(m - cos @ m)
    k = int(np.argmax(gaps))
    return ResidualRecord.identity('minkowski_closure', m[k], float(cos[k] @ m), 1e-12, float(m.max()),
                                   detail=f"facet {k}")


@dataclass(frozen=True, eq=False)
class ABDecomposition:
    A: float
    B: float
    bound_rhs: float
    beta_sq: float
    delta: float
    coarea_residual: float
    per_facet: pd.DataFrame = field(repr=False)

    @property
    def holds(self):
        return self.beta_sq <= self.bound_rhs + 1e-5


def _ab_nodes(lo, hi, extra):
    return [lo] + sorted(r for r in set(extra) if lo < r < hi) + [hi]


def ab_decomposition(P, tol=DEFAULT_TOLERANCES, beta_sq=None):
    """A (mass of K outside K^a) and B (mass of K^a outside K) by slices of r F_i."""
    _require_normalized(P)
    W = P.base
    n = W.dim
    a = P.entries
    cells = (P.body,)
    events = slice_breakpoints(cells, W, r_max=2.0) + (1.0 + a).tolist()
    lo = float(np.clip(np.min(1.0 + a), 0.0, 1.0))
    rows = []
    for i in range(W.size):
        d_i, m_i = W.offsets[i], W.facet_areas[i]
        A_i = B_i = 0.0
        if lo < 1.0:
            A_i = gauss_pieces(
                lambda r: d_i / r * (r ** (n - 1) * m_i - facet_slice_area(cells, W, i, r, tol=tol)),
                _ab_nodes(lo, 1.0, events), tol.gauss_order)
        if a[i] > 0:
            B_i = gauss_pieces(lambda r: d_i / r * facet_slice_area(cells, W, i, r, tol=tol),
                               _ab_nodes(1.0, 1.0 + a[i], events), tol.gauss_order)
        rows.append({'facet': i, 'A': A_i, 'B': B_i})
    per_facet = pd.DataFrame(rows, columns=['facet', 'A', 'B'])
    A, B = float(per_facet['A'].sum()), float(per_facet['B'].sum())
    delta = deficit(P.body, W)
    if beta_sq is None:
        beta_sq = oscillation_index(P.body, W, tol).beta_sq
    coarea = n * W.volume / (n - 1) - gamma_integral(P.body, W, np.zeros(n), tol)
    result = ABDecomposition(A, B, delta + (n - 1) * (A - B) / (n * W.volume), float(beta_sq), delta,
                             abs((A - B) - coarea), per_facet)
    if not result.holds:
        logger.warning("beta^2 = %.6g exceeds the A/B bound %.6g", result.beta_sq, result.bound_rhs)
    return result


def _violation_area(W, i, j, r, a):
    # part of r F_i beyond the perturbed plane of facet j
    normals = np.vstack([W.normals, -W.normals[j]])
    offsets = np.append(r * W.offsets, -W.offsets[j] * (1.0 + a[j]))
    restricted = section_inequalities(normals, offsets, W.normals[i], r * W.offsets[i], W.plane_bases[i])
    if restricted is None:
        return 0.0
    part = polytope_from_inequalities(*restricted)
    return 0.0 if part is None else part.volume


def slab_domination_check(P, i, samples=20, tol=DEFAULT_TOLERANCES):
    """Slices of r F_i outside K^a against the slab bound, at `samples` radii of A's range."""
    W = P.base
    n = W.dim
    a = P.entries
    lo, hi = float(np.clip(np.min(1.0 + a), 0.0, 1.0)), min(1.0, 1.0 + a[i])
    M = W.M_phi
    records = []
    skipped, obtuse_pairs = [], set()
    for k in range(samples):
        r = lo + (hi - lo) * (k + 0.5) / samples
        lhs = r ** (n - 1) * W.facet_areas[i] - facet_slice_area((P.body,), W, i, r, tol=tol)
        if lhs <= tol.geo:
            continue
        active = [j for j in range(W.size)
                  if j != i and a[j] < 0 and 1.0 + a[j] < r and _violation_area(W, i, j, r, a) > tol.geo]
        cos = {j: -float(W.normals[i] @ W.normals[j]) for j in active}
        obtuse = [j for j in active if cos[j] <= tol.geo or 1.0 - cos[j] ** 2 <= 1e-24]
        if obtuse:
            skipped.append(r)
            obtuse_pairs.update(obtuse)
            continue
        rhs = sum(W.offsets[j] * (2 * M) ** (n - 2) / np.sqrt(1.0 - cos[j] ** 2) * (r - (1.0 + a[j]))
                  for j in active)
        records.append(ResidualRecord.inequality('slab_domination', lhs, rhs, 1e-9,
                                                 detail=f"facet {i}, r={r:.6g}, active {active}"))
    if skipped:
        logger.warning("slab check skips facet %d at %d radii in [%.6g, %.6g]: pairs %s are not acute",
                       i, len(skipped), min(skipped), max(skipped), sorted(obtuse_pairs))
    return records


def neighbor_indices(P, i):
    """Facets sharing at least one point with facet i."""
    _check_pair(P, P, i)
    V = P.body.vertices
    scale = max(1.0, float(np.abs(P.offsets).max()))
    inc = np.abs(V @ P.base.normals.T - P.offsets) <= 1e-7 * scale
    on_i = inc[:, i]
    return frozenset(int(j) for j in np.flatnonzero(inc[on_i].any(axis=0)) if j != i)


@dataclass(frozen=True, eq=False)
class FacetBoundCheck:
    lhs: float
    rhs: float
    others: dict
    records: list

    @property
    def passed(self):
        return all(r.passed for r in self.records)


def perturbed_facet_bound_check(P, Q, i):
    """Perturbed-facet bound, the zero bound off the neighbors, and the slab family for neighbors."""
    _check_pair(P, Q, i)
    changed = np.flatnonzero(P.entries != Q.entries)
    if changed.tolist() != [i]:
        raise NotSingleDirection(f"perturbations differ at {changed.tolist()}, expected exactly [{i}]")
    W = P.base
    n = W.dim
    lhs = facet_symdiff(P, Q, i)
    others = {j: _coplanar_symdiff(P.body.facet(j).vertices, Q.body.facet(j).vertices, W.plane_bases[j])
              for j in range(W.size) if j != i}
    rhs = float(sum(others.values()))
    records = [ResidualRecord.inequality('perturbed_facet_bound', lhs, rhs, 1e-9, detail=f"facet {i}")]
    neighbors = neighbor_indices(P, i) | neighbor_indices(Q, i)
    far = [others[j] for j in others if j not in neighbors]
    records.append(ResidualRecord.inequality('non_neighbor_zero', max(far, default=0.0), 0.0, 1e-9,
                                             detail=f"facet {i}, {len(far)} non-neighbors"))
    M = max(P.M_phi, Q.M_phi)
    step = abs(P.entries[i] - Q.entries[i])
    for j in sorted(neighbors):
        cos = -float(W.normals[i] @ W.normals[j])
        if cos <= DEFAULT_TOLERANCES.geo:
            continue
        bound = W.offsets[i] * (2 * M) ** (n - 2) / np.sqrt(1.0 - cos ** 2) * step
        records.append(ResidualRecord.inequality('slab_family', others[j], bound, 1e-9,
                                                 detail=f"facet {i}, neighbor {j}"))
    return FacetBoundCheck(lhs, rhs, others, records)


def optimal_translate(E, P, tol=DEFAULT_TOLERANCES):
    """Translation x* minimising |E Δ (K^a + x)|."""
    return best_translation(E, P.body, tol)


def boundary_cone_areas(E, W, offsets, tol=DEFAULT_TOLERANCES):
    """Area of ∂E inside the cone over each facet of ⋂ {<x, nu_i> <= offsets_i} from the origin."""
    E = as_body(E)
    areas = np.zeros(W.size)
    zeros = np.zeros(W.size - 1)
    for i in range(W.size):
        rows = W.cone_rows(i, offsets)
        for piece in E.boundary:
            part = boundary_cone_pieces(piece, rows, zeros, tol)
            if part is not None:
                areas[i] += part.volume
    return areas


@dataclass(frozen=True, eq=False)
class Projection:
    polytope: ParallelPolytope
    residual: float
    iterations: int

    @property
    def a_star(self):
        return self.polytope.entries


def _cone_jacobian(mismatch, a, gap, step):
    """Forward differences of the cone-area gap, stepping inward on positive entries."""
    J = np.empty((a.size, a.size))
    for k in range(a.size):
        h = -step if a[k] > 0 else step
        shifted = a.copy()
        shifted[k] += h
        J[:, k] = (mismatch(shifted)[1] - gap) / h
    return J


def project_to_parallel(E, W, tol=DEFAULT_TOLERANCES, initial=None):
    """The K^a whose facet areas match ∂E's area in every facet cone.

    Newton steps on the cone-area gap with a finite-difference Jacobian kept
    current by Broyden updates. Steps are damped by `projection_damping`
    until the residual drops; a stalled search recomputes the Jacobian once.
    """
    E = as_body(E)
    a = np.zeros(W.size) if initial is None else np.asarray(initial, dtype=float)

    def mismatch(entries):
        P = perturb(W, entries, tol)
        gap = boundary_cone_areas(E, W, P.offsets, tol) - P.facet_areas
        return P, gap, float(np.max(np.abs(gap)) / np.max(P.facet_areas))

    P, gap, residual = mismatch(a)
    J, fresh = None, False
    step = tol.projection_step
    iterations = 0
    while iterations < tol.projection_max_iter and residual > 1e-3 * tol.projection:
        iterations += 1
        if J is None:
            J, fresh = _cone_jacobian(mismatch, a, gap, step), True
        direction = -np.linalg.lstsq(J, gap, rcond=None)[0]
        damping = 1.0
        accepted = None
        while damping > 1e-3:
            trial = a + damping * direction
            try:
                candidate = mismatch(trial)
            except ParallelityLost:
                candidate = None
            if candidate is not None and candidate[2] < residual:
                accepted = trial, candidate
                break
            damping *= tol.projection_damping
        if accepted is None:
            if fresh:
                logger.debug("projection stalled at residual %.3e", residual)
                break
            J = None
            continue
        trial, (P_new, gap_new, res_new) = accepted
        s, y = trial - a, gap_new - gap
        # the cone-area map kinks at the solution; difference steps stay below the current error
        step = float(np.clip(0.1 * np.max(np.abs(s)), 1e-8, tol.projection_step))
        J = J + np.outer(y - J @ s, s) / (s @ s)
        fresh = False
        a, P, gap, residual = trial, P_new, gap_new, res_new
        logger.debug("projection iteration %d: residual %.3e, damping %.3g", iterations, residual, damping)
    if residual > tol.projection:
        raise NoConvergence(f"cone-area mismatch {residual:.3e} after {iterations} iterations")
    return Projection(P, residual, iterations)
