"""
anisotropy.py

Crystalline Wulff shapes and the stability functionals of a body E:
- anisotropic perimeter and deficit
- Fraenkel asymmetry with its optimal translation
- the gauge integral I(y) = ∫_E dx / f_*(x - y), by cone decomposition and by co-area
- gamma (sup of I over y) and the oscillation index in its two forms
- the assembled StabilityReport

Bodies are BodyMesh instances; a Polytope is accepted anywhere a body is.
"""
import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from errors import DegenerateError, DimensionMismatch, ZeroVolume
from integrals import adaptive_quad, inverse_linear_integral
from multistart import multistart_minimize
from polytope import (Halfspace, as_body, lift, plane_basis, polytope_from_inequalities, section_inequalities,
                      support_value, symdiff_volume, vertex_enumeration)
from settings import DEFAULT_TOLERANCES

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WulffShape:
    """K = ⋂ {<x, nu_i> <= d_i} together with the cached data of its surface tension."""
    halfspaces: tuple
    body: object
    name: str = 'custom'

    @classmethod
    def from_halfspaces(cls, halfspaces, name='custom', tol=DEFAULT_TOLERANCES):
        halfspaces = tuple(halfspaces)
        body = vertex_enumeration(halfspaces, tol)
        if body.redundant:
            raise DegenerateError(f"halfspaces {list(body.redundant)} of '{name}' support no facet")
        shape = cls(halfspaces, body, name)
        logger.debug("built Wulff shape %s: N=%d, |K|=%.12g, M=%.6g, m=%.6g",
                     name, shape.size, shape.volume, shape.M_phi, shape.m_phi)
        return shape

    @classmethod
    def from_arrays(cls, normals, offsets, name='custom', tol=DEFAULT_TOLERANCES):
        return cls.from_halfspaces([Halfspace.from_raw(nu, d) for nu, d in zip(normals, offsets)], name, tol)

    @property
    def dim(self):
        return self.body.dim

    @property
    def size(self):
        return len(self.halfspaces)

    @cached_property
    def normals(self):
        return np.array([h.normal for h in self.halfspaces])

    @cached_property
    def offsets(self):
        return np.array([h.offset for h in self.halfspaces])

    @cached_property
    def facet_areas(self):
        return self.body.facet_areas()

    @property
    def volume(self):
        return self.body.volume

    @cached_property
    def M_phi(self):
        return float(np.max(np.linalg.norm(self.body.vertices, axis=1)))

    @cached_property
    def m_phi(self):
        return float(np.min(self.offsets))

    @property
    def eccentricity(self):
        return self.m_phi / self.M_phi

    def surface_tension(self, nu):
        """f(nu) = support value of K; rows of `nu` are evaluated independently."""
        return support_value(self.body, nu)

    def gauge(self, x):
        """f_*(x) = max_i <x, nu_i> / d_i, vectorised over the last axis."""
        return np.max(np.asarray(x, dtype=float) @ self.normals.T / self.offsets, axis=-1)

    def cone_rows(self, i, offsets=None):
        """Rows w_j = nu_j/d_j - nu_i/d_i (j != i); {<x, w_j> <= 0} is the normal-fan cone of facet i."""
        d = self.offsets if offsets is None else offsets
        rows = self.normals / d[:, None] - self.normals[i] / d[i]
        return np.delete(rows, i, axis=0)

    @cached_property
    def plane_bases(self):
        return [plane_basis(nu) for nu in self.normals]

    @cached_property
    def facet_edges(self):
        """Pairs (j, k) of facets meeting along an edge of K (n = 3)."""
        scale = max(1.0, float(self.offsets.max()))
        inc = np.abs(self.body.vertices @ self.normals.T - self.offsets) <= 1e-7 * scale
        shared = inc.T.astype(int) @ inc.astype(int)
        return [tuple(p) for p in np.argwhere(np.triu(shared >= 2, k=1))]

    def placed(self, factor=1.0, shift=None):
        """The body factor * K + shift."""
        body = self.body.scale(factor) if factor != 1.0 else self.body
        return body if shift is None else body.translate(shift)

    def to_dict(self):
        doc = self.body.to_dict()
        doc['name'] = self.name
        return doc


def _check_dims(E, W):
    if E.dim != W.dim:
        raise DimensionMismatch(f"body has dimension {E.dim}, Wulff shape {W.dim}")


def _isoperimetric_norm(E, W):
    if E.volume <= 0:
        raise ZeroVolume("body has zero volume")
    n = W.dim
    return n * W.volume ** (1 / n) * E.volume ** ((n - 1) / n)


def anisotropic_perimeter(E, W):
    """Φ(E) = sum over boundary pieces of f(nu) * area."""
    E = as_body(E)
    _check_dims(E, W)
    normals = np.array([p.normal for p in E.boundary])
    areas = np.array([p.area for p in E.boundary])
    return float(np.dot(W.surface_tension(normals), areas))


def deficit(E, W):
    E = as_body(E)
    _check_dims(E, W)
    return anisotropic_perimeter(E, W) / _isoperimetric_norm(E, W) - 1.0


@dataclass(frozen=True, eq=False)
class AsymmetryResult:
    value: float
    x_star: np.ndarray
    converged: bool


def best_translation(E, target, tol=DEFAULT_TOLERANCES):
    """Minimise |E Δ (target + x)| over x; starts at centroid differences."""
    E = as_body(E)
    starts = [E.centroid - target.centroid]
    if not E.is_convex_cell:
        starts += [c.centroid - target.centroid for c in E.cells]
    size = 0.5 * target.diameter

    def objective(x):
        return symdiff_volume(E, target.translate(x), tol)

    return multistart_minimize(objective, starts, step=0.05 * size, xatol=tol.optimizer_diameter * size,
                               max_iter=tol.optimizer_max_iter)


def fraenkel_asymmetry(E, W, tol=DEFAULT_TOLERANCES):
    """α(E) = min_x |E Δ (rK + x)| / |E| with |rK| = |E|."""
    E = as_body(E)
    _check_dims(E, W)
    if E.volume <= 0:
        raise ZeroVolume("body has zero volume")
    r = (E.volume / W.volume) ** (1 / W.dim)
    outcome = best_translation(E, W.placed(r), tol)
    if not outcome.converged:
        logger.warning("asymmetry search did not converge; best value %.6g", outcome.value)
    value = min(2.0, max(0.0, outcome.value / E.volume))
    return AsymmetryResult(value, outcome.x, outcome.converged)


def _pyramid_sum(piece, y, nu, d, tol):
    # cone from y over every facet of the convex piece
    n = piece.dim
    scale = max(1.0, piece.diameter)
    total = 0.0
    for f in piece.facets:
        h = f.plane_offset - piece.normals[f.normal_index] @ y
        if abs(h) <= tol.geo * scale:
            continue
        ell = (f.vertices - y) @ nu
        total += h / (n - 1) * d * inverse_linear_integral(f.vertices, ell, tol.quad)
    return total


def gamma_integral(E, W, y, tol=DEFAULT_TOLERANCES):
    """I(y) = ∫_E dx / f_*(x - y) by splitting every cell along the normal-fan cones at y."""
    E = as_body(E)
    _check_dims(E, W)
    y = np.asarray(y, dtype=float)
    total = 0.0
    for i in range(W.size):
        rows = W.cone_rows(i)
        for cell in E.cells:
            piece = polytope_from_inequalities(np.vstack([cell.live_normals, rows]),
                                               np.concatenate([cell.live_offsets, rows @ y]), tol)
            if piece is not None:
                total += _pyramid_sum(piece, y, W.normals[i], W.offsets[i], tol)
    return total


def facet_slice_area(cells, W, i, r, y=None, offsets=None, tol=DEFAULT_TOLERANCES):
    """Σ over cells of the (n-1)-measure of (r F_i + y) ∩ cell.

    `offsets` replaces the Wulff offsets d (parallel polytopes use d(1 + a)).
    """
    y = np.zeros(W.dim) if y is None else np.asarray(y, dtype=float)
    d = W.offsets if offsets is None else offsets
    nu = W.normals[i]
    level = float(nu @ y) + r * d[i]
    U = W.plane_bases[i]
    scaled = section_inequalities(W.normals, r * d + W.normals @ y, nu, level, U)
    if scaled is None:
        return 0.0
    total = 0.0
    for cell in cells:
        restricted = section_inequalities(cell.live_normals, cell.live_offsets, nu, level, U)
        if restricted is None:
            continue
        part = polytope_from_inequalities(np.vstack([scaled[0], restricted[0]]),
                                          np.concatenate([scaled[1], restricted[1]]), tol)
        if part is not None:
            total += part.volume
    return total


def slice_breakpoints(cells, W, y=None, offsets=None, r_max=np.inf):
    """Radii in (0, r_max) where the slices (r F_i + y) ∩ cell change combinatorially."""
    y = np.zeros(W.dim) if y is None else np.asarray(y, dtype=float)
    d = W.offsets if offsets is None else offsets
    K_vertices = polytope_from_inequalities(W.normals, d).vertices
    radii = []
    for cell in cells:
        A, b = cell.live_normals, cell.live_offsets
        # vertices of rK + y crossing the cell's facet planes
        proj = K_vertices @ A.T
        gap = b - A @ y
        ok = np.abs(proj) > 1e-12
        radii.append((gap[None, :] / np.where(ok, proj, 1.0))[ok])
        # cell vertices crossing the facet planes of rK + y
        radii.append(((cell.vertices - y) @ W.normals.T / d).ravel())
        if W.dim == 3:
            radii.append(_edge_crossings(cell, W, y, d))
    radii = np.concatenate(radii) if radii else np.empty(0)
    radii = radii[np.isfinite(radii) & (radii > 0) & (radii < r_max)]
    return np.unique(radii).tolist()


def _edge_crossings(cell, W, y, d):
    out = []
    V = cell.vertices
    for p_idx, q_idx in cell.edges:
        p, q = V[p_idx], V[q_idx]
        for j, k in W.facet_edges:
            M = np.array([[(q - p) @ W.normals[j], -d[j]], [(q - p) @ W.normals[k], -d[k]]])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            t, r = np.linalg.solve(M, [-(p - y) @ W.normals[j], -(p - y) @ W.normals[k]])
            if 0.0 <= t <= 1.0 and r > 0:
                out.append(r)
    return np.array(out)


def coarea_gamma(E, W, y, tol=DEFAULT_TOLERANCES):
    """I(y) through the weighted co-area formula: ∫_0^∞ Σ_i d_i |(r F_i + y) ∩ E| dr / r."""
    E = as_body(E)
    _check_dims(E, W)
    y = np.asarray(y, dtype=float)
    r_max = float(np.max(W.gauge(E.vertices - y)))
    points = slice_breakpoints(E.cells, W, y, r_max=r_max)

    def integrand(r):
        if r <= 0:
            return 0.0
        return sum(W.offsets[i] * facet_slice_area(E.cells, W, i, r, y, tol=tol) for i in range(W.size)) / r

    return adaptive_quad(integrand, 0.0, r_max, points, tol.coarea_limit, tol.quad)


def monte_carlo_gamma(E, W, y, samples, rng):
    """Hit-or-miss estimate of I(y) over E's bounding box; returns (estimate, standard error)."""
    E = as_body(E)
    lo, hi = E.vertices.min(axis=0), E.vertices.max(axis=0)
    box = float(np.prod(hi - lo))
    points = rng.uniform(lo, hi, size=(int(samples), E.dim))
    values = np.where(E.contains(points, tol=0.0), 1.0 / W.gauge(points - np.asarray(y)), 0.0)
    return box * float(values.mean()), box * float(values.std(ddof=1)) / np.sqrt(samples)


@dataclass(frozen=True, eq=False)
class GammaResult:
    value: float
    y_star: np.ndarray
    converged: bool
    centroid_value: float


def gamma_sup(E, W, tol=DEFAULT_TOLERANCES):
    """γ(E) = sup_y I(y), multistart from the centroid and a 3^n grid of radius 0.5 M_Φ."""
    E = as_body(E)
    _check_dims(E, W)
    if E.volume <= 0:
        raise ZeroVolume("body has zero volume")
    c = E.centroid
    scale = (E.volume / W.volume) ** (1 / W.dim)
    radius = 0.5 * W.M_phi * scale
    grid = [c + radius * np.array(o) for o in itertools.product((-1.0, 0.0, 1.0), repeat=W.dim) if any(o)]
    outcome = multistart_minimize(lambda y: -gamma_integral(E, W, y, tol), [c] + grid, step=0.1 * radius,
                                  xatol=tol.optimizer_diameter * W.M_phi * scale,
                                  max_iter=tol.optimizer_max_iter, local_searches=tol.local_searches)
    if not outcome.converged:
        logger.warning("gamma search did not converge; best value %.6g", -outcome.value)
    centroid_value = gamma_integral(E, W, c, tol)
    return GammaResult(max(-outcome.value, centroid_value), outcome.x, outcome.converged, centroid_value)


def boundary_cone_pieces(piece, rows, rhs, tol=DEFAULT_TOLERANCES):
    """Part of a boundary piece inside {<x, rows_k> <= rhs_k}, in the piece's plane frame."""
    restricted = section_inequalities(rows, rhs, piece.normal, piece.offset, piece.basis)
    if restricted is None:
        return None
    plane = piece.plane
    if len(restricted[1]) == 0:
        return plane
    return polytope_from_inequalities(np.vstack([plane.live_normals, restricted[0]]),
                                      np.concatenate([plane.live_offsets, restricted[1]]), tol)


def surface_gauge_integral(E, W, y, tol=DEFAULT_TOLERANCES):
    """Σ over boundary pieces of <x - y, nu> ∫ 1/f_*(x - y); equals (n-1) I(y)."""
    E = as_body(E)
    y = np.asarray(y, dtype=float)
    scale = max(1.0, float(np.abs(E.vertices).max()))
    total = 0.0
    for piece in E.boundary:
        h = piece.offset - piece.normal @ y
        if abs(h) <= tol.geo * scale:
            continue
        for i in range(W.size):
            rows = W.cone_rows(i)
            part = boundary_cone_pieces(piece, rows, rows @ y, tol)
            if part is None:
                continue
            points = lift(part.cycle(), piece.normal, piece.offset, piece.basis)
            total += h * W.offsets[i] * inverse_linear_integral(points, (points - y) @ W.normals[i], tol.quad)
    return total


@dataclass(frozen=True, eq=False)
class OscillationResult:
    beta: float
    beta_surface: float
    beta_sq: float
    beta_sq_surface: float
    gamma: GammaResult
    flags: tuple = ()

    @property
    def y_star(self):
        return self.gamma.y_star


def _clamp(beta_sq, tol, label, flags):
    if beta_sq >= 0:
        return beta_sq
    if beta_sq >= -tol.beta_clamp:
        flags.append('beta-clamped')
    else:
        logger.warning("%s form of beta^2 is %.3g, below the clamp window", label, beta_sq)
        flags.append('beta-negative')
    return 0.0


def oscillation_index(E, W, tol=DEFAULT_TOLERANCES, gamma=None):
    """β(E) from the γ-form, cross-checked with the surface form at the same center."""
    E = as_body(E)
    _check_dims(E, W)
    n = W.dim
    gamma = gamma_sup(E, W, tol) if gamma is None else gamma
    norm = _isoperimetric_norm(E, W)
    phi = anisotropic_perimeter(E, W)
    flags = []
    beta_sq = _clamp((phi - (n - 1) * gamma.value) / norm, tol, 'gamma', flags)
    surface = surface_gauge_integral(E, W, gamma.y_star, tol)
    beta_sq_surface = _clamp((phi - surface) / norm, tol, 'surface', flags)
    beta, beta_surface = np.sqrt(beta_sq), np.sqrt(beta_sq_surface)
    if abs(beta_sq - beta_sq_surface) > tol.beta_agreement:
        logger.warning("beta forms disagree: %.9g vs %.9g", beta_sq, beta_sq_surface)
        flags.append('beta-forms-disagree')
    return OscillationResult(float(beta), float(beta_surface), float(beta_sq), float(beta_sq_surface),
                             gamma, tuple(sorted(set(flags))))


@dataclass(frozen=True, eq=False)
class StabilityReport:
    deficit: float
    asymmetry: float
    x_star: np.ndarray
    gamma: float
    y_star: np.ndarray
    beta: float
    beta_surface: float
    ratio: object
    flags: tuple = field(default_factory=tuple)

    @property
    def y_star_norm(self):
        return float(np.linalg.norm(self.y_star))

    def to_dict(self):
        return {
            'deficit': self.deficit,
            'asymmetry': {'value': self.asymmetry, 'x_star': np.asarray(self.x_star).tolist()},
            'gamma': {'value': self.gamma, 'y_star': np.asarray(self.y_star).tolist(),
                      'y_star_norm': self.y_star_norm},
            'beta': self.beta,
            'beta_surface': self.beta_surface,
            'ratio': self.ratio,
            'flags': list(self.flags),
        }


def stability_report(E, W, tol=DEFAULT_TOLERANCES):
    """δ, α, γ, β and the ratio (α² + β²)/δ for one body."""
    E = as_body(E)
    _check_dims(E, W)
    delta = deficit(E, W)
    asym = fraenkel_asymmetry(E, W, tol)
    osc = oscillation_index(E, W, tol)
    flags = list(osc.flags)
    if not asym.converged:
        flags.append('asymmetry-not-converged')
    if not osc.gamma.converged:
        flags.append('gamma-not-converged')
    if delta < -tol.geo:
        logger.warning("negative deficit %.3g violates the Wulff inequality", delta)
        flags.append('wulff-violated')
    ratio = None
    if delta <= tol.exact_minimizer:
        flags.append('exact-minimizer')
    else:
        ratio = (asym.value ** 2 + osc.beta_sq) / delta
    return StabilityReport(float(delta), asym.value, asym.x_star, osc.gamma.value, osc.y_star,
                           osc.beta, osc.beta_surface, ratio, tuple(sorted(set(flags))))
