"""
polytope.py

Convex polytope kernel used by every other module:
- halfspace -> vertex conversion with facet measures and redundancy report
- volume (offset formula, simplicial decomposition, Monte-Carlo)
- intersections, disjoint differences and hyperplane sections
- bodies made of several convex cells (BodyMesh) with their outer boundary
- support values and Hausdorff distance

Everything is dimension generic; the project exercises n = 2 and n = 3, and
sections of those run the same code in n - 1 = 1 or 2 dimensions.
"""
import itertools
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from errors import DegenerateError, DimensionMismatch, InputError, UnboundedError
from settings import DEFAULT_TOLERANCES

logger = logging.getLogger(__name__)

# pivots below this are treated as parallel planes
_SINGULAR = 1e-12


@dataclass(frozen=True, eq=False)
class Halfspace:
    """{x : <x, normal> <= offset} with a unit normal and the origin strictly inside."""
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float).ravel()
        object.__setattr__(self, 'normal', normal)
        object.__setattr__(self, 'offset', float(self.offset))
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise InputError(f"halfspace normal {normal.tolist()} is not a unit vector")
        if not self.offset > 0:
            raise InputError(f"halfspace offset {self.offset} must be positive (origin interior)")

    @classmethod
    def from_raw(cls, normal, offset):
        """Scale an arbitrary (normal, offset) pair so the normal has length one."""
        normal = np.asarray(normal, dtype=float).ravel()
        norm = np.linalg.norm(normal)
        if norm < _SINGULAR:
            raise InputError("halfspace normal is the zero vector")
        return cls(normal / norm, float(offset) / norm)


@dataclass(frozen=True, eq=False)
class Facet:
    normal_index: int
    vertices: np.ndarray  # ordered cycle, counter-clockwise seen from outside
    area: float
    plane_offset: float


def plane_basis(normal):
    """Orthonormal frame of the hyperplane orthogonal to `normal`, as columns.

    In n = 2 the single column is the normal turned a quarter counter-clockwise;
    in n = 3 the two columns (u, w) satisfy u x w = normal.
    """
    nu = np.asarray(normal, dtype=float).ravel()
    n = nu.size
    if n == 1:
        return np.zeros((1, 0))
    if n == 2:
        return np.array([[-nu[1]], [nu[0]]])
    if n == 3:
        axis = np.zeros(3)
        axis[np.argmin(np.abs(nu))] = 1.0
        u = axis - axis.dot(nu) * nu
        u /= np.linalg.norm(u)
        w = np.cross(nu, u)
        return np.column_stack([u, w])
    _, _, vt = np.linalg.svd(nu[None, :])
    return vt[1:].T


def ordered_cycle(points):
    """Order points of a planar convex polygon counter-clockwise around their mean."""
    points = np.asarray(points, dtype=float)
    if points.shape[1] == 1:
        return points[np.argsort(points[:, 0], kind='stable')]
    if points.shape[1] != 2 or len(points) < 3:
        return points
    center = points.mean(axis=0)
    angles = np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0])
    return points[np.argsort(angles, kind='stable')]


def _shoelace(cycle):
    x, y = cycle[:, 0], cycle[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@lru_cache(maxsize=None)
def _combinations(m, n):
    return np.array(list(itertools.combinations(range(m), n)), dtype=int).reshape(-1, n)


def _normalize_rows(normals, offsets):
    A = np.atleast_2d(np.asarray(normals, dtype=float))
    b = np.asarray(offsets, dtype=float).ravel()
    if A.shape[0] != b.size:
        raise DimensionMismatch(f"{A.shape[0]} normals but {b.size} offsets")
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms < _SINGULAR):
        raise DegenerateError("a halfspace has a zero normal")
    return A / norms[:, None], b / norms


def _dedupe(points, tol):
    if len(points) == 0:
        return points
    points = points[np.lexsort(points.T[::-1])]
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    keep = np.ones(len(points), dtype=bool)
    for k in range(len(points)):
        if keep[k]:
            keep[k + 1:] &= dist[k, k + 1:] > tol
    return points[keep]


def _candidate_vertices(A, b, tol):
    m, n = A.shape
    if m < n:
        return np.empty((0, n))
    combos = _combinations(m, n)
    systems = A[combos]
    det = np.linalg.det(systems)
    ok = np.abs(det) > _SINGULAR
    if not ok.any():
        return np.empty((0, n))
    X = np.linalg.solve(systems[ok], b[combos][ok][..., None])[..., 0]
    scale = max(1.0, float(np.abs(b).max()))
    feasible = np.all(X @ A.T <= b + tol * scale, axis=1)
    return _dedupe(X[feasible], 10 * tol * scale)


def _facet_measure(points, normal, n):
    """Measure and ordered vertices of the facet spanned by `points`."""
    if n == 1:
        return (1.0, points[:1]) if len(points) else (0.0, points)
    if len(points) < n:
        return 0.0, points
    U = plane_basis(normal)
    coords = points @ U
    if n == 2:
        lo, hi = np.argmin(coords[:, 0]), np.argmax(coords[:, 0])
        return float(coords[hi, 0] - coords[lo, 0]), points[[lo, hi]]
    if n == 3:
        order = np.argsort(np.arctan2(*(coords - coords.mean(axis=0)).T[::-1]), kind='stable')
        return _shoelace(coords[order]), points[order]
    try:
        return float(ConvexHull(coords).volume), points
    except QhullError:
        return 0.0, points


def _build(A, b, tol):
    n = A.shape[1]
    V = _candidate_vertices(A, b, tol)
    if len(V) < n + 1:
        return None
    center = V.mean(axis=0)
    if np.linalg.matrix_rank(V - center, tol=tol * max(1.0, np.abs(V).max())) < n:
        return None
    diam = float(np.max(np.linalg.norm(V - center, axis=1))) * 2
    scale = max(1.0, float(np.abs(b).max()))
    incidence = np.abs(V @ A.T - b) <= 10 * tol * scale
    facets, redundant = [], []
    for k in range(len(b)):
        duplicate = any(
            np.allclose(A[k], A[f.normal_index], atol=tol) and abs(b[k] - b[f.normal_index]) <= tol * scale
            for f in facets
        )
        area, ordered = _facet_measure(V[incidence[:, k]], A[k], n)
        if duplicate or area <= tol * max(diam, tol) ** (n - 1):
            redundant.append(k)
            continue
        facets.append(Facet(k, ordered, float(area), float(b[k])))
    volume = sum((f.plane_offset - A[f.normal_index] @ center) * f.area for f in facets) / n
    if volume <= tol * diam ** n:
        return None
    return Polytope(A, b, V, tuple(facets), float(volume), tuple(redundant))


def polytope_from_inequalities(normals, offsets, tol=DEFAULT_TOLERANCES, check_bounded=False):
    """Convex polytope {x : normals @ x <= offsets}, or None when empty or flat.

    Rows are rescaled to unit normals. Boundedness is the caller's business
    unless `check_bounded` is set (one LP per coordinate direction).
    """
    A, b = _normalize_rows(normals, offsets)
    if check_bounded:
        _check_bounded(A, b)
    return _build(A, b, tol.geo)


def _check_bounded(A, b):
    n = A.shape[1]
    for k, sign in itertools.product(range(n), (1.0, -1.0)):
        c = np.zeros(n)
        c[k] = -sign
        res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method='highs')
        if res.status == 3:
            raise UnboundedError(f"constraints do not bound the body along {'+' if sign > 0 else '-'}e{k + 1}")
        if res.status == 2:
            raise DegenerateError("constraints are infeasible")


def vertex_enumeration(halfspaces, tol=DEFAULT_TOLERANCES):
    """Polytope bounded by `halfspaces`; the origin is interior since every offset is positive."""
    halfspaces = list(halfspaces)
    if not halfspaces:
        raise UnboundedError("no halfspaces given")
    n = halfspaces[0].normal.size
    if any(h.normal.size != n for h in halfspaces):
        raise DimensionMismatch("halfspace normals have different dimensions")
    if len(halfspaces) < n + 1:
        raise UnboundedError(f"{len(halfspaces)} halfspaces cannot bound a body in dimension {n}")
    A = np.array([h.normal for h in halfspaces])
    b = np.array([h.offset for h in halfspaces])
    _check_bounded(A, b)
    body = _build(A, b, tol.geo)
    if body is None:
        raise DegenerateError("vertex set is not full-dimensional")
    if body.redundant:
        logger.info("halfspaces %s support no facet", list(body.redundant))
    return body


@dataclass(frozen=True, eq=False)
class Polytope:
    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    facets: tuple
    volume: float
    redundant: tuple = ()

    @property
    def dim(self):
        return self.normals.shape[1]

    @cached_property
    def _facet_index(self):
        return {f.normal_index: f for f in self.facets}

    def facet(self, index):
        """Live facet on halfspace `index`, or None if that halfspace is redundant."""
        return self._facet_index.get(index)

    def facet_areas(self):
        areas = np.zeros(len(self.offsets))
        for f in self.facets:
            areas[f.normal_index] = f.area
        return areas

    @property
    def live(self):
        return np.array([f.normal_index for f in self.facets], dtype=int)

    @property
    def live_normals(self):
        return self.normals[self.live]

    @property
    def live_offsets(self):
        return self.offsets[self.live]

    @cached_property
    def diameter(self):
        V = self.vertices
        return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=2)))

    @cached_property
    def centroid(self):
        # pyramids from the vertex mean over every facet
        c = self.vertices.mean(axis=0)
        n = self.dim
        total = np.zeros(n)
        for f in self.facets:
            height = f.plane_offset - self.normals[f.normal_index] @ c
            total += height * f.area / n * (c + n / (n + 1) * (_facet_centroid(f.vertices, n) - c))
        return total / self.volume

    @cached_property
    def edges(self):
        """Vertex index pairs spanning the 1-dimensional faces (n >= 2)."""
        n = self.dim
        scale = max(1.0, float(np.abs(self.offsets).max()))
        inc = np.abs(self.vertices @ self.live_normals.T - self.live_offsets) <= 1e-7 * scale
        shared = inc.astype(int) @ inc.T.astype(int)
        pairs = np.argwhere(np.triu(shared >= n - 1, k=1))
        return [tuple(p) for p in pairs]

    def contains(self, points, tol=1e-9):
        points = np.atleast_2d(points)
        scale = max(1.0, float(np.abs(self.offsets).max()))
        return np.all(points @ self.live_normals.T <= self.live_offsets + tol * scale, axis=1)

    def translate(self, shift):
        shift = np.asarray(shift, dtype=float)
        facets = tuple(Facet(f.normal_index, f.vertices + shift, f.area,
                             f.plane_offset + float(self.normals[f.normal_index] @ shift)) for f in self.facets)
        return Polytope(self.normals, self.offsets + self.normals @ shift, self.vertices + shift,
                        facets, self.volume, self.redundant)

    def scale(self, factor):
        if factor <= 0:
            raise InputError(f"scale factor must be positive, got {factor}")
        n = self.dim
        facets = tuple(Facet(f.normal_index, f.vertices * factor, f.area * factor ** (n - 1),
                             f.plane_offset * factor) for f in self.facets)
        return Polytope(self.normals, self.offsets * factor, self.vertices * factor,
                        facets, self.volume * factor ** n, self.redundant)

    def cycle(self):
        """Vertices as an ordered boundary cycle (dimension 1 or 2)."""
        return ordered_cycle(self.vertices)

    def to_dict(self):
        return {
            'dim': int(self.dim),
            'halfspaces': [{'normal': self.normals[k].tolist(), 'offset': float(self.offsets[k])}
                           for k in self.live],
        }


def _facet_centroid(vertices, n):
    if n <= 2 or len(vertices) < 3:
        return vertices.mean(axis=0)
    # area weighted fan triangles of an ordered convex polygon
    v0 = vertices[0]
    total, weight = np.zeros(vertices.shape[1]), 0.0
    for p, q in zip(vertices[1:-1], vertices[2:]):
        area = 0.5 * np.linalg.norm(np.cross(p - v0, q - v0)) if vertices.shape[1] == 3 else 1.0
        total += area * (v0 + p + q) / 3
        weight += area
    return total / weight if weight > 0 else vertices.mean(axis=0)


def volume(body):
    """n-dimensional measure of a Polytope or BodyMesh."""
    return float(body.volume)


def simplicial_volume(P):
    """Volume from qhull's facet triangulation coned to the vertex mean."""
    hull = ConvexHull(P.vertices)
    c = P.vertices.mean(axis=0)
    n = P.dim
    simplices = P.vertices[hull.simplices] - c
    return float(np.sum(np.abs(np.linalg.det(simplices)))) / float(np.prod(np.arange(1, n + 1)))


def convex_intersection(P, Q, tol=DEFAULT_TOLERANCES):
    """P ∩ Q with redundant halfspaces reported, or None when the overlap has no interior."""
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimensions {P.dim} and {Q.dim} differ")
    return polytope_from_inequalities(np.vstack([P.live_normals, Q.live_normals]),
                                      np.concatenate([P.live_offsets, Q.live_offsets]), tol)


def convex_difference(P, Q, tol=DEFAULT_TOLERANCES):
    """P minus Q as convex pieces with pairwise disjoint interiors."""
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimensions {P.dim} and {Q.dim} differ")
    if convex_intersection(P, Q, tol) is None:
        return [P]
    pieces = []
    A, b = P.live_normals, P.live_offsets
    for a, beta in zip(Q.live_normals, Q.live_offsets):
        piece = polytope_from_inequalities(np.vstack([A, -a]), np.append(b, -beta), tol)
        if piece is not None:
            pieces.append(piece)
        A, b = np.vstack([A, a]), np.append(b, beta)
    return pieces


def section_inequalities(normals, offsets, normal, level, basis=None):
    """Restrict {normals @ x <= offsets} to the plane <x, normal> = level.

    Points of the plane are written x = level * normal + basis @ s; returns
    (rows, rhs) in the s coordinates, or None if the plane misses the set.
    """
    normal = np.asarray(normal, dtype=float)
    U = plane_basis(normal) if basis is None else basis
    rows = normals @ U
    rhs = offsets - level * (normals @ normal)
    flat = np.linalg.norm(rows, axis=1) < 1e-12
    if np.any(rhs[flat] < -1e-9 * max(1.0, float(np.abs(offsets).max()))):
        return None
    return rows[~flat], rhs[~flat]


def section(P, normal, level, basis=None, tol=DEFAULT_TOLERANCES):
    """(n-1)-dimensional polytope P ∩ {<x, normal> = level} in the frame `basis`."""
    restricted = section_inequalities(P.live_normals, P.live_offsets, normal, level, basis)
    if restricted is None or len(restricted[1]) == 0:
        return None
    return polytope_from_inequalities(*restricted, tol)


def lift(coords, normal, level, basis):
    """Map plane coordinates back to ambient points."""
    return level * np.asarray(normal) + np.atleast_2d(coords) @ basis.T


def support_value(P, direction):
    """f(nu) = sup over P of <x, nu>; rows of `direction` are evaluated independently."""
    direction = np.asarray(direction, dtype=float)
    if direction.ndim > 1:
        return np.max(direction @ P.vertices.T, axis=1)
    return float(np.max(P.vertices @ direction))


def distance_to_polytope(P, point):
    """Euclidean distance from `point` to the convex polytope P (0 inside)."""
    x = np.asarray(point, dtype=float)
    if P.contains(x)[0]:
        return 0.0
    best = float(np.min(np.linalg.norm(P.vertices - x, axis=1)))
    for a, b in zip(P.live_normals, P.live_offsets):
        gap = float(a @ x - b)
        if gap > 0 and P.contains(x - gap * a, tol=1e-12)[0]:
            best = min(best, gap)
    if P.dim >= 3:
        for i, j in P.edges:
            u, w = P.vertices[i], P.vertices[j]
            t = np.clip((x - u) @ (w - u) / ((w - u) @ (w - u)), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(u + t * (w - u) - x)))
    return best


def hausdorff_distance(P, Q):
    """Hausdorff distance between convex polytopes via vertex-to-body distances."""
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimensions {P.dim} and {Q.dim} differ")
    forward = max(distance_to_polytope(Q, v) for v in P.vertices)
    backward = max(distance_to_polytope(P, v) for v in Q.vertices)
    return max(forward, backward)


@dataclass(frozen=True, eq=False)
class BoundaryPiece:
    """Convex part of the outer boundary lying in {<x, normal> = offset}."""
    normal: np.ndarray
    offset: float
    vertices: np.ndarray
    area: float
    cell: int
    facet: int
    basis: np.ndarray
    plane: Polytope  # the piece in `basis` coordinates

    def translate(self, shift):
        shift = np.asarray(shift, dtype=float)
        return BoundaryPiece(self.normal, self.offset + float(self.normal @ shift), self.vertices + shift,
                             self.area, self.cell, self.facet, self.basis, self.plane.translate(self.basis.T @ shift))

    def scale(self, factor):
        n = self.normal.size
        return BoundaryPiece(self.normal, self.offset * factor, self.vertices * factor,
                             self.area * factor ** (n - 1), self.cell, self.facet, self.basis,
                             self.plane.scale(factor))


def _piece(normal, offset, plane, basis, cell, facet):
    n = normal.size
    coords = plane.cycle() if n >= 2 else plane.vertices
    return BoundaryPiece(normal, float(offset), lift(coords, normal, offset, basis), float(plane.volume),
                         cell, facet, basis, plane)


def _boundary(cells, tol):
    pieces = []
    scale = max(1.0, max(float(np.abs(c.offsets).max()) for c in cells))
    for ci, cell in enumerate(cells):
        for f in cell.facets:
            a = cell.normals[f.normal_index]
            U = plane_basis(a)
            covers = [
                cj for cj, other in enumerate(cells) if cj != ci and any(
                    other.normals[g.normal_index] @ a < -1 + 1e-9 and abs(g.plane_offset + f.plane_offset) <= tol * scale
                    for g in other.facets)
            ]
            own = section(cell, a, f.plane_offset, U)
            if own is None:
                continue
            remaining = [own]
            for cj in covers:
                cover = section(cells[cj], a, f.plane_offset, U)
                if cover is None:
                    continue
                remaining = [p for r in remaining for p in convex_difference(r, cover)]
            pieces.extend(_piece(a, f.plane_offset, r, U, ci, f.normal_index) for r in remaining)
    return tuple(pieces)


@dataclass(frozen=True, eq=False)
class BodyMesh:
    """Finite union of convex cells with disjoint interiors and its outer boundary."""
    cells: tuple
    boundary: tuple
    volume: float

    @classmethod
    def from_cells(cls, cells, tol=DEFAULT_TOLERANCES):
        cells = tuple(c for c in cells if c is not None)
        if not cells:
            raise DegenerateError("a body needs at least one cell")
        dims = {c.dim for c in cells}
        if len(dims) != 1:
            raise DimensionMismatch(f"cells of mixed dimension {sorted(dims)}")
        return cls(cells, _boundary(cells, tol.geo), float(sum(c.volume for c in cells)))

    @classmethod
    def from_polytope(cls, P):
        pieces = []
        for f in P.facets:
            a = P.normals[f.normal_index]
            U = plane_basis(a)
            plane = section(P, a, f.plane_offset, U)
            if plane is not None:
                pieces.append(_piece(a, f.plane_offset, plane, U, 0, f.normal_index))
        return cls((P,), tuple(pieces), float(P.volume))

    @property
    def dim(self):
        return self.cells[0].dim

    @cached_property
    def centroid(self):
        return sum(c.volume * c.centroid for c in self.cells) / self.volume

    @cached_property
    def vertices(self):
        return np.vstack([c.vertices for c in self.cells])

    @property
    def is_convex_cell(self):
        return len(self.cells) == 1

    def contains(self, points, tol=1e-9):
        points = np.atleast_2d(points)
        inside = np.zeros(len(points), dtype=bool)
        for c in self.cells:
            inside |= c.contains(points, tol)
        return inside

    def closure_residual(self):
        """|sum of area * normal| over the boundary, relative to the total area."""
        total = sum(p.area * p.normal for p in self.boundary)
        return float(np.linalg.norm(total)) / max(sum(p.area for p in self.boundary), 1e-300)

    def translate(self, shift):
        return BodyMesh(tuple(c.translate(shift) for c in self.cells),
                        tuple(p.translate(shift) for p in self.boundary), self.volume)

    def scale(self, factor):
        return BodyMesh(tuple(c.scale(factor) for c in self.cells),
                        tuple(p.scale(factor) for p in self.boundary),
                        self.volume * factor ** self.dim)

    def to_dict(self):
        return {'dim': int(self.dim), 'cells': [c.to_dict() for c in self.cells]}


def as_body(E):
    """Accept a Polytope or a BodyMesh wherever a body is expected."""
    return BodyMesh.from_polytope(E) if isinstance(E, Polytope) else E


def cells_of(E):
    return (E,) if isinstance(E, Polytope) else E.cells


def symdiff_volume(E, F, tol=DEFAULT_TOLERANCES):
    """|E Δ F| = |E| + |F| - 2 sum over cell pairs |c ∩ c'|."""
    if E.dim != F.dim:
        raise DimensionMismatch(f"dimensions {E.dim} and {F.dim} differ")
    overlap = 0.0
    for c in cells_of(E):
        for d in cells_of(F):
            piece = convex_intersection(c, d, tol)
            if piece is not None:
                overlap += piece.volume
    return max(0.0, E.volume + F.volume - 2.0 * overlap)


def monte_carlo_volume(body, samples, rng):
    """Hit-or-miss estimate over the bounding box; returns (estimate, standard error)."""
    body = as_body(body)
    lo, hi = body.vertices.min(axis=0), body.vertices.max(axis=0)
    box = float(np.prod(hi - lo))
    points = rng.uniform(lo, hi, size=(int(samples), body.dim))
    p = float(np.mean(body.contains(points, tol=0.0)))
    return box * p, box * np.sqrt(max(p * (1 - p), 0.0) / samples)
