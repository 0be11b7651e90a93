import itertools
import logging
from functools import lru_cache

import numpy as np

from anisotropy import WulffShape
from errors import ConfigError, InputError, ParallelityLost
from parallel import perturb
from polytope import BodyMesh, convex_difference, plane_basis, polytope_from_inequalities, section, support_value

logger = logging.getLogger(__name__)

PARALLEL_FAMILIES = ('parallel-random', 'dilation', 'box')
BODY_FAMILIES = ('facet-bump', 'notch', 'satellite')
FAMILIES = PARALLEL_FAMILIES + BODY_FAMILIES


def _polygon_normals(k, phase=0.0):
    angles = phase + 2 * np.pi * np.arange(k) / k
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _axis_normals(n):
    rows = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        rows += [e, -e]
    return np.array(rows)


def generate_square():
    return WulffShape.from_arrays(_axis_normals(2), np.ones(4), 'square')


def generate_hexagon():
    return WulffShape.from_arrays(_polygon_normals(6), np.ones(6), 'hexagon')


def generate_trapezoid():
    normals = np.array([[0.0, 1.0], [0.0, -1.0], [2.0, 1.0], [-2.0, 1.0]])
    # short top side of length 0.6, long bottom side of length 2.6
    return WulffShape.from_arrays(normals, [1.0, 1.0, 1.6, 1.6], 'trapezoid')


def generate_cube():
    return WulffShape.from_arrays(_axis_normals(3), np.ones(6), 'cube')


def generate_octahedron():
    normals = np.array(list(itertools.product((1.0, -1.0), repeat=3)))
    return WulffShape.from_arrays(normals, np.ones(8), 'octahedron')


def generate_hex_prism():
    lateral = np.column_stack([_polygon_normals(6), np.zeros(6)])
    normals = np.vstack([lateral, [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]])
    return WulffShape.from_arrays(normals, np.ones(8), 'hex-prism')


PRESETS = {
    'square': generate_square,
    'hexagon': generate_hexagon,
    'trapezoid': generate_trapezoid,
    'cube': generate_cube,
    'octahedron': generate_octahedron,
    'hex-prism': generate_hex_prism,
}

# facet-loss thresholds known in closed form
KNOWN_THRESHOLDS = {'square': 1.0, 'cube': 1.0}


@lru_cache(maxsize=None)
def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}")
    return PRESETS[name]()


def facet_loss_threshold(W, iterations=50):
    """Smallest |t| at which moving a single facet by t (either sign) kills some facet; capped at 1."""
    threshold = 1.0
    for i, sign in itertools.product(range(W.size), (1.0, -1.0)):
        def survives(t):
            a = np.zeros(W.size)
            a[i] = sign * t
            try:
                perturb(W, a)
            except ParallelityLost:
                return False
            return True

        if survives(min(threshold, 1.0 - 1e-12)):
            continue
        lo, hi = 0.0, threshold
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if survives(mid) else (lo, mid)
        threshold = min(threshold, hi)
    return threshold


@lru_cache(maxsize=None)
def preset_threshold(name):
    if name in KNOWN_THRESHOLDS:
        return KNOWN_THRESHOLDS[name]
    value = facet_loss_threshold(preset(name))
    logger.info("facet-loss threshold of %s: %.6g", name, value)
    return value


def sample_rng(seed, sample_id, generator='PCG64'):
    """Independent per-sample stream derived from (seed, sample_id)."""
    bit_generator = getattr(np.random, generator, None)
    if bit_generator is None:
        raise ConfigError(f"unknown bit generator '{generator}'")
    return np.random.Generator(bit_generator(np.random.SeedSequence([int(seed), int(sample_id)])))


def random_perturbation(W, radius, rng):
    return rng.uniform(-radius, radius, size=W.size)


def dilation_perturbation(W, s):
    return np.full(W.size, float(s))


def _axis_index(W, axis, sign):
    target = np.zeros(W.dim)
    target[axis] = sign
    hits = np.flatnonzero(np.all(np.abs(W.normals - target) < 1e-12, axis=1))
    if hits.size == 0:
        raise ConfigError(f"box family needs the normal {target.tolist()} in '{W.name}'")
    return int(hits[0])


def box_perturbation(W, t):
    """Volume-preserving stretch: e1 facets out by t, e2 facets in by t/(1+t)."""
    a = np.zeros(W.size)
    for sign in (1.0, -1.0):
        a[_axis_index(W, 0, sign)] = t
        a[_axis_index(W, 1, sign)] = -t / (1.0 + t)
    return a


def _normalized(cells, W):
    body = BodyMesh.from_cells(cells)
    return body.scale((W.volume / body.volume) ** (1.0 / W.dim))


def facet_prism(W, i, lo, hi, fraction=0.5):
    """Prism over facet i shrunk by `fraction` about its centroid, between levels lo and hi along nu_i."""
    nu = W.normals[i]
    U = plane_basis(nu)
    base = section(W.body, nu, W.offsets[i], U)
    c = base.centroid
    rows = base.live_normals
    offsets = fraction * base.live_offsets + (1.0 - fraction) * rows @ c
    normals = np.vstack([rows @ U.T, nu, -nu])
    return polytope_from_inequalities(normals, np.concatenate([offsets, [hi, -lo]]))


def facet_bump(W, t, i=0, fraction=0.5):
    """K with a prism of height t on facet i, rescaled to |K|."""
    if t < 0:
        raise InputError(f"bump height must be nonnegative, got {t}")
    if t == 0:
        return BodyMesh.from_polytope(W.body)
    prism = facet_prism(W, i, W.offsets[i], W.offsets[i] + t, fraction)
    return _normalized([W.body, prism], W)


def notch(W, t, i=0, fraction=0.5):
    """K minus a prism of depth t cut into facet i, rescaled to |K|."""
    if not 0 <= t < W.offsets[i]:
        raise InputError(f"notch depth must lie in [0, {W.offsets[i]}), got {t}")
    if t == 0:
        return BodyMesh.from_polytope(W.body)
    prism = facet_prism(W, i, W.offsets[i] - t, W.offsets[i] + 1.0, fraction)
    return _normalized(convex_difference(W.body, prism), W)


def satellite(W, t):
    """(1-t)^(1/n) K plus a cube of volume t|K| at distance 1 along e1."""
    if not 0 <= t < 1:
        raise InputError(f"satellite fraction must lie in [0, 1), got {t}")
    if t == 0:
        return BodyMesh.from_polytope(W.body)
    n = W.dim
    core = W.body.scale((1.0 - t) ** (1.0 / n))
    side = (t * W.volume) ** (1.0 / n)
    start = support_value(core, np.eye(n)[0]) + 1.0
    lower = np.full(n, -side / 2)
    upper = np.full(n, side / 2)
    lower[0], upper[0] = start, start + side
    normals = np.vstack([np.eye(n), -np.eye(n)])
    cube = polytope_from_inequalities(normals, np.concatenate([upper, -lower]))
    return BodyMesh.from_cells([core, cube])


BODY_BUILDERS = {'facet-bump': facet_bump, 'notch': notch, 'satellite': satellite}


def generate_body(W, family, t):
    if family not in BODY_BUILDERS:
        raise ConfigError(f"'{family}' is not a body family, expected one of {list(BODY_BUILDERS)}")
    return BODY_BUILDERS[family](W, t)


def generate_parallel_vector(W, family, t=None, radius=None, rng=None):
    if family == 'parallel-random':
        return random_perturbation(W, radius, rng)
    if family == 'dilation':
        return dilation_perturbation(W, t)
    if family == 'box':
        return box_perturbation(W, t)
    raise ConfigError(f"'{family}' is not a parallel family, expected one of {list(PARALLEL_FAMILIES)}")
