"""
lab.py

Experiment orchestration: sampled parallel perturbations, non-parallel body
families, metric-equivalence pairs, fitted constants, the density and
Lipschitz checks, and the checked-in store of expected fit values.
"""
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

from anisotropy import anisotropic_perimeter, gamma_sup, stability_report
from data_gen import (BODY_FAMILIES, FAMILIES, PARALLEL_FAMILIES, generate_body, generate_parallel_vector,
                      preset, preset_threshold, facet_loss_threshold, sample_rng)
from errors import ConfigError, WulffLabError
from ingest import wulff_from_dict
from parallel import (ab_decomposition, delta_identity, divergence_identity_residual, minkowski_closure_residual,
                      optimal_translate, perturb, project_to_parallel, renormalize_volume)
from polytope import as_body, distance_to_polytope, hausdorff_distance, symdiff_volume
from quality import chain_constants, facet_ratio_series, metric_pair, wulff_inequality_check
from records import ResidualRecord
from settings import DEFAULT_TOLERANCES, RUN_DEFAULTS

logger = logging.getLogger(__name__)

EXPECTED_DIR = Path(__file__).with_name('expected')
DEFAULT_PARAMETERS = {
    'box': (0.01, 0.05, 0.1, 0.2),
    'dilation': (-0.1, 0.05, 0.1),
    'facet-bump': tuple(2.0 ** -k for k in range(2, 7)),
    'notch': tuple(2.0 ** -k for k in range(2, 7)),
    'satellite': tuple(2.0 ** -k for k in range(2, 7)),
}
# fits whose value depends on an optimizer and is compared loosely
OPTIMIZER_FITS = {'C_main', 'C_lower', 'C_beta_parallel', 'C_AB', 'C_gap', 'C_close_par', 'C_close_E'}
GROWTH_LIMITED_FITS = {'C_main'}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = 'square'
    wulff: dict = None
    dimension: int = None
    family: str = 'parallel-random'
    kind: str = 'stability'
    sample_count: int = RUN_DEFAULTS.sample_count
    a_radius: float = RUN_DEFAULTS.a_radius
    seed: int = RUN_DEFAULTS.seed
    generator: str = RUN_DEFAULTS.generator
    parameters: tuple = None
    facet: int = 0
    tolerances: dict = field(default_factory=dict)
    workers: int = None

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if doc.get('parameters') is not None:
            doc['parameters'] = tuple(float(t) for t in doc['parameters'])
        config = cls(**doc)
        config.validate()
        return config

    def to_dict(self):
        doc = asdict(self)
        doc['parameters'] = list(self.family_parameters)
        return doc

    @property
    def family_parameters(self):
        if self.parameters is not None:
            return self.parameters
        return DEFAULT_PARAMETERS.get(self.family, ())

    @property
    def tol(self):
        return DEFAULT_TOLERANCES.with_overrides(**self.tolerances)

    def shape(self):
        return wulff_from_dict(self.wulff) if self.wulff is not None else preset(self.preset)

    @property
    def label(self):
        return self.preset if self.wulff is None else self.wulff.get('name', 'custom')

    def threshold(self):
        W = self.shape()
        return preset_threshold(self.preset) if self.wulff is None else facet_loss_threshold(W)

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family '{self.family}', expected one of {list(FAMILIES)}")
        if self.kind not in ('stability', 'metric-equivalence'):
            raise ConfigError(f"unknown experiment kind '{self.kind}'")
        if self.kind == 'metric-equivalence' and self.family != 'parallel-random':
            raise ConfigError("metric-equivalence runs on the parallel-random family")
        if int(self.sample_count) < 1:
            raise ConfigError(f"sample_count must be at least 1, got {self.sample_count}")
        if self.a_radius < 0:
            raise ConfigError(f"a_radius must be nonnegative, got {self.a_radius}")
        DEFAULT_TOLERANCES.with_overrides(**self.tolerances)
        W = self.shape()
        if self.dimension is not None and self.dimension != W.dim:
            raise ConfigError(f"config dimension {self.dimension} does not match the shape's {W.dim}")
        if not 0 <= self.facet < W.size:
            raise ConfigError(f"facet {self.facet} outside 0..{W.size - 1}")
        if self.family == 'parallel-random' and self.a_radius >= self.threshold():
            raise ConfigError(f"a_radius {self.a_radius} reaches the facet-loss threshold "
                              f"{self.threshold():.6g} of {self.label}")
        sample_rng(self.seed, 0, self.generator)

    @property
    def worker_count(self):
        if self.workers is not None:
            return max(1, int(self.workers))
        try:
            return max(1, int(os.environ.get('WULFFLAB_WORKERS', '1')))
        except ValueError as exc:
            raise ConfigError(f"WULFFLAB_WORKERS must be an integer: {exc}") from exc


def _vector(values):
    return ' '.join(f"{v:.17g}" for v in np.asarray(values, dtype=float).ravel())


@dataclass
class ExperimentRecord:
    sample_id: int
    seed: int
    family: str
    parameter: float = np.nan
    a: str = ''
    a_norm: float = np.nan
    delta: float = np.nan
    alpha: float = np.nan
    beta: float = np.nan
    beta_surface: float = np.nan
    gamma: float = np.nan
    y_star: str = ''
    x_star: str = ''
    ratio: float = np.nan
    A: float = np.nan
    B: float = np.nan
    bound_rhs: float = np.nan
    res_delta_identity: float = np.nan
    res_minkowski: float = np.nan
    res_divergence: float = np.nan
    res_beta_forms: float = np.nan
    res_ab_coarea: float = np.nan
    gap_ratio: float = np.nan
    close_par: float = np.nan
    close_E: float = np.nan
    lipschitz_lhs: float = np.nan
    lipschitz_rhs: float = np.nan
    ok_wulff: object = None
    ok_delta_identity: object = None
    ok_minkowski: object = None
    ok_divergence: object = None
    ok_beta_forms: object = None
    ok_ab_bound: object = None
    ok_lipschitz: object = None
    flags: str = ''
    error: str = ''

    def absorb_report(self, report, tol):
        self.delta, self.alpha, self.beta = report.deficit, report.asymmetry, report.beta
        self.beta_surface, self.gamma = report.beta_surface, report.gamma
        self.y_star, self.x_star = _vector(report.y_star), _vector(report.x_star)
        self.ratio = np.nan if report.ratio is None else report.ratio
        self.res_beta_forms = abs(report.beta ** 2 - report.beta_surface ** 2)
        self.ok_beta_forms = bool(self.res_beta_forms <= tol.beta_agreement)
        self.flags = ';'.join(report.flags)

    def to_row(self):
        return asdict(self)


RECORD_COLUMNS = [f.name for f in fields(ExperimentRecord)]


@dataclass(frozen=True)
class ConstantFit:
    name: str
    value: float
    sample: str
    count: int
    min: float
    max: float
    mean: float

    @property
    def empty(self):
        return self.count == 0

    def to_dict(self):
        doc = asdict(self)
        doc['empty'] = self.empty
        return {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in doc.items()}


def fit_extreme(name, values, sample, kind='max'):
    """ConstantFit whose value is the max (or min) of the finite `values`."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return ConstantFit(name, np.nan, sample, 0, np.nan, np.nan, np.nan)
    value = values.max() if kind == 'max' else values.min()
    return ConstantFit(name, float(value), sample, int(values.size), float(values.min()), float(values.max()),
                       float(values.mean()))


def fit_slope(name, x, y, sample):
    """Least-squares slope of y against x."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    if keep.sum() < 2:
        return ConstantFit(name, np.nan, sample, int(keep.sum()), np.nan, np.nan, np.nan)
    model = LinearRegression().fit(x[keep, None], y[keep])
    ratios = y[keep] / np.where(x[keep] != 0, x[keep], np.nan)
    return ConstantFit(name, float(model.coef_[0]), sample, int(keep.sum()), float(np.nanmin(ratios)),
                       float(np.nanmax(ratios)), float(np.nanmean(ratios)))


def _map_samples(task, ids, workers):
    if workers <= 1:
        return [task(k) for k in ids]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, ids))


def _parallel_sample(config, sample_id):
    W, tol = config.shape(), config.tol
    record = ExperimentRecord(sample_id, config.seed, config.family)
    start = time.perf_counter()
    try:
        if config.family == 'parallel-random':
            rng = sample_rng(config.seed, sample_id, config.generator)
            a = generate_parallel_vector(W, config.family, radius=config.a_radius, rng=rng)
        else:
            record.parameter = config.family_parameters[sample_id]
            a = generate_parallel_vector(W, config.family, t=record.parameter)
        P = renormalize_volume(perturb(W, a, tol))
        shift = optimal_translate(W.body, P, tol).x
        # K^a + x is again parallel: a_i moves by <x, nu_i> / d_i
        P = perturb(W, P.entries + W.normals @ shift / W.offsets, tol)
        record.a, record.a_norm = _vector(P.entries), P.a.norm_inf
        report = stability_report(P.body, W, tol)
        record.absorb_report(report, tol)
        record.ok_wulff = wulff_inequality_check(P.body, W).passed
        identity = delta_identity(P)
        record.res_delta_identity = identity.residual
        record.ok_delta_identity = bool(identity.residual <= tol.identity * max(1.0, abs(identity.direct)))
        minkowski = minkowski_closure_residual(P)
        record.res_minkowski, record.ok_minkowski = minkowski.residual, minkowski.passed
        divergence = divergence_identity_residual(P, sample_id % W.size,
                                                  {(0,) * (W.dim - 1): 1.0, (1,) + (0,) * (W.dim - 2): 0.5})
        record.res_divergence, record.ok_divergence = divergence.residual, divergence.passed
        ab = ab_decomposition(P, tol, beta_sq=report.beta ** 2)
        record.A, record.B, record.bound_rhs = ab.A, ab.B, ab.bound_rhs
        record.res_ab_coarea, record.ok_ab_bound = ab.coarea_residual, ab.holds
    except WulffLabError as exc:
        logger.warning("sample %d failed: %s", sample_id, exc)
        record.error = f"{type(exc).__name__}: {exc}"
    return record, time.perf_counter() - start


def _body_sample(config, sample_id):
    W, tol = config.shape(), config.tol
    record = ExperimentRecord(sample_id, config.seed, config.family, config.family_parameters[sample_id])
    start = time.perf_counter()
    try:
        E = generate_body(W, config.family, record.parameter)
        report = stability_report(E, W, tol)
        record.absorb_report(report, tol)
        record.ok_wulff = wulff_inequality_check(E, W).passed
        if config.family != 'satellite' and record.parameter <= 0.1:
            projection = project_to_parallel(E, W, tol)
            record.a, record.a_norm = _vector(projection.a_star), projection.polytope.a.norm_inf
            record.gap_ratio = replacement_gap_check(E, W, tol, projection)
            record.close_par, record.close_E = closeness_check(E, W, tol, projection)
            check = lipschitz_gamma_check(E, W, tol, projection=projection, gamma_E=report.gamma)
            record.lipschitz_lhs, record.lipschitz_rhs = check.lhs, check.rhs
            record.ok_lipschitz = check.passed
    except WulffLabError as exc:
        logger.warning("sample %d failed: %s", sample_id, exc)
        record.error = f"{type(exc).__name__}: {exc}"
    return record, time.perf_counter() - start


def _collect(results):
    records = pd.DataFrame([r.to_row() for r, _ in results], columns=RECORD_COLUMNS)
    timings = pd.DataFrame({'sample_id': records['sample_id'], 'wall_time': [t for _, t in results]})
    return records, timings


def _ok(records):
    return records[records['error'] == '']


def run_parallel_experiment(config):
    """Records and fits for a parallel family; returns (records, fits, timings)."""
    if config.family not in PARALLEL_FAMILIES:
        raise ConfigError(f"'{config.family}' is not a parallel family")
    count = config.sample_count if config.family == 'parallel-random' else len(config.family_parameters)
    logger.info("parallel experiment %s/%s: %d samples", config.label, config.family, count)
    results = _map_samples(partial(_parallel_sample, config), range(count), config.worker_count)
    records, timings = _collect(results)
    ok = _ok(records)
    live = ok[ok['delta'] > 1e-12]
    sample = f"{config.label}/{config.family}, seed {config.seed}, delta > 1e-12"
    fits = {
        'C_main': fit_extreme('C_main', live['ratio'], sample),
        'C_lower': fit_extreme('C_lower', live['delta'] / live['a_norm'] ** 2, sample, kind='min'),
        'C_beta_parallel': fit_extreme('C_beta_parallel', live['beta'] ** 2 / live['delta'], sample),
        'C_AB': fit_extreme('C_AB', (live['A'] - live['B']) / live['delta'], sample),
    }
    if config.family == 'parallel-random' and config.a_radius > 0:
        fits['C_facet_slope'] = facet_slope_fit(config)
    return records, fits, timings


def facet_slope_fit(config, directions=5):
    """Slope of the largest facet-area gap against t along dyadic t, over a few random directions."""
    W = config.shape()
    xs, ys = [], []
    for k in range(min(directions, config.sample_count)):
        rng = sample_rng(config.seed, k, config.generator)
        direction = generate_parallel_vector(W, 'parallel-random', radius=config.a_radius, rng=rng)
        series = facet_ratio_series(W, direction)
        xs.extend(series['t'])
        ys.extend(series.filter(like='gap_').max(axis=1) * series['t'])
    return fit_slope('C_facet_slope', xs, ys, f"{config.label}, {directions} directions, t = 2^-3..2^-8")


def run_nonparallel_experiment(config):
    """Records and fits for a non-convex body family; returns (records, fits, timings)."""
    if config.family not in BODY_FAMILIES:
        raise ConfigError(f"'{config.family}' is not a body family")
    params = config.family_parameters
    logger.info("body experiment %s/%s: t in %s", config.label, config.family, list(params))
    results = _map_samples(partial(_body_sample, config), range(len(params)), config.worker_count)
    records, timings = _collect(results)
    ok = _ok(records)
    live = ok[ok['delta'] > 1e-12]
    sample = f"{config.label}/{config.family}, t in {list(params)}"
    fits = {
        'C_main': fit_extreme('C_main', live['ratio'], sample),
        'C_gap': fit_extreme('C_gap', ok['gap_ratio'], sample, kind='min'),
        'C_close_par': fit_extreme('C_close_par', ok['close_par'], sample),
        'C_close_E': fit_extreme('C_close_E', ok['close_E'], sample),
    }
    return records, fits, timings


def metric_equivalence_experiment(config):
    """|a - a'|_inf, |K^a Δ K^a'| and d_H over random pairs with the fitted chain constants."""
    W = config.shape()
    rows = []
    for k in range(config.sample_count):
        rng = sample_rng(config.seed, k, config.generator)
        a = generate_parallel_vector(W, 'parallel-random', radius=config.a_radius, rng=rng)
        b = generate_parallel_vector(W, 'parallel-random', radius=config.a_radius, rng=rng)
        try:
            linf, l1, dh = metric_pair(W, a, b)
        except WulffLabError as exc:
            logger.warning("pair %d failed: %s", k, exc)
            continue
        rows.append({'pair_id': k, 'linf': linf, 'l1': l1, 'hausdorff': dh})
    pairs = pd.DataFrame(rows, columns=['pair_id', 'linf', 'l1', 'hausdorff'])
    c1, c2, c3 = chain_constants(pairs['linf'], pairs['l1'], pairs['hausdorff'])
    sample = f"{config.label}, {len(pairs)} pairs, seed {config.seed}"
    live = pairs[(pairs['l1'] > 0) & (pairs['hausdorff'] > 0)]
    fits = {
        'C_equiv_L1': _chain_fit('C_equiv_L1', c1, live['linf'] / live['l1'], sample),
        'C_equiv_H': _chain_fit('C_equiv_H', c2, c1 * live['l1'] / live['hausdorff'], sample),
        'C_equiv_inf': _chain_fit('C_equiv_inf', c3, c2 * live['hausdorff'] / live['linf'], sample),
    }
    return pairs, fits


def _chain_fit(name, value, ratios, sample):
    base = fit_extreme(name, ratios, sample)
    return ConstantFit(name, float(value), sample, base.count, base.min, base.max, base.mean)


def run_experiment(config):
    """Dispatch on kind and family; returns (records, fits, timings)."""
    if config.kind == 'metric-equivalence':
        pairs, fits = metric_equivalence_experiment(config)
        return pairs, fits, pd.DataFrame(columns=['sample_id', 'wall_time'])
    if config.family in PARALLEL_FAMILIES:
        return run_parallel_experiment(config)
    return run_nonparallel_experiment(config)


def write_outputs(records, fits, timings, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records.to_csv(out / 'records.csv', index=False)
    timings.to_csv(out / 'timings.csv', index=False)
    (out / 'fits.json').write_text(json.dumps({k: f.to_dict() for k, f in fits.items()}, indent=2) + '\n')
    logger.info("wrote records, fits and timings to %s", out)


def _boundary_points(E, count, rng):
    """Vertices of the boundary pieces plus `count` points drawn uniformly by area."""
    pieces = E.boundary
    points = [p.vertices for p in pieces]
    areas = np.array([p.area for p in pieces])
    for k in rng.choice(len(pieces), size=count, p=areas / areas.sum()):
        V = pieces[k].vertices
        if len(V) == 2:
            points.append((V[0] + rng.uniform() * (V[1] - V[0]))[None])
            continue
        tri = [(V[0], V[j], V[j + 1]) for j in range(1, len(V) - 1)]
        weights = np.array([np.linalg.norm(np.cross(q - p, s - p)) for p, q, s in tri])
        p, q, s = tri[rng.choice(len(tri), p=weights / weights.sum())]
        u, v = rng.uniform(size=2)
        if u + v > 1:
            u, v = 1 - u, 1 - v
        points.append((p + u * (q - p) + v * (s - p))[None])
    return np.vstack(points)


@dataclass(frozen=True)
class DensityResult:
    passed: bool
    worst_constant: float
    worst_point: tuple
    worst_radius: float


def density_estimate_check(E, W, r0, c0, samples, rng, radii=8, ball_points=2000):
    """Sampled check of c0 eps^n w_n r^n <= |B_r(x) ∩ E| <= (1 - c0 eps^n) w_n r^n at boundary points."""
    if r0 <= 0 or not 0 < c0 < 0.5:
        raise ConfigError(f"density check needs r0 > 0 and 0 < c0 < 1/2, got r0={r0}, c0={c0}")
    E = as_body(E)
    n = E.dim
    eps_n = W.eccentricity ** n
    directions = rng.normal(size=(ball_points, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    unit_ball = directions * rng.uniform(size=(ball_points, 1)) ** (1.0 / n)
    worst = (np.inf, None, None)
    for x in _boundary_points(E, samples, rng):
        for r in r0 * np.arange(1, radii + 1) / (radii + 1):
            share = float(np.mean(E.contains(x + r * unit_ball, tol=0.0)))
            constant = min(share, 1.0 - share) / eps_n
            if constant < worst[0]:
                worst = (constant, tuple(x.tolist()), float(r))
    return DensityResult(bool(worst[0] >= c0), float(worst[0]), worst[1], worst[2])


def lipschitz_gamma_check(E, W, tol=DEFAULT_TOLERANCES, projection=None, gamma_E=None):
    """|γ(E) - γ(K^a*)| <= |E Δ K^a*| / 2 with 1e-5 slack."""
    E = as_body(E)
    projection = project_to_parallel(E, W, tol) if projection is None else projection
    target = projection.polytope.body
    gamma_E = gamma_sup(E, W, tol).value if gamma_E is None else gamma_E
    gamma_P = gamma_sup(target, W, tol).value
    return ResidualRecord.inequality('lipschitz_gamma', abs(gamma_E - gamma_P), 0.5 * symdiff_volume(E, target, tol),
                                     1e-5, f"|a*|_inf = {projection.polytope.a.norm_inf:.3g}")


def replacement_gap_check(E, W, tol=DEFAULT_TOLERANCES, projection=None):
    """(Φ(E) - Φ(K^a*)) / |E Δ K^a*|, nan when the two coincide."""
    E = as_body(E)
    P = (project_to_parallel(E, W, tol) if projection is None else projection).polytope
    symdiff = symdiff_volume(E, P.body, tol)
    if symdiff <= tol.geo:
        return np.nan
    return (anisotropic_perimeter(E, W) - anisotropic_perimeter(P.body, W)) / symdiff


def _distance_to_boundary(E, point):
    best = np.inf
    for piece in E.boundary:
        height = float(piece.normal @ point - piece.offset)
        in_plane = distance_to_polytope(piece.plane, piece.basis.T @ point)
        best = min(best, np.hypot(height, in_plane))
    return best


def closeness_check(E, W, tol=DEFAULT_TOLERANCES, projection=None, samples=200, seed=RUN_DEFAULTS.seed):
    """d_H(K^a*, K) / |E Δ K| and d_H(∂E, ∂K)^n / |E Δ K| with the boundary distance sampled."""
    E = as_body(E)
    P = (project_to_parallel(E, W, tol) if projection is None else projection).polytope
    symdiff = symdiff_volume(E, W.body, tol)
    if symdiff <= tol.geo:
        return np.nan, np.nan
    rng = sample_rng(seed, 0)
    K = as_body(W.body)
    forward = max(_distance_to_boundary(K, p) for p in _boundary_points(E, samples, rng))
    backward = max(_distance_to_boundary(E, p) for p in _boundary_points(K, samples, rng))
    return hausdorff_distance(P.body, W.body) / symdiff, max(forward, backward) ** W.dim / symdiff


def expected_path(label, family, seed, directory=EXPECTED_DIR):
    return Path(directory) / f"{label}_{family}_seed{seed}.json"


def compare_to_expected(fits, path, run=RUN_DEFAULTS):
    """Freeze fits on first sight; afterwards compare them against the frozen values."""
    path = Path(path)
    current = {name: fit.value for name, fit in fits.items() if not fit.empty}
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(current, indent=2, sort_keys=True) + '\n')
        logger.info("froze %d expected values in %s", len(current), path)
        return []
    frozen = json.loads(path.read_text())
    records = []
    for name, stored in sorted(frozen.items()):
        if name not in current:
            records.append(ResidualRecord('expected', np.nan, stored, np.nan, False, f"{name} missing"))
        elif name in GROWTH_LIMITED_FITS:
            records.append(ResidualRecord.inequality('expected', current[name], stored * (1 + run.regression_growth),
                                                     0.0, name))
        else:
            rtol = run.regression_rtol_optimizer if name in OPTIMIZER_FITS else run.regression_rtol
            records.append(ResidualRecord.identity('expected', current[name], stored, rtol, abs(stored), name))
    return records
