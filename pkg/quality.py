"""
quality.py

Named identity and inequality checks, one residual record per check, and the
suite behind `app.py verify`.
"""
import logging

import numpy as np
import pandas as pd

from anisotropy import (anisotropic_perimeter, coarea_gamma, deficit, fraenkel_asymmetry, gamma_integral,
                        oscillation_index)
from data_gen import (facet_bump, facet_loss_threshold, notch, preset_threshold, random_perturbation, sample_rng,
                      satellite)
from errors import WulffLabError
from parallel import (ab_decomposition, delta_identity, divergence_identity_residual, facet_area_gap,
                      facet_symdiff, minkowski_closure_residual, perturb, perturbed_facet_bound_check,
                      renormalize_volume, slab_domination_check)
from polytope import as_body, hausdorff_distance, monte_carlo_volume, simplicial_volume, symdiff_volume
from records import ResidualRecord, records_frame, worst
from settings import DEFAULT_TOLERANCES, RUN_DEFAULTS

logger = logging.getLogger(__name__)

# stream id of the suite-level draws, disjoint from per-sample ids
SUITE_STREAM = 10 ** 9


def wulff_inequality_check(E, W):
    E = as_body(E)
    n = W.dim
    phi = anisotropic_perimeter(E, W)
    floor = n * W.volume ** (1 / n) * E.volume ** ((n - 1) / n)
    return ResidualRecord.inequality('wulff_inequality', floor, phi, 1e-9 * phi)


def closure_check(E):
    E = as_body(E)
    residual = E.closure_residual()
    return ResidualRecord.inequality('divergence_closure', residual, 0.0, 1e-9)


def volume_consistency_check(P, rng, samples=1_000_000):
    """Offset formula against simplicial decomposition and Monte-Carlo hit counting."""
    simplicial = simplicial_volume(P)
    estimate, stderr = monte_carlo_volume(P, samples, rng)
    return [
        ResidualRecord.identity('volume_consistency', P.volume, simplicial, 1e-10, P.volume, 'simplicial'),
        ResidualRecord.identity('volume_consistency', P.volume, estimate, 3.0, max(stderr, 1e-300), 'monte-carlo'),
    ]


def dual_consistency_check(W, rng, pairs=10_000):
    records = [ResidualRecord.identity('dual_consistency', float(np.max(np.abs(W.gauge(W.body.vertices) - 1.0))),
                                       0.0, 1e-9, detail='gauge at vertices')]
    x = rng.normal(size=(pairs, W.dim))
    y = rng.normal(size=(pairs, W.dim))
    nu = rng.normal(size=(pairs, W.dim))
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    fenchel = np.einsum('ij,ij->i', x, nu) - W.gauge(x) * W.surface_tension(nu)
    records.append(ResidualRecord.inequality('dual_consistency', float(fenchel.max()), 0.0, 1e-9, 'fenchel'))
    gx, gy, gxy, gmy = W.gauge(x), W.gauge(y), W.gauge(x - y), W.gauge(-y)
    upper = gxy - (gx + gy)
    lower = (gx - gmy) - gxy
    cauchy = gy - np.linalg.norm(y, axis=1) / W.m_phi
    records.append(ResidualRecord.inequality('dual_consistency', float(max(upper.max(), lower.max())), 0.0, 1e-9,
                                             'gauge translation bound'))
    records.append(ResidualRecord.inequality('dual_consistency', float(cauchy.max()), 0.0, 1e-9,
                                             'gauge norm bound'))
    return records


def invariance_check(E, W, rng, tol=DEFAULT_TOLERANCES, factors=(0.5, 2.0)):
    """δ, α and β of r E + x against those of E."""
    E = as_body(E)
    base = (deficit(E, W), fraenkel_asymmetry(E, W, tol).value, oscillation_index(E, W, tol).beta_sq)
    records = []
    for r in factors:
        shift = 0.3 * rng.normal(size=W.dim)
        F = E.scale(r).translate(shift)
        moved = (deficit(F, W), fraenkel_asymmetry(F, W, tol).value, oscillation_index(F, W, tol).beta_sq)
        for name, before, after in zip(('deficit', 'asymmetry', 'beta^2'), base, moved):
            records.append(ResidualRecord.identity('invariance', before, after, 1e-6,
                                                   detail=f"{name} at r={r}"))
    return records


def coarea_check(E, W, y, tol=DEFAULT_TOLERANCES):
    """Cone decomposition against the co-area quadrature of I(y)."""
    cone = gamma_integral(E, W, y, tol)
    coarea = coarea_gamma(E, W, y, tol)
    return ResidualRecord.identity('coarea', cone, coarea, 1e-5, abs(cone))


def facet_ratio_series(W, direction, ts=tuple(2.0 ** -k for k in range(3, 9))):
    """max_i |F_i^{ta} Δ F_i| / (t |a|_inf) and the facet-area gaps over / t along t -> 0."""
    direction = np.asarray(direction, dtype=float)
    base = perturb(W, np.zeros(W.size))
    scale = float(np.max(np.abs(direction)))
    rows = []
    for t in ts:
        P = perturb(W, t * direction)
        ratios = [facet_symdiff(P, base, i) / (t * scale) for i in range(W.size)]
        gaps = facet_area_gap(P) / t
        rows.append({'t': t, 'ratio': max(ratios), **{f'gap_{i}': g for i, g in enumerate(gaps)}})
    return pd.DataFrame(rows)


def facet_asymptotics_check(series):
    """Ratios stay bounded (at most doubling between dyadic t) and gap slopes settle within [0.5, 2]."""
    ratio = series['ratio'].to_numpy()
    growth = float(np.max(ratio[1:] / np.maximum(ratio[:-1], 1e-300))) if len(ratio) > 1 else 1.0
    records = [ResidualRecord.inequality('facet_asymptotics', growth, 2.0, 1e-9, 'ratio growth')]
    slopes = series.filter(like='gap_').to_numpy()
    live = np.all(slopes > 1e-6 * max(slopes.max(), 1e-300), axis=0)
    if live.any():
        steps = slopes[1:, live] / slopes[:-1, live]
        spread = float(max(np.max(steps) - 2.0, 0.5 - np.min(steps)))
        records.append(ResidualRecord.inequality('facet_asymptotics', spread, 0.0, 1e-9, 'slope convergence'))
    return records


def metric_pair(W, a, b):
    """(|a - b|_inf, |K^a Δ K^b|, d_H(K^a, K^b)) for one pair of perturbations."""
    P, Q = perturb(W, a), perturb(W, b)
    return (float(np.max(np.abs(np.asarray(a) - np.asarray(b)))), symdiff_volume(P.body, Q.body),
            hausdorff_distance(P.body, Q.body))


def chain_constants(linf, l1, dh):
    """Smallest C1, C2, C3 with linf <= C1 l1 <= C2 dh <= C3 linf on every pair."""
    linf, l1, dh = (np.asarray(v, dtype=float) for v in (linf, l1, dh))
    keep = (linf > 0) & (l1 > 0) & (dh > 0)
    if not keep.any():
        return np.nan, np.nan, np.nan
    linf, l1, dh = linf[keep], l1[keep], dh[keep]
    c1 = float(np.max(linf / l1))
    c2 = float(np.max(c1 * l1 / dh))
    c3 = float(np.max(c2 * dh / linf))
    return c1, c2, c3


def metric_chain_check(linf, l1, dh):
    c1, c2, c3 = chain_constants(linf, l1, dh)
    if np.isnan(c1):
        return ResidualRecord('metric_chain', 0.0, 0.0, 0.0, True, 'no nonzero pairs')
    linf, l1, dh = (np.asarray(v, dtype=float) for v in (linf, l1, dh))
    slack = 1e-12 * max(1.0, c3)
    violations = int(np.sum(linf > c1 * l1 * (1 + slack)) + np.sum(c1 * l1 > c2 * dh * (1 + slack))
                     + np.sum(c2 * dh > c3 * linf * (1 + slack)))
    return ResidualRecord.inequality('metric_chain', violations, 0, 0,
                                     f"C1={c1:.6g}, C2={c2:.6g}, C3={c3:.6g}")


def parallel_sample(W, radius, seed, sample_id, generator='PCG64'):
    """Volume-normalised random K^a of sample `sample_id`."""
    rng = sample_rng(seed, sample_id, generator)
    return renormalize_volume(perturb(W, random_perturbation(W, radius, rng))), rng


def _threshold(W):
    try:
        return preset_threshold(W.name)
    except WulffLabError:
        return facet_loss_threshold(W)


def run_verify_suite(W, samples=100, seed=RUN_DEFAULTS.seed, a_radius=RUN_DEFAULTS.a_radius,
                     tol=DEFAULT_TOLERANCES, heavy_samples=5, generator=RUN_DEFAULTS.generator):
    """Every named check over `samples` random parallel polytopes; one worst-case row per check.

    Optimizer-bound checks (β, invariances, A/B, co-area) use the first
    `heavy_samples` samples only.
    """
    radius = min(a_radius, 0.5 * _threshold(W))
    logger.info("verify %s: %d samples, radius %.4g, seed %d", W.name, samples, radius, seed)
    checks = {}

    def add(records):
        for r in records if isinstance(records, list) else [records]:
            checks.setdefault(r.check, []).append(r)

    rng = sample_rng(seed, SUITE_STREAM, generator)
    add(dual_consistency_check(W, rng))
    add(volume_consistency_check(W.body, rng))
    bodies = [as_body(W.body), facet_bump(W, 0.1), notch(W, 0.1), satellite(W, 0.1)]
    linf, l1, dh = [], [], []
    for k in range(samples):
        P, sample_rng_k = parallel_sample(W, radius, seed, k, generator)
        identity = delta_identity(P)
        add(ResidualRecord.identity('delta_identity', identity.direct, identity.identity, 1e-10,
                                    max(1.0, abs(identity.direct)), f"sample {k}"))
        add(minkowski_closure_residual(P))
        i = k % W.size
        for phi in ({(0,) * (W.dim - 1): 1.0}, {(1,) + (0,) * (W.dim - 2): 1.0},
                    {(2,) + (0,) * (W.dim - 2): 1.0, (0,) * (W.dim - 2) + (1,): 0.5}):
            add(divergence_identity_residual(P, i, phi))
        add(wulff_inequality_check(P.body, W))
        add(closure_check(P.mesh))
        # single-direction partner for the facet bounds
        moved = P.entries.copy()
        moved[i] += sample_rng_k.uniform(-radius, radius)
        try:
            Q = perturb(W, moved)
            add(perturbed_facet_bound_check(P, Q, i).records)
        except WulffLabError as exc:
            logger.warning("sample %d: facet bound partner skipped: %s", k, exc)
        a2 = random_perturbation(W, radius, sample_rng_k)
        pair = metric_pair(W, P.entries, a2)
        linf.append(pair[0])
        l1.append(pair[1])
        dh.append(pair[2])
        if k < heavy_samples:
            osc = oscillation_index(P.body, W, tol)
            add(ResidualRecord.identity('beta_two_form', osc.beta_sq, osc.beta_sq_surface, tol.beta_agreement,
                                        detail=f"sample {k}"))
            ab = ab_decomposition(P, tol, beta_sq=osc.beta_sq)
            add(ResidualRecord.inequality('ab_bound', ab.beta_sq, ab.bound_rhs, 1e-5, f"sample {k}"))
            add(ResidualRecord.inequality('ab_coarea', ab.coarea_residual, 0.0, 1e-6, f"sample {k}"))
            add(slab_domination_check(P, i, tol=tol))
            y = 0.1 * sample_rng_k.uniform(-1, 1, size=W.dim)
            add(coarea_check(P.body, W, y, tol))
    for body in bodies:
        add(wulff_inequality_check(body, W))
        add(closure_check(body))
    add(coarea_check(bodies[0], W, np.zeros(W.dim), tol))
    add(coarea_check(bodies[1], W, bodies[1].centroid, tol))
    if samples:
        P, _ = parallel_sample(W, radius, seed, 0, generator)
        add(invariance_check(P.mesh, W, rng, tol))
        direction = P.entries / np.max(np.abs(P.entries)) * min(1.0, 4.0 * radius)
        add(facet_asymptotics_check(facet_ratio_series(W, direction)))
    add(metric_chain_check(linf, l1, dh))
    return records_frame([worst(name, rs) for name, rs in checks.items()])
