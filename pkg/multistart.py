"""
multistart.py

Derivative-free multistart minimisation (scipy Nelder-Mead) with a
deterministic reduction: lowest value wins, exact ties go to the
lexicographically smallest point.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from errors import OptimizerFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SearchOutcome:
    x: np.ndarray
    value: float
    converged: bool
    starts: int
    evaluations: int


def _local_search(fun, x0, f0, step, xatol, max_iter):
    n = x0.size
    simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(n)])
    fatol = xatol * max(1.0, abs(f0))
    res = minimize(fun, x0, method='Nelder-Mead',
                   options={'initial_simplex': simplex, 'xatol': xatol, 'fatol': fatol,
                            'maxiter': max_iter, 'maxfev': 2 * max_iter})
    if not res.success:
        logger.debug("Nelder-Mead from %s stopped: %s", x0.tolist(), res.message)
    # a search that never beats its start keeps the start
    if res.fun >= f0 - 1e-14 * max(1.0, abs(f0)):
        return x0, f0, bool(res.success), int(res.nfev)
    return np.asarray(res.x, dtype=float), float(res.fun), bool(res.success), int(res.nfev)


def multistart_minimize(fun, starts, step, xatol, max_iter=4000, local_searches=None):
    """Minimise `fun` from several starts.

    Every start is evaluated first; local searches then run from the
    `local_searches` best of them (all starts when None).
    """
    starts = [np.asarray(s, dtype=float).ravel() for s in starts]
    if not starts:
        raise ValueError("multistart needs at least one start")
    values = [float(fun(s)) for s in starts]
    if not np.isfinite(values).any():
        raise OptimizerFailure(f"objective is not finite at any of {len(starts)} starts")
    finite = [k for k in range(len(starts)) if np.isfinite(values[k])]
    ranked = sorted(finite, key=lambda k: (values[k], tuple(starts[k])))
    chosen = ranked if local_searches is None else ranked[:max(1, int(local_searches))]
    results = [_local_search(fun, starts[k], values[k], step, xatol, max_iter) for k in chosen]
    x, value, converged, _ = min(results, key=lambda r: (r[1], tuple(r[0])))
    evaluations = len(starts) + sum(r[3] for r in results)
    if not any(r[2] for r in results):
        logger.warning("multistart: no local search converged, keeping best value %.12g", value)
    logger.debug("multistart: best %.12g at %s after %d evaluations", value, x.tolist(), evaluations)
    return SearchOutcome(x, value, converged, len(chosen), evaluations)
