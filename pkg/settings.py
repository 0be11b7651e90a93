"""
settings.py

Tolerances and run defaults. The frozen values live in defaults.json next to
this file; everything here is a thin typed view over that document.
"""
import json
import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path

from errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).with_name('defaults.json')


@dataclass(frozen=True)
class Tolerances:
    geo: float = 1e-9
    quad: float = 1e-7
    beta_clamp: float = 1e-6
    beta_agreement: float = 1e-5
    identity: float = 1e-10
    exact_minimizer: float = 1e-12
    # simplex diameter at convergence, relative to M_phi
    optimizer_diameter: float = 1e-8
    optimizer_max_iter: int = 4000
    local_searches: int = 3
    gauss_order: int = 12
    coarea_limit: int = 400
    projection: float = 1e-7
    projection_max_iter: int = 200
    projection_damping: float = 0.5
    # forward-difference step for the cone-area Jacobian
    projection_step: float = 1e-6

    def with_overrides(self, **overrides):
        """Return a copy with the given fields replaced; None values are ignored."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        clean = {k: type(getattr(self, k))(v) for k, v in overrides.items() if v is not None}
        return replace(self, **clean)


@dataclass(frozen=True)
class RunDefaults:
    generator: str = 'PCG64'
    seed: int = 42
    a_radius: float = 0.1
    sample_count: int = 100
    regression_rtol: float = 1e-6
    regression_rtol_optimizer: float = 5e-2
    regression_growth: float = 0.05


def load_defaults(path=DEFAULTS_PATH):
    """Read (Tolerances, RunDefaults) from a defaults document."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        logger.warning("defaults file %s not found, using built-in values", path)
        return Tolerances(), RunDefaults()
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse defaults file {path}: {exc}") from exc
    tol = Tolerances().with_overrides(**doc.get('tolerances', {}))
    run_keys = {f.name for f in fields(RunDefaults)}
    run = doc.get('run', {})
    unknown = set(run) - run_keys
    if unknown:
        raise ConfigError(f"unknown run keys in {path}: {sorted(unknown)}")
    return tol, RunDefaults(**run)


DEFAULT_TOLERANCES, RUN_DEFAULTS = load_defaults()
