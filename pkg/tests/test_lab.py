import json

import numpy as np
import pandas as pd
import pytest

from data_gen import facet_bump, sample_rng
from errors import ConfigError
from lab import (DEFAULT_PARAMETERS, RECORD_COLUMNS, ConstantFit, ExperimentConfig, compare_to_expected, density_estimate_check,
                 expected_path, fit_extreme, fit_slope, lipschitz_gamma_check, metric_equivalence_experiment,
                 replacement_gap_check, run_experiment, run_nonparallel_experiment, run_parallel_experiment,
                 write_outputs)


def test_config_defaults_and_validation():
    config = ExperimentConfig.from_dict({'preset': 'hexagon', 'sample_count': 3})
    assert config.seed == 42
    assert config.generator == 'PCG64'
    assert config.to_dict()['preset'] == 'hexagon'
    for bad in ({'color': 'red'}, {'family': 'spiral'}, {'sample_count': 0}, {'a_radius': 1.5},
                {'dimension': 3}, {'tolerances': {'nope': 1}}, {'generator': 'NoSuchGenerator'},
                {'kind': 'metric-equivalence', 'family': 'box'}):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)


def test_config_threshold_uses_the_trapezoid_short_side():
    ExperimentConfig.from_dict({'preset': 'trapezoid', 'a_radius': 0.5})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({'preset': 'trapezoid', 'a_radius': 0.65})


def test_worker_count_from_environment(monkeypatch):
    config = ExperimentConfig.from_dict({})
    monkeypatch.setenv('WULFFLAB_WORKERS', '3')
    assert config.worker_count == 3
    monkeypatch.setenv('WULFFLAB_WORKERS', 'many')
    with pytest.raises(ConfigError):
        config.worker_count
    assert ExperimentConfig.from_dict({'workers': 2}).worker_count == 2


def test_fits():
    fit = fit_extreme('C', [1.0, np.nan, 3.0, 2.0], 'demo')
    assert (fit.value, fit.count, fit.min, fit.mean) == (3.0, 3, 1.0, 2.0)
    assert fit_extreme('C', [1.0, 3.0], 'demo', kind='min').value == 1.0
    empty = fit_extreme('C', [], 'demo')
    assert empty.empty
    assert empty.to_dict()['value'] is None
    slope = fit_slope('S', [1.0, 2.0, 3.0], [3.0, 6.0, 9.0], 'demo')
    assert slope.value == pytest.approx(3.0)


def test_box_family_records():
    config = ExperimentConfig.from_dict({'family': 'box', 'parameters': [0.05, 0.1]})
    records, fits, timings = run_parallel_experiment(config)
    assert list(records.columns) == RECORD_COLUMNS
    assert (records['error'] == '').all()
    t = np.array([0.05, 0.1])
    assert np.allclose(records['delta'], t ** 2 / (2 * (1 + t)), rtol=1e-8)
    assert np.allclose(records['alpha'], 2 * t / (1 + t), rtol=1e-6)
    assert records['ok_delta_identity'].all()
    assert records['ok_ab_bound'].all()
    assert fits['C_lower'].value == pytest.approx(1 / 2.2, rel=1e-6)
    assert fits['C_main'].value >= 8 / 1.05 - 1e-6
    assert timings['sample_id'].tolist() == [0, 1]


def test_parallel_random_is_reproducible():
    config = ExperimentConfig.from_dict({'sample_count': 2, 'a_radius': 0.05, 'seed': 9})
    first, fits, _ = run_parallel_experiment(config)
    second, _, _ = run_parallel_experiment(config)
    pd.testing.assert_frame_equal(first, second)
    assert 'C_facet_slope' in fits
    assert (first['error'] == '').all()


def test_metric_equivalence_experiment():
    config = ExperimentConfig.from_dict({'kind': 'metric-equivalence', 'sample_count': 6})
    pairs, fits, _ = run_experiment(config)
    assert len(pairs) == 6
    assert set(fits) == {'C_equiv_L1', 'C_equiv_H', 'C_equiv_inf'}
    assert all(np.isfinite(f.value) for f in fits.values())
    assert metric_equivalence_experiment(config)[0].equals(pairs)


def test_expected_store(tmp_path):
    fits = {'C_main': ConstantFit('C_main', 10.0, 's', 3, 9.0, 10.0, 9.5),
            'C_facet_slope': ConstantFit('C_facet_slope', 2.0, 's', 6, 1.9, 2.1, 2.0)}
    path = expected_path('square', 'box', 42, tmp_path)
    assert path.name == 'square_box_seed42.json'
    assert compare_to_expected(fits, path) == []
    assert json.loads(path.read_text()) == {'C_main': 10.0, 'C_facet_slope': 2.0}
    assert all(r.passed for r in compare_to_expected(fits, path))
    grown = dict(fits, C_main=ConstantFit('C_main', 11.0, 's', 3, 9.0, 11.0, 10.0))
    assert not all(r.passed for r in compare_to_expected(grown, path))
    drifted = dict(fits, C_facet_slope=ConstantFit('C_facet_slope', 2.001, 's', 6, 1.9, 2.1, 2.0))
    assert not all(r.passed for r in compare_to_expected(drifted, path))


def _box_closed_forms(n, t):
    # K = [-1, 1]^n stretched by 1 + t along x and shrunk evenly elsewhere
    u, v = 1 + t, 1 / (1 + t)
    if n == 2:
        delta = t ** 2 / (2 * (1 + t))
        beta_sq = (u ** 2 - 1 - 2 * np.log(u)) / (2 * u)
        gamma = 8 * v + 8 * v * np.log(u)
        total = 8.0
    else:
        delta = t ** 2 / (3 * (1 + t))
        beta_sq = (1 + u - 3 * v + v ** 2 - 2 * v * np.log(u)) / 3
        gamma = 16 * v - 4 * v ** 2 + 8 * v * np.log(u)
        total = 12.0
    alpha = 2 * t / (1 + t)
    return {'C_main': (alpha ** 2 + beta_sq) / delta, 'C_lower': delta / t ** 2,
            'C_beta_parallel': beta_sq / delta, 'C_AB': (total - gamma) / delta}


@pytest.mark.parametrize('name, n', [('square', 2), ('cube', 3)])
def test_frozen_box_values_match_closed_forms(name, n):
    frozen = json.loads(expected_path(name, 'box', 42).read_text())
    rows = [_box_closed_forms(n, t) for t in DEFAULT_PARAMETERS['box']]
    assert frozen['C_lower'] == pytest.approx(min(r['C_lower'] for r in rows), rel=1e-9)
    for key in ('C_main', 'C_beta_parallel', 'C_AB'):
        assert frozen[key] == pytest.approx(max(r[key] for r in rows), rel=1e-9)


@pytest.mark.slow
@pytest.mark.parametrize('name', ['square', 'cube'])
def test_box_experiment_matches_the_expected_store(name):
    config = ExperimentConfig.from_dict({'preset': name, 'family': 'box'})
    _, fits, _ = run_parallel_experiment(config)
    records = compare_to_expected(fits, expected_path(name, 'box', 42))
    assert records
    assert all(r.passed for r in records), [r.detail for r in records if not r.passed]


def test_write_outputs(tmp_path):
    records = pd.DataFrame([{c: 0 for c in RECORD_COLUMNS}], columns=RECORD_COLUMNS)
    timings = pd.DataFrame({'sample_id': [0], 'wall_time': [0.1]})
    write_outputs(records, {'C': fit_extreme('C', [1.0], 's')}, timings, tmp_path / 'run')
    assert sorted(p.name for p in (tmp_path / 'run').iterdir()) == ['fits.json', 'records.csv', 'timings.csv']
    assert json.loads((tmp_path / 'run' / 'fits.json').read_text())['C']['value'] == 1.0


def test_density_estimate_on_the_cube(cube):
    assert density_estimate_check(cube.body, cube, r0=0.5, c0=0.01, samples=10, rng=sample_rng(1, 0)).passed
    failing = density_estimate_check(cube.body, cube, r0=4.0, c0=0.49, samples=10, rng=sample_rng(1, 0))
    assert not failing.passed
    assert failing.worst_constant < 0.49
    with pytest.raises(ConfigError):
        density_estimate_check(cube.body, cube, r0=1.0, c0=0.6, samples=1, rng=sample_rng(1, 0))


@pytest.mark.slow
def test_lipschitz_and_replacement_gap(square):
    E = facet_bump(square, 0.05)
    assert lipschitz_gamma_check(E, square).passed
    assert np.isfinite(replacement_gap_check(E, square))


@pytest.mark.slow
def test_nonparallel_experiment(square):
    config = ExperimentConfig.from_dict({'family': 'facet-bump', 'parameters': [0.05]})
    records, fits, _ = run_nonparallel_experiment(config)
    assert (records['error'] == '').all()
    t = 0.05
    assert records['delta'].iloc[0] == pytest.approx((8 + 2 * t) / (4 * np.sqrt(4 + t)) - 1, rel=1e-10)
    assert set(fits) == {'C_main', 'C_gap', 'C_close_par', 'C_close_E'}
