"""
app.py

Command-line entry point: python app.py {build,report,perturb,experiment,verify}.
Exit status is 0 on success, 1 when a check fails and 2 on bad input or config.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from anisotropy import stability_report
from data_gen import BODY_FAMILIES, PRESETS, generate_body, preset_threshold
from errors import ConfigError, DimensionMismatch, InputError, WulffLabError
from ingest import body_from_dict, perturbation_from_dict, read_json, wulff_from_dict, write_json
from lab import ExperimentConfig, compare_to_expected, expected_path, run_experiment, write_outputs
from parallel import perturb, renormalize_volume
from quality import run_verify_suite
from records import records_frame
from settings import DEFAULT_TOLERANCES, RUN_DEFAULTS

logger = logging.getLogger('app')

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2


def _tolerances(args):
    return DEFAULT_TOLERANCES.with_overrides(quad=args.tol_quad, geo=args.tol_geo)


def _shape(args, tol):
    if getattr(args, 'wulff', None):
        return wulff_from_dict(read_json(args.wulff), tol)
    return wulff_from_dict(args.preset, tol)


def _parse_vector(text):
    try:
        return np.array([float(v) for v in text.split(',')])
    except ValueError as exc:
        raise InputError(f"--a expects comma-separated numbers, got '{text}'") from exc


def cmd_build(args):
    tol = _tolerances(args)
    W = _shape(args, tol)
    doc = W.to_dict()
    doc.update({
        'volume': W.volume,
        'facet_areas': W.facet_areas.tolist(),
        'M_phi': W.M_phi,
        'm_phi': W.m_phi,
    })
    if not args.wulff:
        doc['a0'] = preset_threshold(args.preset)
    write_json(doc, args.out)
    return EXIT_OK


def cmd_report(args):
    tol = _tolerances(args)
    W = _shape(args, tol)
    if args.family:
        E = generate_body(W, args.family, args.t)
    elif args.body:
        doc = read_json(args.body)
        if isinstance(doc, dict) and 'base' in doc:
            # perturb output carries its own Wulff shape
            W, _ = perturbation_from_dict(doc, tol)
        E = body_from_dict(doc, tol)
    else:
        raise InputError("report needs a body file or --family")
    report = stability_report(E, W, tol)
    write_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_perturb(args):
    tol = _tolerances(args)
    W = _shape(args, tol)
    P = perturb(W, _parse_vector(args.a), tol)
    if not args.raw:
        P = renormalize_volume(P)
    write_json(P.to_dict(), args.out)
    return EXIT_OK


def cmd_experiment(args):
    doc = read_json(args.config)
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.config}: experiment config must be a JSON object")
    overrides = {'sample_count': args.samples, 'seed': args.seed, 'a_radius': args.a_radius}
    doc.update({k: v for k, v in overrides.items() if v is not None})
    tolerances = dict(doc.get('tolerances', {}))
    tolerances.update({k: v for k, v in (('quad', args.tol_quad), ('geo', args.tol_geo)) if v is not None})
    doc['tolerances'] = tolerances
    config = ExperimentConfig.from_dict(doc)
    records, fits, timings = run_experiment(config)
    write_outputs(records, fits, timings, args.out)
    (Path(args.out) / 'config.json').write_text(json.dumps(config.to_dict(), indent=2) + '\n')
    failed = int((records['error'] != '').sum()) if 'error' in records.columns else 0
    if failed:
        logger.warning("%d samples failed, see records.csv", failed)
    if args.check_expected:
        regressions = compare_to_expected(fits, expected_path(config.label, config.family, config.seed))
        frame = records_frame(regressions)
        if not frame.empty:
            print(frame.to_string(index=False))
        if not frame['pass'].all():
            return EXIT_FAILED
    return EXIT_FAILED if failed else EXIT_OK


def cmd_verify(args):
    tol = _tolerances(args)
    W = _shape(args, tol)
    table = run_verify_suite(W, samples=args.samples, seed=args.seed, a_radius=args.a_radius, tol=tol)
    if args.out:
        table.to_csv(args.out, index=False)
    print(table.to_string(index=False))
    failing = table.loc[~table['pass'], 'check'].tolist()
    if failing:
        logger.error("failed checks: %s", ', '.join(failing))
        return EXIT_FAILED
    logger.info("all %d checks passed", len(table))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='app.py', description='Crystalline Wulff shapes and their stability')
    parser.add_argument('-v', '--verbose', action='store_true')
    parser.add_argument('-q', '--quiet', action='store_true')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--preset', choices=sorted(PRESETS), default='square')
    common.add_argument('--wulff', help='Wulff shape JSON file, overrides --preset')
    common.add_argument('--tol-quad', type=float)
    common.add_argument('--tol-geo', type=float)
    sub = parser.add_subparsers(dest='command', required=True)

    build = sub.add_parser('build', parents=[common], help='construct and validate a Wulff shape')
    build.add_argument('--out')
    build.set_defaults(func=cmd_build)

    report = sub.add_parser('report', parents=[common], help='stability report for a body')
    report.add_argument('body', nargs='?', help="body JSON file, '-' for stdin")
    report.add_argument('--family', choices=BODY_FAMILIES)
    report.add_argument('--t', type=float, default=0.1)
    report.add_argument('--out')
    report.set_defaults(func=cmd_report)

    perturbation = sub.add_parser('perturb', parents=[common], help='emit K^a as JSON')
    perturbation.add_argument('--a', required=True, help='comma-separated entries a_1,...,a_N')
    perturbation.add_argument('--raw', action='store_true', help='skip the volume renormalisation')
    perturbation.add_argument('--out')
    perturbation.set_defaults(func=cmd_perturb)

    experiment = sub.add_parser('experiment', parents=[common], help='run an experiment config')
    experiment.add_argument('config')
    experiment.add_argument('--samples', type=int)
    experiment.add_argument('--seed', type=int)
    experiment.add_argument('--a-radius', type=float)
    experiment.add_argument('--out', default='results')
    experiment.add_argument('--check-expected', action='store_true',
                            help='compare fits with the expected/ store, freezing them on first run')
    experiment.set_defaults(func=cmd_experiment)

    verify = sub.add_parser('verify', parents=[common], help='run every identity and inequality check')
    verify.add_argument('--samples', type=int, default=RUN_DEFAULTS.sample_count)
    verify.add_argument('--seed', type=int, default=RUN_DEFAULTS.seed)
    verify.add_argument('--a-radius', type=float, default=RUN_DEFAULTS.a_radius)
    verify.add_argument('--out', help='CSV file for the residual table')
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except (InputError, ConfigError, DimensionMismatch, OSError, json.JSONDecodeError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except WulffLabError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
