"""
Command-line entry point.

    rql simulate --lambda 1 --mu 2 --deadline 2 --n 100000 --out runs/a.csv
    rql analytic --lambda 1 --mu 1 --deadline 5 --grid 0:5:51 --out f.csv
    rql estimate-m --lambda 2 --mu 1 --deadline 1 --reps 100000 --format json
    rql busy-sample --lambda 1 --mu 2 --samples 1000 --out busy.csv
    rql compare --config samples/critical.env

Exit codes: 0 success, 1 invalid input, 2 runtime or resource failure,
3 acceptance failure in ``compare``.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np
from dotenv import dotenv_values
from pydantic import ValidationError

from src import reporting
from src.errors import ParameterError, QueueModelError, ResourceCeilingError, TransientRegimeError
from src.model import validate
from src.pipeline import ExperimentPipeline, RunConfig
from src.simulator import served_waits

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_REJECTED = 3

# config-file key -> argparse destination
_FILE_KEYS = {
    'lambda': 'lam',
    'mu': 'mu',
    'deadline': 'deadline',
    'seed': 'seed',
    'n': 'n',
    'burn_in': 'burn_in',
    'reps': 'reps',
    'out': 'out',
    'format': 'format',
    'grid': 'grid',
    'm': 'm',
    'method': 'method',
    'confidence': 'confidence',
    'samples': 'samples',
}

_FLOAT_KEYS = {'lam', 'mu', 'deadline', 'm', 'confidence'}
_INT_KEYS = {'seed', 'n', 'burn_in', 'reps', 'samples'}


def parse_grid(text: str) -> list[float]:
    """``0,0.5,1`` or ``start:stop:count`` (inclusive, evenly spaced)."""
    text = text.strip()
    try:
        if ':' in text:
            start, stop, count = text.split(':')
            n = int(count)
            if n < 1:
                raise ParameterError('grid', "grid count must be positive")
            return [float(x) for x in np.linspace(float(start), float(stop), n)]
        return [float(x) for x in text.split(',') if x.strip()]
    except ValueError as e:
        if isinstance(e, ParameterError):
            raise
        raise ParameterError('grid', f"cannot parse grid {text!r}") from e


def load_config_file(path: str) -> dict[str, Any]:
    """Flat key=value file -> argparse destinations with typed values."""
    if not Path(path).is_file():
        raise OSError(f"config file not found: {path}")
    values: dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        key = key.strip().lower().replace('-', '_')
        if key not in _FILE_KEYS:
            logger.warning(f"Ignoring unknown config key {key!r}")
            continue
        if raw is None:
            continue
        dest = _FILE_KEYS[key]
        try:
            if dest in _FLOAT_KEYS:
                values[dest] = float(raw)
            elif dest in _INT_KEYS:
                values[dest] = int(raw)
            else:
                values[dest] = raw.strip()
        except ValueError as e:
            raise ParameterError(key, f"{key} has an invalid value {raw!r}") from e
    return values


def _merged(args: argparse.Namespace) -> dict[str, Any]:
    merged = load_config_file(args.config) if args.config else {}
    for dest in set(_FILE_KEYS.values()):
        value = getattr(args, dest, None)
        if value is not None:
            merged[dest] = value
    return merged


def build_config(args: argparse.Namespace) -> tuple[RunConfig, dict[str, Any]]:
    """Settings defaults, then the config file, then flags."""
    merged = _merged(args)
    raw_params = {'lambda': merged.get('lam'), 'mu': merged.get('mu')}
    raw_params = {k: v for k, v in raw_params.items() if v is not None}
    if 'deadline' in merged:
        raw_params['deadline'] = merged['deadline']
    params = validate(raw_params)

    fields: dict[str, Any] = {'params': params}
    for dest, field in [('seed', 'seed'), ('n', 'n_customers'), ('burn_in', 'burn_in'),
                        ('reps', 'replications'), ('out', 'output_path'),
                        ('format', 'format'), ('m', 'm'), ('method', 'method'),
                        ('confidence', 'confidence'), ('samples', 'samples')]:
        if dest in merged:
            fields[field] = merged[dest]
    try:
        config = RunConfig(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        name = str(first['loc'][0]) if first['loc'] else 'config'
        raise ParameterError(name, f"{name}: {first['msg']}") from e
    return config, merged


def cmd_simulate(config: RunConfig) -> int:
    pipeline = ExperimentPipeline(config)
    path = pipeline.run_simulation()
    burn_in = config.effective_burn_in
    waits = served_waits(path, burn_in)
    out = Path(config.output_path)
    if config.format == 'csv':
        reporting.write_outcomes_csv(out, path.outcomes)
        reporting.write_served_csv(reporting.served_path(out), waits, first_rank=burn_in)
    else:
        reporting.write_json(out, {
            'summary': path.summary(),
            'burn_in': burn_in,
            'outcomes': [reporting.outcome_json(o) for o in path.outcomes],
            'served_waits': waits,
        })
    logger.info(f"Wrote {len(path.outcomes)} outcomes to {out}")
    for line in path.diagnostics:
        logger.warning(line)
    return EXIT_OK


def cmd_analytic(config: RunConfig, grid: list[float]) -> int:
    pipeline = ExperimentPipeline(config)
    rows = pipeline.analytic_table(grid)
    out = Path(config.output_path)
    if config.format == 'csv':
        reporting.write_analytic_csv(out, rows)
    else:
        reporting.write_json(out, {
            'params': config.params.describe(),
            'rows': [dict(zip(reporting.ANALYTIC_HEADER, row)) for row in rows],
        })
    logger.info(f"Wrote {len(rows)} analytic rows to {out}")
    return EXIT_OK


def cmd_estimate_m(config: RunConfig) -> int:
    pipeline = ExperimentPipeline(config)
    estimate = pipeline.estimate_return_law()
    out = Path(config.output_path)
    if config.format == 'csv':
        reporting.write_return_law_csv(out, estimate.q_hat)
    else:
        reporting.write_json(out, {
            'm_hat': estimate.m_hat,
            'ci_half_width': estimate.ci_half_width,
            'replications': estimate.replications,
            'confidence': estimate.confidence,
            'method': estimate.method,
            'q_hat': {str(k): v for k, v in estimate.q_hat.items()},
        })
    print(f"M = {estimate.m_hat:.6g} ± {estimate.ci_half_width:.3g} "
          f"({estimate.confidence:.0%}, {estimate.replications} replications)")
    return EXIT_OK


def cmd_busy_sample(config: RunConfig) -> int:
    pipeline = ExperimentPipeline(config)
    batch = pipeline.busy_sample()
    out = Path(config.output_path)
    if config.format == 'csv':
        reporting.write_busy_csv(out, batch.samples)
    else:
        reporting.write_json(out, {
            'finite_fraction': batch.finite_fraction,
            'exhausted': batch.exhausted_count,
            'samples': [
                {'duration': reporting.format_float(s.duration), 'tau3': s.tau3}
                for s in batch.samples
            ],
        })
    print(f"finite fraction {batch.finite_fraction:.4f} over {len(batch.samples)} samples")
    return EXIT_OK


def cmd_compare(config: RunConfig, state_path: Optional[str] = None) -> int:
    pipeline = ExperimentPipeline(config)
    summary = pipeline.compare()
    out = Path(config.output_path)
    if out.suffix != '.json':
        out = out.with_suffix('.json')
    reporting.write_json(out, summary.to_dict())
    if state_path:
        pipeline.save_state(state_path)
    verdict = 'PASS' if summary.passed else 'FAIL'
    print(f"{verdict}: KS = {summary.ks:.4f} on {summary.n} served waits, "
          f"M = {summary.m_hat:.6g}")
    for line in summary.advisories:
        logger.warning(line)
    return EXIT_OK if summary.passed else EXIT_REJECTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='rql',
        description="M/M/1 queue with deadline impatience and LIFO service",
    )
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help="-v for progress, -vv for debug detail")
    sub = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--lambda', dest='lam', type=float, help="arrival rate")
    common.add_argument('--mu', type=float, help="service rate")
    common.add_argument('--deadline', type=float, help="patience bound T (accepts inf)")
    common.add_argument('--seed', type=int)
    common.add_argument('--n', type=int, help="customers to simulate")
    common.add_argument('--burn-in', dest='burn_in', type=int)
    common.add_argument('--reps', type=int, help="replications for M")
    common.add_argument('--out', help="output path")
    common.add_argument('--format', choices=['csv', 'json'])
    common.add_argument('--config', help="key=value file; flags override its values")
    common.add_argument('--method', choices=['normal', 'median_of_means'])
    common.add_argument('--confidence', type=float)

    sub.add_parser('simulate', parents=[common], help="simulate one sample path")
    analytic = sub.add_parser('analytic', parents=[common], help="tabulate F_T and f_rho")
    analytic.add_argument('--grid', help="comma list or start:stop:count")
    analytic.add_argument('--m', type=float, help="M to use instead of estimating it")
    sub.add_parser('estimate-m', parents=[common], help="estimate M = E[tau]")
    busy = sub.add_parser('busy-sample', parents=[common], help="sample classical busy periods")
    busy.add_argument('--samples', type=int)
    compare = sub.add_parser('compare', parents=[common],
                             help="served-wait ECDF against the limiting law")
    compare.add_argument('--state', help="also save the step record to this JSON file")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    try:
        config, merged = build_config(args)
        if args.command == 'simulate':
            return cmd_simulate(config)
        if args.command == 'analytic':
            grid_text = merged.get('grid')
            if grid_text is None:
                T = config.params.deadline
                grid = [0.0] if math.isinf(T) else parse_grid(f"0:{T!r}:101")
            else:
                grid = parse_grid(str(grid_text))
            return cmd_analytic(config, grid)
        if args.command == 'estimate-m':
            return cmd_estimate_m(config)
        if args.command == 'busy-sample':
            return cmd_busy_sample(config)
        if args.command == 'compare':
            return cmd_compare(config, getattr(args, 'state', None))
    except ParameterError as e:
        print(f"error: {e.field}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except TransientRegimeError as e:
        print(f"error: transient regime: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ResourceCeilingError, QueueModelError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    parser.error(f"unknown command {args.command}")
    return EXIT_INVALID


if __name__ == '__main__':
    sys.exit(main())
