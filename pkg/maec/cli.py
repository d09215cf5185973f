"""The maec command line."""
import argparse
import logging
import sys
import time
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np

from . import __version__
from .config import SolverConfig
from .errors import MaecException, UsageError
from .estimators import alpha_step, beta_step, estimate
from .experiments import SWEEP_HEADER, sdmm_iteration_time, sensitivity_sweep
from .fields import export_pgm, read_field, snr_db, write_csv, write_field
from .kernels import prox_lse2_benchmark
from .manifest import MANIFEST_SUFFIX, RunManifest
from .operators import Direction, PathOperator
from .simulate import ForwardModel, PhantomKind, make_phantom, simulate_views
from .trace import write_trace_csv
from .utils import parse_size

__all__ = ('main', 'build_parser')

log = logging.getLogger(__name__)

METRICS_HEADER = ('command', 'field', 'snr_db', 'iterations', 'wall_seconds')
BENCH_HEADER = ('abs_diff', 'a', 'sign', 'lambda', 'iterations', 'residual')
SCALING_HEADER = ('n', 'seconds_per_iteration')

# argparse destinations that are not part of a run's arguments
_NOT_RECORDED = ('func', 'command', 'manifest', 'verbose', 'quiet')


class Run(NamedTuple):
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    config: Optional[Dict[str, Any]] = None
    seed: Optional[int] = None


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma separated numbers, got {text!r}') from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma separated integers, got {text!r}') from None


def _model(args) -> ForwardModel:
    first = PathOperator(args.axis, Direction.FORWARD, args.path_scale)
    ops = (first,) if args.views == 1 else (first, first.mirrored())
    return ForwardModel(ops, args.scale, args.range_squared)


def _config(args) -> SolverConfig:
    names = (
        'lambda_alpha', 'lambda_beta', 'gamma', 'gamma_beta', 'c1', 'c2', 'c2_beta', 'c3',
        'nit', 'cg_tol', 'cg_maxit', 'residual_tol', 'seed',
    )
    kwargs = {
        name: getattr(args, name) for name in names
        if getattr(args, name, None) is not None
    }
    iters = getattr(args, 'sdmm_iters', None)
    if iters is not None:
        kwargs.update(warm_start_iters=iters, alpha_iters=iters, beta_iters=iters)
    return SolverConfig(**kwargs)


def _read_views(args) -> List[np.ndarray]:
    if args.views == 2 and not args.u2:
        raise UsageError('two views need --u2')
    paths = [args.u1] if args.views == 1 else [args.u1, args.u2]
    return [read_field(p) for p in paths]


def _view_inputs(args) -> Dict[str, str]:
    inputs = {'u1': args.u1}
    if args.views == 2:
        inputs['u2'] = args.u2
    return inputs


def _write(field, path, role: str, outputs: Dict[str, str], export: bool):
    write_field(field, path)
    outputs[role] = path
    log.info('Wrote %s to %s', role, path)
    if export and field.ndim == 2:
        hi = float(field.max())
        if hi <= 0:
            log.warning('PGM range of %s is degenerate, exporting over [0, 1]', role)
            hi = 1.0
        pgm = f'{path}.pgm'
        export_pgm(field, pgm, 0.0, hi)
        outputs[f'{role}_pgm'] = pgm


def _metrics(args, rows, outputs: Dict[str, str]):
    if args.metrics:
        write_csv(rows, METRICS_HEADER, args.metrics)
        outputs['metrics'] = args.metrics


def _snr(estimate_, truth_path) -> Any:
    if not truth_path:
        return ''
    return snr_db(estimate_, read_field(truth_path))


def cmd_phantom(args) -> Run:
    dims = parse_size(args.size)
    beta, alpha = make_phantom(args.kind, dims, args.beta_max, args.alpha_max, args.seed)
    outputs = {}
    _write(beta, args.out_beta, 'beta', outputs, args.export_pgm)
    _write(alpha, args.out_alpha, 'alpha', outputs, args.export_pgm)
    return Run({}, outputs, seed=args.seed)


def cmd_simulate(args) -> Run:
    if args.views == 2 and not args.out_u2:
        raise UsageError('two views need --out-u2')
    beta = read_field(args.beta)
    alpha = read_field(args.alpha)
    views = simulate_views(_model(args), beta, alpha, args.seed, args.noiseless)

    outputs = {}
    for j, (u, path) in enumerate(zip(views, (args.out_u1, args.out_u2))):
        _write(u, path, f'u{j + 1}', outputs, args.export_pgm)
    return Run({'beta': args.beta, 'alpha': args.alpha}, outputs, seed=args.seed)


def cmd_estimate(args) -> Run:
    args.views = 2
    views = _read_views(args)
    model = _model(args)
    truth_alpha = read_field(args.truth_alpha) if args.truth_alpha else None
    truth_beta = read_field(args.truth_beta) if args.truth_beta else None

    result = estimate(views, model, _config(args), truth_alpha=truth_alpha, truth_beta=truth_beta)
    log.info('Estimated in %.2f s, %d SDMM iterations', result.wall_seconds, result.iterations)

    outputs = {}
    _write(result.alpha_hat, args.out_alpha, 'alpha', outputs, args.export_pgm)
    _write(result.beta_hat, args.out_beta, 'beta', outputs, args.export_pgm)
    if args.trace:
        write_trace_csv(result.inner_trace + result.trace, args.trace)
        outputs['trace'] = args.trace
    _metrics(args, [
        ('estimate', 'alpha', result.metrics.get('snr_alpha_db', ''), result.iterations, result.wall_seconds),
        ('estimate', 'beta', result.metrics.get('snr_beta_db', ''), result.iterations, result.wall_seconds),
    ], outputs)

    inputs = _view_inputs(args)
    inputs.update({k: getattr(args, k) for k in ('truth_alpha', 'truth_beta') if getattr(args, k)})
    return Run(inputs, outputs, result.config.to_mapping(), result.config.seed)


def cmd_correct_density(args) -> Run:
    views = _read_views(args)
    alpha = read_field(args.alpha)
    cfg = _config(args).resolve(views)

    started = time.perf_counter()
    beta, trace = beta_step(views, alpha, _model(args), cfg)
    elapsed = time.perf_counter() - started

    outputs = {}
    _write(beta, args.out_beta, 'beta', outputs, args.export_pgm)
    if args.trace:
        write_trace_csv(trace, args.trace)
        outputs['trace'] = args.trace
    _metrics(args, [('correct-density', 'beta', _snr(beta, args.truth_beta), len(trace), elapsed)], outputs)

    inputs = _view_inputs(args)
    inputs['alpha'] = args.alpha
    return Run(inputs, outputs, cfg.to_mapping(), cfg.seed)


def cmd_estimate_attenuation(args) -> Run:
    views = _read_views(args)
    beta = read_field(args.beta)
    cfg = _config(args).resolve(views)

    started = time.perf_counter()
    alpha, trace = alpha_step(views, beta, _model(args), cfg)
    elapsed = time.perf_counter() - started

    outputs = {}
    _write(alpha, args.out_alpha, 'alpha', outputs, args.export_pgm)
    if args.trace:
        write_trace_csv(trace, args.trace)
        outputs['trace'] = args.trace
    _metrics(args, [('estimate-attenuation', 'alpha', _snr(alpha, args.truth_alpha), len(trace), elapsed)],
             outputs)

    inputs = _view_inputs(args)
    inputs['beta'] = args.beta
    return Run(inputs, outputs, cfg.to_mapping(), cfg.seed)


def cmd_prox_bench(args) -> Run:
    bench = prox_lse2_benchmark(args.lo_exp, args.hi_exp)
    rows = zip(bench.diff, bench.a, bench.sign, bench.lam, bench.iterations.tolist(), bench.residual)
    write_csv(rows, BENCH_HEADER, args.out)
    print(f'cells {bench.diff.size}, max iterations {bench.max_iterations}, '
          f'mean iterations {bench.mean_iterations:.3f}, max residual {bench.max_residual:.3e}')
    return Run({}, {'bench': args.out})


def cmd_sweep(args) -> Run:
    rows = sensitivity_sweep(
        args.beta_max, args.alpha_max,
        kind=args.kind, dims=parse_size(args.size), cfg=_config(args), seed=args.seed,
    )
    write_csv((r.astuple() for r in rows), SWEEP_HEADER, args.out)
    return Run({}, {'sweep': args.out}, seed=args.seed)


def cmd_scaling(args) -> Run:
    rows = []
    for n in args.sizes:
        seconds = sdmm_iteration_time(n, args.iterations, args.seed)
        print(f'n={n}: {seconds:.4g} s per iteration')
        rows.append((n, seconds))
    if len(rows) > 1 and rows[0][1] > 0:
        print(f'growth n={rows[0][0]} -> n={rows[-1][0]}: x{rows[-1][1] / rows[0][1]:.2f}')
    write_csv(rows, SCALING_HEADER, args.out)
    return Run({}, {'scaling': args.out}, seed=args.seed)


def cmd_replay(args) -> Run:
    manifest = RunManifest.read(args.source)
    func = COMMANDS.get(manifest.command)
    if func is None or func is cmd_replay:
        raise UsageError(f'cannot replay command {manifest.command!r}')
    if manifest.version != __version__:
        log.warning('Replaying a manifest of maec %s with maec %s', manifest.version, __version__)
    replayed = argparse.Namespace(**manifest.arguments)
    replayed.command = manifest.command
    log.info('Replaying %s from %s', manifest.command, args.source)
    return func(replayed)


COMMANDS = {
    'phantom': cmd_phantom,
    'simulate': cmd_simulate,
    'estimate': cmd_estimate,
    'correct-density': cmd_correct_density,
    'estimate-attenuation': cmd_estimate_attenuation,
    'prox-bench': cmd_prox_bench,
    'sweep': cmd_sweep,
    'scaling': cmd_scaling,
    'replay': cmd_replay,
}


def _add_model_args(p, views: bool = True):
    if views:
        p.add_argument('--views', type=int, choices=(1, 2), default=2,
                       help='Number of views, 1 for a lidar profile (default: 2)')
    p.add_argument('--axis', type=int, default=0, help='Axis light travels along (default: 0)')
    p.add_argument('--path-scale', type=float, default=1.0,
                   help='Factor of the path integrals, 1 + c for proportional attenuations (default: 1)')
    p.add_argument('--scale', type=float, default=1.0, help='Instrument constant C (default: 1)')
    p.add_argument('--range-squared', action='store_true', help='Apply the lidar 1/x^2 range weight')


def _add_solver_args(p, alpha: bool = True, beta: bool = True):
    if alpha:
        p.add_argument('--lambda-alpha', type=float, help='TV weight of the attenuation (default: 1)')
        p.add_argument('--gamma', type=float, help='SDMM step of the attenuation problems (default: 1)')
        p.add_argument('--c2', type=float, help='Gradient balance constant (default: n^(1/d))')
        p.add_argument('--c3', type=float, help='Nonnegativity balance constant (default: 1)')
    if beta:
        p.add_argument('--lambda-beta', type=float, help='TV weight of the density (default: mean(u)^(-1/2))')
        p.add_argument('--gamma-beta', type=float, help='SDMM step of the density problem (default: max(1, mean(u)/m))')
        p.add_argument('--c2-beta', type=float, help='Gradient balance constant of the density problem (default: 1)')
    p.add_argument('--c1', type=float, help='Data term balance constant (default: 1)')
    p.add_argument('--sdmm-iters', type=int, help='SDMM iterations of every subproblem (default: 500/500/300)')
    p.add_argument('--cg-tol', type=float, help='Relative CG tolerance (default: 1e-10)')
    p.add_argument('--cg-maxit', type=int, help='CG iterations per x-update (default: 10 n^(1/d))')
    p.add_argument('--residual-tol', type=float, help='SDMM early exit residual (default: 1e-9)')
    p.add_argument('--seed', type=int, default=0, help='Seed recorded with the run (default: 0)')


def _add_output_args(p, metrics: bool = True):
    p.add_argument('--export-pgm', action='store_true', help='Also write 2D outputs as 16-bit PGM')
    if metrics:
        p.add_argument('--metrics', help='Write a metrics CSV to this path')
        p.add_argument('--trace', help='Write the solver trace CSV to this path')
    p.add_argument('--manifest', help=f'Manifest path (default: first output + {MANIFEST_SUFFIX})')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='maec',
        description='Multiview attenuation estimation and correction.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='More logging, repeatable')
    parser.add_argument('-q', '--quiet', action='store_true', help='Only log errors')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('phantom', help='Generate a density and attenuation phantom')
    p.add_argument('--kind', choices=[k.value for k in PhantomKind], default='blocks')
    p.add_argument('--size', default='64x64', help='Extents in axis order, e.g. 64x64 (default: 64x64)')
    p.add_argument('--beta-max', type=float, default=100.0, help='Maximum density (default: 100)')
    p.add_argument('--alpha-max', type=float, default=0.03, help='Maximum attenuation (default: 0.03)')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out-beta', required=True)
    p.add_argument('--out-alpha', required=True)
    _add_output_args(p, metrics=False)

    p = sub.add_parser('simulate', help='Simulate counts of every view')
    p.add_argument('--beta', required=True, help='Density field')
    p.add_argument('--alpha', required=True, help='Attenuation field')
    _add_model_args(p)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--noiseless', action='store_true', help='Write the intensities instead of counts')
    p.add_argument('--out-u1', required=True)
    p.add_argument('--out-u2')
    _add_output_args(p, metrics=False)

    p = sub.add_parser('estimate', help='Estimate attenuation and density from two views')
    p.add_argument('--u1', required=True)
    p.add_argument('--u2', required=True)
    _add_model_args(p, views=False)
    _add_solver_args(p)
    p.add_argument('--nit', type=int, help='Alternating rounds after the two-step recipe (default: 0)')
    p.add_argument('--truth-alpha', help='True attenuation, enables its SNR')
    p.add_argument('--truth-beta', help='True density, enables its SNR')
    p.add_argument('--out-alpha', required=True)
    p.add_argument('--out-beta', required=True)
    _add_output_args(p)

    p = sub.add_parser('correct-density', help='Estimate the density for a known attenuation')
    p.add_argument('--u1', required=True)
    p.add_argument('--u2')
    p.add_argument('--alpha', required=True)
    _add_model_args(p)
    _add_solver_args(p, alpha=False)
    p.add_argument('--truth-beta')
    p.add_argument('--out-beta', required=True)
    _add_output_args(p)

    p = sub.add_parser('estimate-attenuation', help='Estimate the attenuation for a known density')
    p.add_argument('--u1', required=True)
    p.add_argument('--u2')
    p.add_argument('--beta', required=True)
    _add_model_args(p)
    _add_solver_args(p, beta=False)
    p.add_argument('--truth-alpha')
    p.add_argument('--out-alpha', required=True)
    _add_output_args(p)

    p = sub.add_parser('prox-bench', help='Benchmark the logsumexp prox over a dyadic grid')
    p.add_argument('--lo-exp', type=int, default=-10, help='Smallest exponent of 2 (default: -10)')
    p.add_argument('--hi-exp', type=int, default=20, help='Largest exponent of 2 (default: 20)')
    p.add_argument('--out', required=True, help='CSV path')
    p.add_argument('--manifest')

    p = sub.add_parser('sweep', help='Sensitivity of the pipeline to the amplitudes')
    p.add_argument('--kind', choices=[k.value for k in PhantomKind], default='stripes')
    p.add_argument('--size', default='64x64')
    p.add_argument('--beta-max', type=_float_list, default=[10.0, 100.0, 1000.0],
                   help='Comma separated densities (default: 10,100,1000)')
    p.add_argument('--alpha-max', type=_float_list, default=[0.01, 0.03, 0.1],
                   help='Comma separated attenuations (default: 0.01,0.03,0.1)')
    _add_solver_args(p)
    p.add_argument('--nit', type=int)
    p.add_argument('--out', required=True, help='CSV path')
    p.add_argument('--manifest')

    p = sub.add_parser('scaling', help='Time one SDMM iteration against the number of pixels')
    p.add_argument('--sizes', type=_int_list, default=[2 ** 14, 2 ** 16],
                   help='Comma separated pixel counts (default: 16384,65536)')
    p.add_argument('--iterations', type=int, default=5)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, help='CSV path')
    p.add_argument('--manifest')

    p = sub.add_parser('replay', help='Re-run the command recorded in a manifest')
    p.add_argument('source', metavar='MANIFEST')
    p.add_argument('--manifest')

    for name, func in COMMANDS.items():
        sub.choices[name].set_defaults(func=func)
    return parser


def _configure_logging(args):
    if args.quiet:
        level = logging.ERROR
    else:
        level = max(logging.DEBUG, logging.WARNING - 10 * args.verbose)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


def _recorded_arguments(args) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in _NOT_RECORDED}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)

    try:
        if args.command == 'replay':
            replayed = RunManifest.read(args.source)
            command, arguments = replayed.command, replayed.arguments
        else:
            command, arguments = args.command, _recorded_arguments(args)
        run = args.func(args)

        if run.outputs:
            path = args.manifest or next(iter(run.outputs.values())) + MANIFEST_SUFFIX
            RunManifest(
                command=command,
                arguments=arguments,
                version=__version__,
                config=run.config,
                inputs=run.inputs,
                outputs=run.outputs,
                seed=run.seed,
            ).write(path)
    except (MaecException, OSError) as e:
        print(f'maec: error: {e}', file=sys.stderr)
        return 1
    return 0
