"""
Command line interface: generate synthetic series, build regression blocks, fit MPPCCA models, evaluate
clusterings and run repeated seeded experiments.

Exit codes are 0 on success, 2 on usage or input errors and 3 when EM did not converge (artifacts are still
written).
"""
import argparse
from dataclasses import dataclass, replace, field
from multiprocessing import Pool
import json
import logging
import os
import sys
import warnings

from numpy import asarray, full, nan, percentile, median, mean, std, vstack, isfinite
from numpy.random import SeedSequence

from causalpatterns.version import __version__
from causalpatterns.base import CausalPatternsError
from causalpatterns.preprocess import EmbeddingSpec, build_regression_blocks
from causalpatterns.mppcca import FitConfig, MppccaModel, fit
from causalpatterns.clustering import hard_assign, kmeans_baseline, misallocation_rate, misallocation_curve, \
    clusterwise_gc
from causalpatterns.synthgen import Exp1Params, Exp2Params, gen_exp1, gen_exp2
from causalpatterns.utility import read_series_csv, write_table, thread_count


__all__ = ['RunConfig', 'build_parser', 'main', 'cmd_generate', 'cmd_preprocess', 'cmd_fit', 'cmd_eval',
           'cmd_gc', 'cmd_experiment']

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3


@dataclass(frozen=True)
class RunConfig:
    """
    Parameters shared by the commands that build regression blocks and fit models.
    """
    k: int = 3
    dt: int = None
    eta_c: float = 1e-6
    eta_wx: float = 1e-6
    tol: float = 1e-6
    max_iters: int = 200
    restarts: int = 10
    seed: int = 0
    delay: int = 1
    stride: int = 1
    window: int = 1
    target_ratio: float = 1.0
    kinematic: bool = False
    block_diagonal: bool = False
    regroup: bool = True
    jobs: int = 1
    effect_columns: tuple = ('y', )
    cause_columns: tuple = ('x', )
    ridge: float = field(default=None)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be greater than 0.")
        if not 0 < self.target_ratio <= 1:
            raise ValueError("target_ratio must be in (0, 1].")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be greater than or equal to 0.")

    @classmethod
    def from_args(cls, args):
        values = {name: getattr(args, name) for name in cls.__dataclass_fields__ if hasattr(args, name)}
        for name in ('effect_columns', 'cause_columns'):
            if name in values and isinstance(values[name], str):
                values[name] = tuple(c.strip() for c in values[name].split(',') if c.strip())
        return cls(**values)

    def embedding_spec(self):
        return EmbeddingSpec(delay=self.delay, stride=self.stride, window=self.window)

    def fit_config(self, **overrides):
        cfg = FitConfig(eta_c=self.eta_c, eta_wx=self.eta_wx, tol=self.tol, max_iters=self.max_iters,
                        restarts=self.restarts, seed=self.seed, enforce_block_diagonal=self.block_diagonal,
                        regroup=self.regroup, n_jobs=thread_count(self.jobs))
        return replace(cfg, **overrides)

    def blocks(self, path, return_bases=False):
        """Read a series CSV and build its regression blocks."""
        effect = read_series_csv(path, list(self.effect_columns))
        cause = read_series_csv(path, list(self.cause_columns))
        return build_regression_blocks(effect, cause, self.embedding_spec(), target_ratio=self.target_ratio,
                                       kinematic=self.kinematic, return_bases=return_bases)


def _truth(path, column, times):
    labels = read_series_csv(path, [column])[:, 0].astype(int)
    return labels[times]


def _write_json(path, doc):
    with open(path, 'w') as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write('\n')


def cmd_generate(args):
    """Write a synthetic labeled series to CSV and print its segments."""
    if args.experiment == 'exp1':
        params = Exp1Params(samples_per_cluster=args.samples_per_cluster, noise=args.noise)
        series = gen_exp1(params, seed=args.seed)
    else:
        params = Exp2Params.as_printed(noise=args.noise) if args.as_printed else Exp2Params(noise=args.noise)
        series = gen_exp2(params, seed=args.seed)

    series.to_csv(args.out)
    print(f"T = {series.n_samples}")
    for label, start, stop in series.segments():
        print(f"label {label}: [{start}, {stop})")
    return EXIT_OK


def cmd_preprocess(args):
    """Write the regression blocks of a series CSV, and optionally their PCA bases."""
    run = RunConfig.from_args(args)
    dataset, bases = run.blocks(args.input, return_bases=True)

    columns = {'t': dataset.times}
    for name, block in (('x', dataset.x), ('y1', dataset.y1), ('y2', dataset.y2)):
        for j in range(block.shape[1]):
            columns[f'{name}_{j}'] = block[:, j]
    write_table(args.out, columns)

    if args.bases is not None:
        _write_json(args.bases, {name: basis.to_dict() for name, basis in bases.items()})
    print(f"N = {dataset.n_samples}, dx = {dataset.dx}, d1 = {dataset.d1}, d2 = {dataset.d2}")
    return EXIT_OK


def cmd_fit(args):
    """Fit an MPPCCA model and write model.json, resp.csv and trace.csv."""
    run = RunConfig.from_args(args)
    dataset = run.blocks(args.input)
    model, resp, trace = fit(dataset, run.k, dt=run.dt, config=run.fit_config())

    os.makedirs(args.out_dir, exist_ok=True)
    model.save(os.path.join(args.out_dir, 'model.json'))

    columns = {'t': dataset.times}
    for j in range(resp.k):
        columns[f'r_{j}'] = resp.r[:, j]
    write_table(os.path.join(args.out_dir, 'resp.csv'), columns)
    trace.to_frame().to_csv(os.path.join(args.out_dir, 'trace.csv'), index=False, float_format='%.17g')

    print(f"log-likelihood = {trace.final_log_likelihood:.17g} after {trace.n_iters} iterations "
          f"(restart {trace.restart}, converged: {trace.converged})")
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_eval(args):
    """Evaluate a fitted model against ground truth labels and the k-means baseline."""
    run = RunConfig.from_args(args)
    dataset = run.blocks(args.input)
    model = MppccaModel.load(args.model)
    truth = _truth(args.input, args.truth_column, dataset.times)

    est = model.predict(dataset)
    km = kmeans_baseline(dataset, model.k, seed=run.seed)
    report = clusterwise_gc(dataset, est, ridge=run.ridge)
    km_report = clusterwise_gc(dataset, km, ridge=run.ridge)

    doc = {
        'n_samples': dataset.n_samples,
        'k': model.k,
        'mppcca': {
            'misallocation': misallocation_rate(est, truth),
            'gc': report.to_dict()
        },
        'kmeans': {
            'misallocation': misallocation_rate(km, truth),
            'gc': km_report.to_dict()
        },
        'whole_series_gc': report.whole_series_gc
    }
    _write_json(args.out, doc)

    if args.tidy is not None:
        columns = {'t': dataset.times}
        effect = read_series_csv(args.input, list(run.effect_columns))[dataset.times]
        cause = read_series_csv(args.input, list(run.cause_columns))[dataset.times]
        for name, values in zip(run.cause_columns, cause.T):
            columns[name] = values
        for name, values in zip(run.effect_columns, effect.T):
            columns[name] = values
        columns['truth_label'] = truth
        columns['mppcca_label'] = est.labels
        columns['kmeans_label'] = km.labels
        write_table(args.tidy, columns)

    print(f"misallocation: MPPCCA {doc['mppcca']['misallocation']:.4f}, "
          f"k-means {doc['kmeans']['misallocation']:.4f}")
    return EXIT_OK


def cmd_gc(args):
    """Per-cluster Granger causality for a label column, or for the whole series."""
    run = RunConfig.from_args(args)
    dataset = run.blocks(args.input)
    if args.labels_column is None:
        labels = full(dataset.n_samples, 0)
    else:
        labels = _truth(args.input, args.labels_column, dataset.times)

    report = clusterwise_gc(dataset, labels, ridge=run.ridge)
    _write_json(args.out, report.to_dict())
    if args.csv is not None:
        report.to_csv(args.csv)
    for entry in report.per_cluster:
        print(f"cluster {entry.cluster_id}: n = {entry.n_samples}, GC = {entry.gc_index:.6g}"
              + (f" ({entry.flag})" if entry.flag else ''))
    print(f"whole series: GC = {report.whole_series_gc:.6g}")
    return EXIT_OK


def _run_trial(experiment, trial, data_seed, fit_seed, run, curve, noise):
    if experiment == 'exp1':
        series = gen_exp1(Exp1Params(noise=noise), seed=data_seed)
    else:
        series = gen_exp2(Exp2Params(noise=noise), seed=data_seed)
    dataset = series.regression_dataset()
    truth = series.truth[dataset.times]

    config = run.fit_config(seed=fit_seed, n_jobs=1, track_assignments=curve)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        model, resp, trace = fit(dataset, run.k, dt=run.dt, config=config)
    est = hard_assign(resp)
    report = clusterwise_gc(dataset, est, ridge=run.ridge)
    gcs = asarray([c.gc_index for c in report.per_cluster], dtype=float)
    gcs = gcs[isfinite(gcs)]
    km = kmeans_baseline(dataset, run.k, seed=fit_seed)

    row = {
        'trial': trial,
        'data_seed': data_seed,
        'fit_seed': fit_seed,
        'mppcca_misallocation': misallocation_rate(est, truth),
        'kmeans_misallocation': misallocation_rate(km, truth),
        'max_gc': gcs.max() if gcs.size else nan,
        'n_gc_above_3': int((gcs > 3.0).sum()),
        'max_other_gc': (sorted(gcs)[-2] if gcs.size > 1 else nan),
        'n_iters': trace.n_iters,
        'regrouped': int(trace.regrouped_at is not None),
        'converged': int(trace.converged),
        'log_likelihood': trace.final_log_likelihood
    }
    rates = misallocation_curve(trace.assignments_per_iter, truth) if curve else None
    return row, rates


def cmd_experiment(args):
    """Run seeded trials of a synthetic experiment and summarize them."""
    run = RunConfig.from_args(args)
    children = SeedSequence(run.seed).spawn(args.trials)
    seeds = [tuple(int(s) for s in child.generate_state(2) % (2 ** 31 - 1)) for child in children]
    tasks = [(args.experiment, i, ds, fs, run, args.curve is not None, args.noise) for i, (ds, fs) in
             enumerate(seeds)]

    n_jobs = thread_count(args.jobs)
    logger.info(f"Running {args.trials} {args.experiment} trial(s) on {n_jobs} worker(s).")
    if n_jobs > 1 and args.trials > 1:
        with Pool(min(n_jobs, args.trials)) as pool:
            results = pool.starmap(_run_trial, tasks)
    else:
        results = [_run_trial(*t) for t in tasks]

    rows = [r[0] for r in results]
    write_table(args.out, {key: [r[key] for r in rows] for key in rows[0]})

    if args.curve is not None:
        # converged trials hold their final rate for the remaining iterations
        width = max([run.max_iters] + [rates.size for _, rates in results])
        padded = vstack([full(width, rates[-1]) if rates.size else full(width, nan) for _, rates in results])
        for i, (_, rates) in enumerate(results):
            padded[i, :rates.size] = rates
        write_table(args.curve, {'iteration': list(range(1, width + 1)), 'mean': mean(padded, axis=0),
                                 'std': std(padded, axis=0)})

    mppcca = asarray([r['mppcca_misallocation'] for r in rows])
    km = asarray([r['kmeans_misallocation'] for r in rows])
    print(f"trials: {len(rows)}")
    print(f"MPPCCA misallocation < 0.1 in {(mppcca < 0.1).mean():.1%} of trials")
    print(f"k-means misallocation interquartile range: [{percentile(km, 25):.3f}, {percentile(km, 75):.3f}]")
    print(f"median EM iterations: {median([r['n_iters'] for r in rows]):g}")
    if args.experiment == 'exp2':
        separated = [r['n_gc_above_3'] == 1 and not r['max_other_gc'] >= 0.1 for r in rows]
        print(f"one causal cluster (GC > 3, others < 0.1) in {mean(separated):.1%} of trials")
    return EXIT_OK


def _add_run_options(parser, fitting=True):
    group = parser.add_argument_group('regression blocks')
    group.add_argument('--effect-columns', dest='effect_columns', default='y',
                       help="Comma separated effect columns of the input CSV. Default is 'y'.")
    group.add_argument('--cause-columns', dest='cause_columns', default='x',
                       help="Comma separated cause columns of the input CSV. Default is 'x'.")
    group.add_argument('--delay', type=int, default=1, help='Embedding delay d in frames. Default is 1.')
    group.add_argument('--stride', type=int, default=1, help='Embedding stride s in frames. Default is 1.')
    group.add_argument('--window', type=int, default=1, help='Embedding window tau in frames. Default is 1.')
    group.add_argument('--target-ratio', dest='target_ratio', type=float, default=1.0,
                       help='PCA cumulative contribution ratio. Default is 1.0.')
    group.add_argument('--kinematic', action='store_true',
                       help='Treat the columns as positions and use (position; velocity) features.')
    group.add_argument('--ridge', type=float, default=None,
                       help='Ridge for Granger causality covariance inversions. Default scales with the trace.')
    if not fitting:
        return

    group = parser.add_argument_group('model fitting')
    group.add_argument('-k', '--k', type=int, default=3, help='Number of mixture components. Default is 3.')
    group.add_argument('--dt', type=int, default=None, help='Latent dimension. Default is min(d1, d2).')
    group.add_argument('--eta-c', dest='eta_c', type=float, default=1e-6,
                       help='Ridge added to component covariances. Default is 1e-6.')
    group.add_argument('--eta-wx', dest='eta_wx', type=float, default=1e-6,
                       help='Ridge for the regression loadings. Default is 1e-6.')
    group.add_argument('--tol', type=float, default=1e-6, help='Relative log-likelihood tolerance. Default is 1e-6.')
    group.add_argument('--max-iters', dest='max_iters', type=int, default=200,
                       help='Maximum EM iterations. Default is 200.')
    group.add_argument('--restarts', type=int, default=10, help='Independent EM restarts. Default is 10.')
    group.add_argument('--block-diagonal', dest='block_diagonal', action='store_true',
                       help='Zero the y1/y2 cross blocks of the noise covariances.')
    group.add_argument('--no-regroup', dest='regroup', action='store_false',
                       help='Keep the EM result even when two components describe the same relation.')
    group.add_argument('--jobs', type=int, default=1,
                       help='Worker processes, capped by CAUSAL_PATTERNS_THREADS. Default is 1.')


def build_parser():
    """
    Argument parser of the ``causalpatterns`` command.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='Increase logging verbosity (-v info, -vv debug).')
    common.add_argument('--config', default=None,
                        help='JSON file of option defaults. Command line flags take precedence.')
    common.add_argument('--seed', type=int, default=0, help='Seed. Default is 0.')

    parser = argparse.ArgumentParser(prog='causalpatterns',
                                     description='Extract causal patterns from paired time series with MPPCCA.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('generate', parents=[common], help='Generate a synthetic labeled series.')
    p.add_argument('experiment', choices=['exp1', 'exp2'])
    p.add_argument('--out', required=True, help='Output CSV (columns t, x, y, truth_label).')
    p.add_argument('--noise', choices=['std', 'variance'], default='std',
                   help="Read noise parameters as standard deviations or variances. Default is 'std'.")
    p.add_argument('--samples-per-cluster', dest='samples_per_cluster', type=int, default=1000,
                   help='exp1 samples per regime. Default is 1000.')
    p.add_argument('--as-printed', dest='as_printed', action='store_true',
                   help='exp2 with the alternative causal segment parameter set.')
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('preprocess', parents=[common], help='Build regression blocks from a series CSV.')
    p.add_argument('--input', required=True, help='Input series CSV with a header row.')
    p.add_argument('--out', required=True, help='Output blocks CSV (t, x_*, y1_*, y2_*).')
    p.add_argument('--bases', default=None, help='Optional output JSON of the PCA bases.')
    _add_run_options(p, fitting=False)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser('fit', parents=[common], help='Fit an MPPCCA model.')
    p.add_argument('--input', required=True, help='Input series CSV with a header row.')
    p.add_argument('--out-dir', dest='out_dir', required=True,
                   help='Directory for model.json, resp.csv and trace.csv.')
    _add_run_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser('eval', parents=[common], help='Evaluate a fitted model against ground truth.')
    p.add_argument('--input', required=True, help='Input series CSV with a header row.')
    p.add_argument('--model', required=True, help='model.json written by the fit command.')
    p.add_argument('--truth-column', dest='truth_column', default='truth_label',
                   help="Ground truth label column. Default is 'truth_label'.")
    p.add_argument('--out', required=True, help='Output report JSON.')
    p.add_argument('--tidy', default=None, help='Optional plot-ready CSV of series, truth and estimated labels.')
    _add_run_options(p, fitting=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('gc', parents=[common], help='Per-cluster Granger causality of a labeling.')
    p.add_argument('--input', required=True, help='Input series CSV with a header row.')
    p.add_argument('--labels-column', dest='labels_column', default=None,
                   help='Cluster label column. Default is None (whole series only).')
    p.add_argument('--out', required=True, help='Output report JSON.')
    p.add_argument('--csv', default=None, help='Optional flat CSV report.')
    _add_run_options(p, fitting=False)
    p.set_defaults(func=cmd_gc)

    p = sub.add_parser('experiment', parents=[common], help='Run repeated seeded synthetic experiments.')
    p.add_argument('experiment', choices=['exp1', 'exp2'])
    p.add_argument('--trials', type=int, default=100, help='Number of trials. Default is 100.')
    p.add_argument('--out', required=True, help='Per-trial CSV.')
    p.add_argument('--curve', default=None, help='Optional CSV of misallocation per EM iteration.')
    p.add_argument('--noise', choices=['std', 'variance'], default='std')
    _add_run_options(p)
    p.set_defaults(func=cmd_experiment, jobs=None)

    return parser


def _config_defaults(argv):
    """Defaults from the --config file: flat keys for every command, or a section per command."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config', default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return {}, {}
    with open(known.config, 'r') as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValueError(f"Config file {known.config} must hold a JSON object.")
    flat = {k.replace('-', '_'): v for k, v in doc.items() if not isinstance(v, dict)}
    sections = {k: {kk.replace('-', '_'): vv for kk, vv in v.items()} for k, v in doc.items() if isinstance(v, dict)}
    return flat, sections


def _parse(argv):
    parser = build_parser()
    flat, sections = _config_defaults(argv)
    if flat or sections:
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for name, sp in subparsers.choices.items():
            defaults = dict(flat)
            defaults.update(sections.get(name, {}))
            sp.set_defaults(**{k: v for k, v in defaults.items() if k not in ('func', 'command')})
    return parser.parse_args(argv)


def main(argv=None):
    """
    Entry point of the ``causalpatterns`` command.

    Parameters
    ----------
    argv : {None, list}, optional
        Arguments. Default is None, which uses ``sys.argv[1:]``.

    Returns
    -------
    code : int
        Exit code.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
    except SystemExit as e:
        return EXIT_OK if e.code is None else int(e.code)
    except (OSError, ValueError) as e:
        print(f"causalpatterns: error: {e}", file=sys.stderr)
        return EXIT_INPUT

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    logging.captureWarnings(True)

    try:
        return args.func(args)
    except (CausalPatternsError, ValueError, KeyError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"causalpatterns: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
