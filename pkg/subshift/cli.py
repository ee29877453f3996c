"""
Command line interface::

    subshift explain {tree,ensemble,blackbox} --data-p P.csv --data-q Q.csv ...
    subshift evaluate --manifest manifest.json
    subshift simulate-proxy --depth 3 --repeats 5000
    subshift benchmark --out-dir DIR

Exit codes: 0 success, 2 usage or validation error, 3 explanation infeasible
(undefined conditionals), 1 unexpected error. Errors are reported as one
line on stderr: ``error: <kind>: <reason>``.
"""
import argparse
import logging
import os
import sys

from joblib import Parallel, delayed

from subshift import errors
from subshift.benchmark import make_shift_benchmark
from subshift.context import ExplainContext
from subshift.data import write_csv
from subshift.helpers import TARGETS, FIT_KINDS, process_evaluate_row, process_explain_request
from subshift.metrics import METRICS
from subshift.model_io import export_json
from subshift.report import evaluation_report, write_document, write_svg
from subshift.surrogate import ProxySimulationConfig, proxy_simulation
from subshift.utils import getLogger, to_list
from subshift.validators import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3

# (exception, kind reported on stderr, exit code); first match wins
ERROR_KINDS = (
    (errors.UndefinedConditionalError, 'undefined-conditional', EXIT_INFEASIBLE),
    (errors.NoExplainableTreeError, 'no-explainable-tree', EXIT_INFEASIBLE),
    (ValidationError, 'validation', EXIT_INVALID),
    (errors.SchemaError, 'schema', EXIT_INVALID),
    (errors.ParseError, 'parse', EXIT_INVALID),
    (errors.EmptyPartitionError, 'empty-partition', EXIT_INVALID),
    (errors.FactorLimitError, 'factor-limit', EXIT_INVALID),
    (errors.SingularSystemError, 'singular-system', EXIT_INVALID),
    (errors.RenormalisationError, 'renormalisation', EXIT_INVALID),
    (errors.DegenerateReweightError, 'degenerate-reweight', EXIT_INVALID),
    (IOError, 'io', EXIT_INVALID),
)


def _add_common(parser):
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    parser.add_argument('--jobs', type=int, default=-1, help='worker threads (capped by SHAPSHIFT_THREADS)')


def build_parser():
    parser = argparse.ArgumentParser(prog='subshift',
                                     description='Explain shifts in mean model predictions between two datasets.')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    explain = commands.add_parser('explain', help='explain a prediction shift')
    explain.add_argument('target', choices=TARGETS)
    explain.add_argument('--data-p', required=True)
    explain.add_argument('--data-q', required=True)
    explain.add_argument('--schema', help='schema json; inferred from the P header when omitted')
    explain.add_argument('--model', help='model json')
    explain.add_argument('--fit', choices=FIT_KINDS, help='fit a model on P and Q instead of --model')
    explain.add_argument('--save-model', help='write the fitted model json here')
    explain.add_argument('--label-col', help='training label column (for --fit)')
    explain.add_argument('--pred-col', help='column holding black-box predictions')
    explain.add_argument('--pred-p', help='single-column csv of black-box predictions on P')
    explain.add_argument('--pred-q', help='single-column csv of black-box predictions on Q')
    explain.add_argument('--target-class', help='comma list of classes scalarised to 1.0')
    explain.add_argument('--max-leaves', type=int, default=8, help='surrogate leaves')
    explain.add_argument('--impurity', choices=('shift', 'gini', 'variance'), default='shift')
    explain.add_argument('--min-samples', type=int, default=5)
    explain.add_argument('--fit-leaves', type=int, default=8)
    explain.add_argument('--n-trees', type=int, default=100)
    explain.add_argument('--learning-rate', type=float, default=0.1)
    explain.add_argument('--feature-subsample', type=float, help='fraction of features searched per split')
    explain.add_argument('--max-trees', type=int, help='scan only the first trees of an ensemble')
    explain.add_argument('--serial', action='store_true', help='scan ensemble trees on one thread')
    explain.add_argument('--prune-to', type=int, help='prune the tree to this many leaves before explaining')
    explain.add_argument('--method', choices=('exact', 'kernel'), default='exact')
    explain.add_argument('--budget', type=int, help='kernel coalition samples (default 2n + 2048)')
    explain.add_argument('--exact-limit', type=int, default=20)
    explain.add_argument('--seed', type=int, default=0)
    explain.add_argument('--out', help='explanation json (default stdout)')
    explain.add_argument('--svg', help='bar chart of the Shapley values')
    _add_common(explain)
    explain.set_defaults(handler=cmd_explain)

    evaluate = commands.add_parser('evaluate', help='metrics over a manifest of shifts')
    evaluate.add_argument('--manifest', required=True)
    evaluate.add_argument('--metrics', default=','.join(METRICS))
    evaluate.add_argument('--out', help='report json (default stdout)')
    _add_common(evaluate)
    evaluate.set_defaults(handler=cmd_evaluate)

    simulate = commands.add_parser('simulate-proxy', help='Monte-Carlo check of the surrogate growth proxy')
    simulate.add_argument('--depth', type=int, default=3)
    simulate.add_argument('--repeats', type=int, default=5000)
    simulate.add_argument('--seed', type=int, default=0)
    simulate.add_argument('--correlation', type=float, default=0.0)
    simulate.add_argument('--out')
    _add_common(simulate)
    simulate.set_defaults(handler=cmd_simulate_proxy)

    benchmark = commands.add_parser('benchmark', help='write the synthetic shift benchmark')
    benchmark.add_argument('--out-dir', required=True)
    benchmark.add_argument('--seed', type=int, default=0)
    benchmark.add_argument('--rows', type=int, default=2000)
    benchmark.add_argument('--features', type=int, default=4)
    benchmark.add_argument('--trees', type=int, default=100)
    benchmark.add_argument('--max-leaves', type=int, default=8)
    _add_common(benchmark)
    benchmark.set_defaults(handler=cmd_benchmark)
    return parser


def _emit(ctx, document, path, stdout):
    write_document(document, path=path, stream=stdout, formatter=ctx.formatter)


def cmd_explain(ctx, args, stdout, stderr):
    result = process_explain_request(ctx, args.target, vars(args))
    _emit(ctx, result.document, args.out, stdout)
    if args.svg:
        write_svg(result.explanation, args.svg)
    return EXIT_OK


def _load_manifest(ctx, path):
    with open(path) as fp:
        try:
            document = ctx.formatter.read_from(fp)
        except ValueError as e:
            raise ValidationError(path, {'manifest': ['not valid json: {0}'.format(e)]})
    rows = document.get('rows') if isinstance(document, dict) else document
    if not isinstance(rows, list) or not rows:
        raise ValidationError(path, {'manifest.rows': ['the manifest lists no shifts']})
    for index, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ValidationError(path, {'manifest.rows': ['row {0} is not an object'.format(index)]})
    return [dict(row, index=row.get('index', index)) for index, row in enumerate(rows)]


def cmd_evaluate(ctx, args, stdout, stderr):
    metrics = to_list(args.metrics)
    unknown = [m for m in metrics if m not in METRICS]
    if unknown or not metrics:
        raise ValidationError(metrics, {'metrics': ['choose from: ' + ', '.join(METRICS)]})
    rows = _load_manifest(ctx, args.manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    results = Parallel(n_jobs=ctx.n_jobs, prefer='threads')(
        delayed(process_evaluate_row)(ctx.fork(), row, base_dir, metrics) for row in rows
    )
    report = evaluation_report(results, ctx.formatter)
    _emit(ctx, report, args.out, stdout)
    if report['aggregates']['n_succeeded'] == 0:
        stderr.write('error: evaluation: all {0} manifest rows failed\n'.format(len(rows)))
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_simulate_proxy(ctx, args, stdout, stderr):
    config = ProxySimulationConfig(depth=args.depth, n_repeats=args.repeats, seed=args.seed,
                                   correlation=args.correlation)
    summary = proxy_simulation(config, ctx)
    document = dict(summary._asdict())
    document.update({'depth': config.depth, 'seed': config.seed, 'correlation': config.correlation})
    _emit(ctx, document, args.out, stdout)
    return EXIT_OK


def cmd_benchmark(ctx, args, stdout, stderr):
    benchmark = make_shift_benchmark(seed=args.seed, n_rows=args.rows, n_features=args.features,
                                     n_trees=args.trees, max_leaves=args.max_leaves, ctx=ctx)
    if not os.path.isdir(args.out_dir):
        os.makedirs(args.out_dir)
    paths = {
        'data_p': os.path.join(args.out_dir, 'p.csv'),
        'data_q': os.path.join(args.out_dir, 'q.csv'),
        'schema': os.path.join(args.out_dir, 'schema.json'),
        'model': os.path.join(args.out_dir, 'model.json'),
    }
    write_csv(paths['data_p'], benchmark.dataP, 'prediction', 'label')
    write_csv(paths['data_q'], benchmark.dataQ, 'prediction', 'label')
    with open(paths['schema'], 'w') as fp:
        ctx.formatter.write_to(benchmark.dataP.schema.to_document(), fp)
    export_json(benchmark.model, paths['model'], ctx.formatter)
    _emit(ctx, paths, None, stdout)
    return EXIT_OK


def report_error(exc, stderr):
    for exc_type, kind, code in ERROR_KINDS:
        if isinstance(exc, exc_type):
            reason = ' '.join(str(exc).split()) or type(exc).__name__
            stderr.write('error: {0}: {1}\n'.format(kind, reason))
            return code
    return None


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    log = getLogger('subshift', stream=stderr, level=logging.DEBUG if args.verbose else logging.WARNING)
    log.pprint(dict((k, v) for k, v in vars(args).items() if k != 'handler'))
    try:
        ctx = ExplainContext(n_jobs=args.jobs, seed=getattr(args, 'seed', 0))
        return args.handler(ctx, args, stdout, stderr)
    except Exception as e:
        code = report_error(e, stderr)
        if code is None:
            logger.exception('unexpected error')
            stderr.write('error: internal: {0}\n'.format(' '.join(str(e).split())))
            return EXIT_ERROR
        return code


if __name__ == '__main__':
    sys.exit(main())
