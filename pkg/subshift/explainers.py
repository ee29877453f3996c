"""
Explaining a tree, a tree inside an ensemble, and a whole ensemble.

A tree explains itself with its conditionals only. A tree used to explain
another model (its ensemble, or a black box it was grown to imitate) also
needs the LeafMeans player, whose share of the shift is reported as
PercentUnexplained.
"""
import collections
import logging

import numpy as np
from joblib import Parallel, delayed

from subshift.conditionals import compute_leaf_stats, extract_conditionals
from subshift.context import default_context
from subshift.errors import FactorLimitError, NoExplainableTreeError, SingularSystemError, UndefinedConditionalError
from subshift.shapley import ShapleyConfig, exact_shapley, kernel_shap
from subshift.trees import model_predictions
from subshift.validators import ensemble_config_validators, raise_if_invalid

logger = logging.getLogger(__name__)

METHODS = ('exact', 'kernel')

#: one row of an ensemble scan; a failed tree has a reason and no numbers
ScanEntry = collections.namedtuple('ScanEntry', ['tree_index', 'percent_unexplained', 'leafmeans_sv', 'failed_reason'])


class EnsembleConfig(object):
    """
    Parameters:

        ``max_trees``
            scan only the first trees of the ensemble (early stopping for
            boosted ensembles); None scans all of them

        ``parallel``
            analyse trees on worker threads
    """
    def __init__(self, max_trees=None, parallel=True):
        self.max_trees = max_trees
        self.parallel = parallel
        raise_if_invalid('ensemble', self, ensemble_config_validators())

    def __repr__(self):
        return 'EnsembleConfig(max_trees={0!r}, parallel={1!r})'.format(self.max_trees, self.parallel)


def _run(table, values, include_leafmeans, method, budget, seed, config, ctx):
    if method not in METHODS:
        raise ValueError('method must be one of {0}'.format(METHODS))
    if method == 'kernel':
        return kernel_shap(table, values, include_leafmeans, budget=budget, seed=seed, config=config, ctx=ctx)
    return exact_shapley(table, values, include_leafmeans, config=config, ctx=ctx)


def explain_tree(tree, dataP, dataQ, method='exact', budget=None, seed=0, config=None, ctx=None):
    """
    Self-explanation of a single tree: the conditionals add up to the shift
    of the tree's own mean prediction.
    """
    ctx = default_context(ctx)
    with ctx.timer('extract_conditionals'):
        table = extract_conditionals(tree, dataP, dataQ)
    explanation = _run(table, tree.leaf_values(), False, method, budget, seed, config, ctx)
    explanation.metadata['empirical_mu_p'] = float(np.mean(tree.predict(dataP.rows)))
    explanation.metadata['empirical_mu_q'] = float(np.mean(tree.predict(dataQ.rows)))
    logger.info('explained tree: shift %.6g over %d conditionals', explanation.shift, len(table))
    return explanation


def explain_with_leafmeans(tree, predictP, predictQ, dataP, dataQ, fill_policy='other', method='exact',
                           budget=None, seed=0, config=None, ctx=None):
    """
    Explains the shift of another model's mean prediction with the
    conditionals of ``tree`` plus the LeafMeans player. ``predictP`` and
    ``predictQ`` are that model's outputs on the rows of each dataset.
    """
    ctx = default_context(ctx)
    with ctx.timer('extract_conditionals'):
        table = extract_conditionals(tree, dataP, dataQ)
    stats = compute_leaf_stats(tree, predictP, predictQ, dataP, dataQ, fill_policy=fill_policy)
    explanation = _run(table, stats, True, method, budget, seed, config, ctx)
    explanation.metadata['raw_mu_p'] = float(np.mean(predictP))
    explanation.metadata['raw_mu_q'] = float(np.mean(predictQ))
    return explanation


def explain_tree_in_ensemble(ensemble, tree_index, dataP, dataQ, predictP=None, predictQ=None, method='exact',
                             budget=None, seed=0, config=None, ctx=None):
    """
    Explains the full ensemble's mean-prediction shift with the conditionals
    of one member tree. Ensemble predictions can be passed in when several
    trees are explained against the same data.
    """
    if not 0 <= tree_index < len(ensemble):
        raise IndexError('tree index {0} out of range for {1!r}'.format(tree_index, ensemble))
    if predictP is None:
        predictP = model_predictions(ensemble, dataP)
    if predictQ is None:
        predictQ = model_predictions(ensemble, dataQ)
    explanation = explain_with_leafmeans(ensemble.trees[tree_index], predictP, predictQ, dataP, dataQ,
                                         method=method, budget=budget, seed=seed, config=config, ctx=ctx)
    explanation.metadata['tree_index'] = tree_index
    return explanation


def _scan_tree(ensemble, index, dataP, dataQ, predictP, predictQ, method, budget, seed, config, ctx):
    try:
        explanation = explain_tree_in_ensemble(ensemble, index, dataP, dataQ, predictP, predictQ,
                                               method=method, budget=budget, seed=seed, config=config, ctx=ctx)
    except (UndefinedConditionalError, FactorLimitError, SingularSystemError) as e:
        logger.debug('tree %d failed: %s', index, e)
        return None, ScanEntry(index, None, None, str(e))
    return explanation, ScanEntry(index, explanation.percent_unexplained, explanation.leafmeans_sv, None)


def _selection_key(entry):
    if entry.percent_unexplained is not None:
        return (0, entry.percent_unexplained, entry.tree_index)
    return (1, abs(entry.leafmeans_sv), entry.tree_index)


def explain_ensemble(ensemble, dataP, dataQ, config=None, shapley_config=None, method='exact', budget=None,
                     seed=0, ctx=None):
    """
    Explains an ensemble with each of its trees and keeps the one with the
    smallest PercentUnexplained (ties: lowest index). When the shift is too
    small for PercentUnexplained, the smallest |LeafMeans| value decides.
    ``method``, ``budget`` and ``seed`` choose the Shapley computation for
    every tree, as for :func:`explain_tree`.

    Returns (best explanation, scan), the scan holding one :data:`ScanEntry`
    per analysed tree in tree order.
    """
    config = config or EnsembleConfig()
    shapley_config = shapley_config or ShapleyConfig()
    ctx = default_context(ctx)
    n_trees = len(ensemble) if config.max_trees is None else min(len(ensemble), config.max_trees)
    predictP = model_predictions(ensemble, dataP)
    predictQ = model_predictions(ensemble, dataQ)
    scan_args = (dataP, dataQ, predictP, predictQ, method, budget, seed, shapley_config, ctx)

    with ctx.timer('explain_ensemble'):
        if config.parallel and ctx.n_jobs > 1:
            results = Parallel(n_jobs=ctx.n_jobs, prefer='threads')(
                delayed(_scan_tree)(ensemble, i, *scan_args) for i in range(n_trees)
            )
        else:
            results = [_scan_tree(ensemble, i, *scan_args) for i in range(n_trees)]

    scan = [entry for _, entry in results]
    explained = [entry for entry in scan if entry.failed_reason is None]
    if not explained:
        raise NoExplainableTreeError('all {0} scanned trees failed'.format(len(scan)))

    best_entry = min(explained, key=_selection_key)
    best = results[best_entry.tree_index][0]
    best.metadata['n_trees_scanned'] = len(scan)
    n_failed = len(scan) - len(explained)
    if n_failed:
        flag = '{0} of {1} trees failed to explain'.format(n_failed, len(scan))
        logger.warning(flag)
        best.flags.append(flag)
    logger.info('selected tree %d of %d (percent unexplained %r)', best_entry.tree_index, len(scan),
                best_entry.percent_unexplained)
    return best, scan


def boosting_scan(ensemble, dataP, dataQ, max_trees=20, shapley_config=None, method='exact', budget=None, seed=0,
                  ctx=None):
    """
    Early-stopping scan of a boosted ensemble: only the first ``max_trees``
    trees are analysed.
    """
    return explain_ensemble(ensemble, dataP, dataQ, EnsembleConfig(max_trees=max_trees),
                            shapley_config=shapley_config, method=method, budget=budget, seed=seed, ctx=ctx)
