"""
Processing behind each command: load the inputs named by a set of
parameters (command-line flags or a manifest row), run the analysis and build
the documents to write. Errors propagate; the command line turns them into
exit codes.
"""
import collections
import logging
import os

import numpy as np

from subshift.data import Scalariser, infer_schema, load_csv, load_schema, load_vector
from subshift.explainers import EnsembleConfig, explain_ensemble, explain_tree, explain_with_leafmeans
from subshift.learning import LearnerConfig, fit_gradient_boosted, fit_random_forest, fit_tree
from subshift.metrics import METRICS, evaluate_explanation
from subshift.model_io import export_json, import_json
from subshift.report import explanation_document
from subshift.shapley import ShapleyConfig
from subshift.surrogate import SurrogateConfig, explain_blackbox, prune_regrow
from subshift.trees import DecisionTree, TreeEnsemble, model_predictions
from subshift.utils import ParamsDict
from subshift.validators import ValidationError, manifest_row_validators, raise_if_invalid

logger = logging.getLogger(__name__)

TARGETS = ('tree', 'ensemble', 'blackbox')
FIT_KINDS = ('tree', 'forest', 'boosted')

ExplainResult = collections.namedtuple('ExplainResult', ['explanation', 'document', 'model', 'dataP', 'dataQ',
                                                         'predictP', 'predictQ'])


def _params(params):
    return params if isinstance(params, ParamsDict) else ParamsDict(params)


def _required(params, *keys):
    missing = [key for key in keys if not params.get(key)]
    if missing:
        raise ValidationError(params, dict(('params.' + key, ['{0} is required'.format(key)]) for key in missing))


def load_pair(ctx, params):
    """
    Loads P and Q with the schema file (or a schema inferred from P's
    header), optional prediction and label columns, and class_indicator
    scalarisation when target classes are given.
    """
    params = _params(params)
    _required(params, 'data_p', 'data_q')
    pred_col, label_col = params.get('pred_col'), params.get('label_col')
    if params.get('schema'):
        schema = load_schema(params['schema'])
    else:
        schema = infer_schema(params['data_p'], exclude=[c for c in (pred_col, label_col) if c])
    target_classes = params.get_list('target_class')
    scalariser = Scalariser('class_indicator', target_classes) if target_classes else None
    with ctx.timer('load_data'):
        dataP = load_csv(params['data_p'], schema, pred_col, label_col, scalariser)
        dataQ = load_csv(params['data_q'], schema, pred_col, label_col, scalariser)
    return schema, dataP, dataQ


def learner_config(params):
    params = _params(params)
    return LearnerConfig(
        max_leaf_nodes=params.get_as('fit_leaves', int, 8),
        min_samples_per_side=params.get_as('min_samples', int, 5),
        n_estimators=params.get_as('n_trees', int, 100),
        learning_rate=params.get_as('learning_rate', float, 0.1),
        feature_subsample=params.get_as('feature_subsample', float),
        seed=params.get_as('seed', int, 0),
    )


def load_model(ctx, params, dataP, dataQ):
    """
    Imports ``model`` or fits a ``fit`` kind on P and Q together, with the
    label column as targets.
    """
    params = _params(params)
    if params.get('model'):
        return import_json(params['model'], ctx.formatter)
    kind = params.get('fit')
    if not kind:
        raise ValidationError(params, {'params.model': ['either model or fit is required']})
    if kind not in FIT_KINDS:
        raise ValidationError(kind, {'params.fit': ['must be one of: ' + ', '.join(FIT_KINDS)]})
    union = dataP.concat(dataQ)
    if union.labels is None:
        raise ValidationError(params, {'params.label_col': ['fitting a model needs a label column']})
    targets = np.asarray(union.labels, dtype=float)
    config = learner_config(params)
    with ctx.timer('fit_model'):
        if kind == 'tree':
            model = fit_tree(union, targets, config)
        elif kind == 'forest':
            model = fit_random_forest(union, targets, config, ctx)
        else:
            model = fit_gradient_boosted(union, targets, config)
    if params.get('save_model'):
        export_json(model, params['save_model'], ctx.formatter)
    return model


def _blackbox_predictions(ctx, params, dataP, dataQ):
    if params.get('pred_p') and params.get('pred_q'):
        predictP, predictQ = load_vector(params['pred_p']), load_vector(params['pred_q'])
        if len(predictP) != dataP.n_rows or len(predictQ) != dataQ.n_rows:
            raise ValidationError(params, {'params.pred_p': ['prediction files must have one row per data row']})
        return None, predictP, predictQ
    if dataP.predictions is not None and dataQ.predictions is not None:
        return None, dataP.predictions, dataQ.predictions
    model = load_model(ctx, params, dataP, dataQ)
    return model, model_predictions(model, dataP), model_predictions(model, dataQ)


def shapley_config(params):
    params = _params(params)
    return ShapleyConfig(exact_limit=params.get_as('exact_limit', int, 20),
                         kernel_budget=params.get_as('budget', int))


def process_tree_request(ctx, params, dataP, dataQ):
    model = load_model(ctx, params, dataP, dataQ)
    if not isinstance(model, DecisionTree):
        raise ValidationError(params, {'params.model': ['explain tree needs a single tree model']})
    explanation = explain_tree(model, dataP, dataQ, method=params.get('method') or 'exact',
                               budget=params.get_as('budget', int), seed=params.get_as('seed', int, 0),
                               config=shapley_config(params), ctx=ctx)
    return model, explanation, None, model_predictions(model, dataP), model_predictions(model, dataQ)


def process_ensemble_request(ctx, params, dataP, dataQ):
    model = load_model(ctx, params, dataP, dataQ)
    if isinstance(model, DecisionTree):
        model = TreeEnsemble([model], [1.0], feature_names=model.feature_names)
    config = EnsembleConfig(max_trees=params.get_as('max_trees', int), parallel=not params.get('serial'))
    explanation, scan = explain_ensemble(model, dataP, dataQ, config, shapley_config(params),
                                         method=params.get('method') or 'exact', budget=params.get_as('budget', int),
                                         seed=params.get_as('seed', int, 0), ctx=ctx)
    return model, explanation, scan, model_predictions(model, dataP), model_predictions(model, dataQ)


def process_blackbox_request(ctx, params, dataP, dataQ):
    model, predictP, predictQ = _blackbox_predictions(ctx, params, dataP, dataQ)
    config = SurrogateConfig(max_leaves=params.get_as('max_leaves', int, 8),
                             impurity=params.get('impurity') or 'shift',
                             min_samples_per_side_per_distribution=params.get_as('min_samples', int, 5))
    explanation, surrogate = explain_blackbox(dataP, dataQ, predictP, predictQ, config,
                                              method=params.get('method') or 'exact',
                                              budget=params.get_as('budget', int),
                                              seed=params.get_as('seed', int, 0),
                                              shapley_config=shapley_config(params), ctx=ctx)
    return surrogate, explanation, None, predictP, predictQ


def process_prune_request(ctx, params, dataP, dataQ):
    """
    Prunes an imported tree to ``prune_to`` leaves and explains the tree's
    own predictions with the pruned prefix.
    """
    model = load_model(ctx, params, dataP, dataQ)
    if not isinstance(model, DecisionTree):
        raise ValidationError(params, {'params.model': ['pruning needs a single tree model']})
    predictP, predictQ = model_predictions(model, dataP), model_predictions(model, dataQ)
    pruned = prune_regrow(model, dataP, dataQ, predictP, predictQ, params.get_as('prune_to', int))
    explanation = explain_with_leafmeans(pruned, predictP, predictQ, dataP, dataQ,
                                         method=params.get('method') or 'exact',
                                         budget=params.get_as('budget', int), seed=params.get_as('seed', int, 0),
                                         config=shapley_config(params), ctx=ctx)
    explanation.metadata['pruned_from_leaves'] = model.n_leaves
    return pruned, explanation, None, predictP, predictQ


PROCESSORS = {
    'tree': process_tree_request,
    'ensemble': process_ensemble_request,
    'blackbox': process_blackbox_request,
}


def process_explain_request(ctx, target, params):
    """
    Loads inputs, explains the ``target`` kind and returns an
    :data:`ExplainResult` holding the explanation document.
    """
    params = _params(params)
    if target not in PROCESSORS:
        raise ValidationError(target, {'params.target': ['must be one of: ' + ', '.join(TARGETS)]})
    _, dataP, dataQ = load_pair(ctx, params)
    processor = process_prune_request if target == 'tree' and params.get('prune_to') else PROCESSORS[target]
    model, explanation, scan, predictP, predictQ = processor(ctx, params, dataP, dataQ)
    document = explanation_document(explanation, seed=params.get_as('seed', int, 0),
                                    timing_ms=dict(ctx.timings), scan=scan, formatter=ctx.formatter)
    return ExplainResult(explanation, document, model, dataP, dataQ, predictP, predictQ)


def _resolve(base_dir, row):
    resolved = dict(row)
    for key in ('data_p', 'data_q', 'schema', 'model', 'pred_p', 'pred_q'):
        if resolved.get(key) and not os.path.isabs(resolved[key]):
            resolved[key] = os.path.join(base_dir, resolved[key])
    return resolved


def process_evaluate_row(ctx, row, base_dir='.', metrics=METRICS):
    """
    Explains one manifest row and computes its metrics. Any failure is
    recorded on the returned row instead of raised.
    """
    result = {'index': row.get('index'), 'target': row.get('target') or 'tree'}
    try:
        raise_if_invalid('manifest', row, manifest_row_validators())
        explained = process_explain_request(ctx, result['target'], ParamsDict(_resolve(base_dir, row)))
        result.update(evaluate_explanation(explained.explanation, explained.predictP, explained.predictQ,
                                           explained.dataP, explained.dataQ, metrics))
    except Exception as e:
        logger.warning('manifest row %r failed: %s', result['index'], e)
        result['error'] = '{0}: {1}'.format(type(e).__name__, e)
    return result
