"""
Json interchange for trees and ensembles::

    {"kind": "tree" | "ensemble",
     "feature_names": [...],
     "trees": [{"nodes": [{"id", "feature", "threshold", "left", "right"}],
                "leaves": [{"id", "value"}],
                "root": id}],
     "weights": [...], "base_score": real, "aggregation": "mean" | "weighted_sum"}

Reals are written with repr precision so export followed by import gives back
bit-identical thresholds, leaf values and weights.
"""
import logging

from subshift.formatters import JSONFormatter
from subshift.trees import DecisionTree, Leaf, SplitNode, TreeEnsemble
from subshift.validators import ModelDocumentValidator, ValidationError, validate

logger = logging.getLogger(__name__)


def tree_document(tree):
    return {
        'nodes': [{'id': n.id, 'feature': n.feature_index, 'threshold': n.threshold,
                   'left': n.left_child_id, 'right': n.right_child_id} for n in tree.nodes.values()],
        'leaves': [{'id': leaf.id, 'value': leaf.value} for leaf in tree.leaves.values()],
        'root': tree.root_id,
    }


def model_document(model):
    if isinstance(model, DecisionTree):
        return {
            'kind': 'tree',
            'feature_names': _names(model.feature_names, model.n_features),
            'trees': [tree_document(model)],
        }
    return {
        'kind': 'ensemble',
        'feature_names': _names(model.feature_names, model.n_features),
        'trees': [tree_document(t) for t in model.trees],
        'weights': list(model.tree_weights),
        'base_score': model.base_score,
        'aggregation': model.aggregation,
        'ensemble_kind': model.kind,
    }


def _names(names, n_features):
    if names is not None:
        return list(names)
    return ['x{0}'.format(i) for i in range(n_features)]


def _tree_from_document(document, feature_names):
    nodes = [SplitNode(n['id'], n['feature'], n['threshold'], n['left'], n['right']) for n in document['nodes']]
    leaves = [Leaf(leaf['id'], leaf['value']) for leaf in document['leaves']]
    return DecisionTree(nodes, leaves, document['root'], feature_names=feature_names)


def model_from_document(document):
    errors = validate('model', document, [ModelDocumentValidator()])
    if errors:
        raise ValidationError(document, errors)
    names = document['feature_names']
    trees = [_tree_from_document(t, names) for t in document['trees']]
    if document['kind'] == 'tree':
        return trees[0]
    return TreeEnsemble(trees, document['weights'], base_score=document.get('base_score', 0.0),
                        aggregation=document['aggregation'], kind=document.get('ensemble_kind', 'other'),
                        feature_names=names)


def import_json(path, formatter=None):
    """
    Reads a tree or ensemble from a model json file, raising
    :class:`~subshift.validators.ValidationError` (listing node ids) for
    cycles, orphans, dangling children or unknown fields.
    """
    formatter = formatter or JSONFormatter()
    with open(path) as fp:
        try:
            document = formatter.read_from(fp)
        except ValueError as e:
            raise ValidationError(path, {'model': ['not valid json: {0}'.format(e)]})
    model = model_from_document(document)
    logger.info('imported %r from %s', model, path)
    return model


def export_json(model, path, formatter=None):
    formatter = formatter or JSONFormatter()
    with open(path, 'w') as fp:
        formatter.write_to(model_document(model), fp)
    return path
