"""
Trees, tables and datasets shared by the tests.

The example tree splits on x1 at the root and on x2 below the root's false
branch::

    [0] x1 <= 0.0
      [1] leaf 1.0
      [2] x2 <= 0.0
        [3] leaf 0.5
        [4] leaf 0.0

Under P the conditionals are 0.5 and 0.2, under Q 0.3 and 0.8.
"""
import os

import numpy as np

from subshift.conditionals import ConditionalTable, LeafStats
from subshift.data import Dataset, FeatureSchema, write_csv
from subshift.formatters import JSONFormatter
from subshift.model_io import export_json
from subshift.trees import DecisionTree, Leaf, SplitNode

EXAMPLE_P = (0.5, 0.2)
EXAMPLE_Q = (0.3, 0.8)
EXAMPLE_VALUES = (1.0, 0.5, 0.0)


def example_tree():
    nodes = [SplitNode(0, 0, 0.0, 1, 2), SplitNode(2, 1, 0.0, 3, 4)]
    leaves = [Leaf(1, 1.0), Leaf(3, 0.5), Leaf(4, 0.0)]
    return DecisionTree(nodes, leaves, 0, feature_names=['x1', 'x2'])


def example_table():
    return ConditionalTable.from_probabilities(example_tree(), EXAMPLE_P, EXAMPLE_Q)


def _rows(n_left, n_middle, n_right):
    return np.array([[-1.0, 0.0]] * n_left + [[1.0, -1.0]] * n_middle + [[1.0, 1.0]] * n_right)


def example_data():
    """
    P (10 rows) and Q (50 rows) whose empirical conditionals on the example
    tree are exactly the example's.
    """
    schema = FeatureSchema.numeric(['x1', 'x2'])
    return Dataset(schema, _rows(5, 1, 4)), Dataset(schema, _rows(15, 28, 7))


def unreachable_tree():
    """
    Node 2 needs x1 > 5, which no example row satisfies.
    """
    nodes = [SplitNode(0, 0, 5.0, 1, 2), SplitNode(2, 0, 10.0, 3, 4)]
    leaves = [Leaf(1, 0.25), Leaf(3, 0.5), Leaf(4, 0.75)]
    return DecisionTree(nodes, leaves, 0, feature_names=['x1', 'x2'])


def random_tree(rng, n_splits, n_features=3):
    """
    Proper binary tree grown by splitting a random leaf ``n_splits`` times.
    """
    frontier = [0]
    nodes = []
    next_id = 1
    for _ in range(n_splits):
        leaf_id = frontier.pop(int(rng.integers(len(frontier))))
        nodes.append(SplitNode(leaf_id, int(rng.integers(n_features)), float(rng.normal()), next_id, next_id + 1))
        frontier.extend([next_id, next_id + 1])
        next_id += 2
    leaves = [Leaf(i, float(rng.uniform())) for i in frontier]
    return DecisionTree(nodes, leaves, 0, n_features=n_features)


def random_table(seed, n_splits):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, n_splits)
    return ConditionalTable.from_probabilities(tree, rng.uniform(0.05, 0.95, n_splits),
                                               rng.uniform(0.05, 0.95, n_splits))


def random_stats(seed, table):
    rng = np.random.default_rng(seed)
    n = table.tree.n_leaves
    return LeafStats(table.tree.leaf_ids, table.leaf_probs('p'), table.leaf_probs('q'),
                     rng.uniform(size=n), rng.uniform(size=n))


def gaussian_pair(seed=0, n_rows=400, n_features=3, translation=1.0):
    """
    P ~ N(0, I) and Q ~ N(0, I) moved by ``translation`` along x0, with a
    smooth score as the black-box prediction of every row.
    """
    rng = np.random.default_rng(seed)
    schema = FeatureSchema.numeric(['x{0}'.format(i) for i in range(n_features)])
    XP = rng.normal(size=(n_rows, n_features))
    XQ = rng.normal(size=(n_rows, n_features))
    XQ[:, 0] += translation

    def score(X):
        return 1.0 / (1.0 + np.exp(-(2.0 * X[:, 0] - X[:, 1])))

    return Dataset(schema, XP), Dataset(schema, XQ), score(XP), score(XQ)


def write_example_files(directory, tree=None):
    """
    Writes the example datasets, their schema and a tree model under
    ``directory``; returns the paths by manifest key.
    """
    dataP, dataQ = example_data()
    paths = dict((key, os.path.join(directory, name)) for key, name in (
        ('data_p', 'p.csv'), ('data_q', 'q.csv'), ('schema', 'schema.json'), ('model', 'model.json')))
    write_csv(paths['data_p'], dataP)
    write_csv(paths['data_q'], dataQ)
    with open(paths['schema'], 'w') as fp:
        JSONFormatter().write_to(dataP.schema.to_document(), fp)
    export_json(tree or example_tree(), paths['model'])
    return paths
