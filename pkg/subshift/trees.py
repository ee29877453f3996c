"""
Binary threshold-split decision trees and tree ensembles.

Every split node tests ``x[feature] <= threshold``; rows for which the test is
true go to the left child.
"""
import collections

import numpy as np

from subshift.errors import SchemaError
from subshift.validators import EnsembleValidator, TreeDocumentValidator, ValidationError, validate

SplitNode = collections.namedtuple('SplitNode', ['id', 'feature_index', 'threshold', 'left_child_id', 'right_child_id'])
Leaf = collections.namedtuple('Leaf', ['id', 'value'])

#: one step of a root-to-node path: the ancestor's test and the branch taken
PathStep = collections.namedtuple('PathStep', ['feature_index', 'threshold', 'branch'])


class DecisionTree(object):
    """
    A proper binary tree of :class:`SplitNode` and :class:`Leaf` objects.

        Parameters:

            ``nodes``
                iterable of SplitNode

            ``leaves``
                iterable of Leaf

            ``root_id``
                id of the root (a split node, or the only leaf)

            ``feature_names``
                optional -- names of the input columns, used for labels and
                to fix the expected dimension

            ``n_features``
                optional -- expected dimension when no names are given
    """
    def __init__(self, nodes, leaves, root_id, feature_names=None, n_features=None):
        nodes = [SplitNode(n.id, int(n.feature_index), float(n.threshold), n.left_child_id, n.right_child_id)
                 for n in nodes]
        leaves = [Leaf(leaf.id, float(leaf.value)) for leaf in leaves]
        if feature_names is not None:
            feature_names = list(feature_names)
            n_features = len(feature_names)
        elif n_features is None:
            n_features = max([n.feature_index for n in nodes] or [-1]) + 1

        document = {
            'nodes': [{'id': n.id, 'feature': n.feature_index, 'threshold': n.threshold,
                       'left': n.left_child_id, 'right': n.right_child_id} for n in nodes],
            'leaves': [{'id': leaf.id, 'value': leaf.value} for leaf in leaves],
            'root': root_id,
        }
        errors = validate('tree', document, [TreeDocumentValidator(n_features=n_features)])
        if errors:
            raise ValidationError(document, errors)

        self.root_id = root_id
        self.feature_names = feature_names
        self.n_features = n_features
        by_id = dict((n.id, n) for n in nodes)
        leaf_by_id = dict((leaf.id, leaf) for leaf in leaves)

        # preorder: node, left subtree, right subtree
        order = []
        stack = [root_id]
        while stack:
            current = stack.pop()
            order.append(current)
            if current in by_id:
                stack.append(by_id[current].right_child_id)
                stack.append(by_id[current].left_child_id)
        self._preorder = tuple(order)
        self.nodes = collections.OrderedDict((i, by_id[i]) for i in order if i in by_id)
        self.leaves = collections.OrderedDict((i, leaf_by_id[i]) for i in order if i in leaf_by_id)

        self._parent = {}
        for n in self.nodes.values():
            self._parent[n.left_child_id] = (n.id, True)
            self._parent[n.right_child_id] = (n.id, False)

    def __repr__(self):
        return 'DecisionTree(n_splits={0}, n_leaves={1})'.format(self.n_splits, self.n_leaves)

    def __eq__(self, other):
        return isinstance(other, DecisionTree) and \
            self.root_id == other.root_id and \
            list(self.nodes.values()) == list(other.nodes.values()) and \
            list(self.leaves.values()) == list(other.leaves.values())

    def __ne__(self, other):
        return not self == other

    @property
    def n_leaves(self):
        return len(self.leaves)

    @property
    def n_splits(self):
        return len(self.nodes)

    @property
    def preorder(self):
        return self._preorder

    @property
    def split_ids(self):
        return list(self.nodes.keys())

    @property
    def leaf_ids(self):
        return list(self.leaves.keys())

    @property
    def depth(self):
        return max(len(self.path(i)) for i in self.leaves)

    def is_leaf(self, node_id):
        return node_id in self.leaves

    def children(self, node_id):
        node = self.nodes[node_id]
        return node.left_child_id, node.right_child_id

    def parent(self, node_id):
        """
        Returns (parent_id, is_left) or None for the root.
        """
        return self._parent.get(node_id)

    def path(self, node_id):
        """
        Root-to-node list of :data:`PathStep` (one step per ancestor).
        """
        steps = []
        current = node_id
        while current in self._parent:
            parent_id, is_left = self._parent[current]
            parent = self.nodes[parent_id]
            steps.append(PathStep(parent.feature_index, parent.threshold, is_left))
            current = parent_id
        steps.reverse()
        return steps

    def ancestors(self, node_id):
        """
        Root-to-node list of (split_id, branch) pairs.
        """
        result = []
        current = node_id
        while current in self._parent:
            parent_id, is_left = self._parent[current]
            result.append((parent_id, is_left))
            current = parent_id
        result.reverse()
        return result

    def feature_name(self, index):
        if self.feature_names is not None:
            return self.feature_names[index]
        return 'x{0}'.format(index)

    def _check_rows(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError('', 'dimension mismatch: model expects {0} features, got shape {1}'.format(
                self.n_features, X.shape))
        return X

    def reach(self, X):
        """
        Maps every node and leaf id to the indices of the rows of X that
        reach it.
        """
        X = self._check_rows(X)
        reached = {self.root_id: np.arange(X.shape[0])}
        for node_id in self._preorder:
            node = self.nodes.get(node_id)
            if node is None:
                continue
            rows = reached[node_id]
            goes_left = X[rows, node.feature_index] <= node.threshold
            reached[node.left_child_id] = rows[goes_left]
            reached[node.right_child_id] = rows[~goes_left]
        return reached

    def apply(self, X):
        """
        Position (index into :attr:`leaf_ids`) of the leaf each row lands in.
        """
        X = self._check_rows(X)
        positions = np.empty(X.shape[0], dtype=int)
        reached = self.reach(X)
        for position, leaf_id in enumerate(self.leaves):
            positions[reached[leaf_id]] = position
        return positions

    def leaf_values(self):
        return np.array([leaf.value for leaf in self.leaves.values()])

    def predict(self, X):
        return self.leaf_values()[self.apply(X)]

    def with_leaf_values(self, values):
        """
        Same structure, new leaf values (ordered like :attr:`leaf_ids`).
        """
        leaves = [Leaf(leaf_id, value) for leaf_id, value in zip(self.leaves, values)]
        return DecisionTree(self.nodes.values(), leaves, self.root_id,
                            feature_names=self.feature_names, n_features=self.n_features)

    def describe(self):
        """
        Human readable listing of the tree, one line per node.
        """
        lines = []
        for node_id in self._preorder:
            indent = '  ' * len(self.path(node_id))
            if node_id in self.nodes:
                node = self.nodes[node_id]
                lines.append('{0}[{1}] {2} <= {3!r}'.format(
                    indent, node_id, self.feature_name(node.feature_index), node.threshold))
            else:
                lines.append('{0}[{1}] leaf {2!r}'.format(indent, node_id, self.leaves[node_id].value))
        return '\n'.join(lines)


class TreeEnsemble(object):
    """
    Ordered collection of trees aggregated by mean or weighted sum.

        Parameters:

            ``trees``
                list of :class:`DecisionTree`; the order carries the boosting
                sequence

            ``tree_weights``
                one real per tree

            ``base_score``
                constant added to the aggregate

            ``aggregation``
                ``mean`` (all weights equal) or ``weighted_sum``

            ``kind``
                ``random_forest``, ``gradient_boosted`` or ``other``
    """
    def __init__(self, trees, tree_weights=None, base_score=0.0, aggregation='mean', kind='other',
                 feature_names=None):
        trees = list(trees)
        if not trees:
            raise ValidationError(trees, {'ensemble.trees': ['an ensemble needs at least one tree']})
        self.trees = trees
        self.tree_weights = [float(w) for w in (tree_weights if tree_weights is not None else [1.0] * len(trees))]
        self.base_score = float(base_score)
        self.aggregation = aggregation
        self.kind = kind
        self.feature_names = list(feature_names) if feature_names is not None else trees[0].feature_names

        errors = validate('ensemble', self, [EnsembleValidator()])
        dims = set(t.n_features for t in trees)
        if len(dims) > 1:
            errors.setdefault('ensemble.trees', []).append('trees disagree on the feature dimension')
        if errors:
            raise ValidationError(self, errors)
        self.n_features = trees[0].n_features

    def __repr__(self):
        return 'TreeEnsemble(kind={0!r}, n_trees={1})'.format(self.kind, len(self.trees))

    def __len__(self):
        return len(self.trees)

    def __eq__(self, other):
        return isinstance(other, TreeEnsemble) and \
            self.trees == other.trees and \
            self.tree_weights == other.tree_weights and \
            self.base_score == other.base_score and \
            self.aggregation == other.aggregation and \
            self.kind == other.kind

    def __ne__(self, other):
        return not self == other

    def member_predictions(self, X):
        return np.vstack([tree.predict(X) for tree in self.trees])

    def predict(self, X):
        members = self.member_predictions(X)
        if self.aggregation == 'mean':
            return self.base_score + members.mean(axis=0)
        weights = np.asarray(self.tree_weights)
        return self.base_score + weights.dot(members)

    def staged_predict(self, X):
        """
        Yields the ensemble prediction after each tree (weighted_sum).
        """
        total = np.full(np.asarray(X).shape[0], self.base_score)
        for weight, tree in zip(self.tree_weights, self.trees):
            total = total + weight * tree.predict(X)
            yield total


def predict(model, row):
    """
    Prediction of a tree or ensemble for a single feature vector (returns a
    float) or a matrix of rows (returns a vector).
    """
    X = np.asarray(row, dtype=float)
    if X.ndim == 1:
        return float(model.predict(X.reshape(1, -1))[0])
    return model.predict(X)


def model_predictions(model, data):
    return model.predict(data.rows)
