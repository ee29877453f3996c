"""
Subgroup conditionals and leaf statistics of a tree under two distributions.

The conditional of a split node is the probability that its test is true
given that the node is reached. Conditionals are indexed in preorder, which
fixes the factor order of every analysis built on a table.
"""
import collections
import logging
import re

import numpy as np

from subshift.errors import UndefinedConditionalError
from subshift.trees import PathStep

logger = logging.getLogger(__name__)

FILL_POLICIES = ('other', 'leaf_value')


class SplitConditional(collections.namedtuple('SplitConditional', ['node_id', 'path', 'test', 'human_label'])):
    """
    One split node seen as a subgroup conditional: the node's test given the
    ancestor tests on its path.
    """

    @property
    def depth(self):
        return len(self.path)


def _format_threshold(threshold):
    return repr(float(threshold))


def _format_test(name, threshold):
    return '{0} ≤ {1}'.format(name, _format_threshold(threshold))


def human_label(path, test, feature_name):
    """
    Renders e.g. ``P(x2 ≤ 1.0 | x1 ≤ 0.0 is false)``.
    """
    target = _format_test(feature_name(test[0]), test[1])
    if not path:
        return 'P({0})'.format(target)
    conditions = []
    for step in path:
        text = _format_test(feature_name(step.feature_index), step.threshold)
        conditions.append(text if step.branch else text + ' is false')
    return 'P({0} | {1})'.format(target, ', '.join(conditions))


_TEST = re.compile(r'^(?P<name>.+) ≤ (?P<threshold>\S+?)(?P<false> is false)?$')


def parse_human_label(label, feature_names):
    """
    Inverse of :func:`human_label`: returns (path, test).
    """
    if not (label.startswith('P(') and label.endswith(')')):
        raise ValueError('not a conditional label: {0!r}'.format(label))
    body = label[2:-1]
    target, _, given = body.partition(' | ')

    def parse(text):
        match = _TEST.match(text)
        if match is None:
            raise ValueError('cannot parse test {0!r}'.format(text))
        return feature_names.index(match.group('name')), float(match.group('threshold')), match.group('false') is None

    feature, threshold, _ = parse(target)
    path = [PathStep(*parse(part)) for part in given.split(', ')] if given else []
    return path, (feature, threshold)


class ConditionalTable(object):
    """
    Per split node (preorder), the conditional probability of the test under
    P and under Q, with the (n_reached, n_true) counts behind each estimate.

    The table also records the tree structure the analysis needs: for each
    leaf, the list of (conditional index, branch) pairs on its path.
    """
    def __init__(self, tree, conditionals, p_probs, q_probs, p_counts=None, q_counts=None):
        self.tree = tree
        self.conditionals = list(conditionals)
        self.p_probs = np.asarray(p_probs, dtype=float)
        self.q_probs = np.asarray(q_probs, dtype=float)
        self.p_counts = None if p_counts is None else np.asarray(p_counts, dtype=int)
        self.q_counts = None if q_counts is None else np.asarray(q_counts, dtype=int)
        self.index = dict((c.node_id, i) for i, c in enumerate(self.conditionals))
        self.leaf_paths = [
            [(self.index[node_id], branch) for node_id, branch in tree.ancestors(leaf_id)]
            for leaf_id in tree.leaf_ids
        ]
        # parent conditional of every conditional, -1 at the root
        self.parents = []
        for c in self.conditionals:
            ancestors = tree.ancestors(c.node_id)
            if ancestors:
                node_id, branch = ancestors[-1]
                self.parents.append((self.index[node_id], branch))
            else:
                self.parents.append((-1, True))

    def __len__(self):
        return len(self.conditionals)

    def __repr__(self):
        return 'ConditionalTable(n_conditionals={0})'.format(len(self))

    @property
    def labels(self):
        return [c.human_label for c in self.conditionals]

    @classmethod
    def from_probabilities(cls, tree, p_probs, q_probs):
        """
        Table over a tree with given conditional probabilities (preorder),
        without counts. Used for synthetic analyses.
        """
        return cls(tree, split_conditionals(tree), p_probs, q_probs)

    def leaf_probs(self, distribution='p'):
        """
        Leaf probabilities as the product of the conditionals on each path.
        """
        probs = self.p_probs if distribution == 'p' else self.q_probs
        out = np.ones(len(self.leaf_paths))
        for position, path in enumerate(self.leaf_paths):
            for c, branch in path:
                out[position] *= probs[c] if branch else 1.0 - probs[c]
        return out

    def with_probabilities(self, p_probs=None, q_probs=None):
        return ConditionalTable(self.tree, self.conditionals,
                                self.p_probs if p_probs is None else p_probs,
                                self.q_probs if q_probs is None else q_probs,
                                self.p_counts, self.q_counts)


def split_conditionals(tree):
    return [
        SplitConditional(
            node.id,
            tree.path(node.id),
            (node.feature_index, node.threshold),
            human_label(tree.path(node.id), (node.feature_index, node.threshold), tree.feature_name),
        )
        for node in tree.nodes.values()
    ]


def _counts(tree, reached, distribution):
    counts = np.zeros((tree.n_splits, 2), dtype=int)
    for i, node in enumerate(tree.nodes.values()):
        n_reached = len(reached[node.id])
        if n_reached == 0:
            raise UndefinedConditionalError(node.id, distribution)
        counts[i] = (n_reached, len(reached[node.left_child_id]))
    return counts


def extract_conditionals(tree, dataP, dataQ):
    """
    Routes both datasets through the tree and estimates every split node's
    conditional as n_true / n_reached. A split node that no row of P (or Q)
    reaches has no conditional; this raises
    :class:`~subshift.errors.UndefinedConditionalError`.
    """
    p_counts = _counts(tree, tree.reach(dataP.rows), 'P')
    q_counts = _counts(tree, tree.reach(dataQ.rows), 'Q')
    table = ConditionalTable(
        tree,
        split_conditionals(tree),
        p_counts[:, 1] / p_counts[:, 0].astype(float) if len(p_counts) else [],
        q_counts[:, 1] / q_counts[:, 0].astype(float) if len(q_counts) else [],
        p_counts,
        q_counts,
    )
    logger.debug('extracted %d conditionals', len(table))
    return table


class LeafStats(object):
    """
    Per leaf (ordered like ``tree.leaf_ids``): empirical probability and mean
    target prediction under P and Q. ``fills`` holds, per leaf, None or a
    description of the fill applied to an undefined mean.
    """
    def __init__(self, leaf_ids, p_prob, q_prob, p_mean, q_mean, fills=None):
        self.leaf_ids = list(leaf_ids)
        self.p_prob = np.asarray(p_prob, dtype=float)
        self.q_prob = np.asarray(q_prob, dtype=float)
        self.p_mean = np.asarray(p_mean, dtype=float)
        self.q_mean = np.asarray(q_mean, dtype=float)
        self.fills = list(fills) if fills is not None else [None] * len(self.leaf_ids)

    def __repr__(self):
        return 'LeafStats(n_leaves={0}, filled={1})'.format(len(self.leaf_ids), self.n_filled)

    @property
    def fill_policy_applied(self):
        return [fill is not None for fill in self.fills]

    @property
    def n_filled(self):
        return sum(self.fill_policy_applied)

    def flags(self):
        return ['leaf {0}: {1}'.format(leaf_id, fill) for leaf_id, fill in zip(self.leaf_ids, self.fills) if fill]


def _leaf_means(tree, reached, predictions):
    counts = np.zeros(tree.n_leaves, dtype=int)
    means = np.full(tree.n_leaves, np.nan)
    for position, leaf_id in enumerate(tree.leaf_ids):
        rows = reached[leaf_id]
        counts[position] = len(rows)
        if len(rows):
            means[position] = np.mean(predictions[rows])
    return counts, means


def compute_leaf_stats(tree, predictP, predictQ, dataP, dataQ, fill_policy='other'):
    """
    Empirical leaf probabilities and mean target predictions under P and Q.

    The target model behind ``predictP`` / ``predictQ`` need not be the tree.
    A leaf empty under one distribution gets that side's mean from the other
    distribution (``fill_policy='other'``) or from the tree's leaf value
    (``fill_policy='leaf_value'``); a leaf empty under both takes the leaf
    value. Every fill is flagged.
    """
    if fill_policy not in FILL_POLICIES:
        raise ValueError('fill_policy must be one of {0}'.format(FILL_POLICIES))
    predictP = np.asarray(predictP, dtype=float)
    predictQ = np.asarray(predictQ, dtype=float)
    if predictP.shape != (dataP.n_rows,) or predictQ.shape != (dataQ.n_rows,):
        raise ValueError('prediction vectors must align with the datasets')

    p_counts, p_mean = _leaf_means(tree, tree.reach(dataP.rows), predictP)
    q_counts, q_mean = _leaf_means(tree, tree.reach(dataQ.rows), predictQ)
    values = tree.leaf_values()
    fills = []
    for position in range(tree.n_leaves):
        p_empty, q_empty = p_counts[position] == 0, q_counts[position] == 0
        if p_empty and q_empty:
            p_mean[position] = q_mean[position] = values[position]
            fills.append('empty under P and Q, mean set to leaf value')
        elif p_empty:
            p_mean[position] = q_mean[position] if fill_policy == 'other' else values[position]
            fills.append('empty under P, mean filled by {0} policy'.format(fill_policy))
        elif q_empty:
            q_mean[position] = p_mean[position] if fill_policy == 'other' else values[position]
            fills.append('empty under Q, mean filled by {0} policy'.format(fill_policy))
        else:
            fills.append(None)

    stats = LeafStats(tree.leaf_ids, p_counts / float(dataP.n_rows), q_counts / float(dataQ.n_rows),
                      p_mean, q_mean, fills)
    if stats.n_filled:
        logger.warning('%d leaves needed a filled mean', stats.n_filled)
    return stats
