"""
Surrogate trees for black-box targets.

A surrogate is grown on the union of both datasets so that its conditionals
capture as much of the black box's prediction shift as possible. The shift
impurity of a leaf

    I(l) = (|P_l| / |P| + |Q_l| / |Q|) * |mean_P f - mean_Q f|

bounds the share of the shift the leaf leaves to the LeafMeans player, so
growing to minimise the summed impurity keeps PercentUnexplained low without
computing Shapley values during growth.
"""
import collections
import logging

import numpy as np
from joblib import Parallel, delayed

from subshift.conditionals import ConditionalTable
from subshift.context import default_context
from subshift.explainers import explain_with_leafmeans
from subshift.learning import BestFirstGrower, GiniCriterion, Criterion, VarianceCriterion
from subshift.shapley import shapley_weights
from subshift.trees import DecisionTree, Leaf, SplitNode
from subshift.validators import (ValidationError, proxy_simulation_config_validators, raise_if_invalid,
                                 surrogate_config_validators)

logger = logging.getLogger(__name__)

# proxy simulation repeats per seeded task, and the cap on the Z entries one task holds
BLOCK_SIZE = 500
BLOCK_CELLS = 2 * 10 ** 7


class ShiftImpurityInputs(collections.namedtuple('ShiftImpurityInputs',
                                                 ['n_p_leaf', 'n_q_leaf', 'n_p', 'n_q', 'sum_p', 'sum_q'])):
    """
    Counts and prediction sums of one leaf: rows of P and Q in the leaf, the
    dataset sizes, and the sums of f over the leaf's P rows and Q rows.
    """


def shift_impurity(inputs):
    """
    Shift impurity of a leaf; +inf when the leaf holds no rows of P or no
    rows of Q, which makes it inadmissible.
    """
    if inputs.n_p < 1 or inputs.n_q < 1:
        raise ValueError('dataset sizes must be positive')
    if not (0 <= inputs.n_p_leaf <= inputs.n_p and 0 <= inputs.n_q_leaf <= inputs.n_q):
        raise ValueError('leaf counts must lie between 0 and the dataset sizes')
    if inputs.n_p_leaf == 0 or inputs.n_q_leaf == 0:
        return np.inf
    mass = inputs.n_p_leaf / float(inputs.n_p) + inputs.n_q_leaf / float(inputs.n_q)
    return mass * abs(inputs.sum_p / float(inputs.n_p_leaf) - inputs.sum_q / float(inputs.n_q_leaf))


class ShiftCriterion(Criterion):
    """
    Shift impurity as a growth criterion; ``groups`` marks P rows with 0 and
    Q rows with 1.
    """

    def __init__(self, targets, groups):
        super(ShiftCriterion, self).__init__(targets, groups)
        self.groups = np.asarray(groups, dtype=int)
        self.n_p = int(np.sum(self.groups == 0))
        self.n_q = int(np.sum(self.groups == 1))

    def node_impurity(self, idx):
        in_q = self.groups[idx] == 1
        y = self.targets[idx]
        return shift_impurity(ShiftImpurityInputs(int((~in_q).sum()), int(in_q.sum()), self.n_p, self.n_q,
                                                  float(y[~in_q].sum()), float(y[in_q].sum())))

    def _side(self, count_p, count_q, sum_p, sum_q):
        with np.errstate(invalid='ignore', divide='ignore'):
            value = (count_p / self.n_p + count_q / self.n_q) * np.abs(sum_p / count_p - sum_q / count_q)
        return np.where((count_p > 0) & (count_q > 0), value, np.inf)

    def split_impurities(self, sorted_idx):
        in_q = (self.groups[sorted_idx] == 1).astype(float)
        in_p = 1.0 - in_q
        y = self.targets[sorted_idx]
        count_p, count_q = np.cumsum(in_p)[:-1], np.cumsum(in_q)[:-1]
        sum_p, sum_q = np.cumsum(y * in_p)[:-1], np.cumsum(y * in_q)[:-1]
        total_p, total_q = in_p.sum(), in_q.sum()
        total_sum_p, total_sum_q = (y * in_p).sum(), (y * in_q).sum()
        left = self._side(count_p, count_q, sum_p, sum_q)
        right = self._side(total_p - count_p, total_q - count_q, total_sum_p - sum_p, total_sum_q - sum_q)
        return left + right


class SurrogateConfig(object):
    """
    Parameters:

        ``max_leaves``
            leaf budget of the surrogate

        ``impurity``
            ``shift`` (default), or the ``gini`` / ``variance`` baselines

        ``min_samples_per_side_per_distribution``
            every split keeps at least this many rows of P and of Q on each
            side, so no conditional of the surrogate is undefined
    """
    def __init__(self, max_leaves=8, impurity='shift', min_samples_per_side_per_distribution=5):
        self.max_leaves = max_leaves
        self.impurity = impurity
        self.min_samples_per_side_per_distribution = min_samples_per_side_per_distribution
        raise_if_invalid('surrogate', self, surrogate_config_validators())

    def __repr__(self):
        return 'SurrogateConfig(max_leaves={0!r}, impurity={1!r}, min={2!r})'.format(
            self.max_leaves, self.impurity, self.min_samples_per_side_per_distribution)


def _union(dataP, dataQ, predictP, predictQ):
    predictP = np.asarray(predictP, dtype=float)
    predictQ = np.asarray(predictQ, dtype=float)
    if predictP.shape != (dataP.n_rows,) or predictQ.shape != (dataQ.n_rows,):
        raise ValidationError('predictions', {'predictions': ['prediction vectors must align with the datasets']})
    data = dataP.concat(dataQ)
    targets = np.concatenate([predictP, predictQ])
    groups = np.concatenate([np.zeros(dataP.n_rows, dtype=int), np.ones(dataQ.n_rows, dtype=int)])
    return data, targets, groups


def grow_surrogate(dataP, dataQ, predictP, predictQ, config=None):
    """
    Best-first growth of a surrogate tree on the rows of P and Q together,
    scored by the configured impurity. Leaf values are the mean black-box
    prediction over the leaf's rows from both datasets.
    """
    config = config or SurrogateConfig()
    data, targets, groups = _union(dataP, dataQ, predictP, predictQ)
    if config.impurity == 'shift':
        criterion = ShiftCriterion(targets, groups)
    elif config.impurity == 'gini':
        criterion = GiniCriterion(targets)
    else:
        criterion = VarianceCriterion(targets)
    grower = BestFirstGrower(criterion, config.max_leaves,
                             min_samples_per_side=config.min_samples_per_side_per_distribution, groups=groups)
    tree = grower.grow(data.rows, feature_names=data.column_names)
    logger.info('grew %s surrogate with %d leaves', config.impurity, tree.n_leaves)
    return tree


def _subtree_leaves(tree, node_id):
    if tree.is_leaf(node_id):
        return [node_id]
    left, right = tree.children(node_id)
    return _subtree_leaves(tree, left) + _subtree_leaves(tree, right)


def prune_regrow(large_tree, dataP, dataQ, predictP, predictQ, target_leaves):
    """
    Small prefix of a large tree: starting from the root split, repeatedly
    reinstate the children of the current leaf with the highest shift
    impurity until ``target_leaves`` leaves exist. A leaf missing rows of P
    or Q is never expanded; if no leaf can be expanded growth stops early.
    Node ids are kept; leaf values are the mean prediction over the leaf's
    rows from both datasets.
    """
    if target_leaves < 2:
        raise ValidationError(target_leaves, {'prune_regrow.target_leaves': ['must be at least 2']})
    if target_leaves > large_tree.n_leaves:
        raise ValidationError(target_leaves, {'prune_regrow.target_leaves': [
            'tree has only {0} leaves'.format(large_tree.n_leaves)]})
    predictP = np.asarray(predictP, dtype=float)
    predictQ = np.asarray(predictQ, dtype=float)
    reachedP = large_tree.reach(dataP.rows)
    reachedQ = large_tree.reach(dataQ.rows)
    position = dict((node_id, i) for i, node_id in enumerate(large_tree.preorder))

    def impurity(node_id):
        rows_p, rows_q = reachedP[node_id], reachedQ[node_id]
        return shift_impurity(ShiftImpurityInputs(len(rows_p), len(rows_q), dataP.n_rows, dataQ.n_rows,
                                                  float(predictP[rows_p].sum()), float(predictQ[rows_q].sum())))

    kept = [large_tree.root_id]
    frontier = list(large_tree.children(large_tree.root_id))
    while len(frontier) < target_leaves:
        expandable = [(impurity(n), n) for n in frontier if not large_tree.is_leaf(n)]
        expandable = [(value, n) for value, n in expandable if np.isfinite(value)]
        if not expandable:
            logger.warning('prune_regrow stopped at %d leaves: no expandable leaf is reached by both datasets',
                           len(frontier))
            break
        _, best = max(expandable, key=lambda item: (item[0], -position[item[1]]))
        kept.append(best)
        frontier.remove(best)
        frontier.extend(large_tree.children(best))

    leaves = []
    for node_id in frontier:
        values = np.concatenate([predictP[reachedP[node_id]], predictQ[reachedQ[node_id]]])
        if len(values):
            leaves.append(Leaf(node_id, float(values.mean())))
        else:
            original = [large_tree.leaves[i].value for i in _subtree_leaves(large_tree, node_id)]
            leaves.append(Leaf(node_id, float(np.mean(original))))
    nodes = [large_tree.nodes[n] for n in kept]
    pruned = DecisionTree(nodes, leaves, large_tree.root_id, feature_names=large_tree.feature_names,
                          n_features=large_tree.n_features)
    logger.info('pruned %r to %r', large_tree, pruned)
    return pruned


def explain_blackbox(dataP, dataQ, predictP, predictQ, config=None, method='exact', budget=None, seed=0,
                     shapley_config=None, ctx=None):
    """
    Grows a surrogate for the black box and explains the black box's shift
    with it. Returns (explanation, surrogate).
    """
    config = config or SurrogateConfig()
    ctx = default_context(ctx)
    with ctx.timer('grow_surrogate'):
        tree = grow_surrogate(dataP, dataQ, predictP, predictQ, config)
    explanation = explain_with_leafmeans(tree, predictP, predictQ, dataP, dataQ, method=method, budget=budget,
                                         seed=seed, config=shapley_config, ctx=ctx)
    explanation.metadata.update({'surrogate_impurity': config.impurity, 'surrogate_leaves': tree.n_leaves})
    return explanation, tree


########## Proxy ############


def _all_masks(n):
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def _batch_leaf_probs(leaf_paths, masks, p, q):
    """
    Z_S(l) for a batch of probability tables: p and q are (B, n), masks
    (K, n); the result is (B, K, n_leaves).
    """
    true_probs = np.where(masks[None, :, :], q[:, None, :], p[:, None, :])
    false_probs = 1.0 - true_probs
    Z = np.ones(true_probs.shape[:2] + (len(leaf_paths),))
    for position, path in enumerate(leaf_paths):
        for c, branch in path:
            Z[:, :, position] *= true_probs[:, :, c] if branch else false_probs[:, :, c]
    return Z


def _proxy_differences(leaf_paths, masks, weights, p, q):
    Z = _batch_leaf_probs(leaf_paths, masks, p, q)
    midpoint = 0.5 * (Z[:, :1, :] + Z[:, -1:, :])
    return np.sum(weights[None, :, None] * (Z - midpoint), axis=1)


def averaged_leaf_probs(table):
    """
    sum_S w(S) Z_S(l) over all coalitions S of conditionals, with the weights
    of a game that also has the LeafMeans player. Returns one value per leaf.
    """
    n = len(table)
    masks = _all_masks(n)
    weights = shapley_weights(n + 1)[masks.sum(axis=1)]
    Z = _batch_leaf_probs(table.leaf_paths, masks, table.p_probs[None, :], table.q_probs[None, :])[0]
    return np.sum(weights[:, None] * Z, axis=0)


def leafmeans_bound(table, stats):
    """
    Upper bound on |phi_LeafMeans|: sum over leaves of the averaged leaf
    probability times the leaf's mean-prediction difference.
    """
    return float(np.sum(averaged_leaf_probs(table) * np.abs(stats.q_mean - stats.p_mean)))


def full_tree(depth):
    """
    Complete binary tree of the given depth over one feature, node ids in
    heap order (children of i are 2i+1 and 2i+2).
    """
    n_splits = 2 ** depth - 1
    nodes = [SplitNode(i, 0, 0.0, 2 * i + 1, 2 * i + 2) for i in range(n_splits)]
    leaves = [Leaf(i, 0.0) for i in range(n_splits, 2 * n_splits + 1)]
    return DecisionTree(nodes, leaves, 0, n_features=1)


class ProxySimulationConfig(object):
    """
    Parameters:

        ``depth``
            depth of the complete tree whose conditionals are sampled

        ``n_repeats``
            random (P, Q) pairs

        ``seed``
            master seed; blocks of repeats draw from spawned child seeds

        ``correlation``
            Q conditionals are (1 - correlation) * U + correlation * P with U
            fresh uniform draws; 1 makes Q equal P
    """
    def __init__(self, depth=3, n_repeats=5000, seed=0, correlation=0.0):
        self.depth = depth
        self.n_repeats = n_repeats
        self.seed = seed
        self.correlation = correlation
        raise_if_invalid('proxy', self, proxy_simulation_config_validators())


ProxySummary = collections.namedtuple('ProxySummary', ['mean_diff', 'std_diff', 'frac_within_0_05',
                                                       'frac_within_0_1', 'n_repeats', 'n_leaves'])


def _simulate_block(leaf_paths, masks, weights, n_splits, n_repeats, correlation, seed_sequence):
    rng = np.random.default_rng(seed_sequence)
    p = rng.uniform(size=(n_repeats, n_splits))
    u = rng.uniform(size=(n_repeats, n_splits))
    q = p.copy() if correlation == 1.0 else (1.0 - correlation) * u + correlation * p
    return _proxy_differences(leaf_paths, masks, weights, p, q).ravel()


def proxy_simulation(config=None, ctx=None):
    """
    Monte-Carlo check that the weighted average interventional probability of
    a leaf is close to the midpoint (P(l) + Q(l)) / 2. Returns a
    :data:`ProxySummary` of the differences over all leaves and repeats.
    """
    config = config or ProxySimulationConfig()
    ctx = default_context(ctx)
    tree = full_tree(config.depth)
    table = ConditionalTable.from_probabilities(tree, np.zeros(tree.n_splits), np.zeros(tree.n_splits))
    masks = _all_masks(tree.n_splits)
    weights = shapley_weights(tree.n_splits + 1)[masks.sum(axis=1)]

    block = max(1, min(BLOCK_SIZE, BLOCK_CELLS // (len(masks) * tree.n_leaves)))
    sizes = [block] * (config.n_repeats // block)
    if config.n_repeats % block:
        sizes.append(config.n_repeats % block)
    seeds = np.random.SeedSequence(config.seed).spawn(len(sizes))
    with ctx.timer('proxy_simulation'):
        blocks = Parallel(n_jobs=ctx.n_jobs, prefer='threads')(
            delayed(_simulate_block)(table.leaf_paths, masks, weights, tree.n_splits, size, config.correlation, seed)
            for size, seed in zip(sizes, seeds)
        )
    diffs = np.concatenate(blocks)
    summary = ProxySummary(
        mean_diff=float(diffs.mean()),
        std_diff=float(diffs.std()),
        frac_within_0_05=float(np.mean(np.abs(diffs) <= 0.05)),
        frac_within_0_1=float(np.mean(np.abs(diffs) <= 0.1)),
        n_repeats=config.n_repeats,
        n_leaves=tree.n_leaves,
    )
    logger.info('proxy simulation: %r', summary)
    return summary
