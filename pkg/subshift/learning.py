"""
Best-first CART growth and the tree ensembles built on it.

Growth keeps a frontier of leaves, each with its best admissible split
precomputed, and repeatedly splits the leaf whose split lowers the total
impurity the most. Candidate thresholds are midpoints between consecutive
distinct values; ties go to the lowest feature index, then the smallest
threshold, then the oldest leaf.
"""
import logging

import numpy as np
from joblib import Parallel, delayed

from subshift.context import default_context
from subshift.trees import DecisionTree, Leaf, SplitNode, TreeEnsemble
from subshift.validators import ValidationError, learner_config_validators, raise_if_invalid

logger = logging.getLogger(__name__)

_GAIN_TOLERANCE = 1e-12


class LearnerConfig(object):
    """
    Hyperparameters of tree and ensemble learning.

        Parameters:

            ``max_leaf_nodes``
                grow until this many leaves (>= 2)

            ``min_samples_per_side``
                every split leaves at least this many rows on each side

            ``impurity_kind``
                ``variance``, ``gini`` or ``shift`` (the latter only through
                :func:`subshift.surrogate.grow_surrogate`)

            ``n_estimators``
                trees in an ensemble

            ``feature_subsample``
                fraction of features considered when searching a leaf's split
                (None: the square root of the feature count for random forests,
                every feature for single trees and boosting)

            ``learning_rate``
                boosting tree weight

            ``seed``
                master seed; per-tree seeds are spawned from it

            ``bootstrap``
                random forests resample rows with replacement
    """
    def __init__(self, max_leaf_nodes=8, min_samples_per_side=5, impurity_kind='variance', n_estimators=100,
                 feature_subsample=None, learning_rate=0.1, seed=0, bootstrap=True):
        self.max_leaf_nodes = max_leaf_nodes
        self.min_samples_per_side = min_samples_per_side
        self.impurity_kind = impurity_kind
        self.n_estimators = n_estimators
        self.feature_subsample = feature_subsample
        self.learning_rate = learning_rate
        self.seed = seed
        self.bootstrap = bootstrap
        raise_if_invalid('learner', self, learner_config_validators())

    def __repr__(self):
        return 'LearnerConfig({0})'.format(', '.join('{0}={1!r}'.format(k, v) for k, v in sorted(vars(self).items())))

    def replace(self, **kwargs):
        values = dict(vars(self))
        values.update(kwargs)
        return LearnerConfig(**values)


########## Impurity criteria ############


class Criterion(object):
    """
    Leaf impurity, lower is better. A criterion sees the targets (and for the
    shift criterion the distribution of origin of each row) and scores a leaf
    or every prefix split of a sorted leaf.
    """

    def __init__(self, targets, groups=None):
        self.targets = np.asarray(targets, dtype=float)
        self.groups = groups

    def node_impurity(self, idx):
        raise NotImplementedError

    def split_impurities(self, sorted_idx):
        """
        Array of length n - 1: impurity(left) + impurity(right) when the left
        child takes the first k + 1 rows of sorted_idx.
        """
        raise NotImplementedError


class VarianceCriterion(Criterion):
    """
    Sum of squared deviations from the leaf mean.
    """

    def node_impurity(self, idx):
        y = self.targets[idx]
        return float(np.sum((y - y.mean()) ** 2))

    def split_impurities(self, sorted_idx):
        y = self.targets[sorted_idx]
        y = y - y.mean()
        n = len(y)
        n_left = np.arange(1, n, dtype=float)
        s = np.cumsum(y)
        s2 = np.cumsum(y * y)
        left = s2[:-1] - s[:-1] ** 2 / n_left
        right = (s2[-1] - s2[:-1]) - (s[-1] - s[:-1]) ** 2 / (n - n_left)
        return np.maximum(left, 0.0) + np.maximum(right, 0.0)


class GiniCriterion(Criterion):
    """
    Gini impurity of binary labels (targets binarized at 0.5), weighted by the
    leaf size as in standard classification trees: n * (1 - p0^2 - p1^2).
    """

    def __init__(self, targets, groups=None):
        super(GiniCriterion, self).__init__(targets, groups)
        self.labels = (self.targets >= 0.5).astype(float)

    def node_impurity(self, idx):
        n = float(len(idx))
        ones = self.labels[idx].sum()
        return 2.0 * ones * (n - ones) / n

    def split_impurities(self, sorted_idx):
        b = self.labels[sorted_idx]
        n = len(b)
        n_left = np.arange(1, n, dtype=float)
        ones_left = np.cumsum(b)[:-1]
        ones_right = b.sum() - ones_left
        n_right = n - n_left
        return 2.0 * ones_left * (n_left - ones_left) / n_left + 2.0 * ones_right * (n_right - ones_right) / n_right


CRITERIA = {
    'variance': VarianceCriterion,
    'gini': GiniCriterion,
}


########## Growth ############


class _Candidate(object):
    __slots__ = ('leaf_id', 'idx', 'impurity', 'gain', 'feature', 'threshold', 'left', 'right')

    def __init__(self, leaf_id, idx, impurity):
        self.leaf_id = leaf_id
        self.idx = idx
        self.impurity = impurity
        self.gain = None
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None


class BestFirstGrower(object):
    """
    Grows one tree best-first.

        Parameters:

            ``criterion``
                a :class:`Criterion` bound to the targets

            ``max_leaf_nodes``
                leaf budget

            ``min_samples_per_side``
                minimum rows on each side of a split; with ``groups`` the
                minimum applies to every group separately

            ``groups``
                optional integer array marking the distribution each row
                comes from

            ``feature_subsample``
                fraction of features searched per leaf, drawn from ``rng``
    """
    def __init__(self, criterion, max_leaf_nodes, min_samples_per_side=1, groups=None,
                 feature_subsample=1.0, rng=None):
        self.criterion = criterion
        self.max_leaf_nodes = max_leaf_nodes
        self.min_samples_per_side = min_samples_per_side
        self.groups = None if groups is None else np.asarray(groups, dtype=int)
        self.feature_subsample = feature_subsample
        self.rng = rng

    def _features(self, d):
        if self.feature_subsample >= 1.0:
            return np.arange(d)
        k = max(1, int(round(self.feature_subsample * d)))
        return np.sort(self.rng.choice(d, size=k, replace=False))

    def _admissible(self, sorted_idx, xs):
        n = len(sorted_idx)
        m = self.min_samples_per_side
        n_left = np.arange(1, n)
        ok = xs[:-1] < xs[1:]
        if self.groups is None:
            ok &= (n_left >= m) & (n - n_left >= m)
        else:
            g = self.groups[sorted_idx]
            for value in np.unique(self.groups):
                in_group = (g == value)
                left = np.cumsum(in_group)[:-1]
                ok &= (left >= m) & (in_group.sum() - left >= m)
        return ok

    def find_best_split(self, X, candidate):
        idx = candidate.idx
        if len(idx) < 2 * self.min_samples_per_side:
            return candidate
        best_total = np.inf
        for feature in self._features(X.shape[1]):
            values = X[idx, feature]
            order = np.argsort(values, kind='mergesort')
            xs = values[order]
            if xs[0] == xs[-1]:
                continue
            ok = self._admissible(idx[order], xs)
            if not ok.any():
                continue
            with np.errstate(invalid='ignore', divide='ignore'):
                totals = self.criterion.split_impurities(idx[order])
            totals = np.where(ok & np.isfinite(totals), totals, np.inf)
            k = int(np.argmin(totals))
            if totals[k] < best_total:
                threshold = 0.5 * (xs[k] + xs[k + 1])
                if not xs[k] <= threshold < xs[k + 1]:
                    threshold = xs[k]
                best_total = totals[k]
                candidate.feature = int(feature)
                candidate.threshold = float(threshold)
                candidate.left = idx[order[:k + 1]]
                candidate.right = idx[order[k + 1:]]
        if np.isfinite(best_total):
            candidate.gain = candidate.impurity - best_total
        return candidate

    def _new_candidate(self, X, leaf_id, idx):
        with np.errstate(invalid='ignore', divide='ignore'):
            impurity = self.criterion.node_impurity(idx)
        return self.find_best_split(X, _Candidate(leaf_id, idx, impurity))

    def grow(self, X, feature_names=None, leaf_value=None):
        """
        Returns the grown :class:`~subshift.trees.DecisionTree`. Leaf values
        are the mean target of each leaf unless ``leaf_value(idx)`` is given.
        """
        X = np.asarray(X, dtype=float)
        if leaf_value is None:
            targets = self.criterion.targets

            def leaf_value(idx):
                return float(np.mean(targets[idx]))

        frontier = [self._new_candidate(X, 0, np.arange(X.shape[0]))]
        nodes = []
        next_id = 1
        while len(frontier) < self.max_leaf_nodes:
            best = None
            for candidate in frontier:
                if candidate.gain is None or not np.isfinite(candidate.impurity):
                    continue
                if candidate.gain <= _GAIN_TOLERANCE * max(1.0, abs(candidate.impurity)):
                    continue
                if best is None or candidate.gain > best.gain or \
                        (candidate.gain == best.gain and candidate.leaf_id < best.leaf_id):
                    best = candidate
            if best is None:
                break
            left_id, right_id = next_id, next_id + 1
            next_id += 2
            nodes.append(SplitNode(best.leaf_id, best.feature, best.threshold, left_id, right_id))
            logger.debug('split leaf %d on feature %d at %r (gain %.6g)', best.leaf_id, best.feature,
                         best.threshold, best.gain)
            frontier.remove(best)
            frontier.append(self._new_candidate(X, left_id, best.left))
            frontier.append(self._new_candidate(X, right_id, best.right))

        leaves = [Leaf(c.leaf_id, leaf_value(c.idx)) for c in frontier]
        return DecisionTree(nodes, leaves, 0, feature_names=feature_names, n_features=X.shape[1])


def _criterion(kind, targets):
    if kind not in CRITERIA:
        raise ValidationError(kind, {'learner.impurity_kind': [
            'impurity "{0}" needs both distributions; use grow_surrogate'.format(kind)]})
    return CRITERIA[kind](targets)


def _targets(data, targets):
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (data.n_rows,):
        raise ValidationError(targets, {'targets': ['expected {0} targets'.format(data.n_rows)]})
    return targets


def feature_fraction(config, n_features, forest=False):
    """
    Fraction of features searched per split: ``config.feature_subsample``
    when set, otherwise sqrt(d)/d for forest members and 1 elsewhere.
    """
    if config.feature_subsample is not None:
        return config.feature_subsample
    if forest:
        return max(1.0, np.floor(np.sqrt(n_features))) / n_features
    return 1.0


def fit_tree(data, targets, config):
    """
    Best-first CART tree on a :class:`~subshift.data.Dataset`. Leaf values are
    the mean of the targets routed to each leaf.
    """
    targets = _targets(data, targets)
    grower = BestFirstGrower(_criterion(config.impurity_kind, targets), config.max_leaf_nodes,
                             min_samples_per_side=config.min_samples_per_side,
                             feature_subsample=feature_fraction(config, data.rows.shape[1]),
                             rng=np.random.default_rng(config.seed))
    return grower.grow(data.rows, feature_names=data.column_names)


def _fit_forest_member(X, targets, config, seed_sequence, feature_names):
    rng = np.random.default_rng(seed_sequence)
    n = X.shape[0]
    rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
    sample = targets[rows]
    grower = BestFirstGrower(_criterion(config.impurity_kind, sample), config.max_leaf_nodes,
                             min_samples_per_side=config.min_samples_per_side,
                             feature_subsample=feature_fraction(config, X.shape[1], forest=True), rng=rng)
    return grower.grow(X[rows], feature_names=feature_names)


def fit_random_forest(data, targets, config, ctx=None):
    """
    Random forest: ``n_estimators`` trees, each grown on a bootstrap resample
    with per-leaf feature subsampling, aggregated by mean. Tree k draws from
    the k-th seed spawned from ``config.seed``, so the forest does not depend
    on how trees are scheduled across workers.
    """
    ctx = default_context(ctx)
    targets = _targets(data, targets)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_estimators)
    names = data.column_names
    with ctx.timer('fit_random_forest'):
        trees = Parallel(n_jobs=ctx.n_jobs, prefer='threads')(
            delayed(_fit_forest_member)(data.rows, targets, config, seed, names) for seed in seeds
        )
    logger.info('fitted random forest of %d trees', len(trees))
    return TreeEnsemble(trees, [1.0] * len(trees), base_score=0.0, aggregation='mean', kind='random_forest',
                        feature_names=names)


def fit_gradient_boosted(data, targets, config):
    """
    Least-squares gradient boosting: tree k fits the residuals of the running
    prediction; every tree has weight ``learning_rate`` and the base score is
    the target mean.
    """
    targets = _targets(data, targets)
    rng = np.random.default_rng(config.seed)
    base_score = float(np.mean(targets))
    running = np.full(data.n_rows, base_score)
    trees = []
    for k in range(config.n_estimators):
        residuals = targets - running
        grower = BestFirstGrower(_criterion(config.impurity_kind, residuals), config.max_leaf_nodes,
                                 min_samples_per_side=config.min_samples_per_side,
                                 feature_subsample=feature_fraction(config, data.rows.shape[1]), rng=rng)
        tree = grower.grow(data.rows, feature_names=data.column_names)
        trees.append(tree)
        running = running + config.learning_rate * tree.predict(data.rows)
        logger.debug('boosting stage %d: training mse %.6g', k, float(np.mean((targets - running) ** 2)))
    return TreeEnsemble(trees, [config.learning_rate] * len(trees), base_score=base_score,
                        aggregation='weighted_sum', kind='gradient_boosted', feature_names=data.column_names)
