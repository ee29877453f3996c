"""
Synthetic distribution shifts with known structure.

``make_shift_benchmark`` draws P and Q from a two-component Gaussian mixture
with different component weights, translates Q's second component, labels
rows with a nonlinear rule plus noise and fits a random forest on both
datasets together as the black box to explain. ``make_threshold_shift``
simulates a shift by splitting one table on a feature threshold.
"""
import collections
import logging

import numpy as np

from subshift.data import Dataset, FeatureSchema, partition_by_threshold
from subshift.learning import LearnerConfig, fit_random_forest

logger = logging.getLogger(__name__)

ShiftBenchmark = collections.namedtuple('ShiftBenchmark', ['dataP', 'dataQ', 'model', 'predictP', 'predictQ'])

# mixture weight of the second component under P and under Q
P_WEIGHT = 0.3
Q_WEIGHT = 0.6
LABEL_NOISE = 0.1


def feature_names(n_features):
    return ['x{0}'.format(i) for i in range(n_features)]


def _label(X, rng):
    score = np.sin(1.5 * X[:, 0]) + X[:, 1] * X[:, min(2, X.shape[1] - 1)] - 0.25 * X[:, -1]
    labels = (score > 0.2).astype(float)
    flip = rng.uniform(size=len(labels)) < LABEL_NOISE
    labels[flip] = 1.0 - labels[flip]
    return labels


def _mixture(rng, n_rows, n_features, weight, translation):
    second = rng.uniform(size=n_rows) < weight
    X = rng.normal(size=(n_rows, n_features))
    X[second] += 1.5
    X[second, 0] += translation
    return X


def make_shift_benchmark(seed=0, n_rows=2000, n_features=4, n_trees=100, max_leaves=8, ctx=None):
    """
    Returns a :data:`ShiftBenchmark`: P and Q datasets with labels and the
    forest's predictions attached, the fitted forest, and its predictions on
    each dataset.
    """
    if n_features < 2:
        raise ValueError('the benchmark needs at least 2 features')
    rng = np.random.default_rng(seed)
    schema = FeatureSchema.numeric(feature_names(n_features))
    XP = _mixture(rng, n_rows, n_features, P_WEIGHT, 0.0)
    XQ = _mixture(rng, n_rows, n_features, Q_WEIGHT, 0.75)
    dataP = Dataset(schema, XP, labels=_label(XP, rng))
    dataQ = Dataset(schema, XQ, labels=_label(XQ, rng))

    config = LearnerConfig(max_leaf_nodes=max_leaves, n_estimators=n_trees, seed=seed)
    union = dataP.concat(dataQ)
    model = fit_random_forest(union, union.labels, config, ctx=ctx)
    predictP = model.predict(dataP.rows)
    predictQ = model.predict(dataQ.rows)
    logger.info('benchmark seed %d: mean prediction %.4f -> %.4f', seed, predictP.mean(), predictQ.mean())
    return ShiftBenchmark(dataP.with_predictions(predictP), dataQ.with_predictions(predictQ), model,
                          predictP, predictQ)


def make_threshold_shift(seed=0, n_rows=4000, n_features=4, feature='x0', threshold=0.0, drop_feature=True):
    """
    One Gaussian table with labels, split into P (``feature <= threshold``)
    and Q (the rest). The partition feature is dropped by default so the
    shift is only visible through correlated features.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, n_features))
    mixing = np.eye(n_features) + 0.5 * np.triu(np.ones((n_features, n_features)), 1)
    X = X.dot(mixing)
    data = Dataset(FeatureSchema.numeric(feature_names(n_features)), X, labels=_label(X, rng))
    return partition_by_threshold(data, feature, threshold, drop_feature=drop_feature)
