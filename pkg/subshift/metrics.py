"""
Quality metrics of shift explanations.

Faithfulness metrics compare Shapley values with mean predictions under
reweighted data: reweighting the rows of the source distribution so that one
conditional takes its value from the other distribution shows directly how
much that conditional moves the mean. Metrics that cannot be computed return
None with a flag explaining why.
"""
import collections
import logging
import math

import numpy as np
from scipy import stats

from subshift.errors import DegenerateReweightError

logger = logging.getLogger(__name__)

DIRECTIONS = ('forward', 'backward')

MetricResult = collections.namedtuple('MetricResult', ['value', 'flags'])
AUCResult = collections.namedtuple('AUCResult', ['auac', 'auiac', 'flags'])

#: one conditional to reweight; forward moves P rows toward Q, backward Q rows toward P
ReweightSpec = collections.namedtuple('ReweightSpec', ['conditional', 'p_prob', 'q_prob', 'direction'])


def _svs(explanation):
    if hasattr(explanation, 'factor_svs'):
        return np.asarray(explanation.factor_svs, dtype=float)
    return np.asarray(explanation, dtype=float)


def sv_entropy(explanation):
    """
    Entropy (nats) of the absolute conditional Shapley values normalised to
    a distribution; LeafMeans is not included. All-zero values give 0 with a
    flag.
    """
    magnitudes = np.abs(_svs(explanation))
    if len(magnitudes) == 0:
        raise ValueError('entropy needs at least one conditional factor')
    total = magnitudes.sum()
    if total == 0:
        return MetricResult(0.0, ['all Shapley values are zero'])
    probs = magnitudes / total
    probs = probs[probs > 0]
    return MetricResult(float(-np.sum(probs * np.log(probs))), [])


def numerical_complexity(explanation):
    """
    Count of numbers an explanation shows: a value and two probabilities per
    conditional, plus the LeafMeans value.
    """
    count = 3 * len(explanation.factor_svs)
    if explanation.leafmeans_sv is not None:
        count += 1
    return count


########## Reweighting ############


def _rows(data):
    return data.rows if hasattr(data, 'rows') else np.asarray(data, dtype=float)


def _membership(rows, conditional):
    in_parent = np.ones(rows.shape[0], dtype=bool)
    for step in conditional.path:
        in_parent &= (rows[:, step.feature_index] <= step.threshold) == step.branch
    feature, threshold = conditional.test
    return in_parent, in_parent & (rows[:, feature] <= threshold)


def reweight(rows, spec):
    """
    Per-row weights lambda for the source rows of ``spec``'s direction: rows
    reaching the conditional's node and passing its test get
    target / source, rows reaching it and failing the test get
    (1 - target) / (1 - source), all other rows 1.
    """
    if spec.direction not in DIRECTIONS:
        raise ValueError('direction must be one of {0}'.format(DIRECTIONS))
    rows = _rows(rows)
    source, target = (spec.p_prob, spec.q_prob) if spec.direction == 'forward' else (spec.q_prob, spec.p_prob)
    weights = np.ones(rows.shape[0])
    if source == target:
        return weights
    if source <= 0.0 or source >= 1.0:
        raise DegenerateReweightError(spec.conditional.human_label)
    in_parent, in_test = _membership(rows, spec.conditional)
    weights[in_test] = target / source
    weights[in_parent & ~in_test] = (1.0 - target) / (1.0 - source)
    return weights


def reweighted_mean(predictions, weight_vectors):
    """
    Mean of f(x) times the product of the given weight vectors over the
    source rows.
    """
    predictions = np.asarray(predictions, dtype=float)
    product = np.ones_like(predictions)
    for weights in weight_vectors:
        product = product * weights
    return float(np.mean(predictions * product))


def _direction_inputs(explanation, predictP, predictQ, dataP, dataQ, direction):
    if direction not in DIRECTIONS:
        raise ValueError('direction must be one of {0}'.format(DIRECTIONS))
    if direction == 'forward':
        return np.asarray(predictP, dtype=float), _rows(dataP)
    return np.asarray(predictQ, dtype=float), _rows(dataQ)


def factor_weights(explanation, rows, direction):
    """
    Reweighting vector of every conditional of an explanation, as a dict from
    conditional index to weights; degenerate conditionals are left out and
    reported in the returned flag list.
    """
    table = explanation.table
    weights, flags = {}, []
    for i, conditional in enumerate(table.conditionals):
        spec = ReweightSpec(conditional, table.p_probs[i], table.q_probs[i], direction)
        try:
            weights[i] = reweight(rows, spec)
        except DegenerateReweightError as e:
            flags.append('{0} dropped: {1}'.format(conditional.human_label, e))
    for flag in flags:
        logger.warning(flag)
    return weights, flags


def r_faithfulness(explanation, predictP, predictQ, dataP, dataQ, direction='forward'):
    """
    Pearson correlation between each conditional's Shapley value and the
    mean prediction after reweighting that conditional alone. The backward
    correlation is negated so that a faithful explanation scores near 1 in
    both directions.
    """
    predictions, rows = _direction_inputs(explanation, predictP, predictQ, dataP, dataQ, direction)
    weights, flags = factor_weights(explanation, rows, direction)
    indices = sorted(weights)
    if len(indices) < 2:
        return MetricResult(None, flags + ['fewer than 2 usable conditionals'])
    svs = _svs(explanation)[indices]
    means = np.array([reweighted_mean(predictions, [weights[i]]) for i in indices])
    if np.ptp(svs) == 0 or np.ptp(means) == 0:
        return MetricResult(None, flags + ['zero variance in Shapley values or reweighted means'])
    r = stats.pearsonr(svs, means)[0]
    if direction == 'backward':
        r = -r
    return MetricResult(float(r), flags)


def activation_order(svs, shift):
    """
    Conditional indices sorted by Shapley value in the direction of the shift
    (descending for a positive shift), ties by index.
    """
    sign = 1.0 if shift >= 0 else -1.0
    return sorted(range(len(svs)), key=lambda i: (-sign * svs[i], i))


def _curve_area(order, predictions, weights, start, end):
    points = []
    for k in range(1, len(order) + 1):
        members = sorted(order[:k])
        points.append((reweighted_mean(predictions, [weights[i] for i in members]) - start) / (end - start))
    return float(np.mean(points))


def auc_faithfulness(explanation, predictP, predictQ, dataP, dataQ, direction='forward', epsilon=1e-12):
    """
    Areas under the activation curve (conditionals reweighted in order of
    decreasing Shapley value along the shift) and the inverse activation
    curve (reverse order). Each curve point is the reweighted mean of the
    prefix set, normalised so the source mean is 0 and the target mean 1; the
    area is the mean over points. Both curves end at the same point.
    """
    predictions, rows = _direction_inputs(explanation, predictP, predictQ, dataP, dataQ, direction)
    mu_p, mu_q = float(np.mean(predictP)), float(np.mean(predictQ))
    if abs(mu_q - mu_p) < epsilon:
        return AUCResult(None, None, ['shift below {0!r}'.format(epsilon)])
    weights, flags = factor_weights(explanation, rows, direction)
    svs = _svs(explanation)
    usable = sorted(weights)
    if not usable:
        return AUCResult(None, None, flags + ['no usable conditionals'])
    order = [usable[i] for i in activation_order(svs[usable], mu_q - mu_p)]
    start, end = (mu_p, mu_q) if direction == 'forward' else (mu_q, mu_p)
    auac = _curve_area(order, predictions, weights, start, end)
    auiac = _curve_area(order[::-1], predictions, weights, start, end)
    return AUCResult(auac, auiac, flags)


def mann_whitney_u(sample_a, sample_b, alternative='greater'):
    """
    One-sided Mann-Whitney U test that A tends to exceed B; normal
    approximation with tie and continuity corrections. Returns the p-value.
    """
    sample_a = np.asarray(sample_a, dtype=float)
    sample_b = np.asarray(sample_b, dtype=float)
    if len(sample_a) == 0 or len(sample_b) == 0:
        raise ValueError('both samples must be nonempty')
    # a single shared value leaves the statistic with zero variance
    if np.ptp(np.concatenate([sample_a, sample_b])) == 0:
        return 0.5
    result = stats.mannwhitneyu(sample_a, sample_b, alternative=alternative, method='asymptotic',
                                use_continuity=True)
    return float(result.pvalue)


########## Evaluation rows ############


METRICS = ('percent-unexplained', 'entropy', 'r-faith', 'auc-faith')


def evaluate_explanation(explanation, predictP, predictQ, dataP, dataQ, metrics=METRICS):
    """
    One evaluation row: the requested metrics of an explanation, faithfulness
    metrics in both directions. Undefined metrics are None; flags collects
    the reasons.
    """
    row = {'shift': explanation.shift, 'numerical_complexity': numerical_complexity(explanation)}
    flags = []
    if 'percent-unexplained' in metrics:
        row['percent_unexplained'] = explanation.percent_unexplained
    if 'entropy' in metrics and len(explanation.factor_svs):
        entropy = sv_entropy(explanation)
        row['entropy'] = entropy.value
        row['max_entropy'] = math.log(len(explanation.factor_svs))
        flags.extend(entropy.flags)
    for direction in DIRECTIONS:
        if 'r-faith' in metrics:
            result = r_faithfulness(explanation, predictP, predictQ, dataP, dataQ, direction)
            row['r_faithfulness_' + direction] = result.value
            flags.extend('{0}: {1}'.format(direction, flag) for flag in result.flags)
        if 'auc-faith' in metrics:
            result = auc_faithfulness(explanation, predictP, predictQ, dataP, dataQ, direction)
            row['auac_' + direction] = result.auac
            row['auiac_' + direction] = result.auiac
            flags.extend('{0}: {1}'.format(direction, flag) for flag in result.flags)
    row['flags'] = sorted(set(flags))
    return row
