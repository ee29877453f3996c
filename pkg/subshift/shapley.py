"""
Shapley attribution of a mean-prediction shift over subgroup conditionals.

The players of the game are the split-node conditionals of a
:class:`~subshift.conditionals.ConditionalTable` (preorder), optionally
followed by one extra player, LeafMeans, that swaps every leafwise mean
prediction from its P value to its Q value. A coalition S takes the
conditionals in S from Q and the others from P; its value is the
interventional mean

    mu(S) = sum_l Z_S(l) * v_l

where Z_S(l) multiplies the conditionals on the path to leaf l and v_l is the
Q-side mean of leaf l when LeafMeans is in S and the P-side mean otherwise.
A positive Shapley value means the factor pushed the mean upward from P to Q.
"""
import collections
import itertools
import logging
import math

import numpy as np
from joblib import Parallel, delayed
from scipy.special import comb

from subshift.conditionals import LeafStats
from subshift.context import default_context
from subshift.errors import FactorLimitError, RenormalisationError, SingularSystemError
from subshift.validators import raise_if_invalid, shapley_config_validators

logger = logging.getLogger(__name__)

#: member of a coalition standing for the LeafMeans player
LEAFMEANS = 'LeafMeans'

ORACLE_LIMIT = 12

# coalitions evaluated per parallel task
CHUNK_SIZE = 1 << 14


class ShapleyConfig(object):
    """
    Parameters:

        ``exact_limit``
            largest player count (LeafMeans included) the exact engine accepts

        ``kernel_budget``
            coalition samples for :func:`kernel_shap`; None means 2n + 2048

        ``epsilon``
            shifts smaller than this leave PercentUnexplained undefined

        ``paired``
            kernel sampling adds the complement of every sampled coalition
    """
    def __init__(self, exact_limit=20, kernel_budget=None, epsilon=1e-12, paired=True):
        self.exact_limit = exact_limit
        self.kernel_budget = kernel_budget
        self.epsilon = epsilon
        self.paired = paired
        raise_if_invalid('shapley', self, shapley_config_validators())

    def __repr__(self):
        return 'ShapleyConfig({0})'.format(', '.join('{0}={1!r}'.format(k, v) for k, v in sorted(vars(self).items())))

    def budget(self, n_players):
        return self.kernel_budget if self.kernel_budget is not None else 2 * n_players + 2048


class FactorSet(collections.namedtuple('FactorSet', ['conditionals', 'include_leafmeans'])):
    """
    The players of one analysis: the conditional factors of a table, plus
    LeafMeans when ``include_leafmeans``.
    """

    @property
    def n_players(self):
        return len(self.conditionals) + (1 if self.include_leafmeans else 0)

    @property
    def labels(self):
        labels = [c.human_label for c in self.conditionals]
        if self.include_leafmeans:
            labels.append(LEAFMEANS)
        return labels


class Explanation(object):
    """
    Result of a Shapley analysis.

    ``factor_svs`` follows the table's preorder; ``leafmeans_sv`` is None when
    LeafMeans was not a player. ``mu_p`` / ``mu_q`` are the interventional
    means of the empty and the full coalition, so the values add up to
    ``mu_q - mu_p`` exactly. Empirical means of the raw predictions, when
    known, live in ``metadata``.
    """
    def __init__(self, table, factor_svs, mu_p, mu_q, leafmeans_sv=None, method='exact', seed=None,
                 metadata=None, flags=None, epsilon=1e-12):
        self.table = table
        self.factor_svs = np.asarray(factor_svs, dtype=float)
        self.leafmeans_sv = None if leafmeans_sv is None else float(leafmeans_sv)
        self.mu_p = float(mu_p)
        self.mu_q = float(mu_q)
        self.method = method
        self.seed = seed
        self.metadata = dict(metadata or {})
        self.flags = list(flags or [])
        self.percent_unexplained = None
        if self.leafmeans_sv is not None:
            self.percent_unexplained = percent_unexplained(self.leafmeans_sv, self.shift, epsilon)
            if self.percent_unexplained is None:
                self.flags.append('percent_unexplained undefined: shift below {0!r}'.format(epsilon))

    def __repr__(self):
        return 'Explanation(method={0!r}, n_factors={1}, shift={2:.6g})'.format(
            self.method, len(self.factor_svs), self.shift)

    @property
    def shift(self):
        return self.mu_q - self.mu_p

    @property
    def conditionals(self):
        return self.table.conditionals

    @property
    def labels(self):
        return self.table.labels

    @property
    def total(self):
        total = float(np.sum(self.factor_svs))
        if self.leafmeans_sv is not None:
            total += self.leafmeans_sv
        return total

    def ranking(self):
        """
        Conditional indices by decreasing |SV|, ties by index.
        """
        return sorted(range(len(self.factor_svs)), key=lambda i: (-abs(self.factor_svs[i]), i))


########## Coalition evaluation ############


def _leaf_value_pair(values):
    """
    (P-side, Q-side) leaf values from a LeafStats or a single vector; a single
    vector means the tree explains itself and LeafMeans has no effect.
    """
    if isinstance(values, LeafStats):
        return values.p_mean, values.q_mean
    values = np.asarray(values, dtype=float)
    return values, values


def leaf_prob_matrix(table, masks):
    """
    Z_S(l) for a batch of coalitions: ``masks`` is a boolean (k, n_conditionals)
    matrix, the result a (k, n_leaves) matrix. Every row is built with the
    same sequence of operations, so two coalitions that differ only in a
    factor with equal P and Q conditionals give bitwise equal rows.
    """
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 1:
        masks = masks[None, :]
    true_probs = np.where(masks, table.q_probs, table.p_probs)
    false_probs = 1.0 - true_probs
    Z = np.ones((masks.shape[0], len(table.leaf_paths)))
    for position, path in enumerate(table.leaf_paths):
        for c, branch in path:
            Z[:, position] *= true_probs[:, c] if branch else false_probs[:, c]
    return Z


def coalition_values(table, values, masks, include_leafmeans):
    """
    Interventional means of a batch of coalitions. With ``include_leafmeans``
    the last column of ``masks`` is the LeafMeans player.
    """
    masks = np.asarray(masks, dtype=bool)
    n = len(table)
    p_values, q_values = _leaf_value_pair(values)
    Z = leaf_prob_matrix(table, masks[:, :n])
    swapped = masks[:, n] if include_leafmeans else np.zeros(masks.shape[0], dtype=bool)
    out = np.zeros(masks.shape[0])
    for position in range(Z.shape[1]):
        out += Z[:, position] * np.where(swapped, q_values[position], p_values[position])
    return out


def _mask_bits(codes, n_players):
    return ((np.asarray(codes)[:, None] >> np.arange(n_players)) & 1).astype(bool)


def _check_index(table, S):
    for c in S:
        if c != LEAFMEANS and not 0 <= c < len(table):
            raise IndexError('no conditional {0!r} in a table of {1}'.format(c, len(table)))


def interventional_leaf_prob(table, S, leaf):
    """
    Z_S(l): product over the ancestors of ``leaf`` (a leaf id) of the Q
    conditional when the ancestor's index is in S and the P conditional
    otherwise, complemented on false branches.
    """
    S = set(S)
    _check_index(table, S)
    position = table.tree.leaf_ids.index(leaf)
    prob = 1.0
    for c, branch in table.leaf_paths[position]:
        value = table.q_probs[c] if c in S else table.p_probs[c]
        prob *= value if branch else 1.0 - value
    return prob


def interventional_mean(table, values, S):
    """
    mu(S) for one coalition S of conditional indices, possibly containing
    :data:`LEAFMEANS`. ``values`` is a LeafStats or, for a tree explaining
    itself, the vector of its leaf values.
    """
    S = set(S)
    _check_index(table, S)
    p_values, q_values = _leaf_value_pair(values)
    leaf_values = q_values if LEAFMEANS in S else p_values
    return sum(interventional_leaf_prob(table, S, leaf_id) * leaf_values[position]
               for position, leaf_id in enumerate(table.tree.leaf_ids))


def shapley_weights(n_players):
    """
    w(s) = s! (n - s - 1)! / n! for s = 0 .. n-1.
    """
    sizes = np.arange(n_players)
    return 1.0 / (n_players * comb(n_players - 1, sizes))


def _all_coalition_values(table, values, n_players, include_leafmeans, ctx):
    n_masks = 1 << n_players
    starts = range(0, n_masks, CHUNK_SIZE)

    def evaluate(start):
        codes = np.arange(start, min(start + CHUNK_SIZE, n_masks), dtype=np.int64)
        return coalition_values(table, values, _mask_bits(codes, n_players), include_leafmeans)

    if n_masks <= CHUNK_SIZE or ctx.n_jobs == 1:
        chunks = [evaluate(start) for start in starts]
    else:
        chunks = Parallel(n_jobs=ctx.n_jobs, prefer='threads')(delayed(evaluate)(start) for start in starts)
    return np.concatenate(chunks)


def _base_metadata(table, values):
    metadata = {'n_conditionals': len(table), 'n_leaves': table.tree.n_leaves}
    if isinstance(values, LeafStats):
        metadata['empirical_mu_p'] = float(np.sum(values.p_prob * values.p_mean))
        metadata['empirical_mu_q'] = float(np.sum(values.q_prob * values.q_mean))
    return metadata


def _fill_flags(values):
    return values.flags() if isinstance(values, LeafStats) else []


def exact_shapley(table, values, include_leafmeans=False, config=None, ctx=None):
    """
    Exact Shapley values by evaluating all 2^n coalitions.

        Parameters:

            ``table``
                :class:`~subshift.conditionals.ConditionalTable`

            ``values``
                :class:`~subshift.conditionals.LeafStats`, or the tree's own
                leaf values for a self-explanation

            ``include_leafmeans``
                add the LeafMeans player

    Coalition values are computed in chunks, possibly in parallel; the
    reduction order does not depend on the worker count.
    """
    config = config or ShapleyConfig()
    ctx = default_context(ctx)
    factors = FactorSet(table.conditionals, include_leafmeans)
    n = factors.n_players
    if n > config.exact_limit:
        raise FactorLimitError(n, config.exact_limit)

    with ctx.timer('exact_shapley'):
        v = _all_coalition_values(table, values, n, include_leafmeans, ctx)
        codes = np.arange(1 << n, dtype=np.int64)
        sizes = np.zeros(1 << n, dtype=int)
        for i in range(n):
            sizes += (codes >> i) & 1
        weights = shapley_weights(n) if n else np.array([])
        svs = np.zeros(n)
        for i in range(n):
            without = codes[((codes >> i) & 1) == 0]
            svs[i] = np.sum(weights[sizes[without]] * (v[without | (1 << i)] - v[without]))

    metadata = _base_metadata(table, values)
    metadata.update({'mu_empty': float(v[0]), 'mu_full': float(v[-1]), 'n_players': n})
    logger.debug('exact shapley over %d players', n)
    return Explanation(table, svs[:len(table)], v[0], v[-1],
                       leafmeans_sv=svs[-1] if include_leafmeans else None,
                       method='exact', metadata=metadata, flags=_fill_flags(values), epsilon=config.epsilon)


def percent_unexplained(explanation, shift=None, epsilon=1e-12):
    """
    100 |phi_LeafMeans| / |mu_Q - mu_P|, or None when the shift is below
    ``epsilon``. Accepts an :class:`Explanation`, or the LeafMeans value and
    the shift directly.
    """
    if isinstance(explanation, Explanation):
        if explanation.leafmeans_sv is None:
            raise ValueError('explanation has no leafmeans_sv; run it with include_leafmeans')
        leafmeans_sv, shift = explanation.leafmeans_sv, explanation.shift
    else:
        leafmeans_sv = explanation
        if shift is None:
            raise ValueError('shift is required with a bare leafmeans value')
    if abs(shift) < epsilon:
        return None
    return 100.0 * abs(leafmeans_sv) / abs(shift)


########## Kernel SHAP ############


class _CoalitionSampler(object):
    """
    Coalitions and Shapley-kernel weights for the regression, collected the
    way the KernelExplainer does it: whole subset sizes (with their
    complements) are enumerated while the budget allows, the rest of the
    budget is sampled by size, and repeated samples accumulate weight.
    """
    def __init__(self, n_players, budget, rng, paired=True):
        self.n = n_players
        self.budget = budget
        self.rng = rng
        self.paired = paired
        self.masks = []
        self.weights = []
        self._index = {}

    def add(self, mask, weight):
        key = mask.tobytes()
        if key in self._index:
            self.weights[self._index[key]] += weight
        else:
            self._index[key] = len(self.masks)
            self.masks.append(mask)
            self.weights.append(weight)

    def enumerate_all(self):
        for code in range(1, (1 << self.n) - 1):
            mask = _mask_bits([code], self.n)[0]
            size = int(mask.sum())
            self.add(mask, (self.n - 1) / (comb(self.n, size) * size * (self.n - size)))
        return self.finish()

    def sample(self):
        n = self.n
        n_sizes = int(np.ceil((n - 1) / 2.0))
        n_paired_sizes = int(np.floor((n - 1) / 2.0))
        size_weights = np.array([(n - 1.0) / (s * (n - s)) for s in range(1, n_sizes + 1)])
        size_weights[:n_paired_sizes] *= 2
        size_weights /= size_weights.sum()

        remaining = self.budget
        n_full_sizes = 0
        left_weights = size_weights.copy()
        for s in range(1, n_sizes + 1):
            n_subsets = comb(n, s, exact=True)
            if s <= n_paired_sizes:
                n_subsets *= 2
            share = left_weights[s - 1] / left_weights[s - 1:].sum()
            if remaining * share < n_subsets - 1e-8:
                break
            n_full_sizes += 1
            remaining -= n_subsets
            weight = size_weights[s - 1] / comb(n, s)
            if s <= n_paired_sizes:
                weight /= 2.0
            for members in itertools.combinations(range(n), s):
                mask = np.zeros(n, dtype=bool)
                mask[list(members)] = True
                self.add(mask, weight)
                if s <= n_paired_sizes:
                    self.add(~mask, weight)

        n_fixed = len(self.masks)
        if n_full_sizes < n_sizes and remaining > 0:
            left = size_weights[n_full_sizes:] / size_weights[n_full_sizes:].sum()
            left_mass = size_weights[n_full_sizes:].sum()
            draws = 0
            while draws < remaining:
                s = n_full_sizes + 1 + self.rng.choice(len(left), p=left)
                mask = np.zeros(n, dtype=bool)
                mask[self.rng.permutation(n)[:s]] = True
                if not self.paired and self.rng.random() < 0.5:
                    mask = ~mask
                self.add(mask, 1.0)
                draws += 1
                if self.paired and draws < remaining:
                    self.add(~mask, 1.0)
                    draws += 1
            sampled = np.asarray(self.weights[n_fixed:])
            if len(sampled):
                scaled = sampled * left_mass / sampled.sum()
                self.weights[n_fixed:] = list(scaled)
        return self.finish()

    def finish(self):
        return np.array(self.masks, dtype=bool).reshape(-1, self.n), np.asarray(self.weights, dtype=float)


def _solve_constrained(masks, weights, y, total):
    """
    Weighted least squares for phi with sum(phi) fixed to ``total``; the
    constraint eliminates the last player.
    """
    Z = masks.astype(float)
    target = y - Z[:, -1] * total
    X = Z[:, :-1] - Z[:, -1:]
    XtW = X.T * weights
    lhs = XtW.dot(X)
    rhs = XtW.dot(target)
    if np.linalg.matrix_rank(lhs) < lhs.shape[0]:
        raise SingularSystemError('kernel regression is singular; increase the sample budget')
    try:
        phi = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError('kernel regression is singular; increase the sample budget')
    return np.append(phi, total - phi.sum())


def kernel_shap(table, values, include_leafmeans=False, budget=None, seed=0, config=None, ctx=None):
    """
    Kernel SHAP estimate of the Shapley values: a weighted regression over
    sampled coalitions with Shapley kernel weights, constrained so that the
    values add up to mu(full) - mu(empty). LeafMeans is an ordinary player.
    A budget of at least 2^n - 2 enumerates every coalition and reproduces
    the exact values.
    """
    config = config or ShapleyConfig()
    ctx = default_context(ctx)
    factors = FactorSet(table.conditionals, include_leafmeans)
    n = factors.n_players
    if n < 2:
        raise ValueError('kernel_shap needs at least 2 players, got {0}'.format(n))
    budget = budget if budget is not None else config.budget(n)

    with ctx.timer('kernel_shap'):
        ends = np.array([np.zeros(n, dtype=bool), np.ones(n, dtype=bool)])
        mu_empty, mu_full = coalition_values(table, values, ends, include_leafmeans)
        sampler = _CoalitionSampler(n, budget, np.random.default_rng(seed), paired=config.paired)
        if n < 63 and budget >= (1 << n) - 2:
            masks, weights = sampler.enumerate_all()
        else:
            masks, weights = sampler.sample()
        y = coalition_values(table, values, masks, include_leafmeans) - mu_empty
        svs = _solve_constrained(masks, weights, y, mu_full - mu_empty)

    metadata = _base_metadata(table, values)
    metadata.update({'mu_empty': float(mu_empty), 'mu_full': float(mu_full), 'n_players': n,
                     'budget': int(budget), 'n_coalitions': int(len(masks))})
    logger.debug('kernel shap over %d players with %d coalitions', n, len(masks))
    return Explanation(table, svs[:len(table)], mu_empty, mu_full,
                       leafmeans_sv=svs[-1] if include_leafmeans else None,
                       method='kernel_shap', seed=seed, metadata=metadata, flags=_fill_flags(values),
                       epsilon=config.epsilon)


########## Reference implementation ############


def brute_force_oracle(table, values, include_leafmeans=False):
    """
    Shapley values by the textbook double loop over players and coalitions,
    with scalar interventional means. Independent of :func:`exact_shapley`'s
    vectorised evaluation; used to check it.
    """
    players = list(range(len(table))) + ([LEAFMEANS] if include_leafmeans else [])
    n = len(players)
    if n > ORACLE_LIMIT:
        raise FactorLimitError(n, ORACLE_LIMIT)

    svs = []
    for player in players:
        others = [p for p in players if p != player]
        total = 0.0
        for size in range(len(others) + 1):
            weight = math.factorial(size) * math.factorial(n - size - 1) / float(math.factorial(n))
            for coalition in itertools.combinations(others, size):
                with_player = interventional_mean(table, values, coalition + (player,))
                without = interventional_mean(table, values, coalition)
                total += weight * (with_player - without)
        svs.append(total)

    mu_p = interventional_mean(table, values, [])
    mu_q = interventional_mean(table, values, players)
    return Explanation(table, svs[:len(table)], mu_p, mu_q,
                       leafmeans_sv=svs[-1] if include_leafmeans else None, method='oracle')


########## Joint leaf-probability diagnostic ############


def _renormalised_probs(p, q, swapped, epsilon):
    probs = np.where(swapped, q, p)
    if swapped.all():
        return probs
    kept_mass = p[~swapped].sum()
    target_mass = 1.0 - q[swapped].sum()
    if kept_mass <= epsilon:
        if target_mass > epsilon:
            raise RenormalisationError(
                'leaves {0} keep zero mass but must carry {1!r}'.format(list(np.flatnonzero(~swapped)), target_mass))
        return probs
    probs[~swapped] = p[~swapped] * (target_mass / kept_mass)
    return probs


def joint_sv_diagnostic(leaf_probs_p, leaf_probs_q, leaf_values, renorm='uniform', epsilon=1e-12, exact_limit=20):
    """
    Shapley values of leaf probabilities treated as joint factors. A
    coalition sets its leaves to their Q probability and rescales every other
    leaf by one factor so the total stays 1; the values add up to
    mu_Q - mu_P. Unlike the conditional factors, a leaf whose probability
    does not change can receive a nonzero value here.
    """
    if renorm != 'uniform':
        raise ValueError('only uniform renormalisation is supported')
    p = np.asarray(leaf_probs_p, dtype=float)
    q = np.asarray(leaf_probs_q, dtype=float)
    values = np.asarray(leaf_values, dtype=float)
    if not (p.shape == q.shape == values.shape):
        raise ValueError('leaf probabilities and values must have the same length')
    for name, probs in (('P', p), ('Q', q)):
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError('{0} leaf probabilities sum to {1!r}, not 1'.format(name, probs.sum()))
    n = len(p)
    if n > exact_limit:
        raise FactorLimitError(n, exact_limit)

    codes = np.arange(1 << n, dtype=np.int64)
    masks = _mask_bits(codes, n)
    v = np.array([np.sum(_renormalised_probs(p, q, mask, epsilon) * values) for mask in masks])
    sizes = masks.sum(axis=1)
    weights = shapley_weights(n)
    svs = np.zeros(n)
    for i in range(n):
        without = codes[((codes >> i) & 1) == 0]
        svs[i] = np.sum(weights[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return svs
