import math
import unittest

import numpy as np

from subshift import shapley
from subshift.conditionals import ConditionalTable, LeafStats
from subshift.context import ExplainContext
from subshift.errors import FactorLimitError, RenormalisationError, SingularSystemError
from subshift.shapley import LEAFMEANS, ShapleyConfig
from subshift.tests.fixtures import (EXAMPLE_VALUES, example_table, example_tree, random_stats, random_table,
                                     random_tree)
from subshift.validators import ValidationError


def serial():
    return ExplainContext(n_jobs=1, environ={})


class InterventionalMeanTest(unittest.TestCase):

    def test_leaf_prob(self):
        table = example_table()
        self.assertAlmostEqual(shapley.interventional_leaf_prob(table, {1}, 3), 0.40, places=12)
        self.assertAlmostEqual(shapley.interventional_leaf_prob(table, set(), 3), 0.10, places=12)

    def test_mean(self):
        table = example_table()
        self.assertAlmostEqual(shapley.interventional_mean(table, EXAMPLE_VALUES, {0}), 0.37, places=12)
        self.assertAlmostEqual(shapley.interventional_mean(table, EXAMPLE_VALUES, []), 0.55, places=12)
        self.assertAlmostEqual(shapley.interventional_mean(table, EXAMPLE_VALUES, [0, 1]), 0.58, places=12)

    def test_leaf_means_player(self):
        table = example_table()
        stats = LeafStats(table.tree.leaf_ids, [0.5, 0.1, 0.4], [0.3, 0.56, 0.14], [1.0, 0.5, 0.0], [0.0, 0.5, 1.0])
        self.assertAlmostEqual(shapley.interventional_mean(table, stats, [LEAFMEANS]), 0.45, places=12)

    def test_unknown_index(self):
        with self.assertRaises(IndexError):
            shapley.interventional_mean(example_table(), EXAMPLE_VALUES, {2})

    def test_matrix_matches_scalar(self):
        table = random_table(3, 6)
        masks = shapley._mask_bits(np.arange(64), 6)
        Z = shapley.leaf_prob_matrix(table, masks)
        for code in (0, 5, 42, 63):
            S = [i for i in range(6) if masks[code, i]]
            expected = [shapley.interventional_leaf_prob(table, S, leaf_id) for leaf_id in table.tree.leaf_ids]
            np.testing.assert_allclose(Z[code], expected, rtol=0, atol=1e-14)
        np.testing.assert_allclose(Z.sum(axis=1), np.ones(64), atol=1e-12)


class ShapleyWeightsTest(unittest.TestCase):

    def test_weights(self):
        np.testing.assert_allclose(shapley.shapley_weights(3), [1.0 / 3, 1.0 / 6, 1.0 / 3])

    def test_weights_sum_over_coalitions(self):
        n = 7
        weights = shapley.shapley_weights(n)
        total = sum(math.factorial(n - 1) / (math.factorial(s) * math.factorial(n - 1 - s)) * weights[s]
                    for s in range(n))
        self.assertAlmostEqual(total, 1.0, places=12)


class ExactShapleyTest(unittest.TestCase):

    def test_example(self):
        explanation = shapley.exact_shapley(example_table(), EXAMPLE_VALUES, ctx=serial())
        np.testing.assert_allclose(explanation.factor_svs, [-0.15, 0.18], atol=1e-12)
        self.assertAlmostEqual(explanation.mu_p, 0.55, places=12)
        self.assertAlmostEqual(explanation.mu_q, 0.58, places=12)
        self.assertAlmostEqual(explanation.total, 0.03, places=12)
        self.assertIsNone(explanation.leafmeans_sv)
        self.assertIsNone(explanation.percent_unexplained)
        self.assertEqual(explanation.ranking(), [1, 0])

    def test_matches_oracle(self):
        for seed in range(4):
            table = random_table(seed, 5)
            stats = random_stats(seed, table)
            exact = shapley.exact_shapley(table, stats, include_leafmeans=True, ctx=serial())
            oracle = shapley.brute_force_oracle(table, stats, include_leafmeans=True)
            np.testing.assert_allclose(exact.factor_svs, oracle.factor_svs, atol=1e-12)
            self.assertAlmostEqual(exact.leafmeans_sv, oracle.leafmeans_sv, places=12)

    def test_efficiency(self):
        table = random_table(11, 9)
        stats = random_stats(11, table)
        explanation = shapley.exact_shapley(table, stats, include_leafmeans=True, ctx=serial())
        self.assertAlmostEqual(explanation.total, explanation.mu_q - explanation.mu_p, places=12)
        self.assertAlmostEqual(explanation.mu_p, float(np.sum(table.leaf_probs('p') * stats.p_mean)), places=12)
        self.assertAlmostEqual(explanation.mu_q, float(np.sum(table.leaf_probs('q') * stats.q_mean)), places=12)

    def test_null_player(self):
        table = random_table(5, 6)
        q_probs = table.q_probs.copy()
        q_probs[2] = table.p_probs[2]
        table = table.with_probabilities(q_probs=q_probs)
        explanation = shapley.exact_shapley(table, table.tree.leaf_values(), ctx=serial())
        self.assertEqual(explanation.factor_svs[2], 0.0)

    def test_unchanged_leaf_means(self):
        table = random_table(6, 4)
        means = np.linspace(0.0, 1.0, table.tree.n_leaves)
        stats = LeafStats(table.tree.leaf_ids, table.leaf_probs('p'), table.leaf_probs('q'), means, means)
        explanation = shapley.exact_shapley(table, stats, include_leafmeans=True, ctx=serial())
        self.assertEqual(explanation.leafmeans_sv, 0.0)
        self.assertEqual(explanation.percent_unexplained, 0.0)

    def test_parallel_matches_serial(self):
        table = random_table(8, 15)
        values = table.tree.leaf_values()
        one = shapley.exact_shapley(table, values, ctx=serial())
        many = shapley.exact_shapley(table, values, ctx=ExplainContext(n_jobs=4, environ={}))
        self.assertEqual(list(one.factor_svs), list(many.factor_svs))

    def test_factor_limit(self):
        table = random_table(1, 4)
        with self.assertRaises(FactorLimitError) as cm:
            shapley.exact_shapley(table, random_stats(1, table), include_leafmeans=True,
                                  config=ShapleyConfig(exact_limit=4))
        self.assertEqual((cm.exception.n_factors, cm.exception.limit), (5, 4))

    def test_no_conditionals(self):
        table = ConditionalTable.from_probabilities(random_tree(np.random.default_rng(0), 0), [], [])
        stats = LeafStats([0], [1.0], [1.0], [0.25], [0.75])
        explanation = shapley.exact_shapley(table, stats, include_leafmeans=True, ctx=serial())
        self.assertEqual(len(explanation.factor_svs), 0)
        self.assertAlmostEqual(explanation.leafmeans_sv, 0.5)
        self.assertAlmostEqual(explanation.percent_unexplained, 100.0)

    def test_metadata(self):
        table = random_table(2, 3)
        explanation = shapley.exact_shapley(table, random_stats(2, table), include_leafmeans=True, ctx=serial())
        self.assertEqual(explanation.metadata['n_players'], 4)
        self.assertIn('empirical_mu_p', explanation.metadata)


class PercentUnexplainedTest(unittest.TestCase):

    def test_worked_value(self):
        self.assertAlmostEqual(shapley.percent_unexplained(0.096, 0.341), 28.3, delta=0.05)
        self.assertAlmostEqual(shapley.percent_unexplained(-0.096, -0.341), 28.3, delta=0.05)

    def test_zero_shift(self):
        self.assertIsNone(shapley.percent_unexplained(0.01, 0.0))
        self.assertIsNone(shapley.percent_unexplained(0.01, 1e-13))

    def test_needs_leafmeans(self):
        explanation = shapley.exact_shapley(example_table(), EXAMPLE_VALUES, ctx=serial())
        with self.assertRaises(ValueError):
            shapley.percent_unexplained(explanation)

    def test_undefined_is_flagged(self):
        table = example_table()
        stats = LeafStats(table.tree.leaf_ids, [0.5, 0.1, 0.4], [0.5, 0.1, 0.4], [1.0, 0.5, 0.0], [1.0, 0.5, 0.0])
        explanation = shapley.exact_shapley(table.with_probabilities(q_probs=table.p_probs), stats,
                                            include_leafmeans=True, ctx=serial())
        self.assertIsNone(explanation.percent_unexplained)
        self.assertTrue(any('percent_unexplained undefined' in flag for flag in explanation.flags))


class ShapleyConfigTest(unittest.TestCase):

    def test_defaults(self):
        config = ShapleyConfig()
        self.assertEqual(config.exact_limit, 20)
        self.assertEqual(config.budget(10), 2068)
        self.assertEqual(ShapleyConfig(kernel_budget=64).budget(10), 64)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            ShapleyConfig(exact_limit=0)
        with self.assertRaises(ValidationError):
            ShapleyConfig(epsilon=0.0)


class KernelShapTest(unittest.TestCase):

    def test_full_budget_is_exact(self):
        table = random_table(4, 6)
        stats = random_stats(4, table)
        exact = shapley.exact_shapley(table, stats, include_leafmeans=True, ctx=serial())
        kernel = shapley.kernel_shap(table, stats, include_leafmeans=True, budget=2 ** 7 - 2, ctx=serial())
        np.testing.assert_allclose(kernel.factor_svs, exact.factor_svs, atol=1e-10)
        self.assertAlmostEqual(kernel.leafmeans_sv, exact.leafmeans_sv, places=10)
        self.assertEqual(kernel.method, 'kernel_shap')

    def test_example(self):
        kernel = shapley.kernel_shap(example_table(), EXAMPLE_VALUES, ctx=serial())
        np.testing.assert_allclose(kernel.factor_svs, [-0.15, 0.18], atol=1e-12)

    def test_sampled(self):
        table = random_table(9, 12)
        values = table.tree.leaf_values()
        exact = shapley.exact_shapley(table, values, ctx=serial())
        kernel = shapley.kernel_shap(table, values, budget=1000, seed=3, ctx=serial())
        again = shapley.kernel_shap(table, values, budget=1000, seed=3, ctx=serial())
        self.assertEqual(list(kernel.factor_svs), list(again.factor_svs))
        self.assertAlmostEqual(kernel.total, exact.total, places=10)
        self.assertGreater(np.corrcoef(kernel.factor_svs, exact.factor_svs)[0, 1], 0.8)
        self.assertLess(kernel.metadata['n_coalitions'], 2 ** 12 - 2)

    def test_unpaired_sampling(self):
        table = random_table(9, 12)
        kernel = shapley.kernel_shap(table, table.tree.leaf_values(), budget=1000, seed=3,
                                     config=ShapleyConfig(paired=False), ctx=serial())
        self.assertAlmostEqual(kernel.total, kernel.mu_q - kernel.mu_p, places=10)

    def test_needs_two_players(self):
        table = random_table(0, 1)
        with self.assertRaises(ValueError):
            shapley.kernel_shap(table, table.tree.leaf_values())

    def test_singular(self):
        masks = np.array([[True, False, False], [True, False, False]])
        with self.assertRaises(SingularSystemError):
            shapley._solve_constrained(masks, np.ones(2), np.array([0.1, 0.1]), 0.3)


class OracleTest(unittest.TestCase):

    def test_example(self):
        oracle = shapley.brute_force_oracle(example_table(), EXAMPLE_VALUES)
        np.testing.assert_allclose(oracle.factor_svs, [-0.15, 0.18], atol=1e-12)

    def test_limit(self):
        table = random_table(0, 13)
        with self.assertRaises(FactorLimitError):
            shapley.brute_force_oracle(table, table.tree.leaf_values())


class JointDiagnosticTest(unittest.TestCase):

    def test_constant_leaf_gets_value(self):
        svs = shapley.joint_sv_diagnostic([0.25, 0.25, 0.25, 0.25], [0.1, 0.4, 0.25, 0.25], [0.0, 1.0, 1.0, 0.0])
        self.assertAlmostEqual(svs[2], 0.1 / 12, places=12)
        self.assertNotEqual(svs[2], 0.0)
        self.assertAlmostEqual(float(np.sum(svs)), 0.15, places=12)

    def test_same_total_as_conditional_factors(self):
        tree = example_tree()
        svs = shapley.joint_sv_diagnostic([0.5, 0.1, 0.4], [0.3, 0.56, 0.14], [1.0, 0.5, 0.0])
        explanation = shapley.exact_shapley(example_table(), tree.leaf_values(), ctx=serial())
        self.assertAlmostEqual(float(np.sum(svs)), explanation.total, places=12)

    def test_renormalisation_failure(self):
        with self.assertRaises(RenormalisationError):
            shapley.joint_sv_diagnostic([1.0, 0.0], [0.5, 0.5], [0.0, 1.0])

    def test_probabilities_must_sum_to_one(self):
        with self.assertRaises(ValueError):
            shapley.joint_sv_diagnostic([0.5, 0.4], [0.5, 0.5], [0.0, 1.0])
