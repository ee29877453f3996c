import math
import unittest

import numpy as np
from mock import Mock

from subshift import metrics
from subshift.context import ExplainContext
from subshift.errors import DegenerateReweightError
from subshift.explainers import explain_tree
from subshift.metrics import ReweightSpec
from subshift.tests.fixtures import example_data, example_table, example_tree


def example_explanation():
    dataP, dataQ = example_data()
    tree = example_tree()
    explanation = explain_tree(tree, dataP, dataQ, ctx=ExplainContext(n_jobs=1, environ={}))
    return explanation, tree.predict(dataP.rows), tree.predict(dataQ.rows), dataP, dataQ


class EntropyTest(unittest.TestCase):

    def test_equal_values(self):
        result = metrics.sv_entropy(np.full(7, 0.3))
        self.assertAlmostEqual(result.value, math.log(7), places=12)
        self.assertEqual(result.flags, [])

    def test_unequal_values(self):
        result = metrics.sv_entropy([2.0, -1.0, 1.0])
        self.assertAlmostEqual(result.value, 1.5 * math.log(2), places=12)

    def test_all_zero(self):
        result = metrics.sv_entropy([0.0, 0.0])
        self.assertEqual(result.value, 0.0)
        self.assertEqual(len(result.flags), 1)

    def test_ignores_leafmeans(self):
        explanation = Mock(factor_svs=np.array([1.0, 1.0]), leafmeans_sv=5.0)
        self.assertAlmostEqual(metrics.sv_entropy(explanation).value, math.log(2), places=12)

    def test_numerical_complexity(self):
        self.assertEqual(metrics.numerical_complexity(Mock(factor_svs=[0.1] * 7, leafmeans_sv=0.2)), 22)
        self.assertEqual(metrics.numerical_complexity(Mock(factor_svs=[0.1] * 7, leafmeans_sv=None)), 21)


class ReweightTest(unittest.TestCase):

    def setUp(self):
        self.conditional = example_table().conditionals[1]
        # in the conditional's node and passing its test, in the node only, outside
        self.rows = np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, 0.0]])

    def test_forward(self):
        weights = metrics.reweight(self.rows, ReweightSpec(self.conditional, 0.5, 0.25, 'forward'))
        np.testing.assert_allclose(weights, [0.5, 1.5, 1.0])

    def test_backward(self):
        weights = metrics.reweight(self.rows, ReweightSpec(self.conditional, 0.5, 0.25, 'backward'))
        np.testing.assert_allclose(weights, [2.0, 0.5 / 0.75, 1.0])

    def test_unchanged(self):
        weights = metrics.reweight(self.rows, ReweightSpec(self.conditional, 0.0, 0.0, 'forward'))
        self.assertEqual(list(weights), [1.0, 1.0, 1.0])

    def test_degenerate(self):
        with self.assertRaises(DegenerateReweightError):
            metrics.reweight(self.rows, ReweightSpec(self.conditional, 0.0, 0.5, 'forward'))
        with self.assertRaises(DegenerateReweightError):
            metrics.reweight(self.rows, ReweightSpec(self.conditional, 0.5, 1.0, 'backward'))

    def test_direction(self):
        with self.assertRaises(ValueError):
            metrics.reweight(self.rows, ReweightSpec(self.conditional, 0.5, 0.25, 'sideways'))

    def test_reweighted_mean(self):
        weights = [np.array([2.0, 0.5]), np.array([0.5, 4.0])]
        self.assertAlmostEqual(metrics.reweighted_mean([1.0, 2.0], weights), 2.5, places=12)

    def test_moves_mean_to_target(self):
        dataP, dataQ = example_data()
        tree = example_tree()
        table = example_table()
        weights = [metrics.reweight(dataP, ReweightSpec(c, table.p_probs[i], table.q_probs[i], 'forward'))
                   for i, c in enumerate(table.conditionals)]
        self.assertAlmostEqual(metrics.reweighted_mean(tree.predict(dataP.rows), weights),
                               float(np.mean(tree.predict(dataQ.rows))), places=12)


class FaithfulnessTest(unittest.TestCase):

    def test_r_faithfulness(self):
        explanation, predictP, predictQ, dataP, dataQ = example_explanation()
        for direction in metrics.DIRECTIONS:
            result = metrics.r_faithfulness(explanation, predictP, predictQ, dataP, dataQ, direction)
            self.assertAlmostEqual(result.value, 1.0, places=9)
            self.assertEqual(result.flags, [])

    def test_r_faithfulness_needs_two_conditionals(self):
        explanation, predictP, predictQ, dataP, dataQ = example_explanation()
        explanation.table = explanation.table.with_probabilities(p_probs=[0.0, 0.2], q_probs=[0.3, 0.8])
        result = metrics.r_faithfulness(explanation, predictP, predictQ, dataP, dataQ)
        self.assertIsNone(result.value)
        self.assertEqual(len(result.flags), 2)

    def test_activation_order(self):
        self.assertEqual(metrics.activation_order([0.1, 0.3, 0.3], 1.0), [1, 2, 0])
        self.assertEqual(metrics.activation_order([0.1, 0.3, 0.3], -1.0), [0, 1, 2])

    def test_auc(self):
        explanation, predictP, predictQ, dataP, dataQ = example_explanation()
        result = metrics.auc_faithfulness(explanation, predictP, predictQ, dataP, dataQ, 'forward')
        self.assertAlmostEqual(result.auac, 3.0, places=9)
        self.assertAlmostEqual(result.auiac, -2.5, places=9)
        self.assertGreater(result.auac, result.auiac)

    def test_auc_backward(self):
        explanation, predictP, predictQ, dataP, dataQ = example_explanation()
        result = metrics.auc_faithfulness(explanation, predictP, predictQ, dataP, dataQ, 'backward')
        # Q rows with one conditional moved back to P: 0.7 and 0.37
        self.assertAlmostEqual(result.auac, 0.5 * ((0.37 - 0.58) / -0.03 + 1.0), places=9)
        self.assertAlmostEqual(result.auiac, 0.5 * ((0.7 - 0.58) / -0.03 + 1.0), places=9)

    def test_auc_without_shift(self):
        explanation, predictP, _, dataP, _ = example_explanation()
        result = metrics.auc_faithfulness(explanation, predictP, predictP, dataP, dataP)
        self.assertIsNone(result.auac)
        self.assertIsNone(result.auiac)
        self.assertEqual(len(result.flags), 1)


class MannWhitneyTest(unittest.TestCase):

    def test_separated(self):
        self.assertLess(metrics.mann_whitney_u(range(10, 20), range(10)), 0.001)
        self.assertGreater(metrics.mann_whitney_u(range(10), range(10, 20)), 0.999)

    def test_all_tied(self):
        self.assertEqual(metrics.mann_whitney_u([1.0, 1.0], [1.0, 1.0, 1.0]), 0.5)

    def test_empty(self):
        with self.assertRaises(ValueError):
            metrics.mann_whitney_u([], [1.0])


class EvaluateExplanationTest(unittest.TestCase):

    def test_row(self):
        explanation, predictP, predictQ, dataP, dataQ = example_explanation()
        row = metrics.evaluate_explanation(explanation, predictP, predictQ, dataP, dataQ)
        self.assertAlmostEqual(row['shift'], 0.03, places=12)
        self.assertEqual(row['numerical_complexity'], 6)
        self.assertIsNone(row['percent_unexplained'])
        self.assertAlmostEqual(row['max_entropy'], math.log(2), places=12)
        self.assertAlmostEqual(row['r_faithfulness_forward'], 1.0, places=9)
        self.assertAlmostEqual(row['auac_forward'], 3.0, places=9)
        self.assertEqual(row['flags'], [])

    def test_selected_metrics(self):
        explanation, predictP, predictQ, dataP, dataQ = example_explanation()
        row = metrics.evaluate_explanation(explanation, predictP, predictQ, dataP, dataQ, metrics=['entropy'])
        self.assertIn('entropy', row)
        self.assertNotIn('auac_forward', row)
        self.assertNotIn('r_faithfulness_backward', row)
