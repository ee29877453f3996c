import unittest

import numpy as np

from subshift import benchmark
from subshift.context import ExplainContext
from subshift.errors import EmptyPartitionError
from subshift.explainers import explain_ensemble
from subshift.surrogate import SurrogateConfig, explain_blackbox


class ShiftBenchmarkTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.ctx = ExplainContext(n_jobs=1, environ={})
        cls.bench = benchmark.make_shift_benchmark(seed=3, n_rows=1000, n_features=3, n_trees=4, max_leaves=4,
                                                   ctx=cls.ctx)

    def test_datasets(self):
        self.assertEqual(self.bench.dataP.column_names, ['x0', 'x1', 'x2'])
        self.assertEqual(self.bench.dataQ.n_rows, 1000)
        self.assertEqual(len(self.bench.model), 4)
        np.testing.assert_array_equal(self.bench.dataP.predictions, self.bench.predictP)
        self.assertEqual(set(np.unique(self.bench.dataP.labels)), set([0.0, 1.0]))

    def test_shift_is_visible(self):
        self.assertGreater(abs(self.bench.predictQ.mean() - self.bench.predictP.mean()), 0.01)

    def test_deterministic(self):
        again = benchmark.make_shift_benchmark(seed=3, n_rows=1000, n_features=3, n_trees=4, max_leaves=4,
                                               ctx=self.ctx)
        np.testing.assert_array_equal(again.predictQ, self.bench.predictQ)

    def test_explain_ensemble(self):
        explanation, scan = explain_ensemble(self.bench.model, self.bench.dataP, self.bench.dataQ, ctx=self.ctx)
        self.assertEqual([entry.tree_index for entry in scan], [0, 1, 2, 3])
        shift = self.bench.predictQ.mean() - self.bench.predictP.mean()
        self.assertAlmostEqual(explanation.shift, shift, places=9)
        self.assertAlmostEqual(sum(explanation.factor_svs) + explanation.leafmeans_sv, shift, places=9)
        self.assertIsNotNone(explanation.percent_unexplained)

    def test_explain_blackbox(self):
        explanation, surrogate = explain_blackbox(self.bench.dataP, self.bench.dataQ, self.bench.predictP,
                                                  self.bench.predictQ, SurrogateConfig(max_leaves=6), ctx=self.ctx)
        self.assertLessEqual(surrogate.n_leaves, 6)
        self.assertAlmostEqual(sum(explanation.factor_svs) + explanation.leafmeans_sv, explanation.shift, places=9)
        self.assertGreaterEqual(explanation.percent_unexplained, 0.0)

    def test_needs_two_features(self):
        with self.assertRaises(ValueError):
            benchmark.make_shift_benchmark(n_features=1)


class ThresholdShiftTest(unittest.TestCase):

    def test_partition(self):
        dataP, dataQ = benchmark.make_threshold_shift(seed=1, n_rows=500)
        self.assertEqual(dataP.n_rows + dataQ.n_rows, 500)
        self.assertEqual(dataP.column_names, ['x1', 'x2', 'x3'])
        self.assertIsNotNone(dataP.labels)

    def test_keep_feature(self):
        dataP, dataQ = benchmark.make_threshold_shift(seed=1, n_rows=500, drop_feature=False)
        self.assertTrue((dataP.column('x0') <= 0.0).all())
        self.assertTrue((dataQ.column('x0') > 0.0).all())

    def test_empty_side(self):
        with self.assertRaises(EmptyPartitionError):
            benchmark.make_threshold_shift(seed=1, n_rows=100, threshold=100.0)
