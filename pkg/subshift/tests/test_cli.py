import io
import json
import os
import shutil
import tempfile
import unittest

from mock import patch

from subshift import cli
from subshift.helpers import process_evaluate_row
from subshift.model_io import export_json
from subshift.tests.fixtures import unreachable_tree, write_example_files


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.dir = tempfile.mkdtemp()
        self.paths = write_example_files(self.dir)

    def tearDown(self):
        shutil.rmtree(self.dir)

    def run_cli(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        code = cli.main(list(argv) + ['--jobs', '1'], stdout=stdout, stderr=stderr)
        return code, stdout.getvalue(), stderr.getvalue()

    def explain_args(self, target='tree', **paths):
        paths = dict(self.paths, **paths)
        return ['explain', target, '--data-p', paths['data_p'], '--data-q', paths['data_q'],
                '--model', paths['model']]


class ExplainCommandTest(CliTestCase):

    def test_tree(self):
        code, out, err = self.run_cli(*self.explain_args())
        self.assertEqual(code, 0, err)
        document = json.loads(out)
        self.assertAlmostEqual(document['shift'], 0.03, places=12)
        self.assertEqual([f['label'] for f in document['factors']],
                         ['P(x1 ≤ 0.0)', 'P(x2 ≤ 0.0 | x1 ≤ 0.0 is false)'])

    def test_writes_files(self):
        out_path = os.path.join(self.dir, 'explanation.json')
        svg_path = os.path.join(self.dir, 'chart.svg')
        code, out, _ = self.run_cli(*self.explain_args() + ['--out', out_path, '--svg', svg_path])
        self.assertEqual(code, 0)
        self.assertEqual(out, '')
        with open(out_path) as fp:
            self.assertEqual(len(json.load(fp)['factors']), 2)
        with open(svg_path) as fp:
            self.assertTrue(fp.read().startswith('<svg'))

    def test_kernel_with_full_budget(self):
        code, out, _ = self.run_cli(*self.explain_args() + ['--method', 'kernel', '--budget', '2'])
        self.assertEqual(code, 0)
        document = json.loads(out)
        self.assertEqual(document['method'], 'kernel_shap')
        self.assertAlmostEqual(document['factors'][1]['sv'], 0.18, places=9)

    def test_ensemble_kernel_past_exact_limit(self):
        args = self.explain_args('ensemble') + ['--exact-limit', '2']
        code, _, err = self.run_cli(*args)
        self.assertEqual(code, 3)
        self.assertTrue(err.startswith('error: no-explainable-tree: '), err)

        code, out, err = self.run_cli(*args + ['--method', 'kernel', '--seed', '4'])
        self.assertEqual(code, 0, err)
        document = json.loads(out)
        self.assertEqual(document['method'], 'kernel_shap')
        self.assertEqual(document['seed'], 4)
        total = sum(f['sv'] for f in document['factors']) + document['leafmeans_sv']
        self.assertAlmostEqual(total, document['shift'], places=9)
        self.assertAlmostEqual(document['factors'][1]['sv'], 0.18, places=9)

    def test_verbose_logs_arguments(self):
        code, _, err = self.run_cli(*self.explain_args() + ['-v'])
        self.assertEqual(code, 0, err)
        self.assertIn("'target': 'tree'", err)
        self.assertIn('[main: cli.py:', err)

    def test_missing_file(self):
        code, _, err = self.run_cli(*self.explain_args(data_p=os.path.join(self.dir, 'absent.csv')))
        self.assertEqual(code, 2)
        self.assertTrue(err.startswith('error: io: '), err)

    def test_undefined_conditional(self):
        model = os.path.join(self.dir, 'unreachable.json')
        export_json(unreachable_tree(), model)
        code, _, err = self.run_cli(*self.explain_args(model=model))
        self.assertEqual(code, 3)
        self.assertTrue(err.startswith('error: undefined-conditional: '), err)

    def test_bad_model_document(self):
        with open(self.paths['model'], 'w') as fp:
            fp.write('{"kind": "tree"')
        code, _, err = self.run_cli(*self.explain_args())
        self.assertEqual(code, 2)
        self.assertTrue(err.startswith('error: validation: '), err)

    def test_usage_error(self):
        with self.assertRaises(SystemExit) as cm:
            cli.main(['explain', 'forest'], stdout=io.StringIO(), stderr=io.StringIO())
        self.assertEqual(cm.exception.code, 2)


class EvaluateCommandTest(CliTestCase):

    def write_manifest(self, rows):
        path = os.path.join(self.dir, 'manifest.json')
        with open(path, 'w') as fp:
            json.dump({'rows': rows}, fp)
        return path

    def test_evaluate(self):
        row = {'data_p': 'p.csv', 'data_q': 'q.csv', 'schema': 'schema.json', 'model': 'model.json'}
        code, out, err = self.run_cli('evaluate', '--manifest', self.write_manifest([row, row]))
        self.assertEqual(code, 0, err)
        report = json.loads(out)
        self.assertEqual(report['aggregates']['n_succeeded'], 2)
        self.assertEqual([r['index'] for r in report['rows']], [0, 1])

    def test_rows_get_their_own_context(self):
        row = {'data_p': 'p.csv', 'data_q': 'q.csv', 'schema': 'schema.json', 'model': 'model.json'}
        with patch('subshift.cli.process_evaluate_row', wraps=process_evaluate_row) as evaluate_row:
            code, _, err = self.run_cli('evaluate', '--manifest', self.write_manifest([row, row, row]))
        self.assertEqual(code, 0, err)
        contexts = [c[0][0] for c in evaluate_row.call_args_list]
        self.assertEqual(len(set(id(ctx) for ctx in contexts)), 3)
        for ctx in contexts:
            self.assertIn('extract_conditionals', ctx.timings)

    def test_all_rows_fail(self):
        code, out, err = self.run_cli('evaluate', '--manifest', self.write_manifest([{'data_p': 'p.csv'}]))
        self.assertEqual(code, 3)
        self.assertEqual(json.loads(out)['aggregates']['n_failed'], 1)
        self.assertIn('error: evaluation: ', err)

    def test_unknown_metric(self):
        code, _, err = self.run_cli('evaluate', '--manifest', self.write_manifest([{}]), '--metrics', 'accuracy')
        self.assertEqual(code, 2)
        self.assertIn('error: validation: ', err)

    def test_empty_manifest(self):
        code, _, _ = self.run_cli('evaluate', '--manifest', self.write_manifest([]))
        self.assertEqual(code, 2)


class SimulateProxyCommandTest(CliTestCase):

    def test_simulate(self):
        code, out, _ = self.run_cli('simulate-proxy', '--depth', '1', '--repeats', '50')
        self.assertEqual(code, 0)
        summary = json.loads(out)
        self.assertEqual((summary['depth'], summary['n_repeats'], summary['n_leaves']), (1, 50, 2))

    def test_bad_config(self):
        code, _, err = self.run_cli('simulate-proxy', '--depth', '0')
        self.assertEqual(code, 2)
        self.assertIn('error: validation: ', err)


class BenchmarkCommandTest(CliTestCase):

    def test_benchmark_then_explain_blackbox(self):
        out_dir = os.path.join(self.dir, 'bench')
        code, out, err = self.run_cli('benchmark', '--out-dir', out_dir, '--rows', '300', '--trees', '3',
                                      '--max-leaves', '4')
        self.assertEqual(code, 0, err)
        paths = json.loads(out)
        self.assertTrue(all(os.path.exists(p) for p in paths.values()))

        code, out, err = self.run_cli('explain', 'blackbox', '--data-p', paths['data_p'], '--data-q', paths['data_q'],
                                      '--schema', paths['schema'], '--pred-col', 'prediction',
                                      '--label-col', 'label', '--max-leaves', '4')
        self.assertEqual(code, 0, err)
        document = json.loads(out)
        total = sum(f['sv'] for f in document['factors']) + document['leafmeans_sv']
        self.assertAlmostEqual(total, document['shift'], places=9)
        self.assertLessEqual(len(document['factors']), 3)
