import csv
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from planning.errors import InvariantError
from planning.exports import PLAN_HEADER, RunManifest
from planning.tests.factories import fixture_document, write_document

ANCHOR_FILE = str(Path(settings.TTSLAT['SCENARIO_DIR']) / 's1_32b_anchors.csv')


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.reader(f))


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def call(self, name, *args, **options):
        stdout = StringIO()
        options.setdefault('out', str(self.out))
        call_command(name, *args, stdout=stdout, **options)
        return stdout.getvalue()


class PlanCommandTests(CommandTestCase):

    def test_writes_trace_and_manifest(self):
        output = self.call('plan', scenario='s1_32b.json', T=60)
        self.assertIn('best: B=16 gamma=4', output)
        evaluations = int(output.rsplit('evaluations: ', 1)[1])
        self.assertLessEqual(evaluations, 10)

        rows = read_rows(self.out / 'plan.csv')
        self.assertEqual(tuple(rows[0]), PLAN_HEADER)
        self.assertEqual(len(rows) - 1, evaluations)

        manifest = RunManifest.load(self.out / 'manifest.json')
        self.assertEqual(manifest.command, 'plan')
        self.assertEqual(manifest.parameters['T'], 60)
        self.assertEqual(manifest.output_paths, [str(self.out / 'plan.csv')])
        self.assertTrue(manifest.scenario_path.endswith('s1_32b.json'))

    def test_every_fixture_within_ten_evaluations(self):
        for name in ('r1_32b.json', 'qwq_32b.json', 'llama_8b_eagle3.json', 's1_3b.json'):
            with self.subTest(name=name):
                output = self.call('plan', scenario=name)
                evaluations = int(output.rsplit('evaluations: ', 1)[1])
                self.assertLessEqual(evaluations, 10)

    def test_without_speculation(self):
        output = self.call('plan', scenario='s1_32b.json', gamma_max=0)
        self.assertIn('gamma=0', output)

    def test_missing_scenario_file(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('plan', scenario=str(self.out / 'absent.json'))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('absent.json', str(ctx.exception))

    def test_invalid_acceptance_rate(self):
        document = fixture_document()
        document['pair']['acceptance_rate'] = 1.0
        path = write_document(self.out, document, 'bad.json')
        with self.assertRaises(CommandError) as ctx:
            self.call('plan', scenario=str(path))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('pair.acceptance_rate', str(ctx.exception))

    def test_non_power_of_two_b_max(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('plan', scenario='s1_32b.json', b_max=12)
        self.assertEqual(ctx.exception.returncode, 1)

    def test_invariant_violation_exit_code(self):
        with mock.patch('planning.management.commands.plan.greedy_search', side_effect=InvariantError('trace empty')):
            with self.assertRaises(CommandError) as ctx:
                self.call('plan', scenario='s1_32b.json')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_scenario_is_required(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('plan')
        self.assertEqual(ctx.exception.returncode, 1)

    def test_manifest_replay_is_identical(self):
        first = self.out / 'first'
        second = self.out / 'second'
        self.call('plan', scenario='qwq_32b.json', T=45, b_max=32, out=str(first))
        self.call('plan', manifest=str(first / 'manifest.json'), out=str(second))
        self.assertEqual((first / 'plan.csv').read_bytes(), (second / 'plan.csv').read_bytes())
        self.assertEqual(RunManifest.load(second / 'manifest.json').parameters['b_max'], 32)

    def test_manifest_for_another_command(self):
        self.call('grid', scenario='s1_32b.json', b_set='1,2', gamma_set='0')
        with self.assertRaises(CommandError) as ctx:
            self.call('plan', manifest=str(self.out / 'manifest.json'))
        self.assertEqual(ctx.exception.returncode, 1)


class GridCommandTests(CommandTestCase):

    def test_full_grid(self):
        output = self.call('grid', scenario='s1_32b.json')
        self.assertIn('best: B=16 gamma=4', output)
        self.assertEqual(len(read_rows(self.out / 'grid.csv')) - 1, 56)

    def test_singleton_sets(self):
        self.call('grid', scenario='s1_32b.json', b_set='4', gamma_set='2')
        rows = read_rows(self.out / 'grid.csv')
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows[1][:2], ['4', '2'])

    def test_agrees_with_greedy_when_ties_favor_correct(self):
        document = fixture_document()
        document['tie_rule'] = 'FavorCorrect'
        path = str(write_document(self.out, document, 'favor.json'))
        plan = self.call('plan', scenario=path, out=str(self.out / 'plan'))
        grid = self.call('grid', scenario=path, out=str(self.out / 'grid'))
        self.assertIn('best: B=2 gamma=4', plan)
        self.assertEqual(plan.splitlines()[0], grid.splitlines()[0])

    def test_malformed_set(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('grid', scenario='s1_32b.json', b_set='1,two')
        self.assertEqual(ctx.exception.returncode, 1)


class ParetoCommandTests(CommandTestCase):

    def test_frontier_and_baselines(self):
        output = self.call('pareto', scenario='s1_32b.json', t_grid='30,60', b_set='1,4,16', gamma_set='0,2,4')
        for name in ('pareto', 'sequential', 'speculative', 'parallel'):
            rows = read_rows(self.out / f'{name}.csv')
            self.assertEqual(rows[0], ['T', 'B', 'gamma', 'accuracy', 'latency'])
            self.assertEqual([r[0] for r in rows[1:]], ['30.0', '60.0'])
        self.assertIn('T=60s: B=16 gamma=4', output)
        frontier = [float(r[3]) for r in read_rows(self.out / 'pareto.csv')[1:]]
        self.assertEqual(frontier, sorted(frontier))

    def test_frontier_below_a_baseline_exits_two(self):
        broken = InvariantError('frontier below the parallel baseline at T=60s')
        with mock.patch('planning.management.commands.pareto.check_frontier', side_effect=broken):
            with self.assertRaises(CommandError) as ctx:
                self.call('pareto', scenario='s1_32b.json', t_grid='60', b_set='1,4', gamma_set='0,2')
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse((self.out / 'pareto.csv').exists())


class SimulateCommandTests(CommandTestCase):

    def test_repeatable_with_seed(self):
        self.call('simulate', scenario='s1_32b.json', B=4, gamma=2, T=20, trials=200, seed=7, out=str(self.out / 'a'))
        self.call('simulate', scenario='s1_32b.json', B=4, gamma=2, T=20, trials=200, seed=7, out=str(self.out / 'b'))
        self.assertEqual((self.out / 'a' / 'sim.csv').read_bytes(), (self.out / 'b' / 'sim.csv').read_bytes())
        row = dict(zip(*read_rows(self.out / 'a' / 'sim.csv')))
        self.assertEqual(row['trials'], '200')
        self.assertEqual(row['seed'], '7')
        self.assertLessEqual(abs(float(row['accuracy_estimate']) - float(row['analytic_accuracy'])), 0.15)

    def test_trace_file(self):
        self.call('simulate', scenario='s1_32b.json', B=2, gamma=3, T=5, trials=50, trace=True)
        rows = read_rows(self.out / 'trace.csv')
        self.assertEqual(rows[0], ['event', 'elapsed_s', 'branch', 'tokens', 'seq_len', 'bound'])
        self.assertEqual(rows[1][0], 'start')
        elapsed = [float(r[1]) for r in rows[1:]]
        self.assertEqual(elapsed, sorted(elapsed))
        manifest = RunManifest.load(self.out / 'manifest.json')
        self.assertEqual(len(manifest.output_paths), 2)

    def test_zero_branches(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('simulate', scenario='s1_32b.json', B=0, trials=10)
        self.assertEqual(ctx.exception.returncode, 1)


class FitCommandTests(CommandTestCase):

    def test_fits_shipped_anchors(self):
        output = self.call('fit', anchors=ANCHOR_FILE)
        self.assertIn('accuracy at 2521 tokens: 0.83', output)
        document = json.loads((self.out / 'curve.json').read_text(encoding='utf-8'))
        self.assertAlmostEqual(document['curve']['midpoint'], 9.716, delta=1e-2)
        self.assertFalse(document['degenerate'])
        self.assertEqual(len(document['anchors']), 8)

    def test_degenerate_anchors(self):
        path = self.out / 'flat.csv'
        path.write_text('tokens,accuracy\n256,0.4\n4096,0.4\n', encoding='utf-8')
        output = self.call('fit', anchors=str(path))
        self.assertIn('degenerate', output)

    def test_anchors_required(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('fit')
        self.assertEqual(ctx.exception.returncode, 1)


class RooflineCommandTests(CommandTestCase):

    def test_throughput_table(self):
        output = self.call('roofline', scenario='s1_32b.json', b_set='1,16', requests='1,4')
        rows = read_rows(self.out / 'throughput.csv')
        self.assertEqual(rows[0], ['requests', 'branches', 'sequences', 'step_time', 'throughput', 'bound', 'over_capacity'])
        self.assertEqual([r[2] for r in rows[1:]], ['1', '16', '4', '64'])
        self.assertAlmostEqual(float(rows[1][4]), 22.7, delta=0.5)
        self.assertEqual(rows[1][5], 'MemoryBound')
        self.assertIn('compute-bound from', output)
