import random
import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from planning.curves import (
    CurveAnchor,
    EfficiencyCurve,
    FitBounds,
    curve_eval,
    curve_fit,
    load_anchors,
    token_efficiency,
)
from planning.errors import ScenarioError

ANCHOR_FILE = Path(settings.TTSLAT['SCENARIO_DIR']) / 's1_32b_anchors.csv'


class CurveEvalTests(SimpleTestCase):

    def test_midpoint_is_halfway(self):
        curve = EfficiencyCurve(0.0, 0.9, 10.0, 1.0)
        self.assertAlmostEqual(curve_eval(curve, 2 ** 10), 0.45, places=12)

    def test_saturates_at_both_ends(self):
        curve = EfficiencyCurve(0.05, 0.95, 10.0, 2.0)
        self.assertAlmostEqual(curve_eval(curve, 1), 0.05, places=7)
        self.assertAlmostEqual(curve_eval(curve, 2.0 ** 40), 0.95, places=12)

    def test_calibrated_one_minute_point(self):
        curve = EfficiencyCurve(0.05, 0.95, 9.716, 1.2)
        self.assertAlmostEqual(curve_eval(curve, 2521.38), 0.833, delta=1e-3)

    def test_array_input(self):
        curve = EfficiencyCurve(0.05, 0.95, 9.716, 1.2)
        values = curve_eval(curve, [1, 256, 4096, 65536])
        self.assertIsInstance(values, np.ndarray)
        self.assertTrue(np.all(np.diff(values) > 0))
        self.assertIsInstance(curve_eval(curve, 256), float)

    def test_random_curves_are_monotone_and_bounded(self):
        rng = np.random.default_rng(11)
        tokens = np.sort(rng.uniform(1.0, 2.0 ** 20, 500))
        for _ in range(100):
            a_min, a_max = np.sort(rng.uniform(0.0, 1.0, 2))
            curve = EfficiencyCurve(a_min, a_max, rng.uniform(-5.0, 25.0), rng.uniform(0.01, 10.0))
            values = curve_eval(curve, tokens)
            with self.subTest(curve=curve):
                self.assertTrue(np.all(np.diff(values) >= 0))
                self.assertTrue(np.all((values >= a_min) & (values <= a_max)))

    def test_fewer_than_one_token(self):
        curve = EfficiencyCurve(0.05, 0.95, 9.716, 1.2)
        with self.assertRaises(ValueError):
            curve_eval(curve, 0.5)

    def test_invalid_parameters(self):
        with self.assertRaises(ScenarioError):
            EfficiencyCurve(0.9, 0.1, 10.0, 1.0)
        with self.assertRaises(ScenarioError):
            EfficiencyCurve(0.1, 0.9, 10.0, 0.0)

    def test_token_efficiency_fades_past_midpoint(self):
        curve = EfficiencyCurve(0.05, 0.95, 9.716, 1.2)
        values = [token_efficiency(curve, 2.0 ** x) for x in (10, 12, 14, 16)]
        self.assertTrue(all(v > 0 for v in values))
        self.assertEqual(values, sorted(values, reverse=True))


class CurveFitTests(SimpleTestCase):

    def test_recovers_logistic_from_samples(self):
        truth = EfficiencyCurve(0.1, 0.8, 11.0, 1.3)
        anchors = [
            CurveAnchor(float(t), curve_eval(truth, float(t)))
            for t in np.logspace(6, 16, 20, base=2.0)
        ]
        fit = curve_fit(anchors)
        self.assertFalse(fit.degenerate)
        self.assertLess(fit.rms_residual, 1e-8)
        for got, want in zip(
            (fit.curve.a_min, fit.curve.a_max, fit.curve.midpoint, fit.curve.slope),
            (truth.a_min, truth.a_max, truth.midpoint, truth.slope),
        ):
            self.assertAlmostEqual(got, want, delta=1e-4)

    def test_two_anchors_pass_through_both(self):
        anchors = [CurveAnchor(2 ** 8, 0.40), CurveAnchor(2 ** 11.3, 0.833)]
        fit = curve_fit(anchors, FitBounds(a_max=(0.0, 0.95)))
        self.assertLessEqual(fit.curve.a_max, 0.95)
        for anchor in anchors:
            self.assertAlmostEqual(curve_eval(fit.curve, anchor.tokens), anchor.accuracy, delta=1e-4)

    def test_flat_anchors_are_degenerate(self):
        with self.assertLogs('planning', level='WARNING'):
            fit = curve_fit([CurveAnchor(256, 0.4), CurveAnchor(4096, 0.4)])
        self.assertTrue(fit.degenerate)
        self.assertEqual(curve_eval(fit.curve, 1000), 0.4)

    def test_needs_two_distinct_token_counts(self):
        with self.assertRaises(ValueError):
            curve_fit([CurveAnchor(256, 0.4), CurveAnchor(256, 0.5)])

    def test_repeatable_and_order_free(self):
        anchors = load_anchors(ANCHOR_FILE)
        first = curve_fit(anchors)
        self.assertEqual(curve_fit(anchors), first)
        shuffled = list(anchors)
        random.Random(3).shuffle(shuffled)
        self.assertEqual(curve_fit(shuffled), first)

    def test_refit_of_sampled_curve_is_stable(self):
        fit = curve_fit(load_anchors(ANCHOR_FILE))
        self.assertAlmostEqual(fit.curve.a_min, 0.05, delta=1e-2)
        self.assertAlmostEqual(fit.curve.a_max, 0.95, delta=1e-2)
        self.assertAlmostEqual(fit.curve.midpoint, 9.716, delta=1e-2)
        self.assertAlmostEqual(fit.curve.slope, 1.2, delta=1e-2)
        refit = curve_fit([CurveAnchor(2.0 ** x, curve_eval(fit.curve, 2.0 ** x)) for x in range(7, 15)])
        self.assertAlmostEqual(refit.curve.midpoint, fit.curve.midpoint, delta=1e-4)
        self.assertAlmostEqual(refit.curve.slope, fit.curve.slope, delta=1e-4)


class LoadAnchorsTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_shipped_anchor_file(self):
        anchors = load_anchors(ANCHOR_FILE)
        self.assertEqual(len(anchors), 8)
        self.assertEqual(anchors[0], CurveAnchor(256.0, 0.151813))

    def test_total_convention_divides_by_branches(self):
        anchors = load_anchors(ANCHOR_FILE)
        self.assertEqual(anchors[-1].tokens, 4096.0)
        self.assertEqual(anchors[-1].accuracy, anchors[5].accuracy)

    def test_two_column_file(self):
        path = Path(self.tmp.name) / 'anchors.csv'
        path.write_text('tokens,accuracy\n100,0.2\n1000,0.6\n', encoding='utf-8')
        self.assertEqual(load_anchors(path), [CurveAnchor(100.0, 0.2), CurveAnchor(1000.0, 0.6)])

    def test_bad_header(self):
        path = Path(self.tmp.name) / 'anchors.csv'
        path.write_text('t,acc\n100,0.2\n', encoding='utf-8')
        with self.assertRaisesMessage(ScenarioError, 'header'):
            load_anchors(path)

    def test_malformed_row_names_line(self):
        path = Path(self.tmp.name) / 'anchors.csv'
        path.write_text('tokens,accuracy\n100,0.2\n1000,high\n', encoding='utf-8')
        with self.assertRaisesMessage(ScenarioError, ':3:'):
            load_anchors(path)

    def test_missing_file(self):
        with self.assertRaisesMessage(ScenarioError, 'file not found'):
            load_anchors(Path(self.tmp.name) / 'missing.csv')
