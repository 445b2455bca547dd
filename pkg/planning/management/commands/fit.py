from pathlib import Path

from django.core.management.base import CommandError

from planning.curves import FitBounds, curve_eval, curve_fit, load_anchors
from planning.exports import write_json

from ._common import INPUT_ERROR, PlanningCommand

REPORT_TOKENS = 2 ** 11.3


class Command(PlanningCommand):
    help = 'Fit the logistic efficiency curve to accuracy anchors; writes curve.json'
    parameters = ('anchors', 'a_max_bound')
    needs_scenario = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--anchors', help='CSV with tokens,accuracy[,convention,branches]')
        parser.add_argument('--a-max-bound', type=float, help='Upper bound for the fitted ceiling')

    def run(self, scenario, options):
        if not options['anchors']:
            raise CommandError('--anchors is required', returncode=INPUT_ERROR)
        anchors = load_anchors(options['anchors'])
        bounds = FitBounds()
        if options['a_max_bound'] is not None:
            bounds = FitBounds(a_max=(0.0, options['a_max_bound']))
        fit = curve_fit(anchors, bounds)

        curve = fit.curve
        document = {
            'curve': {
                'a_min': curve.a_min,
                'a_max': curve.a_max,
                'midpoint': curve.midpoint,
                'slope': curve.slope,
            },
            'rms_residual': fit.rms_residual,
            'degenerate': fit.degenerate,
            'anchors': [{'tokens': a.tokens, 'accuracy': a.accuracy} for a in anchors],
        }
        path = write_json(Path(options['out']) / 'curve.json', document)

        self.stdout.write(
            f"a_min={curve.a_min:.4f} a_max={curve.a_max:.4f} midpoint={curve.midpoint:.4f} "
            f"slope={curve.slope:.4f} rms={fit.rms_residual:.3e}"
        )
        if fit.degenerate:
            self.stdout.write("degenerate: anchors do not determine a slope")
        self.stdout.write(f"accuracy at {REPORT_TOKENS:.0f} tokens: {curve_eval(curve, REPORT_TOKENS):.4f}")
        return [path]
