from pathlib import Path

from django.conf import settings

from planning.exports import SIM_HEADER, write_csv, write_timeline
from planning.planner import evaluate_config
from planning.profiles import ConcurrencyConfig
from planning.simulator import simulate, simulate_trace

from ._common import PlanningCommand


class Command(PlanningCommand):
    help = 'Monte Carlo simulation of one configuration; writes sim.csv and optionally trace.csv'
    parameters = ('B', 'gamma', 'T', 'trials', 'trace')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--B', type=int, default=1, help='Branches')
        parser.add_argument('--gamma', type=int, default=0, help='Draft length')
        parser.add_argument('--T', type=float, help='Wall-clock budget in seconds (default: scenario budget)')
        parser.add_argument('--trials', type=int, help='Number of trials')
        parser.add_argument('--trace', action='store_true', help='Also write the timeline of trial 0')

    def run(self, scenario, options):
        budget = scenario.budget if options['T'] is None else options['T']
        trials = settings.TTSLAT['DEFAULT_TRIALS'] if options['trials'] is None else options['trials']
        seed = options['seed']
        config = ConcurrencyConfig(options['B'], options['gamma'], scenario.default_config.requests)
        out = Path(options['out'])

        summary = simulate(scenario, config, budget, trials, seed)
        analytic = evaluate_config(scenario, config, budget)
        row = (
            config.branches, config.draft_len, budget, summary.trials, summary.seed,
            summary.accuracy_estimate, summary.std_error, summary.mean_tokens, summary.mean_cycles,
            analytic.predicted_accuracy,
        )
        paths = [write_csv(out / 'sim.csv', SIM_HEADER, [row])]
        if options['trace']:
            paths.append(write_timeline(out / 'trace.csv', simulate_trace(scenario, config, budget, seed)))

        self.stdout.write(
            f"simulated accuracy={summary.accuracy_estimate:.4f} se={summary.std_error:.4f} "
            f"analytic={analytic.predicted_accuracy:.4f} tokens/branch={summary.mean_tokens:.1f}"
        )
        return paths
