from pathlib import Path

from planning.exports import write_search_trace
from planning.planner import grid_search

from ._common import PlanningCommand, int_list


class Command(PlanningCommand):
    help = 'Exhaustive (B, gamma) grid search; writes grid.csv with one row per cell'
    parameters = ('T', 'b_set', 'gamma_set')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--T', type=float, help='Wall-clock budget in seconds (default: scenario budget)')
        parser.add_argument('--b-set', help='Comma-separated branch counts')
        parser.add_argument('--gamma-set', help='Comma-separated draft lengths')

    def run(self, scenario, options):
        b_set = int_list(options['b_set']) if options['b_set'] else None
        gamma_set = int_list(options['gamma_set']) if options['gamma_set'] else None
        result = grid_search(scenario, options['T'], b_set, gamma_set)
        path = write_search_trace(Path(options['out']) / 'grid.csv', result.trace)

        best = result.best
        self.stdout.write(
            f"best: B={best.config.branches} gamma={best.config.draft_len} "
            f"accuracy={best.predicted_accuracy:.4f} latency={best.wall_latency:.3f}s"
        )
        self.stdout.write(f"evaluations: {result.evaluations_used}")
        return [path]
