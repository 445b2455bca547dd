from pathlib import Path

from planning.exports import write_search_trace
from planning.planner import greedy_search

from ._common import PlanningCommand


class Command(PlanningCommand):
    help = 'Greedy (B, gamma) search for the latency-optimal configuration; writes plan.csv'
    parameters = ('T', 'b_max', 'gamma_max')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--T', type=float, help='Wall-clock budget in seconds (default: scenario budget)')
        parser.add_argument('--b-max', type=int, help='Largest branch count, a power of 2')
        parser.add_argument('--gamma-max', type=int, help='Largest draft length')

    def run(self, scenario, options):
        result = greedy_search(scenario, options['T'], options['b_max'], options['gamma_max'])
        path = write_search_trace(Path(options['out']) / 'plan.csv', result.trace)

        best = result.best
        self.stdout.write(
            f"best: B={best.config.branches} gamma={best.config.draft_len} "
            f"accuracy={best.predicted_accuracy:.4f} latency={best.wall_latency:.3f}s"
        )
        self.stdout.write(f"evaluations: {result.evaluations_used}")
        return [path]
