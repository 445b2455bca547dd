from pathlib import Path

from planning.exports import write_frontier
from planning.planner import check_frontier, pareto_frontier, strategy_sweeps

from ._common import PlanningCommand, float_list, int_list


class Command(PlanningCommand):
    help = 'Latency/accuracy frontier plus sequential, speculative and parallel baseline sweeps'
    parameters = ('t_grid', 'b_set', 'gamma_set')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--t-grid', help='Comma-separated budgets in seconds')
        parser.add_argument('--b-set', help='Comma-separated branch counts')
        parser.add_argument('--gamma-set', help='Comma-separated draft lengths')

    def run(self, scenario, options):
        t_grid = float_list(options['t_grid']) if options['t_grid'] else None
        b_set = int_list(options['b_set']) if options['b_set'] else None
        gamma_set = int_list(options['gamma_set']) if options['gamma_set'] else None
        out = Path(options['out'])

        frontier = pareto_frontier(scenario, t_grid, b_set, gamma_set)
        sweeps = strategy_sweeps(scenario, t_grid, b_set, gamma_set)
        check_frontier(frontier, sweeps, b_set, gamma_set)

        paths = [write_frontier(out / 'pareto.csv', frontier)]
        for name in ('sequential', 'speculative', 'parallel'):
            paths.append(write_frontier(out / f'{name}.csv', sweeps[name]))

        for budget, best in frontier:
            self.stdout.write(
                f"T={budget:g}s: B={best.config.branches} gamma={best.config.draft_len} "
                f"accuracy={best.predicted_accuracy:.4f}"
            )
        return paths
