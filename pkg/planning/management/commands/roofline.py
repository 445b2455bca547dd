from pathlib import Path

from django.conf import settings

from planning.exports import THROUGHPUT_HEADER, write_csv
from planning.roofline import crossover_sequences, throughput_sweep

from ._common import PlanningCommand, int_list


class Command(PlanningCommand):
    help = 'Decode throughput and bound for each (requests, branches) cell; writes throughput.csv'
    parameters = ('b_set', 'requests', 'seq_len')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--b-set', help='Comma-separated branch counts')
        parser.add_argument('--requests', default='1', help='Comma-separated request counts')
        parser.add_argument('--seq-len', type=float, default=1024.0, help='Context length per sequence')

    def run(self, scenario, options):
        branches = int_list(options['b_set']) if options['b_set'] else settings.TTSLAT['B_SET']
        requests = int_list(options['requests'])
        target = scenario.pair.target
        cells = throughput_sweep(scenario.hardware, target, branches, requests, options['seq_len'])
        rows = [
            (c.requests, c.branches, c.sequences, c.step_time, c.throughput, c.bound, c.over_capacity)
            for c in cells
        ]
        path = write_csv(Path(options['out']) / 'throughput.csv', THROUGHPUT_HEADER, rows)

        crossover = crossover_sequences(scenario.hardware, target, 1, options['seq_len'])
        self.stdout.write(
            f"compute-bound from {crossover} sequences" if crossover is not None
            else "compute never dominates at this context length"
        )
        return [path]
