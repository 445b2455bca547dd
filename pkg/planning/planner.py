import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

from django.conf import settings

from planning.errors import InvariantError
from planning.profiles import ConcurrencyConfig, Scenario
from planning.roofline import Bound, decode_timeline
from planning.voting import mixture_vote_accuracy

logger = logging.getLogger('planning')


@dataclass(frozen=True)
class ConfigEvaluation:
    config: ConcurrencyConfig
    tokens_per_branch: float
    predicted_accuracy: float
    wall_latency: float
    bound: Bound
    feasible: bool = True

    @property
    def cell(self) -> Tuple[int, int]:
        return self.config.branches, self.config.draft_len


@dataclass(frozen=True)
class SearchResult:
    best: ConfigEvaluation
    evaluations_used: int
    trace: Tuple[ConfigEvaluation, ...]


Evaluator = Callable[[Scenario, ConcurrencyConfig, float], ConfigEvaluation]


def worker_count(workers: int | None = None) -> int:
    workers = workers if workers is not None else settings.TTSLAT['THREADS']
    return max(1, int(workers))


def evaluate_config(scenario: Scenario, config: ConcurrencyConfig, budget: float | None = None) -> ConfigEvaluation:
    """Predicted dataset accuracy of one (B, gamma) configuration within ``budget`` seconds."""
    budget = scenario.budget if budget is None else budget
    if not budget > 0:
        raise ValueError(f"budget must be > 0 seconds, got {budget}")
    timeline = decode_timeline(
        scenario.hardware,
        scenario.pair,
        config,
        budget - scenario.prefill_offset,
        prompt_len=scenario.prompt_len,
        max_tokens=scenario.max_tokens_per_branch,
    )
    wall_latency = scenario.prefill_offset + timeline.elapsed

    if timeline.peak_memory > scenario.hardware.mem_capacity:
        logger.warning(
            f"Configuration exceeds memory capacity | B={config.branches} | gamma={config.draft_len} | "
            f"R={config.requests} | resident={timeline.peak_memory:.4g} | capacity={scenario.hardware.mem_capacity:.4g}"
        )
        return ConfigEvaluation(config, timeline.tokens, 0.0, wall_latency, timeline.bound, feasible=False)

    accuracy = mixture_vote_accuracy(
        scenario.answer_model, scenario.curve, timeline.tokens, config.branches, scenario.tie_rule,
    )
    return ConfigEvaluation(
        config=config,
        tokens_per_branch=timeline.tokens,
        predicted_accuracy=min(1.0, max(0.0, accuracy)),
        wall_latency=wall_latency,
        bound=timeline.bound,
    )


def _requests(scenario: Scenario | None) -> int:
    return scenario.default_config.requests if scenario is not None else 1


def _fastest_draft_len(
    scenario: Scenario,
    branches: int,
    requests: int,
    budget: float,
    gamma_max: int,
) -> int:
    """Draft length with the most tokens per branch at ``branches``; ties keep the shorter draft.

    Uses only the roofline timeline, so it costs no accuracy evaluation. Draft
    lengths whose resident memory exceeds capacity rank below feasible ones.
    """
    best_gamma, best_key = 0, None
    for gamma in range(gamma_max + 1):
        timeline = decode_timeline(
            scenario.hardware,
            scenario.pair,
            ConcurrencyConfig(branches, gamma, requests),
            budget - scenario.prefill_offset,
            prompt_len=scenario.prompt_len,
            max_tokens=scenario.max_tokens_per_branch,
        )
        key = (timeline.peak_memory <= scenario.hardware.mem_capacity, timeline.tokens)
        if best_key is None or key > best_key:
            best_gamma, best_key = gamma, key
    return best_gamma


def greedy_search(
    scenario: Scenario,
    budget: float | None = None,
    b_max: int | None = None,
    gamma_max: int | None = None,
    evaluate: Evaluator | None = None,
) -> SearchResult:
    """Coordinate greedy over (B, gamma).

    Phase 1 doubles B from 1 and stops at the first doubling that does not
    strictly improve accuracy. The step from one to two branches never stops
    it: a two-branch vote splits 1-1 whenever the branches disagree, so it can
    at best tie a single branch. Each B is scored at the draft length that
    decodes the most tokens within the budget, read off the roofline timeline
    (draft length 0 when there is no scenario to time). Phase 2 steps gamma up
    from there while accuracy strictly improves, or down when the first step
    up does not. Every evaluation, including the one that stops a phase, counts as
    an evaluation.
    """
    cfg = settings.TTSLAT
    budget = scenario.budget if budget is None else budget
    b_max = cfg['B_MAX'] if b_max is None else b_max
    gamma_max = cfg['GAMMA_MAX'] if gamma_max is None else gamma_max
    if b_max < 1 or b_max & (b_max - 1):
        raise ValueError(f"b_max must be a power of 2 >= 1, got {b_max}")
    if gamma_max < 0:
        raise ValueError(f"gamma_max must be >= 0, got {gamma_max}")
    evaluate = evaluate or evaluate_config
    epsilon = cfg['IMPROVEMENT_EPSILON']
    requests = _requests(scenario)

    def draft_len(branches: int) -> int:
        if scenario is None or gamma_max == 0:
            return 0
        return _fastest_draft_len(scenario, branches, requests, budget, gamma_max)

    def score(branches: int, gamma: int) -> ConfigEvaluation:
        result = evaluate(scenario, ConcurrencyConfig(branches, gamma, requests), budget)
        trace.append(result)
        return result

    def improves(candidate: ConfigEvaluation) -> bool:
        return candidate.predicted_accuracy > best.predicted_accuracy + epsilon

    trace: List[ConfigEvaluation] = []
    best = score(1, draft_len(1))
    branches = 2
    while branches <= b_max:
        candidate = score(branches, draft_len(branches))
        if improves(candidate):
            best = candidate
        elif branches > 2:
            break
        branches *= 2

    branches, gamma = best.cell
    for step in (1, -1):
        moved = False
        while 0 <= gamma + step <= gamma_max:
            candidate = score(branches, gamma + step)
            if not improves(candidate):
                break
            best, gamma, moved = candidate, gamma + step, True
        if moved:
            break

    logger.info(
        f"Greedy search complete | T={budget}s | best=({branches},{gamma}) | "
        f"accuracy={best.predicted_accuracy:.4f} | evaluations={len(trace)}"
    )
    return SearchResult(best=best, evaluations_used=len(trace), trace=tuple(trace))


def _cells(b_set: Iterable[int], gamma_set: Iterable[int]) -> List[Tuple[int, int]]:
    b_values = sorted(set(b_set))
    gamma_values = sorted(set(gamma_set))
    if not b_values or not gamma_values:
        raise ValueError("grid search needs nonempty B and gamma sets")
    return [(b, g) for b in b_values for g in gamma_values]


def grid_search(
    scenario: Scenario,
    budget: float | None = None,
    b_set: Iterable[int] | None = None,
    gamma_set: Iterable[int] | None = None,
    evaluate: Evaluator | None = None,
    workers: int | None = None,
) -> SearchResult:
    """Evaluate the full B x gamma cross product; ties go to the lexicographically smaller cell."""
    cfg = settings.TTSLAT
    budget = scenario.budget if budget is None else budget
    cells = _cells(cfg['B_SET'] if b_set is None else b_set, cfg['GAMMA_SET'] if gamma_set is None else gamma_set)
    evaluate = evaluate or evaluate_config
    requests = _requests(scenario)

    def run(cell: Tuple[int, int]) -> ConfigEvaluation:
        return evaluate(scenario, ConcurrencyConfig(cell[0], cell[1], requests), budget)

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        trace = tuple(pool.map(run, cells))

    best = trace[0]
    for result in trace[1:]:
        if result.predicted_accuracy > best.predicted_accuracy:
            best = result
    logger.info(
        f"Grid search complete | T={budget}s | cells={len(trace)} | best={best.cell} | "
        f"accuracy={best.predicted_accuracy:.4f}"
    )
    return SearchResult(best=best, evaluations_used=len(trace), trace=trace)


def pareto_frontier(
    scenario: Scenario,
    t_grid: Sequence[float] | None = None,
    b_set: Iterable[int] | None = None,
    gamma_set: Iterable[int] | None = None,
    workers: int | None = None,
) -> List[Tuple[float, ConfigEvaluation]]:
    """Grid optimum per budget, keeping only points no shorter budget beats."""
    t_grid = settings.TTSLAT['PARETO_T_GRID'] if t_grid is None else t_grid
    budgets = sorted(set(float(t) for t in t_grid))
    if not budgets:
        raise ValueError("pareto_frontier needs at least one budget")

    frontier = []
    ceiling = -math.inf
    for budget in budgets:
        best = grid_search(scenario, budget, b_set, gamma_set, workers=workers).best
        if best.predicted_accuracy >= ceiling:
            frontier.append((budget, best))
            ceiling = best.predicted_accuracy
        else:
            logger.info(f"Dominated frontier point dropped | T={budget}s | best={best.cell}")
    return frontier


def strategy_sweeps(
    scenario: Scenario,
    t_grid: Sequence[float] | None = None,
    b_set: Iterable[int] | None = None,
    gamma_set: Iterable[int] | None = None,
    workers: int | None = None,
) -> Dict[str, List[Tuple[float, ConfigEvaluation]]]:
    """Single-axis baselines: sequential (1, 0), speculative (1, best gamma), parallel (best B, 0)."""
    cfg = settings.TTSLAT
    t_grid = cfg['PARETO_T_GRID'] if t_grid is None else t_grid
    b_set = cfg['B_SET'] if b_set is None else b_set
    gamma_set = cfg['GAMMA_SET'] if gamma_set is None else gamma_set
    requests = _requests(scenario)

    sweeps = {'sequential': [], 'speculative': [], 'parallel': []}
    for budget in sorted(set(float(t) for t in t_grid)):
        sweeps['sequential'].append(
            (budget, evaluate_config(scenario, ConcurrencyConfig(1, 0, requests), budget))
        )
        sweeps['speculative'].append(
            (budget, grid_search(scenario, budget, [1], gamma_set, workers=workers).best)
        )
        sweeps['parallel'].append(
            (budget, grid_search(scenario, budget, b_set, [0], workers=workers).best)
        )
    return sweeps


def check_frontier(
    frontier: List[Tuple[float, ConfigEvaluation]],
    sweeps: Dict[str, List[Tuple[float, ConfigEvaluation]]],
    b_set: Iterable[int] | None = None,
    gamma_set: Iterable[int] | None = None,
) -> None:
    """Raise ``InvariantError`` when a baseline inside the searched sets beats the frontier."""
    cfg = settings.TTSLAT
    b_values = set(cfg['B_SET'] if b_set is None else b_set)
    gamma_values = set(cfg['GAMMA_SET'] if gamma_set is None else gamma_set)
    optimum = dict(frontier)
    for name, sweep in sweeps.items():
        for budget, baseline in sweep:
            inside = baseline.config.branches in b_values and baseline.config.draft_len in gamma_values
            if not inside or budget not in optimum:
                continue
            if optimum[budget].predicted_accuracy < baseline.predicted_accuracy:
                raise InvariantError(
                    f"frontier below the {name} baseline at T={budget}s: "
                    f"{optimum[budget].predicted_accuracy:.6f} < {baseline.predicted_accuracy:.6f}"
                )
