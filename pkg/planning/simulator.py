import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from django.conf import settings

from planning.curves import EfficiencyCurve, curve_eval
from planning.planner import worker_count
from planning.profiles import ConcurrencyConfig, Scenario
from planning.roofline import Bound, step_cost, step_time
from planning.voting import CORRECT, BranchOutput, TieRule, aggregate_confidence

logger = logging.getLogger('planning')


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    tokens_per_branch: Tuple[int, ...]
    cycles: int
    elapsed: float
    chosen_answer: int
    correct: bool
    stratum: int = 0


@dataclass(frozen=True)
class SimulationSummary:
    accuracy_estimate: float
    std_error: float
    mean_tokens: float
    mean_cycles: float
    trials: int
    seed: int

    @property
    def tokens_per_cycle(self) -> float:
        return self.mean_tokens / self.mean_cycles if self.mean_cycles else 0.0


@dataclass(frozen=True)
class TimelineEvent:
    event: str
    elapsed_s: float
    branch: int | None
    tokens: int
    seq_len: float
    bound: Bound


@dataclass(frozen=True)
class _Batch:
    """Consecutive trials; row i belongs to ``trial_ids[i]``."""

    trial_ids: range
    tokens: np.ndarray  # (n, B)
    cycles: np.ndarray
    elapsed: np.ndarray  # decode seconds, prefill excluded
    chosen: np.ndarray
    strata: np.ndarray


def trial_streams(seed: int, trial_id: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Counter-based timeline and answer streams for one trial.

    Both are children of SeedSequence([seed, trial_id]), so a trial draws the
    same numbers whichever batch or worker runs it.
    """
    timeline, answers = np.random.SeedSequence([seed, trial_id]).spawn(2)
    return np.random.Generator(np.random.Philox(timeline)), np.random.Generator(np.random.Philox(answers))


def _cycle_durations(scenario: Scenario, config: ConcurrencyConfig, seq_lens):
    hw, target, draft = scenario.hardware, scenario.pair.target, scenario.pair.draft
    sequences, gamma = config.sequences, config.draft_len
    if gamma == 0:
        return step_time(hw, target, sequences, 1, seq_lens)
    return gamma * step_time(hw, draft, sequences, 1, seq_lens) + step_time(hw, target, sequences, gamma + 1, seq_lens)


def _emitted_tokens(streams: Sequence[np.random.Generator], alpha: float, gamma: int, shape: tuple) -> np.ndarray:
    """Accepted draft prefix plus one token, per (trial, cycle, branch); truncated geometric."""
    if gamma == 0 or alpha == 0.0:
        return np.ones((len(streams),) + shape, dtype=np.int64)
    uniforms = np.stack([rng.random(shape) for rng in streams])
    accepted = np.floor(np.log1p(-uniforms) / math.log(alpha))
    return np.minimum(accepted, gamma).astype(np.int64) + 1


def _first_cycle(scenario: Scenario, config: ConcurrencyConfig) -> float:
    return float(_cycle_durations(scenario, config, float(scenario.prompt_len)))


def _block_cycles(scenario: Scenario, config: ConcurrencyConfig, budget: float) -> int:
    """Cycles drawn per trial at a time: the whole horizon unless that exceeds SIM_BLOCK_CELLS."""
    # cycles only get slower as KV grows, so the first cycle bounds the horizon
    horizon = int(max(0.0, budget - scenario.prefill_offset) // _first_cycle(scenario, config)) + 1
    return max(1, min(horizon, settings.TTSLAT['SIM_BLOCK_CELLS'] // config.branches))


def _batch_trials(scenario: Scenario, config: ConcurrencyConfig, budget: float) -> int:
    cells = _block_cycles(scenario, config, budget) * config.branches
    return max(1, settings.TTSLAT['SIM_BATCH_CELLS'] // cells)


def _play_timelines(
    scenario: Scenario,
    config: ConcurrencyConfig,
    budget: float,
    streams: Sequence[np.random.Generator],
    cycle_log: list | None = None,
):
    """Shared batched clock per trial: a cycle that would overrun the budget never happens.

    Returns tokens per branch, completed cycles and decode seconds, one row per
    stream. With ``cycle_log`` (single trial only) every completed cycle is
    appended as (end, seq_len, tokens over all branches).
    """
    n, branches = len(streams), config.branches
    prompt = float(scenario.prompt_len)
    decode_budget = budget - scenario.prefill_offset
    tokens = np.zeros((n, branches), dtype=np.int64)
    cycles = np.zeros(n, dtype=np.int64)
    elapsed = np.zeros(n)
    if decode_budget < _first_cycle(scenario, config):
        return tokens, cycles, elapsed

    block = _block_cycles(scenario, config, budget)
    alpha, gamma = scenario.pair.acceptance_rate, config.draft_len
    cap = scenario.max_tokens_per_branch
    cap = None if cap is None else int(math.floor(cap))

    active = np.arange(n)
    while active.size:
        emitted = _emitted_tokens([streams[i] for i in active], alpha, gamma, (block, branches))
        cumulative = tokens[active, None, :] + np.cumsum(emitted, axis=1)
        seq_lens = prompt + (cumulative - emitted).sum(axis=2) / branches
        ends = elapsed[active, None] + np.cumsum(_cycle_durations(scenario, config, seq_lens), axis=1)
        done = (ends <= decode_budget).sum(axis=1)
        finished = done < block
        if cap is not None:
            saturated = cumulative.min(axis=2) >= cap
            hit = saturated.argmax(axis=1) + 1
            capped = saturated.any(axis=1) & (hit <= done)
            done = np.where(capped, hit, done)
            finished |= capped
            cumulative = np.minimum(cumulative, cap)

        if cycle_log is not None:
            count = int(done[0])
            kept = np.diff(cumulative[0, :count], axis=0, prepend=tokens[active[0]][None, :])
            cycle_log.extend(zip(ends[0, :count], seq_lens[0, :count], kept.sum(axis=1)))

        rows = np.flatnonzero(done > 0)
        last = done[rows] - 1
        tokens[active[rows]] = cumulative[rows, last]
        elapsed[active[rows]] = ends[rows, last]
        cycles[active] += done
        active = active[~finished]
    return tokens, cycles, elapsed


def _branch_accuracies(curve: EfficiencyCurve, scaled: np.ndarray) -> np.ndarray:
    reached = scaled >= 1.0
    accuracies = np.full(scaled.shape, curve.a_min, dtype=float)
    if reached.any():
        accuracies[reached] = curve_eval(curve, scaled[reached])
    return accuracies


def _plurality(answers: np.ndarray, distractors: int, tie_rule: TieRule, tie_draws: np.ndarray) -> np.ndarray:
    """Winning answer per row of ``answers``; SplitCredit picks uniformly among the leaders."""
    counts = (answers[:, :, None] == np.arange(distractors + 1)).sum(axis=1)
    leaders = counts == counts.max(axis=1, keepdims=True)
    tied = leaders.sum(axis=1)
    first = leaders.argmax(axis=1)
    if tie_rule is TieRule.SPLIT_CREDIT:
        pick = np.minimum((tie_draws * tied).astype(np.int64), tied - 1)
        rank = np.cumsum(leaders, axis=1) - 1
        return (leaders & (rank == pick[:, None])).argmax(axis=1)
    if tie_rule is TieRule.FAVOR_CORRECT:
        return np.where(leaders[:, CORRECT], CORRECT, first)
    wrong_leaders = leaders.copy()
    wrong_leaders[:, CORRECT] = False
    return np.where(tied == 1, first, wrong_leaders.argmax(axis=1))


def _confidence_vote(scenario: Scenario, answers: np.ndarray, correct: np.ndarray, rng) -> int:
    profile = scenario.answer_model
    right = rng.beta(profile.correct_confidence.a, profile.correct_confidence.b, answers.size)
    wrong = rng.beta(profile.wrong_confidence.a, profile.wrong_confidence.b, answers.size)
    confidences = np.where(correct, right, wrong)
    outputs = [BranchOutput(int(a), float(c)) for a, c in zip(answers, confidences)]
    return aggregate_confidence(outputs, scenario.aggregation)


def _sample_answers(scenario: Scenario, tokens: np.ndarray, streams: Sequence[np.random.Generator]):
    """Stratum, branch answers and the aggregated choice for each row of ``tokens``."""
    profile = scenario.answer_model
    branches = tokens.shape[1]
    # stratum, tie-break, correctness per branch, distractor per branch
    draws = np.stack([rng.random(2 + 2 * branches) for rng in streams])

    weights = np.array([s.weight for s in profile.strata])
    strata = np.minimum(
        np.searchsorted(np.cumsum(weights / weights.sum()), draws[:, 0], side='right'), len(weights) - 1,
    )
    scales = np.array([s.token_scale for s in profile.strata])[strata]
    accuracies = _branch_accuracies(scenario.curve, tokens / scales[:, None])
    correct = draws[:, 2:2 + branches] < accuracies
    wrong = np.minimum(
        np.searchsorted(np.cumsum(profile.wrong_shape), draws[:, 2 + branches:], side='right'),
        profile.distractors - 1,
    ) + 1
    answers = np.where(correct, CORRECT, wrong)

    if scenario.aggregation.uses_confidence:
        chosen = np.array([
            _confidence_vote(scenario, answers[i], correct[i], streams[i]) for i in range(len(streams))
        ])
    else:
        chosen = _plurality(answers, profile.distractors, scenario.tie_rule, draws[:, 1])
    return chosen, strata


def _run_batch(
    scenario: Scenario,
    config: ConcurrencyConfig,
    budget: float,
    seed: int,
    trial_ids: range,
    cycle_log: list | None = None,
) -> _Batch:
    streams = [trial_streams(seed, trial_id) for trial_id in trial_ids]
    tokens, cycles, elapsed = _play_timelines(scenario, config, budget, [s[0] for s in streams], cycle_log)
    chosen, strata = _sample_answers(scenario, tokens, [s[1] for s in streams])
    return _Batch(trial_ids, tokens, cycles, elapsed, chosen, strata)


def _record(scenario: Scenario, batch: _Batch, row: int = 0) -> TrialRecord:
    chosen = int(batch.chosen[row])
    return TrialRecord(
        trial_id=batch.trial_ids[row],
        tokens_per_branch=tuple(int(t) for t in batch.tokens[row]),
        cycles=int(batch.cycles[row]),
        elapsed=scenario.prefill_offset + float(batch.elapsed[row]),
        chosen_answer=chosen,
        correct=chosen == CORRECT,
        stratum=int(batch.strata[row]),
    )


def run_trial(
    scenario: Scenario,
    config: ConcurrencyConfig,
    budget: float | None = None,
    seed: int | None = None,
    trial_id: int = 0,
) -> TrialRecord:
    budget = scenario.budget if budget is None else budget
    seed = settings.TTSLAT['DEFAULT_SEED'] if seed is None else seed
    batch = _run_batch(scenario, config, budget, seed, range(trial_id, trial_id + 1))
    return _record(scenario, batch)


def simulate(
    scenario: Scenario,
    config: ConcurrencyConfig,
    budget: float | None = None,
    trials: int | None = None,
    seed: int | None = None,
    workers: int | None = None,
) -> SimulationSummary:
    """Monte Carlo accuracy of ``config``: sampled acceptance, timeline, answers and vote.

    Trials run in batches sized to SIM_BATCH_CELLS; every trial reads only its
    own streams, so the summary depends on (trials, seed) alone.
    """
    cfg = settings.TTSLAT
    budget = scenario.budget if budget is None else budget
    trials = cfg['DEFAULT_TRIALS'] if trials is None else trials
    seed = cfg['DEFAULT_SEED'] if seed is None else seed
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if seed < 0:
        raise ValueError(f"seed must be >= 0, got {seed}")

    size = _batch_trials(scenario, config, budget)
    ranges = [range(start, min(start + size, trials)) for start in range(0, trials, size)]
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        batches: List[_Batch] = list(pool.map(lambda ids: _run_batch(scenario, config, budget, seed, ids), ranges))

    hits = sum(int((b.chosen == CORRECT).sum()) for b in batches)
    accuracy = hits / trials
    branch_means = np.concatenate([b.tokens.sum(axis=1) / config.branches for b in batches])
    summary = SimulationSummary(
        accuracy_estimate=accuracy,
        std_error=math.sqrt(accuracy * (1.0 - accuracy) / trials),
        mean_tokens=math.fsum(branch_means.tolist()) / trials,
        mean_cycles=sum(int(b.cycles.sum()) for b in batches) / trials,
        trials=trials,
        seed=seed,
    )
    logger.info(
        f"Simulation complete | B={config.branches} | gamma={config.draft_len} | T={budget}s | "
        f"trials={trials} | seed={seed} | batches={len(ranges)} | "
        f"accuracy={summary.accuracy_estimate:.4f} | se={summary.std_error:.4f}"
    )
    return summary


def simulate_trace(
    scenario: Scenario,
    config: ConcurrencyConfig,
    budget: float | None = None,
    seed: int | None = None,
    trial_id: int = 0,
) -> List[TimelineEvent]:
    """Cycle-by-cycle events of one trial, replayable from (seed, trial_id)."""
    budget = scenario.budget if budget is None else budget
    seed = settings.TTSLAT['DEFAULT_SEED'] if seed is None else seed
    cycle_log = []
    _run_batch(scenario, config, budget, seed, range(trial_id, trial_id + 1), cycle_log)
    hw, target = scenario.hardware, scenario.pair.target
    verify_tokens = config.draft_len + 1

    events = [TimelineEvent(
        event='start',
        elapsed_s=scenario.prefill_offset,
        branch=None,
        tokens=0,
        seq_len=float(scenario.prompt_len),
        bound=step_cost(hw, target, config.sequences, verify_tokens, scenario.prompt_len).bound,
    )]
    for end, seq_len, kept in cycle_log:
        events.append(TimelineEvent(
            event='cycle',
            elapsed_s=scenario.prefill_offset + float(end),
            branch=None,
            tokens=int(kept),
            seq_len=float(seq_len),
            bound=step_cost(hw, target, config.sequences, verify_tokens, float(seq_len)).bound,
        ))
    return events
