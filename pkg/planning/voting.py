import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self):
            return str.__str__(self)
from functools import lru_cache
from typing import List, Sequence

import numpy as np
from django.conf import settings
from scipy.special import gammaln, xlogy

from planning.curves import EfficiencyCurve, curve_eval
from planning.errors import require

logger = logging.getLogger('planning')

CORRECT = 0


class TieRule(StrEnum):
    SPLIT_CREDIT = 'SplitCredit'
    FAVOR_CORRECT = 'FavorCorrect'
    FAVOR_WRONG = 'FavorWrong'


class Aggregation(StrEnum):
    MIN_MAX = 'MinMax'
    MIN_VOTE = 'MinVote'
    AVG_MAX = 'AvgMax'
    AVG_VOTE = 'AvgVote'
    PLAIN_VOTE = 'PlainVote'

    @property
    def uses_confidence(self) -> bool:
        return self is not Aggregation.PLAIN_VOTE


class EnumerationLimitError(ValueError):
    """Exact vote enumeration would exceed the configured outcome guard."""


@dataclass(frozen=True)
class AnswerModel:
    """Outcome distribution of one branch: answer 0 is correct, 1..k are distractors."""

    p_correct: float
    wrong_probs: tuple

    def __post_init__(self):
        object.__setattr__(self, 'wrong_probs', tuple(float(w) for w in self.wrong_probs))
        require(0.0 <= self.p_correct <= 1.0, 'p_correct', 'must be in [0, 1]')
        require(len(self.wrong_probs) >= 1, 'wrong_probs', 'needs at least one distractor')
        require(all(w >= 0.0 for w in self.wrong_probs), 'wrong_probs', 'entries must be >= 0')
        require(
            abs(self.p_correct + math.fsum(self.wrong_probs) - 1.0) <= 1e-12,
            'wrong_probs', 'must sum to 1 - p_correct',
        )

    @classmethod
    def uniform(cls, p_correct: float, distractors: int) -> 'AnswerModel':
        return cls(p_correct, (1.0 - p_correct) / distractors * np.ones(distractors))

    @property
    def distractors(self) -> int:
        return len(self.wrong_probs)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array((self.p_correct,) + self.wrong_probs)


@dataclass(frozen=True)
class BranchOutput:
    answer_id: int
    confidence: float

    def __post_init__(self):
        require(self.answer_id >= 0, 'answer_id', 'must be >= 0')
        require(0.0 <= self.confidence <= 1.0, 'confidence', 'must be in [0, 1]')


@dataclass(frozen=True)
class DifficultyStratum:
    weight: float
    token_scale: float

    def __post_init__(self):
        require(0.0 < self.weight <= 1.0, 'weight', 'must be in (0, 1]')
        require(self.token_scale > 0.0, 'token_scale', 'must be > 0')


@dataclass(frozen=True)
class BetaShape:
    a: float
    b: float

    def __post_init__(self):
        require(self.a > 0.0, 'a', 'must be > 0')
        require(self.b > 0.0, 'b', 'must be > 0')


@dataclass(frozen=True)
class AnswerProfile:
    """Scenario-level answer model; ``at(p)`` pins it to one branch accuracy."""

    distractors: int = 4
    wrong_weights: tuple = ()
    strata: tuple = (DifficultyStratum(1.0, 1.0),)
    correct_confidence: BetaShape = field(default_factory=lambda: BetaShape(8.0, 2.0))
    wrong_confidence: BetaShape = field(default_factory=lambda: BetaShape(4.0, 4.0))

    def __post_init__(self):
        require(self.distractors >= 1, 'distractors', 'must be >= 1')
        weights = tuple(float(w) for w in self.wrong_weights) or (1.0,) * self.distractors
        object.__setattr__(self, 'wrong_weights', weights)
        object.__setattr__(self, 'strata', tuple(self.strata))
        require(len(weights) == self.distractors, 'wrong_weights', 'must have one entry per distractor')
        require(all(w >= 0.0 for w in weights) and sum(weights) > 0.0, 'wrong_weights', 'must be >= 0 with a positive sum')
        require(len(self.strata) >= 1, 'strata', 'needs at least one stratum')
        require(
            abs(math.fsum(s.weight for s in self.strata) - 1.0) <= 1e-9,
            'strata', 'weights must sum to 1',
        )

    @property
    def wrong_shape(self) -> np.ndarray:
        w = np.array(self.wrong_weights, dtype=float)
        return w / w.sum()

    def at(self, p_correct: float) -> AnswerModel:
        wrong = (1.0 - p_correct) * self.wrong_shape
        # absorb rounding so the invariant holds to 1e-12
        wrong[-1] = max(0.0, 1.0 - p_correct - math.fsum(wrong[:-1]))
        return AnswerModel(p_correct, tuple(wrong))

    def stratum_accuracies(self, curve: EfficiencyCurve, tokens: float) -> List[float]:
        """Single-branch accuracy in each stratum after ``tokens`` tokens."""
        if tokens < 1:
            return [curve.a_min] * len(self.strata)
        return [
            curve_eval(curve, tokens / s.token_scale) if tokens >= s.token_scale else curve.a_min
            for s in self.strata
        ]


def _credit(counts: np.ndarray, tie_rule: TieRule) -> np.ndarray:
    leader = counts.max(axis=1)
    correct_leads = counts[:, CORRECT] == leader
    tied = (counts == leader[:, None]).sum(axis=1)
    if tie_rule is TieRule.SPLIT_CREDIT:
        return np.where(correct_leads, 1.0 / tied, 0.0)
    if tie_rule is TieRule.FAVOR_CORRECT:
        return correct_leads.astype(float)
    return (correct_leads & (tied == 1)).astype(float)


def _compositions(total: int, parts: int) -> np.ndarray:
    """Every vector of ``parts`` nonnegative integers summing to ``total``."""
    rows = np.zeros((1, 0), dtype=np.int64)
    remaining = np.array([total], dtype=np.int64)
    for _ in range(parts - 1):
        choices = remaining + 1
        parent = np.repeat(np.arange(len(rows)), choices)
        starts = np.repeat(np.cumsum(choices) - choices, choices)
        value = np.arange(choices.sum()) - starts
        rows = np.column_stack([rows[parent], value])
        remaining = remaining[parent] - value
    return np.column_stack([rows, remaining])


def _build_outcome_table(branches: int, distractors: int, tie_rule: TieRule):
    counts = _compositions(branches, distractors + 1)
    log_coef = gammaln(branches + 1) - gammaln(counts + 1).sum(axis=1)
    credit = _credit(counts, tie_rule)
    counts.setflags(write=False)
    return counts, log_coef, credit


_cached_outcome_table = lru_cache(maxsize=32)(_build_outcome_table)


def _outcome_table(branches: int, distractors: int, tie_rule: TieRule):
    """Outcome counts, log multinomial coefficients and credit; only small tables are kept."""
    if math.comb(branches + distractors, distractors) <= settings.TTSLAT['OUTCOME_CACHE_LIMIT']:
        return _cached_outcome_table(branches, distractors, tie_rule)
    return _build_outcome_table(branches, distractors, tie_rule)


def _check_guard(branches: int, distractors: int, guard: int | None) -> None:
    guard = guard if guard is not None else settings.TTSLAT['ENUMERATION_GUARD']
    outcomes = math.comb(branches + distractors, distractors)
    if outcomes > guard:
        raise EnumerationLimitError(
            f"exact vote enumeration needs {outcomes} outcomes for B={branches}, k={distractors}; guard is {guard}"
        )


def outcome_probabilities(model: AnswerModel, branches: int, guard: int | None = None):
    """All multinomial vote-count vectors for ``branches`` with their probabilities."""
    if branches < 1:
        raise ValueError(f"branches must be >= 1, got {branches}")
    _check_guard(branches, model.distractors, guard)
    counts, log_coef, _ = _outcome_table(branches, model.distractors, TieRule.SPLIT_CREDIT)
    return counts, np.exp(log_coef + xlogy(counts, model.probabilities).sum(axis=1))


def vote_accuracy_exact(
    model: AnswerModel,
    branches: int,
    tie_rule: TieRule = TieRule.SPLIT_CREDIT,
    guard: int | None = None,
) -> float:
    """Probability that the correct answer wins the plurality vote of ``branches`` samples."""
    if branches < 1:
        raise ValueError(f"branches must be >= 1, got {branches}")
    if branches == 1:
        return model.p_correct
    tie_rule = TieRule(tie_rule)
    _check_guard(branches, model.distractors, guard)
    counts, log_coef, credit = _outcome_table(branches, model.distractors, tie_rule)
    probs = np.exp(log_coef + xlogy(counts, model.probabilities).sum(axis=1))
    return float(min(1.0, max(0.0, math.fsum(probs * credit))))


def vote_accuracy_mc(
    model: AnswerModel,
    branches: int,
    tie_rule: TieRule = TieRule.SPLIT_CREDIT,
    trials: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo plurality-vote accuracy and its standard error.

    Trials are drawn in fixed-size chunks, each from a Philox stream keyed by
    (seed, chunk index), so the estimate only depends on (trials, seed).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    tie_rule = TieRule(tie_rule)
    chunk = settings.TTSLAT['MC_CHUNK_TRIALS']
    probs = model.probabilities
    total = 0.0
    total_sq = 0.0
    for index, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))
        counts = rng.multinomial(branches, probs, size=size)
        credit = _credit(counts, tie_rule)
        total += float(credit.sum())
        total_sq += float((credit ** 2).sum())
    mean = total / trials
    variance = max(0.0, total_sq / trials - mean ** 2)
    return mean, math.sqrt(variance / trials)


def vote_accuracy(model: AnswerModel, branches: int, tie_rule: TieRule = TieRule.SPLIT_CREDIT) -> float:
    """Exact vote accuracy, or the seeded Monte Carlo estimate above the enumeration guard."""
    try:
        return vote_accuracy_exact(model, branches, tie_rule)
    except EnumerationLimitError as e:
        cfg = settings.TTSLAT
        logger.warning(f"Falling back to Monte Carlo vote | reason={e}")
        estimate, _ = vote_accuracy_mc(
            model, branches, tie_rule, trials=cfg['MC_FALLBACK_TRIALS'], seed=cfg['DEFAULT_SEED'],
        )
        return estimate


def mixture_vote_accuracy(
    profile: AnswerProfile,
    curve: EfficiencyCurve,
    tokens: float,
    branches: int,
    tie_rule: TieRule = TieRule.SPLIT_CREDIT,
) -> float:
    """Dataset-level vote accuracy: the stratum-weighted mean over problem difficulty."""
    accuracies = profile.stratum_accuracies(curve, tokens)
    return math.fsum(
        stratum.weight * vote_accuracy(profile.at(p), branches, tie_rule)
        for stratum, p in zip(profile.strata, accuracies)
    )


def aggregate_confidence(outputs: Sequence[BranchOutput], strategy: Aggregation) -> int:
    """Pick one answer id from branch outputs; ties go to the smaller answer id."""
    if not outputs:
        raise ValueError("aggregate_confidence needs at least one branch output")
    strategy = Aggregation(strategy)
    groups = defaultdict(list)
    for output in outputs:
        groups[output.answer_id].append(output.confidence)

    def score(answer_id: int) -> float:
        confidences = groups[answer_id]
        if strategy is Aggregation.PLAIN_VOTE:
            return float(len(confidences))
        if strategy in (Aggregation.MIN_MAX, Aggregation.MIN_VOTE):
            weight = min(confidences)
        else:
            weight = float(np.mean(confidences))
        if strategy in (Aggregation.MIN_VOTE, Aggregation.AVG_VOTE):
            return weight * len(confidences)
        return weight

    return min(groups, key=lambda answer_id: (-score(answer_id), answer_id))
