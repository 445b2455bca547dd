import logging
import math
from dataclasses import dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self):
            return str.__str__(self)
from typing import Iterable, List

import numpy as np

from planning.profiles import ConcurrencyConfig, HardwareProfile, ModelProfile, SpecDecPair

logger = logging.getLogger('planning')


class Bound(StrEnum):
    MEMORY = 'MemoryBound'
    COMPUTE = 'ComputeBound'


@dataclass(frozen=True)
class StepCost:
    """One batched decode step under the roofline: the slower of memory traffic and arithmetic."""

    mem_time: float
    compute_time: float
    step_time: float
    bound: Bound
    mem_bytes: float
    flops: float
    over_capacity: bool = False


@dataclass(frozen=True)
class DecodeTimeline:
    tokens: float
    elapsed: float
    seq_len: float
    steps: int
    bound: Bound
    peak_memory: float


@dataclass(frozen=True)
class ThroughputCell:
    requests: int
    branches: int
    sequences: int
    step_time: float
    throughput: float
    bound: Bound
    over_capacity: bool


def _mem_time(hw: HardwareProfile, model: ModelProfile, sequences, seq_len):
    return (model.weights_bytes + sequences * model.kv_bytes_per_token * seq_len) / hw.effective_bandwidth


def _compute_time(hw: HardwareProfile, model: ModelProfile, sequences, tokens_per_seq):
    return model.flops_per_token * sequences * tokens_per_seq / hw.effective_compute


def step_time(hw: HardwareProfile, model: ModelProfile, sequences, tokens_per_seq, seq_len):
    """``step_cost(...).step_time`` without building the record; accepts numpy arrays for ``seq_len``."""
    mem = _mem_time(hw, model, sequences, seq_len)
    compute = _compute_time(hw, model, sequences, tokens_per_seq)
    if isinstance(mem, np.ndarray):
        return np.maximum(mem, compute)
    return max(mem, compute)


def step_cost(
    hw: HardwareProfile,
    model: ModelProfile,
    sequences: int,
    tokens_per_seq: int,
    seq_len: float,
) -> StepCost:
    if sequences < 1:
        raise ValueError(f"sequences must be >= 1, got {sequences}")
    if tokens_per_seq < 1:
        raise ValueError(f"tokens_per_seq must be >= 1, got {tokens_per_seq}")
    if seq_len < 0:
        raise ValueError(f"seq_len must be >= 0, got {seq_len}")

    mem_bytes = model.weights_bytes + sequences * model.kv_bytes_per_token * seq_len
    flops = model.flops_per_token * sequences * tokens_per_seq
    mem_time = _mem_time(hw, model, sequences, seq_len)
    compute_time = _compute_time(hw, model, sequences, tokens_per_seq)
    return StepCost(
        mem_time=mem_time,
        compute_time=compute_time,
        step_time=max(mem_time, compute_time),
        bound=Bound.MEMORY if mem_time >= compute_time else Bound.COMPUTE,
        mem_bytes=mem_bytes,
        flops=flops,
        over_capacity=mem_bytes > hw.mem_capacity,
    )


def throughput(hw: HardwareProfile, model: ModelProfile, config: ConcurrencyConfig, seq_len: float) -> float:
    """Output tokens per second for plain decoding, one token per sequence per step."""
    if config.speculative:
        raise ValueError("throughput models plain decoding; use specdec.cycle_model for draft_len >= 1")
    cost = step_cost(hw, model, config.sequences, 1, seq_len)
    return config.sequences / cost.step_time


def crossover_sequences(
    hw: HardwareProfile,
    model: ModelProfile,
    tokens_per_seq: int = 1,
    seq_len: float = 0,
) -> int | None:
    """Smallest sequence count with compute_time >= mem_time, or None when compute never catches up."""
    compute_per_seq = model.flops_per_token * tokens_per_seq / hw.effective_compute
    kv_per_seq = model.kv_bytes_per_token * seq_len / hw.effective_bandwidth
    slope = compute_per_seq - kv_per_seq
    if not slope > 0:
        return None

    def crossed(sequences: int) -> bool:
        return _compute_time(hw, model, sequences, tokens_per_seq) >= _mem_time(hw, model, sequences, seq_len)

    # closed form, then settle rounding at the boundary
    guess = max(1, math.ceil(model.weights_bytes / hw.effective_bandwidth / slope))
    while guess > 1 and crossed(guess - 1):
        guess -= 1
    while not crossed(guess):
        guess += 1
    return guess


def decode_timeline(
    hw: HardwareProfile,
    pair: SpecDecPair,
    config: ConcurrencyConfig,
    budget: float,
    prompt_len: int = 0,
    max_tokens: float | None = None,
) -> DecodeTimeline:
    """Deterministic expected-value decode of every branch within ``budget`` seconds.

    KV is recharged each step as the sequence grows. Speculative cycles advance
    by the expected accepted tokens; the step that overruns the budget (or the
    token cap) is prorated.
    """
    from planning.specdec import expected_tokens_per_cycle

    sequences = config.sequences
    gamma = config.draft_len
    target, draft = pair.target, pair.draft
    per_cycle = expected_tokens_per_cycle(pair.acceptance_rate, gamma)

    elapsed = 0.0
    tokens = 0.0
    seq_len = float(prompt_len)
    steps = 0
    while budget > 0:
        if gamma == 0:
            duration = step_time(hw, target, sequences, 1, seq_len)
        else:
            duration = (
                gamma * step_time(hw, draft, sequences, 1, seq_len)
                + step_time(hw, target, sequences, gamma + 1, seq_len)
            )
        if max_tokens is not None and tokens + per_cycle >= max_tokens:
            fraction = (max_tokens - tokens) / per_cycle
            if elapsed + duration * fraction <= budget:
                elapsed += duration * fraction
                tokens = float(max_tokens)
                seq_len = prompt_len + tokens
                steps += 1
                break
        if elapsed + duration <= budget:
            elapsed += duration
            tokens += per_cycle
            seq_len += per_cycle
            steps += 1
            continue
        fraction = (budget - elapsed) / duration
        tokens += per_cycle * fraction
        seq_len += per_cycle * fraction
        elapsed = budget
        break

    final = step_cost(hw, target, sequences, gamma + 1, seq_len)
    resident = target.weights_bytes + sequences * target.kv_bytes_per_token * seq_len
    if gamma > 0:
        resident += draft.weights_bytes + sequences * draft.kv_bytes_per_token * seq_len
    return DecodeTimeline(
        tokens=tokens,
        elapsed=elapsed,
        seq_len=seq_len,
        steps=steps,
        bound=final.bound,
        peak_memory=resident,
    )


def tokens_within_budget(
    hw: HardwareProfile,
    pair: SpecDecPair,
    config: ConcurrencyConfig,
    budget: float,
    prefill_offset: float = 0.0,
    prompt_len: int = 0,
    max_tokens: float | None = None,
) -> float:
    """Expected generated tokens per branch within ``budget`` seconds of wall time."""
    timeline = decode_timeline(hw, pair, config, budget - prefill_offset, prompt_len, max_tokens)
    return timeline.tokens


def throughput_sweep(
    hw: HardwareProfile,
    model: ModelProfile,
    branches: Iterable[int],
    requests: Iterable[int] = (1,),
    seq_len: float = 0,
) -> List[ThroughputCell]:
    cells = []
    for r in sorted(set(requests)):
        for b in sorted(set(branches)):
            config = ConcurrencyConfig(branches=b, requests=r)
            cost = step_cost(hw, model, config.sequences, 1, seq_len)
            cells.append(ThroughputCell(
                requests=r,
                branches=b,
                sequences=config.sequences,
                step_time=cost.step_time,
                throughput=config.sequences / cost.step_time,
                bound=cost.bound,
                over_capacity=cost.over_capacity,
            ))
            if cost.over_capacity:
                logger.warning(
                    f"Configuration exceeds memory capacity | model={model.name} | requests={r} | "
                    f"branches={b} | bytes={cost.mem_bytes:.4g}"
                )
    return cells
