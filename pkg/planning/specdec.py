import logging
from dataclasses import dataclass

from planning.profiles import HardwareProfile, SpecDecPair
from planning.roofline import step_cost

logger = logging.getLogger('planning')


@dataclass(frozen=True)
class CycleModel:
    gamma: int
    expected_tokens: float
    cycle_time: float
    effective_rate: float
    speedup_vs_plain: float


def expected_tokens_per_cycle(alpha: float, gamma: int) -> float:
    """Tokens emitted by one draft/verify cycle: accepted prefix plus one correction token."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"acceptance rate must be in [0, 1), got {alpha}")
    if gamma < 0:
        raise ValueError(f"draft length must be >= 0, got {gamma}")
    if gamma == 0 or alpha == 0.0:
        return 1.0
    return (1.0 - alpha ** (gamma + 1)) / (1.0 - alpha)


def plain_speedup(alpha: float, gamma: int, cost_ratio: float) -> float:
    """Speedup when a draft step costs ``cost_ratio`` target steps and verification costs one."""
    if cost_ratio < 0:
        raise ValueError(f"cost_ratio must be >= 0, got {cost_ratio}")
    return expected_tokens_per_cycle(alpha, gamma) / (cost_ratio * gamma + 1.0)


def cycle_model(
    hw: HardwareProfile,
    pair: SpecDecPair,
    branches: int,
    gamma: int,
    seq_len: float,
    requests: int = 1,
) -> CycleModel:
    if gamma < 1:
        raise ValueError("cycle_model needs draft length >= 1; plain decoding goes through roofline.step_cost")
    sequences = branches * requests
    draft_step = step_cost(hw, pair.draft, sequences, 1, seq_len).step_time
    verify_step = step_cost(hw, pair.target, sequences, gamma + 1, seq_len).step_time
    plain_step = step_cost(hw, pair.target, sequences, 1, seq_len).step_time

    expected = expected_tokens_per_cycle(pair.acceptance_rate, gamma)
    cycle_time = gamma * draft_step + verify_step
    rate = expected / cycle_time
    return CycleModel(
        gamma=gamma,
        expected_tokens=expected,
        cycle_time=cycle_time,
        effective_rate=rate,
        speedup_vs_plain=rate * plain_step,
    )


def best_gamma(
    hw: HardwareProfile,
    pair: SpecDecPair,
    branches: int,
    seq_len: float,
    gamma_max: int,
    requests: int = 1,
) -> tuple[int, CycleModel]:
    """Draft length in 1..gamma_max with the highest speedup; ties keep the shorter draft."""
    if gamma_max < 1:
        raise ValueError(f"gamma_max must be >= 1, got {gamma_max}")
    best = None
    for gamma in range(1, gamma_max + 1):
        model = cycle_model(hw, pair, branches, gamma, seq_len, requests)
        if best is None or model.speedup_vs_plain > best.speedup_vs_plain:
            best = model
    logger.debug(
        f"Best draft length | target={pair.target.name} | alpha={pair.acceptance_rate} | "
        f"B={branches} | gamma={best.gamma} | speedup={best.speedup_vs_plain:.4f}"
    )
    return best.gamma, best
