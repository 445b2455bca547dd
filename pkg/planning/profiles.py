import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from django.conf import settings

from planning.curves import EfficiencyCurve
from planning.errors import ScenarioError, require
from planning.voting import Aggregation, AnswerProfile, TieRule

logger = logging.getLogger('planning')


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    mem_bandwidth: float
    peak_compute: float
    mem_capacity: float
    bandwidth_efficiency: float = 1.0
    compute_efficiency: float = 1.0

    def __post_init__(self):
        require(self.mem_bandwidth > 0, 'mem_bandwidth', 'must be > 0')
        require(self.peak_compute > 0, 'peak_compute', 'must be > 0')
        require(self.mem_capacity > 0, 'mem_capacity', 'must be > 0')
        require(0 < self.bandwidth_efficiency <= 1, 'bandwidth_efficiency', 'must be in (0, 1]')
        require(0 < self.compute_efficiency <= 1, 'compute_efficiency', 'must be in (0, 1]')

    @property
    def effective_bandwidth(self) -> float:
        return self.mem_bandwidth * self.bandwidth_efficiency

    @property
    def effective_compute(self) -> float:
        return self.peak_compute * self.compute_efficiency


@dataclass(frozen=True)
class ModelProfile:
    name: str
    param_count: int
    kv_bytes_per_token: float
    bytes_per_param: float = 2.0
    flops_per_token: float | None = None

    def __post_init__(self):
        require(self.param_count > 0, 'param_count', 'must be > 0')
        require(self.bytes_per_param > 0, 'bytes_per_param', 'must be > 0')
        require(self.kv_bytes_per_token > 0, 'kv_bytes_per_token', 'must be > 0')
        if self.flops_per_token is None:
            # dense decoder: one multiply-add per parameter per token
            object.__setattr__(self, 'flops_per_token', 2.0 * self.param_count)
        require(self.flops_per_token > 0, 'flops_per_token', 'must be > 0')

    @property
    def weights_bytes(self) -> float:
        return self.param_count * self.bytes_per_param


@dataclass(frozen=True)
class SpecDecPair:
    target: ModelProfile
    draft: ModelProfile
    acceptance_rate: float

    def __post_init__(self):
        require(0.0 <= self.acceptance_rate < 1.0, 'acceptance_rate', 'must be in [0, 1)')
        if self.draft.param_count > self.target.param_count:
            logger.warning(
                f"Draft model larger than target | draft={self.draft.name} | target={self.target.name}"
            )


@dataclass(frozen=True)
class ConcurrencyConfig:
    branches: int = 1
    draft_len: int = 0
    requests: int = 1

    def __post_init__(self):
        require(self.branches >= 1, 'branches', 'must be >= 1')
        require(self.draft_len >= 0, 'draft_len', 'must be >= 0')
        require(self.requests >= 1, 'requests', 'must be >= 1')

    @property
    def sequences(self) -> int:
        return self.requests * self.branches

    @property
    def speculative(self) -> bool:
        return self.draft_len > 0


@dataclass(frozen=True)
class Scenario:
    hardware: HardwareProfile
    pair: SpecDecPair
    curve: EfficiencyCurve
    budget: float
    answer_model: AnswerProfile = field(default_factory=AnswerProfile)
    max_tokens_per_branch: float | None = None
    prefill_offset: float = 0.0
    prompt_len: int = 0
    default_config: ConcurrencyConfig = field(default_factory=ConcurrencyConfig)
    tie_rule: TieRule = TieRule.SPLIT_CREDIT
    aggregation: Aggregation = Aggregation.PLAIN_VOTE
    name: str = ''
    calibration: Dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(self, 'tie_rule', TieRule(self.tie_rule))
        object.__setattr__(self, 'aggregation', Aggregation(self.aggregation))
        require(math.isfinite(self.budget) and self.budget > 0, 'budget', 'must be > 0')
        require(self.prefill_offset >= 0, 'prefill_offset', 'must be >= 0')
        require(self.prompt_len >= 0, 'prompt_len', 'must be >= 0')
        require(
            self.max_tokens_per_branch is None or self.max_tokens_per_branch >= 1,
            'max_tokens_per_branch', 'must be >= 1 when set',
        )


GB = 1e9

# Round numbers: 2 bytes per parameter; KV per token from the
# per-layer key/value width of each architecture.
_BUILTIN_MODELS = {
    's1.1-32B': ModelProfile('s1.1-32B', 32_000_000_000, 0.25 * GB / 1024),
    's1.1-7B': ModelProfile('s1.1-7B', 7_000_000_000, 57_344.0),
    'DeepSeek-R1-Distill-Qwen-32B': ModelProfile('DeepSeek-R1-Distill-Qwen-32B', 32_000_000_000, 0.25 * GB / 1024),
    'DeepSeek-R1-Distill-Qwen-7B': ModelProfile('DeepSeek-R1-Distill-Qwen-7B', 7_000_000_000, 57_344.0),
    'QwQ-32B': ModelProfile('QwQ-32B', 32_000_000_000, 0.25 * GB / 1024),
    'LLaMa-3.1-8B-Instruct': ModelProfile('LLaMa-3.1-8B-Instruct', 8_000_000_000, 131_072.0),
    'Eagle3': ModelProfile('Eagle3', 400_000_000, 4_096.0),
    's1.1-3B': ModelProfile('s1.1-3B', 3_000_000_000, 36_864.0),
    'Qwen2.5-0.5B-Instruct': ModelProfile('Qwen2.5-0.5B-Instruct', 500_000_000, 12_288.0),
}

_BUILTIN_PAIRS = (
    ('s1.1-32B', 's1.1-7B', 0.831),
    ('DeepSeek-R1-Distill-Qwen-32B', 'DeepSeek-R1-Distill-Qwen-7B', 0.897),
    ('QwQ-32B', 'DeepSeek-R1-Distill-Qwen-7B', 0.781),
    ('LLaMa-3.1-8B-Instruct', 'Eagle3', 0.904),
    ('s1.1-3B', 'Qwen2.5-0.5B-Instruct', 0.701),
)


def builtin_pairs() -> List[SpecDecPair]:
    """The five measured target/draft pairs with their acceptance rates."""
    return [
        SpecDecPair(_BUILTIN_MODELS[target], _BUILTIN_MODELS[draft], alpha)
        for target, draft, alpha in _BUILTIN_PAIRS
    ]


def builtin_pair(name: str) -> SpecDecPair | None:
    for pair in builtin_pairs():
        if name == pair.target.name:
            return pair
    return None


def kv_bytes_from_anchor(total_kv: float, seq_len: int) -> float:
    """Per-token KV bytes from a total KV size measured at ``seq_len`` tokens."""
    if total_kv <= 0:
        raise ValueError(f"total_kv must be > 0, got {total_kv}")
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    return total_kv / seq_len


def resolve_scenario_path(path: str | Path) -> Path:
    """Bare fixture names such as ``s1_32b.json`` resolve against the shipped scenarios."""
    candidate = Path(path)
    if candidate.exists() or candidate.is_absolute() or candidate.parent != Path('.'):
        return candidate
    shipped = Path(settings.TTSLAT['SCENARIO_DIR']) / candidate
    return shipped if shipped.exists() else candidate


def load_scenario(path: str | Path) -> Scenario:
    from planning.serializers import ScenarioSerializer, flatten_errors

    path = resolve_scenario_path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except FileNotFoundError:
        logger.error(f"Scenario not found | path={path}")
        raise ScenarioError(f"{path}: file not found", field='path')
    except json.JSONDecodeError as e:
        logger.error(f"Scenario parse error | path={path} | line={e.lineno} | col={e.colno}")
        raise ScenarioError(f"{path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}")
    except UnicodeDecodeError as e:
        logger.error(f"Scenario encoding error | path={path} | offset={e.start}")
        raise ScenarioError(f"{path}: not valid UTF-8 at byte {e.start}", field='path')

    serializer = ScenarioSerializer(data=document)
    if not serializer.is_valid():
        message = flatten_errors(serializer.errors)
        logger.warning(f"Scenario rejected | path={path} | errors={message}")
        first_field = message.split(':', 1)[0]
        raise ScenarioError(f"{path}: {message}", field=first_field)

    scenario = serializer.validated_data
    logger.info(
        f"Scenario loaded | path={path} | target={scenario.pair.target.name} | "
        f"draft={scenario.pair.draft.name} | alpha={scenario.pair.acceptance_rate} | T={scenario.budget}s"
    )
    return scenario


def scenario_document(scenario: Scenario) -> dict:
    from planning.serializers import ScenarioSerializer

    return json.loads(json.dumps(ScenarioSerializer(scenario).data))


def save_scenario(scenario: Scenario, path: str | Path) -> Path:
    from planning.exports import write_json

    return write_json(path, scenario_document(scenario))

