from rest_framework import serializers

from planning.curves import EfficiencyCurve
from planning.errors import ScenarioError
from planning.profiles import (
    ConcurrencyConfig,
    HardwareProfile,
    ModelProfile,
    Scenario,
    SpecDecPair,
)
from planning.voting import Aggregation, AnswerProfile, BetaShape, DifficultyStratum, TieRule


def flatten_errors(errors, prefix: str = '') -> str:
    """Turn nested serializer errors into ``a.b: rule; c: rule`` text."""
    parts = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = prefix if key == 'non_field_errors' else (f"{prefix}.{key}" if prefix else str(key))
            parts.append(flatten_errors(value, path))
    elif isinstance(errors, list):
        if errors and all(isinstance(e, (dict, list)) for e in errors):
            for index, value in enumerate(errors):
                if value:
                    parts.append(flatten_errors(value, f"{prefix}[{index}]"))
        else:
            parts.append(f"{prefix or 'scenario'}: {' '.join(str(e) for e in errors)}")
    else:
        parts.append(f"{prefix or 'scenario'}: {errors}")
    return '; '.join(p for p in parts if p)


class StrictSerializer(serializers.Serializer):
    """Rejects unknown keys and builds the frozen domain object on validation."""

    domain_class = None

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['unknown field'] for key in unknown})
        return super().to_internal_value(data)

    def validate(self, attrs):
        try:
            return self.domain_class(**attrs)
        except ScenarioError as e:
            raise serializers.ValidationError({e.field or 'non_field_errors': [e.rule]})


class HardwareProfileSerializer(StrictSerializer):
    domain_class = HardwareProfile

    name = serializers.CharField()
    mem_bandwidth = serializers.FloatField()
    peak_compute = serializers.FloatField()
    mem_capacity = serializers.FloatField()
    bandwidth_efficiency = serializers.FloatField(default=1.0)
    compute_efficiency = serializers.FloatField(default=1.0)


class ModelProfileSerializer(StrictSerializer):
    domain_class = ModelProfile

    name = serializers.CharField()
    param_count = serializers.IntegerField()
    kv_bytes_per_token = serializers.FloatField()
    bytes_per_param = serializers.FloatField(default=2.0)
    flops_per_token = serializers.FloatField(required=False, allow_null=True, default=None)


class SpecDecPairSerializer(StrictSerializer):
    domain_class = SpecDecPair

    target = ModelProfileSerializer()
    draft = ModelProfileSerializer()
    acceptance_rate = serializers.FloatField()


class ConcurrencyConfigSerializer(StrictSerializer):
    domain_class = ConcurrencyConfig

    branches = serializers.IntegerField(default=1)
    draft_len = serializers.IntegerField(default=0)
    requests = serializers.IntegerField(default=1)


class EfficiencyCurveSerializer(StrictSerializer):
    domain_class = EfficiencyCurve

    a_min = serializers.FloatField()
    a_max = serializers.FloatField()
    midpoint = serializers.FloatField()
    slope = serializers.FloatField()


class DifficultyStratumSerializer(StrictSerializer):
    domain_class = DifficultyStratum

    weight = serializers.FloatField()
    token_scale = serializers.FloatField()


class BetaShapeSerializer(StrictSerializer):
    domain_class = BetaShape

    a = serializers.FloatField()
    b = serializers.FloatField()


class AnswerProfileSerializer(StrictSerializer):
    domain_class = AnswerProfile

    distractors = serializers.IntegerField(default=4)
    wrong_weights = serializers.ListField(child=serializers.FloatField(), required=False)
    strata = DifficultyStratumSerializer(many=True, required=False)
    correct_confidence = BetaShapeSerializer(required=False)
    wrong_confidence = BetaShapeSerializer(required=False)


class ScenarioSerializer(StrictSerializer):
    domain_class = Scenario

    name = serializers.CharField(required=False, allow_blank=True, default='')
    hardware = HardwareProfileSerializer()
    pair = SpecDecPairSerializer()
    curve = EfficiencyCurveSerializer()
    answer_model = AnswerProfileSerializer(required=False)
    budget = serializers.FloatField()
    max_tokens_per_branch = serializers.FloatField(required=False, allow_null=True, default=None)
    prefill_offset = serializers.FloatField(default=0.0)
    prompt_len = serializers.IntegerField(default=0)
    default_config = ConcurrencyConfigSerializer(required=False)
    tie_rule = serializers.ChoiceField(choices=[r.value for r in TieRule], default=TieRule.SPLIT_CREDIT.value)
    aggregation = serializers.ChoiceField(
        choices=[a.value for a in Aggregation], default=Aggregation.PLAIN_VOTE.value,
    )
    calibration = serializers.JSONField(required=False, default=dict)
    notes = serializers.CharField(required=False, allow_blank=True, write_only=True)

    def validate(self, attrs):
        attrs.pop('notes', None)
        return super().validate(attrs)

