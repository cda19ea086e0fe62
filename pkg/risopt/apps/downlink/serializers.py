import numpy as np
from downlink.entities import BeamformerSet, RisState
from rest_framework import serializers
from scenarios.serializers import ComplexArrayField


class RealArrayField(serializers.ListField):
    child = serializers.FloatField()

    def to_representation(self, data):
        return [float(value) for value in np.asarray(data, dtype=float).ravel()]

    def to_internal_value(self, data):
        return np.asarray(super().to_internal_value(data), dtype=float)


class RisStateSerializer(serializers.Serializer):
    phi_r = ComplexArrayField()
    phi_t = ComplexArrayField()
    amp = RealArrayField()
    varsigma = RealArrayField()

    def validate(self, attrs):
        lengths = {len(attrs[name]) for name in ("phi_r", "phi_t", "amp", "varsigma")}
        if len(lengths) != 1:
            raise serializers.ValidationError("RIS vectors must share one length.")
        return attrs

    def create(self, validated_data) -> RisState:
        return RisState(**validated_data)


class BeamformerSetSerializer(serializers.Serializer):
    w = ComplexArrayField()

    def create(self, validated_data) -> BeamformerSet:
        return BeamformerSet(validated_data["w"])


class StateSerializer(serializers.Serializer):
    ris = RisStateSerializer()
    beamformers = BeamformerSetSerializer()


class ConstraintReportSerializer(serializers.Serializer):
    bs_power_slack = serializers.FloatField()
    ris_power_slack = serializers.FloatField()
    per_element_slack = RealArrayField()
    unit_modulus_residual = serializers.FloatField()
    varsigma_range_violation = serializers.FloatField()
    sinr_slack = RealArrayField()
    sinr_targets = RealArrayField()
    feasible = serializers.SerializerMethodField()

    def get_feasible(self, report) -> bool:
        return bool(report.is_feasible(**self.context.get("feasibility", {})))


class TraceRecordSerializer(serializers.Serializer):
    iteration = serializers.IntegerField()
    objective = serializers.FloatField()
    surrogate = serializers.FloatField(required=False)
    total_power_w = serializers.FloatField(required=False)
    weighted_objective = serializers.FloatField(required=False)
    power_after_pair = serializers.FloatField(required=False)
    min_sinr_ratio = serializers.FloatField(required=False)
    bs_power_slack = serializers.FloatField(required=False)
    ris_power_slack = serializers.FloatField(required=False)
    min_element_slack = serializers.FloatField(required=False)
    newton_steps = serializers.IntegerField(required=False)
    manifold_iterations = serializers.IntegerField(required=False)
    pair_sweeps = serializers.IntegerField(required=False)
    timings = serializers.DictField(child=serializers.FloatField(), required=False)


class SolveTraceSerializer(serializers.Serializer):
    problem = serializers.CharField()
    mode = serializers.CharField()
    converged = serializers.BooleanField()
    iterations = serializers.IntegerField()
    message = serializers.CharField(allow_null=True)
    records = TraceRecordSerializer(many=True)
