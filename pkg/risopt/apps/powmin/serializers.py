from downlink.serializers import RealArrayField
from powmin.entities import PowMinParams
from rest_framework import serializers
from scenarios.serializers import StrictSerializer, positive


class FeasibilityReportSerializer(serializers.Serializer):
    full_rank = serializers.BooleanField()
    rank = serializers.IntegerField()
    required = serializers.IntegerField()
    singular_values = RealArrayField()


class PowMinParamsSerializer(StrictSerializer):
    alpha = serializers.FloatField(required=False)
    epsilon = serializers.FloatField(validators=[positive], required=False)
    max_iter = serializers.IntegerField(min_value=1, required=False)
    rel_tol = serializers.FloatField(validators=[positive], required=False)
    scale_up_cap = serializers.IntegerField(min_value=0, required=False)
    pair_max_sweeps = serializers.IntegerField(min_value=1, required=False)
    pair_tol = serializers.FloatField(validators=[positive], required=False)

    def validate_alpha(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Must lie strictly between 0 and 1.")
        return value

    def create(self, validated_data) -> PowMinParams:
        return PowMinParams.from_settings(**validated_data)
