from rest_framework import serializers
from scenarios.serializers import StrictSerializer, positive
from sumrate.entities import SumRateParams


class SumRateParamsSerializer(StrictSerializer):
    """Overrides on top of the settings defaults."""

    max_iter = serializers.IntegerField(min_value=1, required=False)
    rel_tol = serializers.FloatField(validators=[positive], required=False)
    varsigma_tol = serializers.FloatField(validators=[positive], required=False)
    varsigma_max_sweeps = serializers.IntegerField(min_value=1, required=False)
    delta = serializers.FloatField(validators=[positive], required=False)
    pair_max_sweeps = serializers.IntegerField(min_value=1, required=False)
    pair_tol = serializers.FloatField(validators=[positive], required=False)

    def validate_delta(self, value):
        if value >= 1.0:
            raise serializers.ValidationError("Must be below 1.")
        return value

    def create(self, validated_data) -> SumRateParams:
        return SumRateParams.from_settings(**validated_data)
