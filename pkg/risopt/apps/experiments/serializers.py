from experiments.entities import Problem, SweepParameter, SweepSpec
from rest_framework import serializers
from scenarios.entities import Mode
from scenarios.serializers import MAX_SEED, StrictSerializer


class SweepSpecSerializer(StrictSerializer):
    """Sweep description. ``config`` is a raw config object, a preset name or
    a path; the service resolves the latter two before validation."""

    parameter = serializers.ChoiceField(choices=[item.value for item in SweepParameter])
    values = serializers.ListField(child=serializers.FloatField(), min_length=1)
    trials = serializers.IntegerField(min_value=1)
    problem = serializers.ChoiceField(choices=[item.value for item in Problem])
    modes = serializers.ListField(
        child=serializers.ChoiceField(choices=[mode.value for mode in Mode]),
        min_length=1,
        default=[Mode.OP.value],
    )
    config = serializers.DictField(required=False, default=dict)
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)
    solver = serializers.DictField(required=False, default=dict)

    def validate(self, attrs):
        parameter = SweepParameter(attrs["parameter"])
        if parameter.is_integer:
            if any(value != int(value) or value < 0 for value in attrs["values"]):
                raise serializers.ValidationError(
                    {"values": [f"{parameter.value} values must be whole numbers."]}
                )
        if parameter == SweepParameter.ELEMENTS and min(attrs["values"]) < 1:
            raise serializers.ValidationError({"values": ["M must be at least 1."]})
        if len(set(attrs["modes"])) != len(attrs["modes"]):
            raise serializers.ValidationError({"modes": ["Modes must be distinct."]})
        return attrs

    def create(self, validated_data) -> SweepSpec:
        parameter = SweepParameter(validated_data["parameter"])
        cast = int if parameter.is_integer else float
        return SweepSpec(
            parameter=parameter,
            values=tuple(cast(value) for value in validated_data["values"]),
            trials=validated_data["trials"],
            problem=Problem(validated_data["problem"]),
            modes=tuple(Mode(mode) for mode in validated_data["modes"]),
            base_config=dict(validated_data["config"]),
            base_seed=validated_data["seed"],
            source=self.context.get("source", ""),
            solver=dict(validated_data["solver"]),
        )


class ManifestSerializer(serializers.Serializer):
    command = serializers.CharField()
    problem = serializers.CharField()
    mode = serializers.CharField()
    seed = serializers.IntegerField()
    config_sha256 = serializers.CharField()
    version = serializers.CharField()
    converged = serializers.BooleanField(required=False)
    iterations = serializers.IntegerField(required=False)
    files = serializers.ListField(child=serializers.CharField())
    solver = serializers.DictField(required=False)
