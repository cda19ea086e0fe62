import math

import numpy as np
from rest_framework import serializers
from scenarios.entities import Mode, PathLossExponents, ScenarioConfig
from scenarios.utils import db_to_linear, dbm_to_watts

MAX_SEED = 2**64 - 1


class ComplexArrayField(serializers.Field):
    """Complex ndarray <-> nested lists whose leaves are [re, im] pairs."""

    default_error_messages = {
        "invalid": "Expected nested arrays of [re, im] pairs.",
        "not_finite": "Channel entries must be finite.",
    }

    def to_representation(self, value):
        array = np.asarray(value, dtype=complex)
        return np.stack([array.real, array.imag], axis=-1).tolist()

    def to_internal_value(self, data):
        try:
            array = np.asarray(data, dtype=float)
        except (TypeError, ValueError):
            self.fail("invalid")
        if array.ndim == 0 or array.shape[-1] != 2:
            self.fail("invalid")
        if not np.all(np.isfinite(array)):
            self.fail("not_finite")
        return array[..., 0] + 1j * array[..., 1]


class PerItemFloatField(serializers.Field):
    """One number shared by every item, or a list with one number per item."""

    default_error_messages = {
        "invalid": "Expected a number or a non-empty list of numbers.",
        "not_finite": "Values must be finite.",
    }

    def to_representation(self, value):
        return value

    def _number(self, value) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail("invalid")
        if not math.isfinite(value):
            self.fail("not_finite")
        return float(value)

    def to_internal_value(self, data):
        if isinstance(data, (list, tuple)):
            if not data:
                self.fail("invalid")
            return [self._number(item) for item in data]
        return self._number(data)


def per_item(value, count: int, convert) -> tuple:
    if isinstance(value, list):
        return tuple(convert(item) for item in value)
    return (convert(value),) * count


class StrictSerializer(serializers.Serializer):
    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError(
                    {key: ["Unknown field."] for key in unknown}
                )
        return super().to_internal_value(data)


def positive(value):
    if value <= 0:
        raise serializers.ValidationError("Must be strictly positive.")
    return value


class PathLossExponentsSerializer(StrictSerializer):
    bs_ris = serializers.FloatField(default=2.5, validators=[positive])
    ris_user = serializers.FloatField(default=2.0, validators=[positive])
    direct_reflect = serializers.FloatField(default=3.6, validators=[positive])
    direct_transmit = serializers.FloatField(default=4.2, validators=[positive])


class ScenarioConfigSerializer(StrictSerializer):
    """Validates a config in dB/dBm units and builds the SI-unit config."""

    preset = serializers.CharField(required=False)
    n_antennas = serializers.IntegerField(min_value=1)
    n_elements = serializers.IntegerField(min_value=1)
    n_users = serializers.IntegerField(min_value=1)
    n_users_reflect = serializers.IntegerField(min_value=0)
    bs_ris_distance_m = serializers.FloatField(validators=[positive])
    user_radius_m = serializers.FloatField(validators=[positive])
    pathloss_ref_db = serializers.FloatField()
    reference_distance_m = serializers.FloatField(validators=[positive])
    exponents = PathLossExponentsSerializer(required=False)
    rician_factor_db = serializers.FloatField(allow_null=True)
    noise_user_dbm = serializers.FloatField()
    noise_ris_dbm = serializers.FloatField()
    budget_bs_dbm = serializers.FloatField()
    budget_ris_dbm = serializers.FloatField()
    budget_element_dbm = PerItemFloatField(required=False, allow_null=True)
    sinr_target_db = PerItemFloatField(allow_null=True)
    mode = serializers.ChoiceField(choices=[mode.value for mode in Mode])
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)

    def validate(self, attrs):
        if attrs["n_users_reflect"] > attrs["n_users"]:
            raise serializers.ValidationError(
                {"n_users_reflect": ["Cannot exceed n_users."]}
            )
        for key, count_key in (
            ("sinr_target_db", "n_users"),
            ("budget_element_dbm", "n_elements"),
        ):
            value = attrs.get(key)
            if isinstance(value, list) and len(value) != attrs[count_key]:
                raise serializers.ValidationError(
                    {key: [f"Expected one value or {attrs[count_key]} values."]}
                )
        budget_ris = dbm_to_watts(attrs["budget_ris_dbm"])
        if attrs.get("budget_element_dbm") is not None:
            total_element = sum(
                per_item(attrs["budget_element_dbm"], attrs["n_elements"], dbm_to_watts)
            )
            if budget_ris > total_element * (1.0 + 1e-12):
                raise serializers.ValidationError(
                    {
                        "budget_element_dbm": [
                            "RIS budget exceeds the sum of per-element budgets."
                        ]
                    }
                )
        return attrs

    def create(self, validated_data) -> ScenarioConfig:
        n_elements = validated_data["n_elements"]
        budget_ris = dbm_to_watts(validated_data["budget_ris_dbm"])
        if validated_data.get("budget_element_dbm") is None:
            budget_element = (2.0 * budget_ris / n_elements,) * n_elements
        else:
            budget_element = per_item(
                validated_data["budget_element_dbm"], n_elements, dbm_to_watts
            )

        rician_db = validated_data["rician_factor_db"]
        target_db = validated_data["sinr_target_db"]
        if target_db is None:
            targets = (0.0,) * validated_data["n_users"]
        else:
            targets = per_item(target_db, validated_data["n_users"], db_to_linear)

        return ScenarioConfig(
            n_antennas=validated_data["n_antennas"],
            n_elements=n_elements,
            n_users=validated_data["n_users"],
            n_users_reflect=validated_data["n_users_reflect"],
            bs_ris_distance=validated_data["bs_ris_distance_m"],
            user_radius=validated_data["user_radius_m"],
            pathloss_ref_gain=db_to_linear(validated_data["pathloss_ref_db"]),
            reference_distance=validated_data["reference_distance_m"],
            exponents=PathLossExponents(**validated_data.get("exponents", {})),
            rician_factor=0.0 if rician_db is None else db_to_linear(rician_db),
            noise_user=dbm_to_watts(validated_data["noise_user_dbm"]),
            noise_ris=dbm_to_watts(validated_data["noise_ris_dbm"]),
            budget_bs=dbm_to_watts(validated_data["budget_bs_dbm"]),
            budget_ris=budget_ris,
            budget_element=budget_element,
            sinr_targets=targets,
            mode=Mode(validated_data["mode"]),
            seed=validated_data["seed"],
        )


class ChannelDumpSerializer(serializers.Serializer):
    G = ComplexArrayField()
    h_d = ComplexArrayField()
    h_r = ComplexArrayField()
    set_r = serializers.ListField(child=serializers.IntegerField(min_value=0))
    set_t = serializers.ListField(child=serializers.IntegerField(min_value=0))
    user_positions = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField()),
        required=False,
    )
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
