import copy
import json
import logging
import math
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from django.conf import settings
from rest_framework import serializers
from scenarios.entities import (
    ChannelKind,
    LinkGeometry,
    Scenario,
    ScenarioConfig,
)
from scenarios.exceptions import DomainError, ScenarioConfigError
from scenarios.presets import PRESETS
from scenarios.serializers import ChannelDumpSerializer, ScenarioConfigSerializer

logger = logging.getLogger(__name__)


class ScenarioService:
    @classmethod
    def path_loss(
        cls, distance: float, exponent: float, ref_gain: float, ref_distance: float
    ) -> float:
        if distance <= 0 or ref_distance <= 0:
            raise DomainError(
                f"path loss needs positive distances, got d={distance}, d0={ref_distance}"
            )
        return ref_gain * (ref_distance / distance) ** exponent

    @classmethod
    def stream(cls, seed: int, kind: ChannelKind, index: int = 0) -> np.random.Generator:
        """Independent Philox stream keyed by (channel kind, index)."""
        sequence = np.random.SeedSequence(seed, spawn_key=(int(kind), index))
        return np.random.Generator(np.random.Philox(sequence))

    @classmethod
    def rician_channel(
        cls,
        rows: int,
        cols: int,
        rician_factor: float,
        pathloss: float,
        geometry: Optional[LinkGeometry],
        rng: np.random.Generator,
    ) -> np.ndarray:
        if rows < 1 or cols < 1:
            raise ValueError(f"channel shape must be positive, got {rows}x{cols}")
        if rician_factor < 0 or math.isnan(rician_factor):
            raise ValueError(f"rician factor must be >= 0, got {rician_factor}")
        if pathloss <= 0:
            raise ValueError(f"path loss must be positive, got {pathloss}")

        nlos = (
            rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
        ) / math.sqrt(2.0)
        if math.isinf(rician_factor):
            los_weight, nlos_weight = 1.0, 0.0
        else:
            los_weight = math.sqrt(rician_factor / (rician_factor + 1.0))
            nlos_weight = math.sqrt(1.0 / (rician_factor + 1.0))

        channel = nlos_weight * nlos
        if los_weight > 0.0:
            geometry = geometry or LinkGeometry()
            channel = channel + los_weight * geometry.los_matrix(rows, cols)
        return math.sqrt(pathloss) * channel

    @classmethod
    def user_positions(cls, config: ScenarioConfig) -> np.ndarray:
        """Users on the circle of radius r_u around the RIS at (d, 0).

        Reflect-side users take angles in [0, pi) (the BS half of the circle),
        the rest in [pi, 2 pi).
        """
        rng = cls.stream(config.seed, ChannelKind.USER_ANGLES)
        draws = rng.uniform(0.0, math.pi, size=config.n_users)
        angles = np.where(
            np.arange(config.n_users) < config.n_users_reflect, draws, draws + math.pi
        )
        return np.stack(
            [
                config.bs_ris_distance - config.user_radius * np.sin(angles),
                config.user_radius * np.cos(angles),
            ],
            axis=1,
        )

    @classmethod
    def build_scenario(cls, config: ScenarioConfig) -> Scenario:
        if not 0 <= config.n_users_reflect <= config.n_users:
            raise ScenarioConfigError(
                f"n_users_reflect={config.n_users_reflect} outside [0, {config.n_users}]"
            )
        n, m, k_total = config.n_antennas, config.n_elements, config.n_users
        exponents = config.exponents
        ris = np.array([config.bs_ris_distance, 0.0])
        positions = cls.user_positions(config)

        G = cls.rician_channel(
            m,
            n,
            config.rician_factor,
            cls._path_loss(config, config.bs_ris_distance, exponents.bs_ris),
            LinkGeometry(departure_sin=0.0, arrival_sin=0.0),
            cls.stream(config.seed, ChannelKind.BS_RIS),
        )

        h_d = np.empty((k_total, n), dtype=complex)
        h_r = np.empty((k_total, m), dtype=complex)
        for k in range(k_total):
            reflect = k < config.n_users_reflect
            direct_distance = float(np.linalg.norm(positions[k]))
            exponent = exponents.direct_reflect if reflect else exponents.direct_transmit
            h_d[k] = cls.rician_channel(
                n,
                1,
                0.0,
                cls._path_loss(config, direct_distance, exponent),
                None,
                cls.stream(config.seed, ChannelKind.DIRECT, k),
            )[:, 0]
            h_r[k] = cls.rician_channel(
                m,
                1,
                0.0,
                cls._path_loss(
                    config, float(np.linalg.norm(positions[k] - ris)), exponents.ris_user
                ),
                None,
                cls.stream(config.seed, ChannelKind.RIS_USER, k),
            )[:, 0]

        scenario = Scenario(
            config=config,
            G=G,
            h_d=h_d,
            h_r=h_r,
            set_r=tuple(range(config.n_users_reflect)),
            set_t=tuple(range(config.n_users_reflect, k_total)),
            user_positions=positions,
        )
        logger.debug(
            "built scenario N=%d M=%d K=%d |K_r|=%d seed=%d",
            n,
            m,
            k_total,
            config.n_users_reflect,
            config.seed,
        )
        return scenario

    @classmethod
    def _path_loss(cls, config: ScenarioConfig, distance: float, exponent: float):
        return cls.path_loss(
            distance, exponent, config.pathloss_ref_gain, config.reference_distance
        )

    @classmethod
    def resolve_config_data(cls, data: Optional[Dict] = None) -> Dict:
        """Merge a raw config over its preset (``preset`` key, else the
        RIS_OPTIM_PRESET setting)."""
        data = copy.deepcopy(data or {})
        if not isinstance(data, dict):
            raise ScenarioConfigError("config must be a JSON object")
        preset_name = data.get("preset", settings.RIS_OPTIM_PRESET)
        if preset_name not in PRESETS:
            raise ScenarioConfigError(
                f"unknown preset {preset_name!r}", {"preset": ["Unknown preset."]}
            )
        merged = copy.deepcopy(PRESETS[preset_name])
        exponents = dict(merged.get("exponents", {}))
        if isinstance(data.get("exponents"), dict):
            exponents.update(data.pop("exponents"))
            merged["exponents"] = exponents
        merged.update(data)
        merged["preset"] = preset_name
        return merged

    @classmethod
    def parse_config(cls, data: Optional[Dict] = None) -> ScenarioConfig:
        merged = cls.resolve_config_data(data)
        serializer = ScenarioConfigSerializer(data=merged)
        try:
            serializer.is_valid(raise_exception=True)
        except serializers.ValidationError as exc:
            raise ScenarioConfigError(
                f"invalid scenario config: {exc.detail}", exc.detail
            ) from exc
        return serializer.save()

    @classmethod
    def read_config_file(cls, path: Union[str, Path, None]) -> Dict:
        if path is None:
            return {}
        try:
            with open(path) as file:
                return json.load(file)
        except OSError as exc:
            raise ScenarioConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioConfigError(f"malformed JSON in {path}: {exc}") from exc

    @classmethod
    def load_config(cls, path: Union[str, Path, None] = None) -> ScenarioConfig:
        return cls.parse_config(cls.read_config_file(path))

    @classmethod
    def dump_channels(cls, scenario: Scenario) -> Dict:
        return dict(ChannelDumpSerializer(scenario).data)

    @classmethod
    def load_channels(cls, config: ScenarioConfig, dump: Dict) -> Scenario:
        """Rebuild a scenario from an exported channel dump."""
        serializer = ChannelDumpSerializer(data=dump)
        try:
            serializer.is_valid(raise_exception=True)
        except serializers.ValidationError as exc:
            raise ScenarioConfigError(
                f"invalid channel dump: {exc.detail}", exc.detail
            ) from exc
        data = serializer.validated_data
        n, m, k_total = config.n_antennas, config.n_elements, config.n_users
        expected: Tuple = ((m, n), (k_total, n), (k_total, m))
        shapes = (data["G"].shape, data["h_d"].shape, data["h_r"].shape)
        if shapes != expected:
            raise ScenarioConfigError(
                f"channel dump shapes {shapes} do not match config {expected}"
            )
        set_r = tuple(data["set_r"])
        set_t = tuple(data["set_t"])
        if sorted(set_r + set_t) != list(range(k_total)) or len(set_r) != (
            config.n_users_reflect
        ):
            raise ScenarioConfigError("channel dump user partition does not match config")
        positions = data.get("user_positions") or np.zeros((k_total, 2))
        return Scenario(
            config=config,
            G=data["G"],
            h_d=data["h_d"],
            h_r=data["h_r"],
            set_r=set_r,
            set_t=set_t,
            user_positions=np.asarray(positions, dtype=float),
        )
