"""Small unit-scale problem instances for the test suites."""

from typing import Optional

import numpy as np
from scenarios.entities import Mode, PathLossExponents, Scenario, ScenarioConfig


def make_config(
    n_antennas: int = 2,
    n_elements: int = 2,
    n_users: int = 2,
    n_users_reflect: int = 1,
    noise_user: float = 0.1,
    noise_ris: float = 0.01,
    budget_bs: float = 1.0,
    budget_ris: float = 1.0,
    budget_element: Optional[float] = None,
    sinr_target: float = 1.0,
    mode: Mode = Mode.OP,
    seed: int = 0,
) -> ScenarioConfig:
    element = 2.0 * budget_ris / n_elements if budget_element is None else budget_element
    return ScenarioConfig(
        n_antennas=n_antennas,
        n_elements=n_elements,
        n_users=n_users,
        n_users_reflect=n_users_reflect,
        bs_ris_distance=80.0,
        user_radius=10.0,
        pathloss_ref_gain=1e-3,
        reference_distance=1.0,
        exponents=PathLossExponents(),
        rician_factor=0.0,
        noise_user=noise_user,
        noise_ris=noise_ris,
        budget_bs=budget_bs,
        budget_ris=budget_ris,
        budget_element=(element,) * n_elements,
        sinr_targets=(sinr_target,) * n_users,
        mode=Mode(mode),
        seed=seed,
    )


def _gaussian(rng, shape, scale):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def toy_scenario(
    config: Optional[ScenarioConfig] = None,
    direct_gain: float = 0.3,
    cascade_gain: float = 1.0,
    **overrides,
) -> Scenario:
    """Gaussian channels of order one, keyed by the config seed."""
    config = config or make_config(**overrides)
    rng = np.random.default_rng(10_000 + config.seed)
    n, m, k_total = config.n_antennas, config.n_elements, config.n_users
    return Scenario(
        config=config,
        G=_gaussian(rng, (m, n), cascade_gain),
        h_d=_gaussian(rng, (k_total, n), direct_gain),
        h_r=_gaussian(rng, (k_total, m), cascade_gain),
        set_r=tuple(range(config.n_users_reflect)),
        set_t=tuple(range(config.n_users_reflect, k_total)),
        user_positions=np.zeros((k_total, 2)),
    )
