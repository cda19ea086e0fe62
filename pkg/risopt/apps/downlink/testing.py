import math

import numpy as np
from downlink.entities import BeamformerSet, RisState
from scenarios.entities import Scenario


def random_state(scenario: Scenario, seed: int = 0, power: float = 1.0):
    """Arbitrary unit-modulus phases, gains in [0.1, 1] and ||W||_F^2 = power."""
    rng = np.random.default_rng(seed)
    m, n, k_total = scenario.n_elements, scenario.n_antennas, scenario.n_users
    ris = RisState(
        phi_r=np.exp(2j * np.pi * rng.uniform(size=m)),
        phi_t=np.exp(2j * np.pi * rng.uniform(size=m)),
        amp=rng.uniform(0.1, 1.0, size=m),
        varsigma=rng.uniform(0.0, 1.0, size=m),
    )
    w = rng.standard_normal((n, k_total)) + 1j * rng.standard_normal((n, k_total))
    return ris, BeamformerSet(w * math.sqrt(power) / np.linalg.norm(w))
