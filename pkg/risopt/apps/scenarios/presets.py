"""Named scenario configs, in the same dB/dBm units as config files."""

FULL_SCALE = {
    "n_antennas": 16,
    "n_elements": 128,
    "n_users": 4,
    "n_users_reflect": 2,
    "bs_ris_distance_m": 80.0,
    "user_radius_m": 10.0,
    "pathloss_ref_db": -30.0,
    "reference_distance_m": 1.0,
    "exponents": {
        "bs_ris": 2.5,
        "ris_user": 2.0,
        "direct_reflect": 3.6,
        "direct_transmit": 4.2,
    },
    "rician_factor_db": 3.0,
    "noise_user_dbm": -80.0,
    "noise_ris_dbm": -80.0,
    "budget_bs_dbm": 16.0,
    "budget_ris_dbm": 10.0,
    "sinr_target_db": 12.0,
    "mode": "op",
    "seed": 0,
}

DESK = dict(
    FULL_SCALE,
    n_antennas=4,
    n_elements=16,
    n_users=2,
    n_users_reflect=1,
)

PRESETS = {
    "paper-default": FULL_SCALE,
    "desk": DESK,
}
