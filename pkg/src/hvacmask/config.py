"""Scenario/run configuration: built-in defaults, YAML overrides, echoes.

Precedence is flags > config file > built-in defaults; the CLI resolves
flags, this module resolves the file over the defaults. The resolved dict
is what gets echoed into run manifests and ``print-config``.
"""

import copy
from pathlib import Path

import yaml

from .thermal import ScenarioError


def _zone(zid, volume, slots, walls, adjacency):
    return {
        "id": zid,
        "volume_m3": volume,
        "occupant_slots": slots,
        "beta": 1.0,
        "q_p_W": 70.0,
        "q_d_W": 10.0,
        "walls": walls,
        "adjacency": adjacency,
    }


def _walls(ext_area):
    # One glazed exterior wall plus a lumped roof/infiltration path.
    return [
        {"u_W_m2K": 2.5, "solar_W_m2": 25.0, "area_m2": ext_area},
        {"u_W_m2K": 3.0, "solar_W_m2": 0.0, "area_m2": 20.0},
    ]


DEFAULTS = {
    "scenario": {
        "episode_steps": 120,
        "start_hour": 9,
        "supply_water_temp_C": 7.0,
        "rho_air_kg_m3": 1.2,
        "cp_air_J_kgK": 1005.0,
        "initial_temp_low_C": 26.0,
        "initial_temp_high_C": 28.0,
    },
    "outdoor": {
        "base_C": 28.0,
        "amplitude_C": 4.0,
        "peak_hour": 15.0,
    },
    "occupancy": {
        "arrival_mean_min": 30.0,
        "arrival_std_min": 15.0,
        "lunch_leave_mean_min": 180.0,
        "lunch_leave_std_min": 12.0,
        "lunch_return_mean_min": 300.0,
        "lunch_return_std_min": 12.0,
        "departure_mean_min": 570.0,
        "departure_std_min": 20.0,
        "lunch_stay_prob": 0.06,
        "absent_prob": 0.03,
    },
    # Rooms 1-4 are detached cellular offices; 5-7 form the thermally
    # coupled cluster (5-6 and 6-7 share partitions).
    "zones": [
        _zone(1, 60.0, 2, _walls(12.0), []),
        _zone(2, 60.0, 2, _walls(12.0), []),
        _zone(3, 60.0, 2, _walls(12.0), []),
        _zone(4, 60.0, 2, _walls(12.0), []),
        _zone(5, 100.0, 3, _walls(15.0), [{"zone": 6, "eta_W_K": 8.0}]),
        _zone(6, 120.0, 3, _walls(18.0), [{"zone": 5, "eta_W_K": 8.0}, {"zone": 7, "eta_W_K": 8.0}]),
        _zone(7, 100.0, 4, _walls(15.0), [{"zone": 6, "eta_W_K": 8.0}]),
    ],
    "fcu": {
        "rated_airflow_m3_s": 0.18,
        "rated_fan_power_W": 65.0,
        "mode_airflow_fractions": [0.0, 0.5, 0.75, 1.0],
        "rated_water_flow_m3_s": 2.5e-5,
        "coil_effectiveness_by_mode": [0.0, 0.5, 0.65, 0.78],
    },
    "pump": {
        "alpha1": -5.0e8,
        "alpha2": 0.0,
        "alpha3": 60.0,
        "rated_freq_Hz": 50.0,
        "rated_power_W": 750.0,
        "min_freq_Hz": 20.0,
        "max_freq_Hz": 50.0,
    },
    "network": {
        "coil_resistance_kPa_s2_m6": 5.6e10,
        "bypass_resistance_kPa_s2_m6": 2.0e11,
        "design_flow_m3_s": 2.0e-4,
        "tol_kPa": 1.0e-3,
        "max_iterations": 100,
    },
    "comfort": {
        "air_velocity_m_s": 0.15,
        "relative_humidity_pct": 40.0,
        "clothing_clo": 0.63,
        "metabolic_met": 1.1,
    },
    "reward": {
        "lambda_P": 3.0,
    },
    "mask": {
        "k": 50,
        "tau": 0.05,
        "feature_weights": None,
        "cache": {
            "temp_step_C": 0.5,
            "outdoor_step_C": 1.0,
            "clock_step_min": 30,
        },
    },
    "dqn": {
        "gamma": 0.99,
        "learning_rate": 1.0e-3,
        "replay_capacity": 50000,
        "batch_size": 64,
        "warmup_transitions": 500,
        "epsilon_start": 1.0,
        "epsilon_end": 0.05,
        "epsilon_decay_fraction": 0.5,
        "target_update_every": 500,
        "mask_penalty": 1.0e9,
        "episodes": 300,
        "train_freq": 4,
        "hidden_sizes": [256, 256],
    },
    "demos": {
        "days": 16,
        "start_date": "2021-08-02",
        "noise_prob": 0.1,
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ScenarioError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Built-in defaults, deep-merged with the YAML file when given.
    Lists (e.g. the zone table) are replaced wholesale."""
    cfg = default_config()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"config file not found: {path}")
    with open(path) as fh:
        user = yaml.safe_load(fh)
    if user is None:
        return cfg
    if not isinstance(user, dict):
        raise ScenarioError(f"config file {path} must contain a mapping")
    return _merge(cfg, user)


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=False)
