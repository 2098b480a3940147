"""Run configuration: built-in profiles plus JSON override files.

A run resolves as profile defaults <- config file <- --seed flag. Unknown
sections or keys in the file are rejected rather than ignored, and every
command writes the fully resolved configuration next to its artifacts.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

PROFILES: dict[str, dict] = {
    # paper-scale settings; training at this scale is far outside a desk budget
    "paper": {
        "mesh": {"node_dims": [9, 9], "spacing": 0.125, "constrained": "bottom"},
        "material": {"young_modulus": 5.0e6, "poisson_ratio": 0.495,
                     "density": 1200.0},
        "generation": {"duration": 1.0, "t_frames": 200, "thickness": 16.0,
                       "damping": 5.0, "safety": 0.9,
                       "angles": [0.0, 45.0, 90.0, 135.0],
                       "magnitudes": [5.0e5, 1.0e6, 2.0e6],
                       "load_nodes": "all"},
        "network": {"channels": [64, 128, 256], "kernel": 3},
        "training": {"gamma": 0.7, "k": 40, "beta_p": 0.01, "epochs": 600,
                     "batch_size": 32, "lr_base": 1.0e-3, "zeta_n": 1.0e4,
                     "zeta_e": 1.0e4, "split_ratio": 0.8},
        "sweep": {"architectures": [[64], [64, 128], [64, 128, 256]]},
        "predict": {"load_node": None, "angle_deg": 90.0,
                    "max_magnitude": 1.0e6},
        "paths": {"dataset": None, "model": None},
        "seed": 0,
    },
    # sized for about a quarter hour of single-core training
    "desk": {
        "mesh": {"node_dims": [9, 9], "spacing": 0.125, "constrained": "bottom"},
        "material": {"young_modulus": 5.0e6, "poisson_ratio": 0.495,
                     "density": 1200.0},
        "generation": {"duration": 1.0, "t_frames": 50, "thickness": 16.0,
                       "damping": 5.0, "safety": 0.9,
                       "angles": [0.0, 45.0, 90.0, 135.0],
                       "magnitudes": [5.0e5, 1.0e6, 2.0e6],
                       "load_nodes": 8},
        "network": {"channels": [16, 32], "kernel": 3},
        "training": {"gamma": 0.7, "k": 10, "beta_p": 0.01, "epochs": 120,
                     "batch_size": 8, "lr_base": 1.0e-3, "zeta_n": 1.0e4,
                     "zeta_e": 1.0e4, "split_ratio": 0.8},
        "sweep": {"architectures": [[16], [16, 32]]},
        "predict": {"load_node": None, "angle_deg": 90.0,
                    "max_magnitude": 1.0e6},
        "paths": {"dataset": None, "model": None},
        "seed": 0,
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a section")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(profile: str = "desk", config_path=None,
                   seed: int | None = None) -> dict:
    """Profile defaults merged with an optional JSON file and seed override."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from "
                          f"{sorted(PROFILES)}")
    resolved = copy.deepcopy(PROFILES[profile])
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            override = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
        if not isinstance(override, dict):
            raise ConfigError("config file must hold a JSON object")
        resolved = _merge(resolved, override)
    if seed is not None:
        resolved["seed"] = int(seed)
    resolved["profile"] = profile
    return resolved


def config_json(resolved: dict) -> str:
    return json.dumps(resolved, indent=2, sort_keys=True) + "\n"
