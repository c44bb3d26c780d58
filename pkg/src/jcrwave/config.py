"""Experiment configuration: schema, TOML loading, overrides and scenario building.

The schema is the nested ``DEFAULTS`` dictionary. A key is valid iff it appears
there; a ``None`` default marks an optional key with no value. See
``docs/config.md`` for the meaning and unit of every key.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .errors import ConfigError
from .scene import (
    SPEED_OF_LIGHT,
    CommLink,
    RadarScene,
    Scenario,
    Target,
    db2lin,
    equally_spaced_velocities,
    radar_two_way_gain,
    thermal_noise_power,
)
from .sparse_waveform import FrameTiming

__all__ = [
    "DEFAULTS",
    "EXPERIMENTS",
    "load_config",
    "apply_override",
    "merge",
    "flatten",
    "build_scenario",
    "calibrated_symbol_energy",
]

EXPERIMENTS = ("coarray", "tradeoff", "music-rmse", "optimize")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "scenario": {
        "carrier_frequency": 60e9,  # Hz
        "bandwidth": 1.76e9,  # Hz, also the symbol rate
        "cpi": 1e-3,  # s
        "v_max": 50.0,  # m/s; sets T_D = lambda / (4 v_max)
        "slot_interval": None,  # s; overrides v_max when set
        "enforce_cpi_fit": False,
        "eta": 1,
        "tx_gain_db": 0.0,
        "rx_gain_db": 0.0,
        "correlation_gain": None,  # linear; default sqrt(preamble_symbols)
        "noise_figure_db": 6.0,
        "temperature": 290.0,  # K
        "noise_power": None,  # W; default thermal over the bandwidth
        "symbol_energy": None,  # J; default from the calibration below
        "calibration_distance": 100.0,  # m
        "calibration_snr_db": 0.0,
        "targets": {
            "count": 1,
            "distance": 5.0,  # m
            "rcs_dbsm": 10.0,
            "velocity_min": -45.0,  # m/s
            "velocity_max": 50.0,  # m/s
            "velocities": None,  # explicit list, overrides the spacing
            "snr_db": None,  # prescribed per-target SNR, bypasses the link budget
        },
        "comm": {
            "distance": 50.0,  # m
            "pathloss_exponent": 2.0,
            "n_taps": 4,
            "tap_decay_db": 3.0,
            "block": 512,
            "eigen_mode": "realization",
            "seed": 0,
            "snr_db": None,  # overrides the link-budget SNR
        },
        "timing": {
            "preamble_symbols": 3328,
            "ifs": 3e-6,  # s
        },
    },
    "coarray": {
        "family": "wichmann",
        "params": [1, 1],
        "positions": None,  # custom schedule, overrides family/params
    },
    "tradeoff": {
        "families": ["uniform", "nested", "wichmann"],
        "m_min": 3,
        "m_max": 40,
        "param_rule": "vp",
        "distances": [5.0, 20.0, 100.0],  # m, target distance sweep
    },
    "music_rmse": {
        "family": "uniform",
        "params": [20],
        "positions": None,
        "methods": ["direct", "da"],
        "eta": [100],
        "trials": 500,
        "snr_db": [20.0],
        "grid_size": 16384,
    },
    "optimize": {
        "families": ["uniform", "nested", "wichmann"],
        "m_min": 3,
        "m_max": 40,
        "param_rule": "vp",
        "normalization": "family",  # "family" or "joint"
        "omega_c": [0.0, 0.25, 0.5, 0.75, 1.0],
        "upsilon_r": [1.5e-4],
        "upsilon_r_unit": "linear",  # linear (m/s)^2, db (rcrb_db) or phi
        "upsilon_c": [-27.6, -31.3],
        "upsilon_c_unit": "db",  # db, linear or phi
        "compare_vp": True,
    },
}

_CHOICES = {
    "scenario.comm.eigen_mode": ("realization", "expectation"),
    "tradeoff.param_rule": ("vp", "exhaustive"),
    "optimize.param_rule": ("vp", "exhaustive"),
    "optimize.normalization": ("family", "joint"),
    "optimize.upsilon_r_unit": ("linear", "db", "phi"),
    "optimize.upsilon_c_unit": ("linear", "db", "phi"),
    "coarray.family": ("uniform", "nested", "wichmann"),
    "music_rmse.family": ("uniform", "nested", "wichmann"),
}
_FAMILY_LISTS = ("tradeoff.families", "optimize.families")


def _check_value(key: str, default: Any, value: Any) -> Any:
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        if default:
            value = [_check_value(f"{key}[]", default[0], v) for v in value]
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(f"{key}: {value!r} is not one of {_CHOICES[key]}")
    if key in _FAMILY_LISTS:
        bad = [v for v in value if v not in ("uniform", "nested", "wichmann")]
        if bad:
            raise ConfigError(f"{key}: unknown families {bad}")
    return value


def merge(base: dict, update: dict, prefix: str = "") -> dict:
    """Recursively merge ``update`` into a copy of ``base``, rejecting unknown keys."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a table")
            out[key] = merge(base[key], value, path + ".")
        else:
            out[key] = _check_value(path, _default_at(path), value)
    return out


def _default_at(path: str) -> Any:
    node: Any = DEFAULTS
    for part in path.split("."):
        node = node[part]
    return node


def _parse_scalar(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; the value uses TOML literal syntax."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, text = (s.strip() for s in assignment.split("=", 1))
    parts = key.split(".")
    update: dict = {}
    node = update
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = _parse_scalar(text)
    return merge(cfg, update)


def load_config(path: Optional[str | Path] = None, overrides=(), seed: Optional[int] = None) -> dict:
    """Resolved configuration: defaults, then the TOML file, then overrides, then ``seed``."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        cfg = merge(cfg, data)
    for item in overrides:
        cfg = apply_override(cfg, item)
    if seed is not None:
        cfg["seed"] = int(seed)
    if not 0 <= int(cfg["seed"]) < 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    return cfg


def flatten(cfg: dict, prefix: str = "") -> list[tuple[str, Any]]:
    """Sorted ``(dotted key, value)`` pairs."""
    out = []
    for key in sorted(cfg):
        value = cfg[key]
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(flatten(value, path + "."))
        else:
            out.append((path, value))
    return out


def config_lines(cfg: dict) -> list[str]:
    return [f"{k} = {json.dumps(v)}" for k, v in flatten(cfg)]


def wavelength(cfg: dict) -> float:
    return SPEED_OF_LIGHT / cfg["scenario"]["carrier_frequency"]


def slot_interval(cfg: dict) -> float:
    sc = cfg["scenario"]
    if sc["slot_interval"] is not None:
        return float(sc["slot_interval"])
    return wavelength(cfg) / (4.0 * sc["v_max"])


def calibrated_symbol_energy(wavelength_m: float, noise_power: float, correlation_gain: float,
                             distance: float, rcs: float, snr_db: float,
                             tx_gain: float = 1.0, rx_gain: float = 1.0) -> float:
    """Es giving radar SNR ``snr_db`` for one target at ``distance`` with ``rcs`` (m^2)."""
    g = radar_two_way_gain(Target(distance, 0.0, rcs), wavelength_m, tx_gain, rx_gain)
    return float(db2lin(snr_db)) * noise_power / (correlation_gain**2 * g)


def target_velocities(cfg: dict) -> np.ndarray:
    t = cfg["scenario"]["targets"]
    if t["velocities"] is not None:
        return np.asarray(t["velocities"], dtype=float)
    return equally_spaced_velocities(t["count"], t["velocity_min"], t["velocity_max"])


def build_scenario(cfg: dict, distance: Optional[float] = None, n_targets: Optional[int] = None) -> Scenario:
    """Scenario from a resolved configuration.

    ``distance`` and ``n_targets`` override the target block (used by sweeps).
    """
    sc = cfg["scenario"]
    lam = wavelength(cfg)
    t_sym = 1.0 / sc["bandwidth"]
    timing = FrameTiming(sc["timing"]["preamble_symbols"], t_sym, sc["timing"]["ifs"])
    gamma = sc["correlation_gain"]
    if gamma is None:
        gamma = math.sqrt(timing.preamble_symbols)
    noise = sc["noise_power"]
    if noise is None:
        noise = thermal_noise_power(sc["bandwidth"], sc["noise_figure_db"], sc["temperature"])
    g_tx, g_rx = float(db2lin(sc["tx_gain_db"])), float(db2lin(sc["rx_gain_db"]))
    tcfg = sc["targets"]
    rcs = float(db2lin(tcfg["rcs_dbsm"]))
    es = sc["symbol_energy"]
    if es is None:
        es = calibrated_symbol_energy(lam, noise, gamma, sc["calibration_distance"], rcs,
                                      sc["calibration_snr_db"], g_tx, g_rx)
    if n_targets is not None:
        tcfg = dict(tcfg, count=n_targets, velocities=None)
        vel = target_velocities({"scenario": {"targets": tcfg}})
    else:
        vel = target_velocities(cfg)
    rho = tcfg["distance"] if distance is None else distance
    power = None
    if tcfg["snr_db"] is not None:
        power = float(db2lin(tcfg["snr_db"])) * noise
    targets = tuple(Target(rho, float(v), rcs, power) for v in vel)
    scene = RadarScene(lam, targets, g_tx, g_rx, es, gamma, noise)
    cc = sc["comm"]
    link = CommLink.exponential(cc["distance"], cc["pathloss_exponent"], cc["n_taps"], cc["tap_decay_db"])
    comm_snr = None if cc["snr_db"] is None else float(db2lin(cc["snr_db"]))
    return Scenario(
        scene=scene,
        link=link,
        timing=timing,
        slot_interval=slot_interval(cfg),
        cpi=sc["cpi"],
        enforce_cpi_fit=sc["enforce_cpi_fit"],
        eta=sc["eta"],
        comm_block=cc["block"],
        comm_mode=cc["eigen_mode"],
        comm_seed=cc["seed"],
        comm_snr=comm_snr,
    )
