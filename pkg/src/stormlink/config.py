"""Run configuration: one YAML tree, defaults, and dotted-path overrides.

The file supplies only the keys it wants to change; everything else
comes from DEFAULTS. Key names are validated against the default tree
so a misspelled option fails loudly instead of being ignored.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from .detect import DetectorParams
from .nn import ArchConfig
from .synth import ScenarioConfig
from .tracker import ByteParams
from .tune import Weights


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "paths": {
        "grids": "runs/grids",
        "land_mask": None,
        "best_tracks": None,
        "truth_tracks": "runs/truth_tracks.csv",
        "detections": "runs/detections.csv",
        "tracks": "runs/tracks.csv",
        "dataset": "runs/dataset",
        "models": "runs/models",
        "reports": "runs/report",
    },
    "scenario": {
        "n_storms": 3,
        "steps": 40,
        "start": "1998-08-01T00:00:00Z",
        "speed_kmh": 15.0,
        "turn_rate_deg": 6.0,
        "well_depth": 12.0,
        "well_radius_cells": 4.0,
        "noise_std": 0.0,
        "dropout_prob": 0.0,
        "seed": 0,
    },
    "patchify": {
        "seed": 7,
    },
    "detector": {
        "kind": "physics",
        "class_threshold": 0.5,
        "bbox_size": 21,
        "dedupe_radius_cells": 8,
    },
    "tracker": {
        "track_threshold": 0.7,
        "match_threshold": 0.8,
        "track_buffer": 1,
        "low_score_floor": 0.5,
        "bbox_size": 21,
        "max_displacement_km": 400.0,
        "min_track_steps": 12,
        "genesis_lat_max": 30.0,
        "motion": "constant_velocity",
    },
    "train": {
        "split": "train",
        "steps": 300,
        "batch_size": 16,
        "lr": 1.0e-3,
        "weight_decay": 1.0e-2,
        "seed_classify": 11,
        "seed_locate": 12,
        "arch": {
            "n_conv_blocks": 3,
            "convs_per_block": 3,
            "base_filters": 8,
            "filter_growth": 2,
            "filter_cap": 1024,
            "linear_widths": [64, 32],
            "in_channels": 2,
            "input_size": 40,
        },
    },
    "metrics": {
        "radius_km": 300.0,
        "min_matched_steps": 1,
        "month": 8,
        "years": None,
    },
    "tuner": {
        "bbox_sizes": [15, 21, 25, 31, 35],
        "buffers": [1, 2, 3, 4],
        "constraint_sets": ["none", "no_land", "lat30", "lat50", "no_land_lat30", "no_land_lat50"],
        "match_threshold": 0.8,
        "track_threshold": 0.7,
        "weights": {"w_pod": 0.4, "w_far": 0.3, "w_enp": 0.15, "w_wnp": 0.15},
        "sweep": {"match_values": [0.7, 0.8, 0.9], "track_values": [0.6, 0.7, 0.8]},
    },
    "jobs": 1,
}

_DETECTOR_KINDS = ("physics", "neural")


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(base[key], dict):
            if value is None:
                continue  # an empty YAML section keeps the defaults
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path} must be a mapping")
            out[key] = _merge(base[key], value, prefix=path + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None) -> dict[str, Any]:
    """Defaults overlaid with the given YAML file, if any."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    return _merge(DEFAULTS, data)


def serialize_config(config: dict[str, Any]) -> str:
    return yaml.safe_dump(config, sort_keys=True, default_flow_style=False)


def apply_overrides(config: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply repeatable KEY.PATH=VALUE flags; values parse as YAML scalars."""
    out = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key.path=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        node = out
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[key]
        last = keys[-1]
        if not isinstance(node, dict) or last not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse override value {raw!r}: {e}") from e
        if isinstance(node[last], dict) and not isinstance(value, dict):
            raise ConfigError(f"config key {dotted} must be a mapping")
        node[last] = value
    return out


def scenario_config(config: dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig(**config["scenario"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"scenario: {e}") from e


def detector_params(config: dict[str, Any]) -> DetectorParams:
    section = dict(config["detector"])
    kind = section.pop("kind")
    if kind not in _DETECTOR_KINDS:
        raise ConfigError(f"detector.kind must be one of {_DETECTOR_KINDS}, got {kind!r}")
    try:
        return DetectorParams(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"detector: {e}") from e


def byte_params(config: dict[str, Any]) -> ByteParams:
    try:
        return ByteParams(**config["tracker"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"tracker: {e}") from e


def arch_config(config: dict[str, Any]) -> ArchConfig:
    section = dict(config["train"]["arch"])
    section["linear_widths"] = tuple(section["linear_widths"])
    try:
        return ArchConfig(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"train.arch: {e}") from e


def tuner_weights(config: dict[str, Any]) -> Weights:
    try:
        return Weights(**config["tuner"]["weights"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"tuner.weights: {e}") from e


def validate_config(config: dict[str, Any]) -> None:
    """Build every typed section once so bad values fail before any work."""
    scenario_config(config)
    detector_params(config)
    byte_params(config)
    arch_config(config)
    tuner_weights(config)
    jobs = config["jobs"]
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError(f"jobs must be a positive integer, got {jobs!r}")
    month = config["metrics"]["month"]
    if not isinstance(month, int) or not 1 <= month <= 12:
        raise ConfigError(f"metrics.month must be 1..12, got {month!r}")
    if config["metrics"]["min_matched_steps"] < 1:
        raise ConfigError("metrics.min_matched_steps must be at least 1")
    if config["metrics"]["radius_km"] <= 0:
        raise ConfigError("metrics.radius_km must be positive")
    years = config["metrics"]["years"]
    if years is not None and (
        not isinstance(years, list) or not all(isinstance(y, int) for y in years)
    ):
        raise ConfigError("metrics.years must be null or a list of integers")
