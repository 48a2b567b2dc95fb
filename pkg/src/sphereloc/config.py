"""Configuration file handling.

Every tunable constant in the library has its default recorded in the
shipped ``data/default_config.json``; a user file only needs the keys
it overrides.  Unknown sections or keys are rejected up front so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from importlib import resources

from .fiducial import DetectorParams
from .partition import SolverConfig
from .sim import GeometricDetectorModel


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration files."""


def default_config() -> dict:
    """A fresh copy of the shipped defaults."""
    text = (
        resources.files("sphereloc").joinpath("data/default_config.json")
        .read_text(encoding="utf-8")
    )
    return json.loads(text)


def load_config(path=None) -> dict:
    """Shipped defaults, with `path` (if given) merged over them.

    The override file uses the same two-level shape; every section and
    key must already exist in the defaults.
    """
    cfg = default_config()
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, values in user.items():
        if section not in cfg:
            raise ConfigError(f"{path}: unknown section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ConfigError(
                    f"{path}: unknown key {key!r} in section {section!r}"
                )
            cfg[section][key] = value
    return cfg


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg["solver"])


def detector_params(cfg: dict) -> DetectorParams:
    return DetectorParams(**cfg["detector"])


def detector_model(cfg: dict) -> GeometricDetectorModel:
    return GeometricDetectorModel(**cfg["detector_model"])


def selection_weights(cfg: dict) -> tuple[float, float, float]:
    w = cfg["selection"]["weights"]
    if len(w) != 3:
        raise ConfigError("selection.weights must have three entries")
    return tuple(float(x) for x in w)
