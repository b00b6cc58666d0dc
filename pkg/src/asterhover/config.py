"""YAML run configuration: load, merge dotted overrides, build the typed
config objects, and echo the fully resolved result into a run directory.

The YAML layout mirrors the config dataclasses (nested sections for the
scenario, asteroid ranges, sensor, reward, and update hyperparameters), so
any default named in the code can be pinned in a file or overridden on the
command line as `section.key=value`; later sources win.
"""

from __future__ import annotations

import dataclasses
import os

import yaml

from . import __version__
from .errors import ConfigurationError


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config file {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a mapping")
    return data


def parse_overrides(pairs: list[str]) -> dict:
    """KEY=VALUE strings (dotted keys) to a nested dict; YAML-typed values."""
    out: dict = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"override {pair!r} is not KEY=VALUE")
        try:
            value = yaml.safe_load(raw) if raw else ""
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"override {pair!r}: {exc}") from exc
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {pair!r} conflicts with {part}")
        node[parts[-1]] = value
    return out


def merge_dicts(base: dict, extra: dict) -> dict:
    """Recursive merge; extra wins on conflicts."""
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_dicts(out[key], value)
        else:
            out[key] = value
    return out


def apply_to_dataclass(obj, data: dict, path: str = "") -> None:
    """Set config fields from a nested dict; unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"config section {path or '<root>'} must be a mapping")
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigurationError(f"unknown config key {path}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and not isinstance(current, type):
            apply_to_dataclass(current, value, f"{path}{key}.")
        else:
            setattr(obj, key, value)


def resolved_config_dict(command: str, cfg) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": dataclasses.asdict(cfg) if dataclasses.is_dataclass(cfg) else cfg,
    }


def write_resolved_config(out_dir: str, command: str, cfg) -> str:
    """Echo the effective configuration and code version for reproducibility."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "resolved_config.yaml")
    with open(path, "w") as fh:
        yaml.safe_dump(resolved_config_dict(command, cfg), fh, sort_keys=True)
    return path
