"""Configuration with precedence flags > environment > file > defaults.

The file format is INI-style sections of flat key/value pairs; every key
also exists as a command-line flag. Defaults carry the operating points
used throughout: temperature 0, seed 42, thinking budget 4096, forcing
text "Wait." with a 2048-token per-forcing limit.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from typing import Mapping

from .budget import BudgetPolicy

BASE_URL_ENV = "M1_BASE_URL"


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    base_url: str = "http://localhost:8000"
    model: str = "default"
    temperature: float = 0.0
    seed: int = 42
    thinking_budget: int = 4096
    forcing_count: int = 0
    per_forcing_cap: int = 2048
    forcing_text: str = "Wait."
    workers: int = 8
    output_dir: str = "."

    def policy(self) -> BudgetPolicy:
        return BudgetPolicy(
            thinking_budget=self.thinking_budget,
            forcing_count=self.forcing_count,
            forcing_text=self.forcing_text,
            per_forcing_cap=self.per_forcing_cap,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# file section for each key; flat keys, all also exposed as flags
_SECTIONS = {
    "base_url": "backend",
    "model": "backend",
    "temperature": "backend",
    "seed": "backend",
    "thinking_budget": "policy",
    "forcing_count": "policy",
    "per_forcing_cap": "policy",
    "forcing_text": "policy",
    "workers": "run",
    "output_dir": "run",
}

_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc


def _read_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for section in parser.sections():
        if section not in set(_SECTIONS.values()):
            raise ConfigError(f"unknown config section: {section}")
        for key, raw in parser.items(section):
            if key not in _SECTIONS or _SECTIONS[key] != section:
                raise ConfigError(f"unknown config key: {key}")
            values[key] = _coerce(key, raw)
    return values


def load_config(
    path: str | None = None,
    env: Mapping[str, str] | None = None,
    flags: Mapping[str, object] | None = None,
) -> Config:
    """Assemble the effective configuration.

    ``flags`` holds only explicitly supplied overrides. Unknown keys are
    rejected by name.
    """
    env = os.environ if env is None else env
    values: dict = {}
    if path:
        values.update(_read_file(path))
    if BASE_URL_ENV in env:
        values["base_url"] = env[BASE_URL_ENV]
    for key, value in (flags or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key: {key}")
        if value is not None:
            values[key] = value
    return Config(**values)
