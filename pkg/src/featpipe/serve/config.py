"""Service configuration: JSON file plus FEATPIPE_* environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

ENV_PREFIX = "FEATPIPE_"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8650
    backend: str = "synthetic:patch-mean?patch=4"
    model_path: str | None = None
    transform_set: str = "standard:stride=4,neighborhood=moore,distances=1-2,flips=true"
    session_root: str = "sessions"
    workers: int = 2
    ui_root: str | None = None  # built frontend dir, served at /ui when set

    def validate(self) -> "ApiConfig":
        if not isinstance(self.port, int) or not 0 < self.port < 65536:
            raise ConfigError(f"port: expected 1..65535, got {self.port!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers: expected a positive integer, got {self.workers!r}")
        if not self.backend or ":" not in self.backend:
            raise ConfigError(f"backend: expected '<kind>:<name>' spec, got {self.backend!r}")
        if not self.session_root:
            raise ConfigError("session_root: must be non-empty")
        return self


def load_config(path: str | Path | None = None, env: dict | None = None) -> ApiConfig:
    """Build the config from an optional JSON file and the environment.

    Unknown file keys are rejected by name. ``FEATPIPE_<FIELD>`` overrides
    any field (e.g. ``FEATPIPE_PORT=9000``).
    """
    values: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(ApiConfig)}
        for key in doc:
            if key not in known:
                raise ConfigError(f"{key}: unknown config field")
        values.update(doc)

    env = os.environ if env is None else env
    for f in fields(ApiConfig):
        raw = env.get(ENV_PREFIX + f.name.upper())
        if raw is None:
            continue
        if f.type in ("int", int):
            try:
                values[f.name] = int(raw)
            except ValueError:
                raise ConfigError(f"{f.name}: expected an integer, got {raw!r}")
        else:
            values[f.name] = raw

    try:
        cfg = ApiConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))
    return cfg.validate()
