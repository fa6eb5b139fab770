"""CLI entry points and the HTTP labeling service."""

from featpipe.serve.config import ApiConfig, ConfigError, load_config

__all__ = ["ApiConfig", "ConfigError", "load_config"]
