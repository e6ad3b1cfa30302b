"""Configuration, orchestration, persistence and reporting."""

from .config import ConfigParseError, ConfigValidationError, RunConfig, load_config, parse_config
from .persistence import RunManifest
from .runner import report, run

__all__ = ["RunConfig", "RunManifest", "ConfigParseError", "ConfigValidationError", "load_config", "parse_config",
           "run", "report"]
