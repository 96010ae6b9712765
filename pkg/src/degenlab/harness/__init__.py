"""Configuration, experiment dispatch and result files."""

from .config import ExperimentConfig, parse_config, serialize_config
from .output import ResultRecord, emit_tables
from .runner import run

__all__ = ["ExperimentConfig", "ResultRecord", "emit_tables", "parse_config", "run",
           "serialize_config"]
