"""
Experiment layer: configuration parsing and run orchestration
"""

from .config import emit_config, load_config, parse_config
from .models import ConfigError, ConfigParseError, ConfigValidationError, ExperimentPlan

__all__ = [
    'emit_config', 'load_config', 'parse_config',
    'ConfigError', 'ConfigParseError', 'ConfigValidationError', 'ExperimentPlan',
]
