"""Hierarchical LLM-planner + PPO interactive recommendation at desk scale."""

from lerl.errors import (
    ConfigError,
    DomainError,
    FormatError,
    InfeasibleMaskError,
    IoError,
    LerlError,
    NumericalError,
    StateError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "FormatError",
    "InfeasibleMaskError",
    "IoError",
    "LerlError",
    "NumericalError",
    "StateError",
]
