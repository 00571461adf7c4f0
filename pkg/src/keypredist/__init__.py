"""Key predistribution for sensor networks: Random, 2-Phase and 2PWR schemes."""

from .keyspace import (
    KeyRing,
    ParameterError,
    Scheme,
    SchemeParams,
    assign,
    assign_random,
    assign_two_phase,
    assign_two_phase_wr,
)

__all__ = [
    "KeyRing",
    "ParameterError",
    "Scheme",
    "SchemeParams",
    "assign",
    "assign_random",
    "assign_two_phase",
    "assign_two_phase_wr",
]
