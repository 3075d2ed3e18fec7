"""Deterministic discrete-event simulator for on-demand route discovery.

Small ad-hoc networks, integer-tick timing, and a pluggable policy layer
that decides which neighbors a route request is forwarded to.
"""

from .engine import Engine, run
from .metrics import MetricsReport, compare
from .scenario import BUILTIN_NAMES, builtin, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "run",
    "MetricsReport",
    "compare",
    "builtin",
    "parse_scenario",
    "BUILTIN_NAMES",
    "__version__",
]
