"""Exact simulator and analytic verifier for a dense-coding key protocol
with vacuum-capable photon modes, plus the intercept attacks against it."""

from . import analysis, attacks, protocol, quantum, rng, verify
from ._backend import backend_name
from .errors import QdkdError

__all__ = [
    "analysis", "attacks", "protocol", "quantum", "rng", "verify",
    "backend_name", "QdkdError",
]

__version__ = "0.1.0"
