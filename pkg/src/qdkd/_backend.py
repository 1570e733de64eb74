"""Backend selection for the round loop.

Two implementations produce trial logs: the compiled kernel (qdkd._fastcore,
a Cython extension) and the pure-Python reference loop in protocol.run_round.
The kernel is picked automatically when the extension imported and the
strategy is one of the built-ins; QDKD_BACKEND=python or =cython overrides.
Both replay the same documented draw sequence, so logs are identical either
way.
"""

from __future__ import annotations

import os

from .errors import BadParam

try:
    from . import _fastcore
except ImportError:  # extension not built; pure path only
    _fastcore = None

KERNEL_IDS = {"honest": 0, "swap": 1, "tuning": 2, "alice": 3, "bob": 4}


def compiled_available() -> bool:
    return _fastcore is not None


def available_backends() -> tuple:
    return ("cython", "python") if compiled_available() else ("python",)


def active_backend() -> str:
    """Backend currently in effect, honoring the QDKD_BACKEND override."""
    forced = os.environ.get("QDKD_BACKEND", "").strip().lower()
    if forced == "python":
        return "python"
    if forced == "cython":
        if not compiled_available():
            raise BadParam("QDKD_BACKEND=cython but the compiled kernel is not built")
        return "cython"
    if forced:
        raise BadParam(f"unknown QDKD_BACKEND value {forced!r} (use cython or python)")
    return "cython" if compiled_available() else "python"


def backend_name() -> str:
    try:
        return active_backend()
    except BadParam:
        return "python"


def kernel_id(strategy) -> int | None:
    """Dispatch id for a strategy the kernel knows, else None."""
    return KERNEL_IDS.get(getattr(strategy, "kernel_kind", None))


def run_rounds(kind, p, epsilon, master_seed, start, count,
               cm_probability, transmission, init_amps, matrices):
    """Thin forwarding call into the compiled kernel."""
    if _fastcore is None:
        raise BadParam("compiled kernel is not built")
    return _fastcore.run_rounds(
        kind, float(p), float(epsilon),
        master_seed & ((1 << 64) - 1), start, count,
        float(cm_probability), float(transmission),
        init_amps,
        matrices["Z"], matrices["X"], matrices["SWAP"],
        matrices["V"], matrices["VD"], matrices["INJ0"], matrices["INJ1"],
    )
