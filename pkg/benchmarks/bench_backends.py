"""Throughput comparison of the compiled and pure-Python round engines.

Usage:
    python3 benchmarks/bench_backends.py [--rounds N] [--seed S]

Runs every built-in strategy through both backends on identical configs and
prints rounds per second plus the speedup factor.  The logs are also compared
for equality, so this doubles as a quick parity smoke test.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings

from qdkd import _backend
from qdkd.attacks import (
    AttackParams,
    alice_key_attack,
    bob_key_attack,
    error_tuning,
    honest,
    swap_vacuum,
)
from qdkd.protocol import ProtocolConfig, run_experiment


def strategies():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return (
            ("none", honest()),
            ("swap", swap_vacuum()),
            ("tuning", error_tuning(0.5)),
            ("alice", alice_key_attack(AttackParams(p=0.5, epsilon=0.5))),
            ("bob", bob_key_attack(AttackParams(p=0.5, epsilon=0.5))),
        )


def timed(config, strategy, backend):
    os.environ["QDKD_BACKEND"] = backend
    try:
        t0 = time.perf_counter()
        log = run_experiment(config, strategy)
        return time.perf_counter() - t0, log
    finally:
        os.environ.pop("QDKD_BACKEND", None)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rounds", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not _backend.compiled_available():
        print("compiled kernel not built; nothing to compare", file=sys.stderr)
        return 1

    config = ProtocolConfig(rounds=args.rounds, master_seed=args.seed)
    print(f"{args.rounds} rounds per cell, master_seed={args.seed}")
    print(f"{'strategy':8s} {'python rnd/s':>14s} {'cython rnd/s':>14s} {'speedup':>8s}  logs")
    for name, strategy in strategies():
        t_py, log_py = timed(config, strategy, "python")
        t_cy, log_cy = timed(config, strategy, "cython")
        equal = "equal" if log_py.outcomes == log_cy.outcomes else "DIFFER"
        print(f"{name:8s} {args.rounds / t_py:>14,.0f} {args.rounds / t_cy:>14,.0f}"
              f" {t_py / t_cy:>7.1f}x  {equal}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
