"""Round engine and trial bookkeeping for the two-way dense-coding key link.

Layout: Alice keeps qubit A and launches the photon mode B toward Bob; B
travels back to Alice afterwards.  Mode E belongs to a potential interceptor
and idles in vacuum when nobody taps the line, so every round evolves the
same 18-dimensional (A, B, E) space regardless of strategy.

Round shapes:

- message mode (MM): Alice encodes j on B, Bob encodes k and returns the
  photon, Alice reads the joint interference outcome m and both sides derive
  the partner's bit as m XOR (own bit).
- control mode (CM): Bob keeps the photon and reads it out; Alice reads her
  qubit.  A detection with equal bits counts as "correlated" (the honest
  singlet never produces one).

Determinism contract.  Round i draws from its own SplitMix64 stream seeded
with round_seed(master_seed, i), and consumes uniforms in this fixed order:

1. j                      one draw (fair bit)
2. branch                 one draw, composite attacks only
3. loss survival          one draw, skipped when the round's branch
                          intercepts the forward leg; a lost photon costs one
                          extra draw (the discarded line photodetection)
4. forward-hook draws     strategy-specific, fixed per branch
5. mode                   one draw (CM with probability cm_probability)
6. CM: line photodetection (one draw), then Alice's qubit readout (one draw)
   MM: k (one draw), backward-hook draws, then the interference readout
       (one draw)

The compiled backend replays exactly this sequence, which is what makes the
two backends produce identical trial logs for identical seeds.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Sequence

from . import quantum
from .errors import BadParam, QdkdError, UnknownMode
from .quantum import FAIL, VAC, ModeKind, StateVector
from .rng import SplitMix64, round_seed

MODE_A = "A"
MODE_B = "B"
MODE_E = "E"

MM = "MM"
CM = "CM"

LAYOUT = (
    (MODE_A, ModeKind.QUBIT),
    (MODE_B, ModeKind.PHOTON),
    (MODE_E, ModeKind.PHOTON),
)

_BELL_MINUS = quantum.make_bell_state("-", MODE_A, MODE_B)
_VACUUM_E = quantum.make_basis_state(((MODE_E, ModeKind.PHOTON),), (VAC,))
_Z_B = quantum.op_z_pow(1, MODE_B)


@dataclasses.dataclass(frozen=True)
class ProtocolConfig:
    """Static parameters of one trial."""

    rounds: int
    master_seed: int = 0
    cm_probability: float = 0.5
    transmission: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.rounds, int) or self.rounds < 0:
            raise BadParam(f"rounds must be a non-negative integer, got {self.rounds!r}")
        if not isinstance(self.master_seed, int):
            raise BadParam(f"master_seed must be an integer, got {self.master_seed!r}")
        if not 0.0 <= self.cm_probability <= 1.0:
            raise BadParam(f"cm_probability must lie in [0, 1], got {self.cm_probability!r}")
        if not 0.0 < self.transmission <= 1.0:
            raise BadParam(f"transmission must lie in (0, 1], got {self.transmission!r}")


@dataclasses.dataclass(frozen=True)
class RoundOutcome:
    """Everything either party (or the interceptor) recorded in one round.

    Fields that a round shape does not produce are None: k, m and the derived
    views exist only in MM rounds, the cm_* fields only in CM rounds, and the
    interceptor fields only when the strategy filled them in.
    """

    index: int
    mode: str
    j: int
    k: int | None
    m: object  # 0 | 1 | FAIL | None
    k_view_a: int | None
    j_view_b: int | None
    eve_j: int | None
    eve_k: int | None
    eve_branch: str | None
    cm_detected: bool | None
    cm_bob: int | None
    cm_alice: int | None
    cm_correlated: bool | None


@dataclasses.dataclass(frozen=True)
class TrialLog:
    """Config, attack descriptor and the full per-round record of one trial."""

    config: ProtocolConfig
    attack: dict
    outcomes: tuple


def derive_partner_keys(m: int, j: int, k: int) -> tuple:
    """Both sides' key views from an announced interference outcome:
    Alice's estimate of k and Bob's estimate of j."""
    for name, v in (("m", m), ("j", j), ("k", k)):
        if v not in (0, 1):
            raise BadParam(f"{name} must be 0 or 1, got {v!r}")
    return (m ^ j, m ^ k)


class ChannelTap:
    """An interceptor's handle on the traveling state.

    Restricts unitaries and measurements to the allowed modes (the line B and
    the tap E); anything touching Alice's stored qubit raises UnknownMode, so
    mode discipline is a property of the API rather than reviewer diligence.
    """

    __slots__ = ("state", "_allowed")

    def __init__(self, state: StateVector, allowed: Sequence[str] = (MODE_B, MODE_E)) -> None:
        self.state = state
        self._allowed = frozenset(allowed)

    def _audit(self, targets: Iterable[str]) -> None:
        stray = [t for t in targets if t not in self._allowed]
        if stray:
            raise UnknownMode(f"tap may not touch mode(s) {stray}")

    def apply(self, op: quantum.ModeOperator) -> None:
        self._audit(op.targets)
        self.state = quantum.apply(self.state, op)

    def measure_photon(self, mode: str, rng: SplitMix64, destructive: bool = True):
        self._audit((mode,))
        out = quantum.measure_photon_mode(self.state, mode, rng, destructive=destructive)
        if out.post_state is None:
            raise QdkdError("measurement collapsed onto a zero-probability branch")
        self.state = out.post_state
        return out.label


def run_round(config: ProtocolConfig, strategy, index: int) -> RoundOutcome:
    """Reference (pure Python) implementation of a single round.

    `strategy` supplies the interceptor hooks; see attacks.AttackStrategy.
    This function is the behavioral definition the compiled kernel must
    match draw for draw.
    """
    rng = SplitMix64(round_seed(config.master_seed, index))
    notes: dict = {}

    ancilla = strategy.ancilla if strategy.ancilla is not None else _VACUUM_E
    state = quantum.tensor(_BELL_MINUS, ancilla)

    j = rng.bit()
    if j:
        state = quantum.apply(state, _Z_B)

    strategy.begin_round(rng, notes)
    tap = ChannelTap(state)

    if not strategy.intercepts_forward(notes):
        if not rng.bernoulli(config.transmission):
            # photon absorbed in the fiber; nobody sees the outcome
            tap.measure_photon(MODE_B, rng, destructive=True)
    strategy.forward(tap, rng, notes)

    if rng.bernoulli(config.cm_probability):
        bob = quantum.measure_photon_mode(tap.state, MODE_B, rng, destructive=True)
        if bob.post_state is None:
            raise QdkdError("measurement collapsed onto a zero-probability branch")
        alice = quantum.measure_qubit(bob.post_state, MODE_A, rng)
        detected = bob.label is not VAC
        cm_bob = bob.label if detected else None
        correlated = bool(detected and cm_bob == alice.label)
        eve_j, eve_k = strategy.infer(None, notes)
        return RoundOutcome(
            index=index, mode=CM, j=j, k=None, m=None,
            k_view_a=None, j_view_b=None,
            eve_j=eve_j, eve_k=eve_k, eve_branch=notes.get("branch"),
            cm_detected=detected, cm_bob=cm_bob, cm_alice=alice.label,
            cm_correlated=correlated,
        )

    k = rng.bit()
    if k:
        tap.state = quantum.apply(tap.state, _Z_B)
    strategy.backward(tap, rng, notes)

    outcome = quantum.bell_measure(tap.state, MODE_A, MODE_B, rng)
    m = outcome.label
    if m in (0, 1):
        k_view_a, j_view_b = derive_partner_keys(m, j, k)
        eve_j, eve_k = strategy.infer(m, notes)
    else:
        k_view_a = j_view_b = None
        eve_j, eve_k = strategy.infer(None, notes)
    return RoundOutcome(
        index=index, mode=MM, j=j, k=k, m=m,
        k_view_a=k_view_a, j_view_b=j_view_b,
        eve_j=eve_j, eve_k=eve_k, eve_branch=notes.get("branch"),
        cm_detected=None, cm_bob=None, cm_alice=None, cm_correlated=None,
    )


# ---------------------------------------------------------------------------
# experiment driver


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        raw = os.environ.get("QDKD_THREADS", "").strip()
        if raw:
            try:
                threads = int(raw)
            except ValueError:
                raise BadParam(f"QDKD_THREADS must be an integer, got {raw!r}") from None
            if threads == 0:  # 0 in the environment means "default"
                threads = 1
            elif threads < 0:
                raise BadParam(f"QDKD_THREADS must be >= 0, got {threads}")
        else:
            threads = 1
    if threads < 1:
        raise BadParam(f"thread count must be >= 1, got {threads}")
    return threads


def _chunk_spans(total: int, parts: int) -> list:
    parts = max(1, min(parts, total)) if total else 1
    base, extra = divmod(total, parts)
    spans = []
    start = 0
    for i in range(parts):
        count = base + (1 if i < extra else 0)
        spans.append((start, count))
        start += count
    return spans


def run_experiment(config: ProtocolConfig, strategy, threads: int | None = None) -> TrialLog:
    """Run config.rounds independent rounds and collect the full log.

    The per-round seeding makes the result a pure function of (config,
    strategy); thread count (QDKD_THREADS or the `threads` argument) only
    caps parallelism and never changes the log.  The compiled kernel is used
    when available unless QDKD_BACKEND=python forces the reference path.
    """
    from . import _backend

    threads = _resolve_threads(threads)
    n = config.rounds

    if _backend.active_backend() == "cython" and _backend.kernel_id(strategy) is not None:
        def work(span):
            start, count = span
            return _run_kernel_span(config, strategy, start, count)
    else:
        def work(span):
            start, count = span
            return [run_round(config, strategy, start + i) for i in range(count)]

    spans = _chunk_spans(n, threads)
    if len(spans) == 1:
        outcomes = work(spans[0])
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            outcomes = [o for chunk in pool.map(work, spans) for o in chunk]
    return TrialLog(config=config, attack=strategy.descriptor(), outcomes=tuple(outcomes))


_KERNEL_MATS = None


def _kernel_matrices() -> dict:
    """18-dim embeddings of every operator the compiled kernel can apply,
    built once by the reference engine so the kernel holds no physics."""
    global _KERNEL_MATS
    if _KERNEL_MATS is None:
        _KERNEL_MATS = {
            "Z": quantum.embed_matrix(quantum.op_z_pow(1, MODE_B), LAYOUT),
            "X": quantum.embed_matrix(quantum.op_x_pow(1, MODE_B), LAYOUT),
            "SWAP": quantum.embed_matrix(quantum.op_swap(MODE_B, MODE_E), LAYOUT),
            "V": quantum.embed_matrix(quantum.op_v(MODE_B, MODE_E), LAYOUT),
            "VD": quantum.embed_matrix(quantum.dagger(quantum.op_v(MODE_B, MODE_E)), LAYOUT),
            "INJ0": quantum.embed_matrix(quantum.op_inject(0, MODE_B), LAYOUT),
            "INJ1": quantum.embed_matrix(quantum.op_inject(1, MODE_B), LAYOUT),
        }
    return _KERNEL_MATS


def _run_kernel_span(config: ProtocolConfig, strategy, start: int, count: int) -> list:
    from . import _backend

    ancilla = strategy.ancilla if strategy.ancilla is not None else _VACUUM_E
    init = quantum.tensor(_BELL_MINUS, ancilla).amps
    p, epsilon = strategy.kernel_params
    raw = _backend.run_rounds(
        _backend.kernel_id(strategy), p, epsilon,
        config.master_seed, start, count,
        config.cm_probability, config.transmission,
        init, _kernel_matrices(),
    )
    return _arrays_to_outcomes(raw, start)


_M_CODES = {0: 0, 1: 1, 2: FAIL}
_BRANCH_CODES = {0: "T", 1: "E"}


def _arrays_to_outcomes(raw: dict, start: int) -> list:
    def opt(v):
        return None if v < 0 else int(v)

    outcomes = []
    n = len(raw["mode"])
    for i in range(n):
        is_cm = raw["mode"][i] == 1
        m = None if is_cm else _M_CODES[int(raw["m"][i])]
        det = opt(raw["cm_detected"][i])
        corr = opt(raw["cm_correlated"][i])
        outcomes.append(RoundOutcome(
            index=start + i,
            mode=CM if is_cm else MM,
            j=int(raw["j"][i]),
            k=opt(raw["k"][i]),
            m=m,
            k_view_a=opt(raw["k_view_a"][i]),
            j_view_b=opt(raw["j_view_b"][i]),
            eve_j=opt(raw["eve_j"][i]),
            eve_k=opt(raw["eve_k"][i]),
            eve_branch=_BRANCH_CODES.get(int(raw["eve_branch"][i])),
            cm_detected=None if det is None else bool(det),
            cm_bob=opt(raw["cm_bob"][i]),
            cm_alice=opt(raw["cm_alice"][i]),
            cm_correlated=None if corr is None else bool(corr),
        ))
    return outcomes


# ---------------------------------------------------------------------------
# serialization

CSV_COLUMNS = (
    "index", "mode", "j", "k", "m", "kA", "jB",
    "eve_j", "eve_k", "cm_detected", "cm_correlated", "eve_branch",
)


def round_record(out: RoundOutcome) -> dict:
    """JSON-ready dict for one round (absent values stay None/null)."""
    return {
        "index": out.index,
        "mode": out.mode,
        "j": out.j,
        "k": out.k,
        "m": out.m,
        "kA": out.k_view_a,
        "jB": out.j_view_b,
        "eve_j": out.eve_j,
        "eve_k": out.eve_k,
        "cm_detected": out.cm_detected,
        "cm_correlated": out.cm_correlated,
        "eve_branch": out.eve_branch,
    }


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if value is True:
        return "1"
    if value is False:
        return "0"
    return str(value)


def rounds_csv_text(log: TrialLog) -> str:
    """Per-round CSV with a fixed column order and newline convention,
    byte-identical for identical logs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for out in log.outcomes:
        rec = round_record(out)
        writer.writerow([_csv_cell(rec[col]) for col in CSV_COLUMNS])
    return buf.getvalue()
