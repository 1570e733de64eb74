"""Interceptor strategies for the two-way key link.

A strategy is a bundle of per-round hooks called by protocol.run_round:

    begin_round(rng, notes)      branch choice for composite attacks
    intercepts_forward(notes)    True when this round's branch captures the
                                 photon before the lossy fiber segment
    forward(tap, rng, notes)     acts on the Alice -> Bob leg
    backward(tap, rng, notes)    acts on the Bob -> Alice leg (MM only)
    infer(m, notes)              (eve_j, eve_k) after the round, None = no
                                 guess; m is None when unannounced

Hooks receive a ChannelTap restricted to the line mode B and the tap mode E,
and must take randomness only from the round stream passed in.  The number
of draws each hook consumes is fixed per branch; that is part of the
determinism contract shared with the compiled kernel.

The two composite attacks mix an eavesdropping branch (chosen with
probability p) with an error-tuning branch, so the error rate their victims
observe can be dialed down while the intercepted branch still reads one key.
"""

from __future__ import annotations

import dataclasses
import warnings

from . import quantum
from .errors import BadParam
from .protocol import MODE_B, MODE_E
from .quantum import ModeKind, StateVector

BRANCH_EAVESDROP = "E"
BRANCH_TUNING = "T"


def _check_probability(value, name: str) -> float:
    value = float(value)
    if not 0.0 <= value < 1.0:
        raise BadParam(f"{name} must lie in [0, 1), got {value!r}")
    return value


def _check_epsilon(value) -> float:
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise BadParam(f"epsilon must lie in (0, 1], got {value!r}")
    if value > 0.5:
        warnings.warn(
            f"epsilon={value} exceeds 0.5; the tuned error rate "
            f"(1-epsilon)/2 = {(1 - value) / 2} drops below 0.25",
            stacklevel=3,
        )
    return value


@dataclasses.dataclass(frozen=True)
class AttackParams:
    """Shared knobs of the composite attacks: eavesdropping probability p
    and error-tuning strength epsilon."""

    p: float
    epsilon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", _check_probability(self.p, "p"))
        object.__setattr__(self, "epsilon", _check_epsilon(self.epsilon))


class AttackStrategy:
    """Base class; as built it is the do-nothing (honest channel) strategy."""

    name = "none"
    kernel_kind = "honest"

    @property
    def ancilla(self) -> StateVector | None:
        """Interceptor's private mode E at the start of a round, or None
        when the strategy brings no equipment (an idle vacuum E is then
        supplied by the engine)."""
        return None

    @property
    def kernel_params(self) -> tuple:
        """(p, epsilon) as plain floats for the compiled kernel."""
        return (0.0, 0.0)

    def begin_round(self, rng, notes: dict) -> None:
        pass

    def intercepts_forward(self, notes: dict) -> bool:
        return False

    def forward(self, tap, rng, notes: dict) -> None:
        pass

    def backward(self, tap, rng, notes: dict) -> None:
        pass

    def infer(self, m, notes: dict) -> tuple:
        return (None, None)

    def descriptor(self) -> dict:
        return {"name": self.name, "p": None, "epsilon": None}


def honest() -> AttackStrategy:
    """Nobody on the line."""
    return AttackStrategy()


class _SwapVacuum(AttackStrategy):
    """Store-and-replace probe: take the photon out on the way in, put it
    back on the way out.

    Bob holds vacuum the whole time, so he never detects anything and his
    encoding acts on nothing: the returning photon carries only Alice's bit
    (m = j), both partners' key views are coin flips, and no round ever
    shows a correlated control outcome.
    """

    name = "swap"
    kernel_kind = "swap"

    def __init__(self) -> None:
        self._swap = quantum.op_swap(MODE_B, MODE_E)

    def intercepts_forward(self, notes: dict) -> bool:
        return True

    def forward(self, tap, rng, notes: dict) -> None:
        tap.apply(self._swap)

    def backward(self, tap, rng, notes: dict) -> None:
        tap.apply(self._swap)


def swap_vacuum() -> AttackStrategy:
    return _SwapVacuum()


class _ErrorTuning(AttackStrategy):
    """No interception at all: flip the returning photon's phase with
    probability (1 - epsilon)/2, creating a tunable error rate that masks
    other activity."""

    name = "tuning"
    kernel_kind = "tuning"

    def __init__(self, epsilon: float) -> None:
        self.epsilon = _check_epsilon(epsilon)
        self._z = quantum.op_z_pow(1, MODE_B)

    @property
    def kernel_params(self) -> tuple:
        return (0.0, self.epsilon)

    def backward(self, tap, rng, notes: dict) -> None:
        q = 1 if rng.bernoulli((1.0 - self.epsilon) / 2.0) else 0
        notes["q"] = q
        if q:
            tap.apply(self._z)

    def descriptor(self) -> dict:
        return {"name": self.name, "p": None, "epsilon": self.epsilon}


def error_tuning(epsilon: float) -> AttackStrategy:
    return _ErrorTuning(epsilon)


class _CompositeAttack(AttackStrategy):
    """Common machinery of the two key-reading attacks: a per-round branch
    draw and the shared error-tuning branch."""

    def __init__(self, params: AttackParams) -> None:
        self.params = params
        self._z = quantum.op_z_pow(1, MODE_B)

    @property
    def kernel_params(self) -> tuple:
        return (self.params.p, self.params.epsilon)

    def begin_round(self, rng, notes: dict) -> None:
        notes["branch"] = BRANCH_EAVESDROP if rng.bernoulli(self.params.p) else BRANCH_TUNING

    def _tuning_backward(self, tap, rng, notes: dict) -> None:
        q = 1 if rng.bernoulli((1.0 - self.params.epsilon) / 2.0) else 0
        notes["q"] = q
        if q:
            tap.apply(self._z)

    def descriptor(self) -> dict:
        return {"name": self.name, "p": self.params.p, "epsilon": self.params.epsilon}


class _AliceKeyAttack(_CompositeAttack):
    """Read Alice's key.

    Eavesdropping branch: hold the photon in E for the whole Bob leg (his
    encoding hits vacuum), return it with a random extra phase q, and decode
    Alice's bit from the announced outcome as j = m XOR q -- exact, because
    the returned photon carries Z^(j XOR q) on the original entangled pair.
    The victims' key views in that branch are pure noise, so the tuning
    branch (probability 1 - p) keeps the blended error rate at
    (1 - epsilon(1 - p))/2.
    """

    name = "alice"
    kernel_kind = "alice"

    def __init__(self, params: AttackParams) -> None:
        super().__init__(params)
        self._swap = quantum.op_swap(MODE_B, MODE_E)

    def intercepts_forward(self, notes: dict) -> bool:
        return notes.get("branch") == BRANCH_EAVESDROP

    def forward(self, tap, rng, notes: dict) -> None:
        if notes.get("branch") == BRANCH_EAVESDROP:
            tap.apply(self._swap)

    def backward(self, tap, rng, notes: dict) -> None:
        if notes.get("branch") == BRANCH_EAVESDROP:
            q = rng.bit()
            notes["q"] = q
            tap.apply(self._swap)
            if q:
                tap.apply(self._z)
        else:
            self._tuning_backward(tap, rng, notes)

    def infer(self, m, notes: dict) -> tuple:
        if notes.get("branch") == BRANCH_EAVESDROP and m in (0, 1):
            return (m ^ notes["q"], None)
        return (None, None)


def alice_key_attack(params: AttackParams) -> AttackStrategy:
    return _AliceKeyAttack(params)


class _BobKeyAttack(_CompositeAttack):
    """Read Bob's key.

    Eavesdropping branch: absorb the incoming photon (learning its
    polarization t), send Bob a half-photon interferometric probe built from
    the private ancilla, and fold it back after his encoding; the ancilla
    then holds exactly k*t, read out destructively as n.  A fresh photon
    |t> is injected toward Alice, whose outcome m becomes a fair coin.  Eve
    learns k only in the t = 1 half of these rounds.
    """

    name = "bob"
    kernel_kind = "bob"

    def __init__(self, params: AttackParams) -> None:
        super().__init__(params)
        self._ancilla = quantum.make_basis_state(((MODE_E, ModeKind.PHOTON),), (0,))
        self._v = quantum.op_v(MODE_B, MODE_E)
        self._vd = quantum.dagger(self._v)
        self._x = quantum.op_x_pow(1, MODE_B)
        self._inject = (quantum.op_inject(0, MODE_B), quantum.op_inject(1, MODE_B))

    @property
    def ancilla(self) -> StateVector:
        return self._ancilla

    def intercepts_forward(self, notes: dict) -> bool:
        return notes.get("branch") == BRANCH_EAVESDROP

    def forward(self, tap, rng, notes: dict) -> None:
        if notes.get("branch") != BRANCH_EAVESDROP:
            return
        label = tap.measure_photon(MODE_B, rng, destructive=True)
        t = label if label in (0, 1) else 0   # vacuum arrival degenerates to t=0
        notes["t"] = t
        tap.apply(self._v)
        if t:
            tap.apply(self._x)

    def backward(self, tap, rng, notes: dict) -> None:
        if notes.get("branch") != BRANCH_EAVESDROP:
            self._tuning_backward(tap, rng, notes)
            return
        t = notes["t"]
        if t:
            tap.apply(self._x)
        tap.apply(self._vd)
        label = tap.measure_photon(MODE_E, rng, destructive=True)
        notes["n"] = label if label in (0, 1) else None
        tap.apply(self._inject[t])

    def infer(self, m, notes: dict) -> tuple:
        if notes.get("branch") == BRANCH_EAVESDROP and notes.get("t") == 1:
            n = notes.get("n")
            if n is not None:
                return (None, n)
        return (None, None)


def bob_key_attack(params: AttackParams) -> AttackStrategy:
    return _BobKeyAttack(params)


BUILTIN_FACTORIES = {
    "none": lambda params: honest(),
    "swap": lambda params: swap_vacuum(),
    "tuning": lambda params: error_tuning(params.epsilon),
    "alice": alice_key_attack,
    "bob": bob_key_attack,
}
