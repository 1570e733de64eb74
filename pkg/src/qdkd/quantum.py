"""Exact state-vector engine for few-mode polarization optics.

Two kinds of modes appear in the protocol: Alice's stored two-level system
(QUBIT, basis order (0, 1)) and traveling photon modes that may also be empty
(PHOTON, basis order (vac, 0, 1), where 0/1 are the two polarizations).
Joint amplitudes are stored flat in row-major order over the mode list, so a
state on modes (A, B, E) with dims (2, 3, 3) has amps[a*9 + b*3 + e].

Numerical conventions, fixed so that protocol statistics that are exact in
theory stay exact in floating point:

- Bell-projection probabilities are computed as |x - y|^2 / 2 and
  |x + y|^2 / 2 (the 1/sqrt(2) never appears squared), which keeps the values
  0, 1/2 and 1 exact for computational-basis inputs.
- Sampling uses inverse CDF over documented outcome orders: (minus, plus,
  FAIL) for Bell measurements and (vac, 0, 1) for photon modes.
- Unitarity, Hermiticity and state norms are enforced at construction to
  1e-12; probability normalization checks use 1e-10.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np

from .errors import (
    BadMixture,
    BadParam,
    InvalidBasisLabel,
    ModeCollision,
    NotObservable,
    NotUnitary,
    UnknownMode,
)
from .rng import SplitMix64

VAC = "vac"
FAIL = "FAIL"

NORM_ATOL = 1e-12
UNITARY_ATOL = 1e-12
PROB_ATOL = 1e-10

_SQRT_HALF = 1.0 / math.sqrt(2.0)


class ModeKind(enum.Enum):
    QUBIT = "qubit"
    PHOTON = "photon"

    @property
    def dim(self) -> int:
        return 2 if self is ModeKind.QUBIT else 3

    @property
    def labels(self) -> tuple:
        if self is ModeKind.QUBIT:
            return (0, 1)
        return (VAC, 0, 1)


Modes = tuple  # tuple[tuple[str, ModeKind], ...]


def _check_modes(modes: Sequence) -> Modes:
    modes = tuple((str(name), kind) for name, kind in modes)
    names = [name for name, _ in modes]
    if len(set(names)) != len(names):
        raise ModeCollision(f"duplicate mode names in {names}")
    for _, kind in modes:
        if not isinstance(kind, ModeKind):
            raise BadParam(f"mode kind must be a ModeKind, got {kind!r}")
    return modes


def label_index(kind: ModeKind, label) -> int:
    """Position of a basis label within its mode kind's fixed basis order."""
    try:
        return kind.labels.index(label)
    except ValueError:
        raise InvalidBasisLabel(f"{label!r} is not a basis label of {kind}") from None


@dataclasses.dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state on an ordered list of named modes."""

    modes: Modes
    amps: np.ndarray

    def __post_init__(self) -> None:
        modes = _check_modes(self.modes)
        amps = np.ascontiguousarray(np.asarray(self.amps, dtype=np.complex128).ravel())
        dim = _total_dim(modes)
        if amps.shape != (dim,):
            raise BadParam(f"amplitude vector has length {amps.size}, expected {dim}")
        norm_sq = float(np.vdot(amps, amps).real)
        if abs(norm_sq - 1.0) > max(NORM_ATOL, 4e-15 * dim):
            raise BadParam(f"state norm^2 = {norm_sq!r}, expected 1")
        amps.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "amps", amps)

    @property
    def mode_names(self) -> tuple:
        return tuple(name for name, _ in self.modes)

    @property
    def dim(self) -> int:
        return self.amps.size

    def axis(self, mode: str) -> int:
        for i, (name, _) in enumerate(self.modes):
            if name == mode:
                return i
        raise UnknownMode(f"state has no mode named {mode!r}")

    def kind_of(self, mode: str) -> ModeKind:
        return self.modes[self.axis(mode)][1]

    def tensor_view(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per mode (read-only view)."""
        return self.amps.reshape(tuple(kind.dim for _, kind in self.modes))


def _total_dim(modes: Modes) -> int:
    return reduce(lambda acc, mk: acc * mk[1].dim, modes, 1)


class OperatorKind(enum.Enum):
    UNITARY = "unitary"
    OBSERVABLE = "observable"


@dataclasses.dataclass(frozen=True, eq=False)
class ModeOperator:
    """Matrix acting on an ordered subset of modes.

    `targets` are mode names, `kinds` the expected kind of each target (used
    to validate dimensions when the operator is embedded into a larger
    state), and `kind` says whether the matrix was validated as a unitary or
    as an observable.
    """

    targets: tuple
    kinds: tuple
    matrix: np.ndarray
    kind: OperatorKind

    def __post_init__(self) -> None:
        targets = tuple(str(t) for t in self.targets)
        kinds = tuple(self.kinds)
        if len(set(targets)) != len(targets):
            raise ModeCollision(f"duplicate targets {targets}")
        if len(kinds) != len(targets):
            raise BadParam("one mode kind required per target")
        dim = 1
        for k in kinds:
            dim *= k.dim
        matrix = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.complex128))
        if matrix.shape != (dim, dim):
            raise BadParam(f"matrix shape {matrix.shape} does not match targets (dim {dim})")
        if self.kind is OperatorKind.UNITARY:
            err = np.abs(matrix.conj().T @ matrix - np.eye(dim)).max()
            if err > UNITARY_ATOL:
                raise NotUnitary(f"deviation from unitarity {err:.3e}")
        elif self.kind is OperatorKind.OBSERVABLE:
            err = np.abs(matrix - matrix.conj().T).max()
            if err > UNITARY_ATOL:
                raise NotObservable(f"deviation from Hermiticity {err:.3e}")
        else:
            raise BadParam(f"unknown operator kind {self.kind!r}")
        matrix.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "matrix", matrix)


@dataclasses.dataclass(frozen=True)
class MeasurementOutcome:
    """One sampled measurement result with its probability and post-state."""

    label: object
    probability: float
    post_state: StateVector | None


# ---------------------------------------------------------------------------
# state constructors


def make_basis_state(modes: Sequence, labels: Sequence) -> StateVector:
    """Computational-basis product state |labels[0], labels[1], ...>."""
    modes = _check_modes(modes)
    if len(labels) != len(modes):
        raise BadParam("one basis label required per mode")
    idx = 0
    for (_, kind), label in zip(modes, labels):
        idx = idx * kind.dim + label_index(kind, label)
    amps = np.zeros(_total_dim(modes), dtype=np.complex128)
    amps[idx] = 1.0
    return StateVector(modes, amps)


def make_bell_state(sign, mode_a: str = "A", mode_b: str = "B") -> StateVector:
    """Maximally entangled state (|0>_A|1>_B ± |1>_A|0>_B)/sqrt(2).

    Mode A is a stored qubit; mode B is a photon mode (the |1>_A|0>_B term
    sits at photon polarization 0, not vacuum).  sign may be +1/-1 or the
    strings "+"/"-".
    """
    if sign in (1, "+"):
        s = 1.0
    elif sign in (-1, "-"):
        s = -1.0
    else:
        raise BadParam(f"sign must be one of +1, -1, '+', '-', got {sign!r}")
    modes = _check_modes([(mode_a, ModeKind.QUBIT), (mode_b, ModeKind.PHOTON)])
    amps = np.zeros(6, dtype=np.complex128)
    amps[0 * 3 + 2] = _SQRT_HALF          # |0>_A |1>_B
    amps[1 * 3 + 1] = s * _SQRT_HALF      # |1>_A |0>_B
    return StateVector(modes, amps)


def tensor(left: StateVector, right: StateVector) -> StateVector:
    """Tensor product; mode names must not collide."""
    overlap = set(left.mode_names) & set(right.mode_names)
    if overlap:
        raise ModeCollision(f"modes {sorted(overlap)} appear on both sides")
    return StateVector(left.modes + right.modes, np.kron(left.amps, right.amps))


# ---------------------------------------------------------------------------
# operator constructors


def unitary_operator(targets: Sequence[str], kinds: Sequence[ModeKind], matrix) -> ModeOperator:
    return ModeOperator(tuple(targets), tuple(kinds), matrix, OperatorKind.UNITARY)


def observable_operator(targets: Sequence[str], kinds: Sequence[ModeKind], matrix) -> ModeOperator:
    return ModeOperator(tuple(targets), tuple(kinds), matrix, OperatorKind.OBSERVABLE)


def _check_bit(value, name: str) -> int:
    if value not in (0, 1):
        raise BadParam(f"{name} must be 0 or 1, got {value!r}")
    return int(value)


def op_z_pow(q, mode: str, kind: ModeKind = ModeKind.PHOTON) -> ModeOperator:
    """Phase flip to the q-th power: |1> picks up (-1)^q, vacuum is untouched."""
    q = _check_bit(q, "q")
    if kind is ModeKind.QUBIT:
        mat = np.diag([1.0, (-1.0) ** q])
    else:
        mat = np.diag([1.0, 1.0, (-1.0) ** q])
    return unitary_operator((mode,), (kind,), mat)


def op_x_pow(t, mode: str, kind: ModeKind = ModeKind.PHOTON) -> ModeOperator:
    """Polarization flip to the t-th power; vacuum is untouched."""
    t = _check_bit(t, "t")
    if kind is ModeKind.QUBIT:
        mat = np.eye(2) if t == 0 else np.array([[0.0, 1.0], [1.0, 0.0]])
    else:
        mat = np.eye(3)
        if t == 1:
            mat = np.array(
                [[1.0, 0.0, 0.0],
                 [0.0, 0.0, 1.0],
                 [0.0, 1.0, 0.0]]
            )
    return unitary_operator((mode,), (kind,), mat)


def op_swap(mode_x: str, mode_y: str) -> ModeOperator:
    """Full exchange of two photon modes: |x, y> -> |y, x>."""
    mat = np.zeros((9, 9))
    for bx in range(3):
        for by in range(3):
            mat[by * 3 + bx, bx * 3 + by] = 1.0
    return unitary_operator((mode_x, mode_y), (ModeKind.PHOTON, ModeKind.PHOTON), mat)


def op_v(mode_b: str, mode_e: str) -> ModeOperator:
    """Interferometric coupling of the line mode B with the tap mode E.

    A photon arriving in E leaves as a superposition of "photon went out on
    B" and "photon stayed in E with polarization 1", with the relative sign
    set by the arriving polarization:

        |vac, s>  ->  (-i/sqrt(2)) (|0, vac> + (-1)^s |vac, 1>)

    A photon arriving in B on polarization 0 is deflected into E
    (|0, vac> -> -i |vac, 0>; the phase is a convention, fixed here so the
    adjoint has real-valued interference with the images above).  The
    remaining six basis states, including both double-occupancy sectors and
    |1, vac>, are left untouched.
    """
    i = 1j
    mat = np.zeros((9, 9), dtype=np.complex128)
    # basis index = 3*b + e over (vac, 0, 1)
    mat[3, 1] = -i * _SQRT_HALF   # |vac,0> -> |0,vac> component
    mat[2, 1] = -i * _SQRT_HALF   # |vac,0> -> |vac,1> component
    mat[3, 2] = -i * _SQRT_HALF   # |vac,1> -> |0,vac> component
    mat[2, 2] = i * _SQRT_HALF    # |vac,1> -> -|vac,1> component
    mat[1, 3] = -i                # |0,vac> -> |vac,0>
    for idx in (0, 4, 5, 6, 7, 8):
        mat[idx, idx] = 1.0
    return unitary_operator((mode_b, mode_e), (ModeKind.PHOTON, ModeKind.PHOTON), mat)


def op_inject(label, mode: str) -> ModeOperator:
    """Exchange vacuum with a fresh photon |label| in one mode.

    Permutation unitary swapping |vac> and |label>; used when an attack
    replaces an absorbed line photon with one from its own source.
    """
    label = _check_bit(label, "label")
    mat = np.eye(3)
    j = 1 + label
    mat[0, 0] = mat[j, j] = 0.0
    mat[0, j] = mat[j, 0] = 1.0
    return unitary_operator((mode,), (ModeKind.PHOTON,), mat)


def op_parity(mode_a: str, mode_b: str) -> ModeOperator:
    """Projector onto equal recorded bits of a qubit and a photon mode:
    |0>_A|0>_B and |1>_A|1>_B."""
    mat = np.zeros((6, 6))
    mat[0 * 3 + 1, 0 * 3 + 1] = 1.0
    mat[1 * 3 + 2, 1 * 3 + 2] = 1.0
    return observable_operator((mode_a, mode_b), (ModeKind.QUBIT, ModeKind.PHOTON), mat)


def dagger(op: ModeOperator) -> ModeOperator:
    """Adjoint with the same targets; unitarity/Hermiticity is preserved."""
    return ModeOperator(op.targets, op.kinds, op.matrix.conj().T, op.kind)


# ---------------------------------------------------------------------------
# application and embedding


@lru_cache(maxsize=512)
def _embedded(op: ModeOperator, modes: Modes) -> np.ndarray:
    names = [name for name, _ in modes]
    kind_by_name = dict(modes)
    for t, k in zip(op.targets, op.kinds):
        if t not in kind_by_name:
            raise UnknownMode(f"operator targets unknown mode {t!r}")
        if kind_by_name[t] is not k:
            raise BadParam(f"mode {t!r} is {kind_by_name[t]}, operator expects {k}")
    dims = [kind.dim for _, kind in modes]
    n = len(modes)
    targ = [names.index(t) for t in op.targets]
    rest = [i for i in range(n) if i not in targ]
    d_rest = 1
    for i in rest:
        d_rest *= dims[i]
    big = np.kron(op.matrix, np.eye(d_rest, dtype=np.complex128))
    order = targ + rest
    tens = big.reshape([dims[i] for i in order] * 2)
    inv = list(np.argsort(order))
    perm = inv + [n + i for i in inv]
    total = _total_dim(modes)
    out = np.ascontiguousarray(tens.transpose(perm).reshape(total, total))
    out.setflags(write=False)
    return out


def embed_matrix(op: ModeOperator, modes: Modes) -> np.ndarray:
    """Operator matrix extended with identities to a full mode layout."""
    return _embedded(op, _check_modes(modes))


def apply(state: StateVector, op: ModeOperator) -> StateVector:
    """Apply a unitary; raises NotUnitary when handed an observable."""
    if op.kind is not OperatorKind.UNITARY:
        raise NotUnitary("apply() only evolves states by unitaries")
    mat = _embedded(op, state.modes)
    return StateVector(state.modes, mat @ state.amps)


def inner_product(left: StateVector, right: StateVector) -> complex:
    """<left|right> for states on the same mode layout."""
    if left.modes != right.modes:
        raise UnknownMode("inner product requires identical mode layouts")
    return complex(np.vdot(left.amps, right.amps))


def states_equal_up_to_phase(left: StateVector, right: StateVector, tol: float = 1e-12) -> bool:
    return abs(abs(inner_product(left, right)) - 1.0) <= tol


# ---------------------------------------------------------------------------
# measurements


def _abs2_sum(values: np.ndarray) -> float:
    v = np.asarray(values).ravel()
    return float(np.sum(v.real * v.real + v.imag * v.imag))


def _require_kind(state: StateVector, mode: str, kind: ModeKind) -> int:
    ax = state.axis(mode)
    if state.modes[ax][1] is not kind:
        raise BadParam(f"mode {mode!r} is {state.modes[ax][1]}, expected {kind}")
    return ax


def bell_outcome_probabilities(state: StateVector, mode_a: str, mode_b: str) -> dict:
    """Probabilities of the two resolvable Bell outcomes and of FAIL.

    Outcome 0 is the singlet projection (|0,1> - |1,0>)/sqrt(2), outcome 1
    the triplet (|0,1> + |1,0>)/sqrt(2); everything orthogonal to both
    (vacuum in B included) is lumped into FAIL.
    """
    ia = _require_kind(state, mode_a, ModeKind.QUBIT)
    ib = _require_kind(state, mode_b, ModeKind.PHOTON)
    t = np.moveaxis(state.tensor_view(), (ia, ib), (0, 1))
    diff = t[0, 2] - t[1, 1]
    summ = t[0, 2] + t[1, 1]
    p_minus = _abs2_sum(diff) / 2.0
    p_plus = _abs2_sum(summ) / 2.0
    p_fail = 1.0 - (p_minus + p_plus)
    if p_fail < 0.0:
        p_fail = 0.0
    return {0: p_minus, 1: p_plus, FAIL: p_fail}


def _bell_post(state: StateVector, mode_a: str, mode_b: str, label) -> StateVector | None:
    ia = state.axis(mode_a)
    ib = state.axis(mode_b)
    t = np.moveaxis(state.tensor_view(), (ia, ib), (0, 1))
    diff = t[0, 2] - t[1, 1]
    summ = t[0, 2] + t[1, 1]
    out = np.zeros_like(t)
    if label == 0 or label == 1:
        rest = diff if label == 0 else summ
        nrm = math.sqrt(_abs2_sum(rest))
        if nrm == 0.0:
            return None
        rest = rest / nrm
        out[0, 2] = rest * _SQRT_HALF
        out[1, 1] = (rest if label == 1 else -rest) * _SQRT_HALF
    else:
        out = np.array(t, copy=True)
        out[0, 2] = out[0, 2] - (diff + summ) / 2.0
        out[1, 1] = out[1, 1] - (summ - diff) / 2.0
        nrm = math.sqrt(_abs2_sum(out))
        if nrm == 0.0:
            return None
        out = out / nrm
    out = np.moveaxis(out, (0, 1), (ia, ib))
    return StateVector(state.modes, out.ravel())


def bell_measure(state: StateVector, mode_a: str, mode_b: str, rng: SplitMix64) -> MeasurementOutcome:
    """Sample the joint interference measurement of a qubit/photon pair.

    Draw order is (singlet, triplet, FAIL) by inverse CDF on one uniform.
    The FAIL outcome covers vacuum arrivals and unmatched polarizations.
    """
    probs = bell_outcome_probabilities(state, mode_a, mode_b)
    idx = rng.choose((probs[0], probs[1], probs[FAIL]))
    label = (0, 1, FAIL)[idx]
    post = _bell_post(state, mode_a, mode_b, label)
    return MeasurementOutcome(label=label, probability=probs[label], post_state=post)


def photon_mode_probabilities(state: StateVector, mode: str) -> dict:
    """Occupation statistics of one photon mode in order (vac, 0, 1)."""
    ax = _require_kind(state, mode, ModeKind.PHOTON)
    t = np.moveaxis(state.tensor_view(), ax, 0)
    return {
        VAC: _abs2_sum(t[0]),
        0: _abs2_sum(t[1]),
        1: _abs2_sum(t[2]),
    }


def measure_photon_mode(
    state: StateVector,
    mode: str,
    rng: SplitMix64,
    destructive: bool = True,
) -> MeasurementOutcome:
    """Photodetection of one mode; outcomes ordered (vac, 0, 1).

    A destructive measurement absorbs the photon: the measured mode is left
    in vacuum whatever the outcome.  A non-destructive one projects.
    """
    ax = _require_kind(state, mode, ModeKind.PHOTON)
    probs = photon_mode_probabilities(state, mode)
    labels = (VAC, 0, 1)
    idx = rng.choose(tuple(probs[lab] for lab in labels))
    label = labels[idx]
    t = np.moveaxis(state.tensor_view(), ax, 0)
    p = probs[label]
    post = None
    if p > 0.0:
        branch = t[idx] / math.sqrt(p)
        out = np.zeros_like(t)
        out[0 if destructive else idx] = branch
        post = StateVector(state.modes, np.moveaxis(out, 0, ax).ravel())
    return MeasurementOutcome(label=label, probability=p, post_state=post)


def qubit_probabilities(state: StateVector, mode: str) -> dict:
    ax = _require_kind(state, mode, ModeKind.QUBIT)
    t = np.moveaxis(state.tensor_view(), ax, 0)
    return {0: _abs2_sum(t[0]), 1: _abs2_sum(t[1])}


def measure_qubit(state: StateVector, mode: str, rng: SplitMix64) -> MeasurementOutcome:
    """Computational-basis measurement of a stored qubit (projective)."""
    ax = _require_kind(state, mode, ModeKind.QUBIT)
    probs = qubit_probabilities(state, mode)
    idx = rng.choose((probs[0], probs[1]))
    t = np.moveaxis(state.tensor_view(), ax, 0)
    p = probs[idx]
    post = None
    if p > 0.0:
        out = np.zeros_like(t)
        out[idx] = t[idx] / math.sqrt(p)
        post = StateVector(state.modes, np.moveaxis(out, 0, ax).ravel())
    return MeasurementOutcome(label=idx, probability=p, post_state=post)


# ---------------------------------------------------------------------------
# density matrices


@dataclasses.dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite operator on named modes."""

    modes: Modes
    matrix: np.ndarray

    def __post_init__(self) -> None:
        modes = _check_modes(self.modes)
        dim = _total_dim(modes)
        matrix = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.complex128))
        if matrix.shape != (dim, dim):
            raise BadParam(f"density matrix shape {matrix.shape}, expected {(dim, dim)}")
        if np.abs(matrix - matrix.conj().T).max() > 1e-10:
            raise BadMixture("density matrix is not Hermitian")
        if abs(float(np.trace(matrix).real) - 1.0) > 1e-10:
            raise BadMixture(f"density matrix trace {np.trace(matrix)!r}, expected 1")
        if np.linalg.eigvalsh(matrix).min() < -1e-10:
            raise BadMixture("density matrix has a negative eigenvalue")
        matrix.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "matrix", matrix)


def density_from_mixture(terms: Sequence) -> DensityMatrix:
    """Convex mixture sum_i w_i |psi_i><psi_i| of states on one layout."""
    terms = list(terms)
    if not terms:
        raise BadMixture("empty mixture")
    modes = terms[0][1].modes
    total = 0.0
    dim = _total_dim(modes)
    rho = np.zeros((dim, dim), dtype=np.complex128)
    for weight, psi in terms:
        w = float(weight)
        if w < -1e-12:
            raise BadMixture(f"negative mixture weight {w}")
        if psi.modes != modes:
            raise BadMixture("mixture components live on different mode layouts")
        rho += w * np.outer(psi.amps, psi.amps.conj())
        total += w
    if abs(total - 1.0) > 1e-10:
        raise BadMixture(f"mixture weights sum to {total!r}, expected 1")
    return DensityMatrix(modes, rho)


def conjugate_density(rho: DensityMatrix, op: ModeOperator) -> DensityMatrix:
    """Evolve a density matrix by a unitary: U rho U^dag."""
    if op.kind is not OperatorKind.UNITARY:
        raise NotUnitary("conjugate_density() expects a unitary")
    mat = _embedded(op, rho.modes)
    return DensityMatrix(rho.modes, mat @ rho.matrix @ mat.conj().T)


def expectation(rho: DensityMatrix, observable: ModeOperator) -> float:
    """Tr(rho O) for a Hermitian observable; the tiny imaginary residue of
    the trace is asserted away, not returned."""
    if observable.kind is not OperatorKind.OBSERVABLE:
        raise NotObservable("expectation() expects an observable")
    mat = _embedded(observable, rho.modes)
    value = complex(np.trace(rho.matrix @ mat))
    if abs(value.imag) > 1e-10:
        raise BadParam(f"expectation has imaginary part {value.imag!r}")
    return float(value.real)
