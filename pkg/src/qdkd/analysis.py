"""Closed-form predictions and estimators for trials of the key link.

The analytic quantities all follow from three facts about the composite
attacks:

- an eavesdropping round (probability p) scrambles the victims' key views
  into fair coins, while the tuning rounds flip a view with probability
  (1 - epsilon)/2, so the blended error rate is Q = (1 - x)/2 with
  x = epsilon(1 - p);
- the interceptor reads Alice's bit exactly in every eavesdropping round
  (information p per announced round) but Bob's bit only in the t = 1 half
  of them (p/2);
- no strategy here ever produces a correlated control outcome, so the
  honest-looking P_corr stays 0 and the left side of the security condition
  H(Q) + H(P_corr) < 1 degenerates to H(Q).

Empirical counterparts are plug-in estimates over the valid message-mode
rounds of a trial log (m announced as 0 or 1); control rounds contribute
only to the detection and correlation rates.
"""

from __future__ import annotations

import dataclasses
import math
from collections import Counter
from typing import Mapping, Sequence

from . import quantum
from .attacks import AttackParams
from .errors import BadParam, UndefinedLossBound
from .protocol import MM, MODE_A, MODE_B, TrialLog
from .quantum import StateVector

BOT = "bot"  # the interceptor's "no guess" symbol in joint tables

_EVE_KEY = {"tuning": None, "alice": "j", "bob": "k"}


def binary_entropy(q: float) -> float:
    """Shannon entropy of a bit with bias q, in bits; H(0) = H(1) = 0."""
    if not 0.0 <= q <= 1.0:
        raise BadParam(f"entropy argument must lie in [0, 1], got {q!r}")
    if q == 0.0 or q == 1.0:
        return 0.0
    return -(q * math.log2(q) + (1.0 - q) * math.log2(1.0 - q))


def plugin_mutual_information(counts: Mapping) -> float:
    """Plug-in mutual information (bits) of a joint count table
    {(x, y): n}."""
    total = float(sum(counts.values()))
    if total <= 0.0:
        raise BadParam("mutual information needs a nonempty count table")
    px: Counter = Counter()
    py: Counter = Counter()
    for (x, y), n in counts.items():
        px[x] += n
        py[y] += n
    mi = 0.0
    for (x, y), n in counts.items():
        if n <= 0:
            continue
        pxy = n / total
        mi += pxy * math.log2(pxy * total * total / (px[x] * py[y]))
    # degenerate tables (a constant margin) must give exactly 0, not a few
    # ulps of rounding residue
    return mi if mi > 1e-12 else 0.0


# ---------------------------------------------------------------------------
# analytic reports


@dataclasses.dataclass(frozen=True)
class AnalyticReport:
    """Exact predictions for one composite attack setting."""

    attack: str
    p: float
    epsilon: float
    x: float                 # epsilon * (1 - p)
    q_total: float           # blended QBER (1 - x)/2
    p_corr: float            # control-mode correlation rate (always 0 here)
    i_ab: float              # 1 - H(q_total)
    i_eve: float             # interceptor's information on the attacked key
    i_eve_cross: float       # ... on the other key (exactly 0)
    cross_note: str
    security_lhs: float      # H(q_total) + H(p_corr)
    security_holds: bool     # lhs < 1
    advantage: bool          # i_eve > i_ab


def analytic_report(attack: str, params: AttackParams) -> AnalyticReport:
    """Predictions for "tuning" (no interception), "alice" or "bob"."""
    if attack not in ("tuning", "alice", "bob"):
        raise BadParam(f"attack must be tuning, alice or bob, got {attack!r}")
    p = 0.0 if attack == "tuning" else params.p
    epsilon = params.epsilon
    x = epsilon * (1.0 - p)
    q_total = (1.0 - x) / 2.0
    p_corr = 0.0
    i_ab = 1.0 - binary_entropy(q_total)
    if attack == "alice":
        i_eve = p
        cross_note = "eavesdropping rounds never touch Bob's encoding"
    elif attack == "bob":
        i_eve = p / 2.0
        cross_note = "the injected photon is uncorrelated with Alice's bit"
    else:
        i_eve = 0.0
        cross_note = "pure error tuning carries no key information"
    lhs = binary_entropy(q_total) + binary_entropy(p_corr)
    return AnalyticReport(
        attack=attack, p=p, epsilon=epsilon, x=x, q_total=q_total,
        p_corr=p_corr, i_ab=i_ab, i_eve=i_eve, i_eve_cross=0.0,
        cross_note=cross_note, security_lhs=lhs,
        security_holds=lhs < 1.0, advantage=i_eve > i_ab,
    )


def i_ab_range_sup(p: float) -> float:
    """Supremum of the partners' mutual information over the tunable range
    at eavesdropping probability p: 1 - H(p/2), approached as epsilon -> 1."""
    return 1.0 - binary_entropy(_check_p(p) / 2.0)


def security_condition(q: float, p_corr: float) -> tuple:
    """(lhs, holds) of the entropic security condition H(Q) + H(P_corr) < 1."""
    lhs = binary_entropy(q) + binary_entropy(p_corr)
    return (lhs, lhs < 1.0)


# ---------------------------------------------------------------------------
# exact correlation probabilities (true vs claimed)


def _default_mixture() -> list:
    return [
        (0.5, quantum.make_bell_state("+", MODE_A, MODE_B)),
        (0.5, quantum.make_bell_state("-", MODE_A, MODE_B)),
    ]


def p_corr_true(op_j: quantum.ModeOperator, ancilla: StateVector | None,
                mixture: Sequence | None = None) -> float:
    """Control-mode correlation probability a strategy actually produces.

    Evolves the (A, B) mixture (default: the equal blend of both entangled
    signs, which is what the encoding looks like from outside) tensored with
    the interceptor's ancilla under the forward operation op_j, then takes
    the expectation of the equal-bits projector on (A, B)."""
    terms = list(mixture) if mixture is not None else _default_mixture()
    if ancilla is not None:
        terms = [(w, quantum.tensor(s, ancilla)) for w, s in terms]
    rho = quantum.density_from_mixture(terms)
    rho = quantum.conjugate_density(rho, op_j)
    return quantum.expectation(rho, quantum.op_parity(MODE_A, MODE_B))


def p_corr_claimed(op_j: quantum.ModeOperator, op_k: quantum.ModeOperator,
                   ancilla: StateVector) -> float:
    """Correlation probability according to the overlap formula
    (1 + Re<mu|nu>)/2 with mu, nu the two branch states K Z^j J |sign>|e>.

    The formula is stated for forward/backward operations J, K; it is the
    quantity the swap-vacuum probe drives to 1/2 while the true value stays
    at 0."""
    mu = quantum.tensor(quantum.make_bell_state("+", MODE_A, MODE_B), ancilla)
    nu = quantum.tensor(quantum.make_bell_state("-", MODE_A, MODE_B), ancilla)
    z1 = quantum.op_z_pow(1, MODE_B)
    mu = quantum.apply(quantum.apply(mu, op_j), op_k)            # Z^0 omitted
    nu = quantum.apply(quantum.apply(quantum.apply(nu, op_j), z1), op_k)
    overlap = quantum.inner_product(mu, nu)
    return 0.5 * (1.0 + overlap.real)


# ---------------------------------------------------------------------------
# empirical statistics


@dataclasses.dataclass(frozen=True)
class Statistics:
    """Plug-in estimates from one trial log; None where a rate has no
    denominator (e.g. no valid message rounds)."""

    n_rounds: int
    n_mm: int
    n_mm_valid: int
    n_cm: int
    q_a_hat: float | None        # Bob's view of j disagrees with j
    q_b_hat: float | None        # Alice's view of k disagrees with k
    p_corr_hat: float | None     # correlated fraction of control rounds
    p_obs_hat: float | None      # detected fraction of control rounds
    i_aj_eve_hat: float | None   # MI(j; interceptor's j guess) over valid MM
    i_bk_eve_hat: float | None   # MI(k; interceptor's k guess) over valid MM
    i_ab_hat: float | None       # MI(j; Bob's view) over valid MM


def _rate(errors: int, total: int) -> float | None:
    return None if total == 0 else errors / total


def empirical_statistics(log: TrialLog) -> Statistics:
    n_mm = n_mm_valid = n_cm = 0
    err_a = err_b = n_corr = n_det = 0
    tab_je: Counter = Counter()
    tab_ke: Counter = Counter()
    tab_ab: Counter = Counter()
    for out in log.outcomes:
        if out.mode == MM:
            n_mm += 1
            if out.m in (0, 1):
                n_mm_valid += 1
                err_a += out.j_view_b != out.j
                err_b += out.k_view_a != out.k
                tab_je[(out.j, BOT if out.eve_j is None else out.eve_j)] += 1
                tab_ke[(out.k, BOT if out.eve_k is None else out.eve_k)] += 1
                tab_ab[(out.j, out.j_view_b)] += 1
        else:
            n_cm += 1
            n_det += bool(out.cm_detected)
            n_corr += bool(out.cm_correlated)
    return Statistics(
        n_rounds=len(log.outcomes),
        n_mm=n_mm,
        n_mm_valid=n_mm_valid,
        n_cm=n_cm,
        q_a_hat=_rate(err_a, n_mm_valid),
        q_b_hat=_rate(err_b, n_mm_valid),
        p_corr_hat=_rate(n_corr, n_cm),
        p_obs_hat=_rate(n_det, n_cm),
        i_aj_eve_hat=None if n_mm_valid == 0 else plugin_mutual_information(tab_je),
        i_bk_eve_hat=None if n_mm_valid == 0 else plugin_mutual_information(tab_ke),
        i_ab_hat=None if n_mm_valid == 0 else plugin_mutual_information(tab_ab),
    )


# ---------------------------------------------------------------------------
# loss accounting


@dataclasses.dataclass(frozen=True)
class LossReport:
    """How channel loss constrains hiding an attack.

    p_obs_predicted is the control-mode detection rate the attack produces
    at transmission `transmission`; p_max is the largest eavesdropping
    probability that stays consistent with a line whose bare transmission is
    `transmission` when the interceptor substitutes a better one
    (transmission_prime).  filter_fraction is only set when the attack
    over-produces detections and must discard the excess (attack on Bob at
    transmission <= 1/2); it is the fraction of detections to drop,
    max(0, p_obs - transmission) / p_obs."""

    attack: str
    p: float
    transmission: float
    transmission_prime: float | None
    p_obs_predicted: float
    p_max: float | None
    filter_fraction: float | None


def loss_report(transmission: float, transmission_prime: float | None,
                attack: str, p: float) -> LossReport:
    if attack not in ("alice", "bob"):
        raise BadParam(f"loss accounting applies to alice or bob, got {attack!r}")
    if not 0.0 < transmission <= 1.0:
        raise BadParam(f"transmission must lie in (0, 1], got {transmission!r}")
    p = _check_p(p)
    if transmission_prime is not None and not 0.0 < transmission_prime <= 1.0:
        raise BadParam(
            f"transmission_prime must lie in (0, 1], got {transmission_prime!r}")
    if (attack == "bob" and transmission > 0.5
            and transmission_prime is not None and transmission_prime <= 0.5):
        raise UndefinedLossBound(
            "replacement line must beat the 1/2 detection floor")
    if transmission_prime is not None and transmission >= transmission_prime:
        raise BadParam(
            "hiding analysis needs transmission < transmission_prime "
            f"(got {transmission} >= {transmission_prime})")

    if attack == "alice":
        p_obs = transmission * (1.0 - p)
        p_max = None
        if transmission_prime is not None:
            p_max = (transmission_prime - transmission) / transmission_prime
        filter_fraction = None
    else:
        p_obs = transmission * (1.0 - p) + p / 2.0
        filter_fraction = None
        if transmission <= 0.5:
            # interception never depresses the detection rate below the bare
            # line here, so any excess can simply be discarded and no better
            # replacement line is needed
            p_max = 1.0
            filter_fraction = max(0.0, p_obs - transmission) / p_obs
        elif transmission_prime is None:
            p_max = None
        else:
            p_max = (transmission_prime - transmission) / (transmission_prime - 0.5)
    return LossReport(
        attack=attack, p=p, transmission=transmission,
        transmission_prime=transmission_prime, p_obs_predicted=p_obs,
        p_max=p_max, filter_fraction=filter_fraction,
    )


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p < 1.0:
        raise BadParam(f"p must lie in [0, 1), got {p!r}")
    return p
