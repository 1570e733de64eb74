"""Self-contained invariant suite behind the `qdkd verify` command.

Each check re-derives one of the claims the package rests on, from operator
unitarity through Monte-Carlo agreement with the closed forms.  Checks
return measured numbers in their detail strings so a failure is directly
actionable.  `--perturb-v` injects a fault into the interferometric coupling
matrix as a negative control: verification must then fail.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np

from . import analysis, quantum
from .attacks import (
    AttackParams,
    alice_key_attack,
    bob_key_attack,
    honest,
    swap_vacuum,
)
from .protocol import MM, MODE_A, MODE_B, MODE_E, ProtocolConfig, run_experiment
from .quantum import FAIL, VAC, ModeKind

_BE = ((MODE_B, ModeKind.PHOTON), (MODE_E, ModeKind.PHOTON))
_AB_E = ((MODE_A, ModeKind.QUBIT), (MODE_B, ModeKind.PHOTON), (MODE_E, ModeKind.PHOTON))


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def counterexample_numbers() -> dict:
    """True and claimed control-mode correlation rates for the store-and-
    replace probe and for the honest line."""
    vac_e = quantum.make_basis_state(((MODE_E, ModeKind.PHOTON),), (VAC,))
    swap = quantum.op_swap(MODE_B, MODE_E)
    ident = quantum.unitary_operator(
        (MODE_B, MODE_E), (ModeKind.PHOTON, ModeKind.PHOTON), np.eye(9)
    )
    swap_true = analysis.p_corr_true(swap, vac_e)
    swap_claimed = analysis.p_corr_claimed(swap, swap, vac_e)
    return {
        "swap_true": swap_true,
        "swap_claimed": swap_claimed,
        "gap": abs(swap_claimed - swap_true),
        "honest_true": analysis.p_corr_true(ident, vac_e),
        "honest_claimed": analysis.p_corr_claimed(ident, ident, vac_e),
    }


def _unitarity_deviation(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix, dtype=np.complex128)
    eye = np.eye(matrix.shape[0])
    return float(np.abs(matrix.conj().T @ matrix - eye).max())


def _check_unitarity(perturb_v: float) -> CheckResult:
    mats = {
        "Z": quantum.op_z_pow(1, MODE_B).matrix,
        "X": quantum.op_x_pow(1, MODE_B).matrix,
        "SWAP": quantum.op_swap(MODE_B, MODE_E).matrix,
        "V": quantum.op_v(MODE_B, MODE_E).matrix,
        "INJECT0": quantum.op_inject(0, MODE_B).matrix,
        "INJECT1": quantum.op_inject(1, MODE_B).matrix,
    }
    if perturb_v:
        faulty = np.array(mats["V"], copy=True)
        faulty[3, 1] += perturb_v
        mats["V"] = faulty
    worst_name, worst = max(
        ((name, _unitarity_deviation(m)) for name, m in mats.items()),
        key=lambda pair: pair[1],
    )
    ok = worst <= 1e-12
    note = " (fault injected)" if perturb_v else ""
    return CheckResult(
        "operator unitarity",
        ok,
        f"max |U^H U - I| = {worst:.3e} ({worst_name}){note}",
    )


def _check_coupling_action() -> CheckResult:
    """The interferometric coupling V maps the three occupied basis states
    to the documented superpositions."""
    v = quantum.op_v(MODE_B, MODE_E)
    half = -0.5j * math.sqrt(2.0)  # -i/sqrt(2)
    cases = [
        ((VAC, 0), {(0, VAC): half, (VAC, 1): half}),
        ((VAC, 1), {(0, VAC): half, (VAC, 1): -half}),
        ((0, VAC), {(VAC, 0): -1.0j}),
    ]
    worst = 0.0
    for labels, image in cases:
        state = quantum.apply(quantum.make_basis_state(_BE, labels), v)
        want = np.zeros(9, dtype=np.complex128)
        for out_labels, amp in image.items():
            idx = 0
            for (name, kind), lab in zip(_BE, out_labels):
                idx = idx * kind.dim + quantum.label_index(kind, lab)
            want[idx] = amp
        worst = max(worst, float(np.abs(state.amps - want).max()))
    return CheckResult(
        "coupling action", worst <= 1e-12, f"max amplitude error {worst:.3e}"
    )


def _check_intercept_pipeline() -> CheckResult:
    """Forward probe, Bob's encoding, then the folding leg: the tap mode must
    end in |k*t> with amplitude (-1)^(k*t) on a vacuum line, and the tap
    readout must be deterministic."""
    v = quantum.op_v(MODE_B, MODE_E)
    vd = quantum.dagger(v)
    x = quantum.op_x_pow(1, MODE_B)
    worst = 0.0
    min_prob = 1.0
    for k in (0, 1):
        for t in (0, 1):
            state = quantum.make_basis_state(_BE, (VAC, 0))
            state = quantum.apply(state, v)
            if t:
                state = quantum.apply(state, x)
            state = quantum.apply(state, quantum.op_z_pow(k, MODE_B))
            if t:
                state = quantum.apply(state, x)
            state = quantum.apply(state, vd)
            want = np.zeros(9, dtype=np.complex128)
            want[quantum.label_index(ModeKind.PHOTON, k & t)] = (-1.0) ** (k & t)
            worst = max(worst, float(np.abs(state.amps - want).max()))
            probs = quantum.photon_mode_probabilities(state, MODE_E)
            min_prob = min(min_prob, probs[k & t])
    ok = worst <= 1e-12 and min_prob >= 1.0 - 1e-12
    return CheckResult(
        "intercept pipeline",
        ok,
        f"max amplitude error {worst:.3e}, min readout probability {min_prob:.15g}",
    )


def _check_return_interference() -> CheckResult:
    """The injected photon |t> against Alice's held qubit |1-t> splits the
    interference outcomes exactly 50/50 with no failure mass."""
    ok = True
    details = []
    for t in (0, 1):
        state = quantum.make_basis_state(_AB_E, (1 - t, t, VAC))
        probs = quantum.bell_outcome_probabilities(state, MODE_A, MODE_B)
        ok = ok and probs[0] == 0.5 and probs[1] == 0.5 and probs[FAIL] == 0.0
        details.append(f"t={t}: ({probs[0]}, {probs[1]}, {probs[FAIL]})")
    return CheckResult("return interference", ok, "; ".join(details))


def _check_counterexample() -> CheckResult:
    nums = counterexample_numbers()
    ok = (
        abs(nums["swap_true"]) <= 1e-12
        and abs(nums["swap_claimed"] - 0.5) <= 1e-12
        and abs(nums["gap"] - 0.5) <= 1e-12
        and abs(nums["honest_true"]) <= 1e-12
        and abs(nums["honest_claimed"]) <= 1e-12
    )
    return CheckResult(
        "correlation counterexample",
        ok,
        f"swap true={nums['swap_true']:.6f} claimed={nums['swap_claimed']:.6f}, "
        f"honest true={nums['honest_true']:.6f} claimed={nums['honest_claimed']:.6f}",
    )


def _check_honest_baseline(rounds: int, seed: int) -> CheckResult:
    log = run_experiment(ProtocolConfig(rounds=rounds, master_seed=seed), honest())
    stats = analysis.empirical_statistics(log)
    ok = (
        stats.q_a_hat == 0.0
        and stats.q_b_hat == 0.0
        and stats.p_corr_hat == 0.0
        and stats.p_obs_hat == 1.0
    )
    return CheckResult(
        "honest baseline",
        ok,
        f"q_a={stats.q_a_hat} q_b={stats.q_b_hat} "
        f"p_corr={stats.p_corr_hat} p_obs={stats.p_obs_hat} over {rounds} rounds",
    )


def _sigma(rate: float, n: int) -> float:
    return math.sqrt(max(rate * (1.0 - rate), 1e-12) / max(n, 1))


def _check_alice_attack(rounds: int, seed: int) -> CheckResult:
    params = AttackParams(p=0.5, epsilon=0.5)
    rep = analysis.analytic_report("alice", params)
    log = run_experiment(ProtocolConfig(rounds=rounds, master_seed=seed),
                         alice_key_attack(params))
    stats = analysis.empirical_statistics(log)
    n = stats.n_mm_valid
    tol = 3.0 * _sigma(rep.q_total, n)
    checks = [
        abs(stats.q_a_hat - rep.q_total) <= tol,
        abs(stats.q_b_hat - rep.q_total) <= tol,
        abs(stats.i_aj_eve_hat - rep.i_eve) <= 0.02,
        stats.p_corr_hat == 0.0,
    ]
    return CheckResult(
        "attack on Alice's key",
        all(checks),
        f"q_a={stats.q_a_hat:.4f} q_b={stats.q_b_hat:.4f} (target {rep.q_total}"
        f" +/- {tol:.4f}), i_aj={stats.i_aj_eve_hat:.4f} (target {rep.i_eve}),"
        f" p_corr={stats.p_corr_hat}",
    )


def _branch_error_rate(log) -> tuple:
    errors = total = 0
    for out in log.outcomes:
        if out.mode == MM and out.m in (0, 1) and out.eve_branch == "E":
            total += 1
            errors += out.j_view_b != out.j
    return errors, total


def _check_bob_attack(rounds: int, seed: int) -> CheckResult:
    params = AttackParams(p=0.5, epsilon=0.5)
    rep = analysis.analytic_report("bob", params)
    config = ProtocolConfig(rounds=rounds, master_seed=seed)
    log = run_experiment(config, bob_key_attack(params))
    stats = analysis.empirical_statistics(log)
    errors, n_branch = _branch_error_rate(log)
    branch_rate = errors / n_branch if n_branch else float("nan")
    p_obs_target = config.transmission * (1.0 - params.p) + params.p / 2.0
    checks = [
        abs(stats.i_bk_eve_hat - rep.i_eve) <= 0.02,
        abs(branch_rate - 0.5) <= 3.0 * _sigma(0.5, n_branch),
        abs(stats.p_obs_hat - p_obs_target) <= 3.0 * _sigma(p_obs_target, stats.n_cm),
        stats.p_corr_hat == 0.0,
    ]
    return CheckResult(
        "attack on Bob's key",
        all(checks),
        f"i_bk={stats.i_bk_eve_hat:.4f} (target {rep.i_eve}),"
        f" branch QBER={branch_rate:.4f}, p_obs={stats.p_obs_hat:.4f}"
        f" (target {p_obs_target}), p_corr={stats.p_corr_hat}",
    )


def _check_loss_hiding(rounds: int, seed: int) -> CheckResult:
    alice_rep = analysis.loss_report(0.6, 0.8, "alice", p=0.5)
    bob_rep = analysis.loss_report(0.6, 0.8, "bob", p=0.5)
    formulas_ok = (
        abs(alice_rep.p_max - 0.25) <= 1e-12
        and abs(bob_rep.p_max - 2.0 / 3.0) <= 1e-12
    )
    params = AttackParams(p=0.5, epsilon=0.5)
    config = ProtocolConfig(rounds=rounds, master_seed=seed, transmission=0.6)
    mc_ok = True
    observed = []
    for rep, strategy in ((alice_rep, alice_key_attack(params)),
                          (bob_rep, bob_key_attack(params))):
        stats = analysis.empirical_statistics(run_experiment(config, strategy))
        tol = 3.0 * _sigma(rep.p_obs_predicted, stats.n_cm)
        mc_ok = mc_ok and abs(stats.p_obs_hat - rep.p_obs_predicted) <= tol
        observed.append(f"{rep.attack}: {stats.p_obs_hat:.4f} vs {rep.p_obs_predicted:.4f}")
    return CheckResult(
        "loss hiding",
        formulas_ok and mc_ok,
        f"p_max=({alice_rep.p_max:.15g}, {bob_rep.p_max:.15g}); p_obs " + "; ".join(observed),
    )


def _check_advantage_region() -> CheckResult:
    eps_grid = [i / 20.0 for i in range(1, 21)]
    missing = []
    for attack in ("alice", "bob"):
        for ip in range(1, 10):
            p = ip / 10.0
            found = False
            for eps in eps_grid:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    rep = analysis.analytic_report(attack, AttackParams(p=p, epsilon=eps))
                if rep.security_holds and rep.advantage:
                    found = True
                    break
            if not found:
                missing.append(f"{attack}@p={p}")
    return CheckResult(
        "advantage with security",
        not missing,
        "an epsilon exists for every p in {0.1..0.9} on both attacks"
        if not missing else "no epsilon found for: " + ", ".join(missing),
    )


def run_checks(rounds: int = 50000, seed: int = 0, perturb_v: float = 0.0) -> list:
    """Run the whole table; Monte-Carlo checks share `rounds` and `seed`."""
    return [
        _check_unitarity(perturb_v),
        _check_coupling_action(),
        _check_intercept_pipeline(),
        _check_return_interference(),
        _check_counterexample(),
        _check_honest_baseline(min(rounds, 10000), seed),
        _check_alice_attack(rounds, seed),
        _check_bob_attack(rounds, seed),
        _check_loss_hiding(rounds, seed),
        _check_advantage_region(),
    ]
