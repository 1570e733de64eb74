"""Closed-form predictions, estimators and the loss accounting.

Numeric oracles were evaluated independently at 30 significant digits
(mpmath) and frozen here as doubles:

    H(0.375)     = 0.9544340029249649
    1 - H(0.375) = 0.04556599707503504
    1 - H(0.25)  = 0.18872187554086714
"""

import math

import numpy as np
import pytest

from qdkd import quantum
from qdkd.analysis import (
    BOT,
    analytic_report,
    binary_entropy,
    empirical_statistics,
    i_ab_range_sup,
    loss_report,
    p_corr_claimed,
    p_corr_true,
    plugin_mutual_information,
    security_condition,
)
from qdkd.attacks import AttackParams, alice_key_attack, honest
from qdkd.errors import BadParam, NotUnitary, UndefinedLossBound
from qdkd.protocol import (
    CM,
    MM,
    MODE_A,
    MODE_B,
    MODE_E,
    ProtocolConfig,
    RoundOutcome,
    TrialLog,
    run_experiment,
)

H_375 = 0.9544340029249649
I_AB_375 = 0.04556599707503504
I_AB_25 = 0.18872187554086714


class TestBinaryEntropy:
    def test_degenerate_points_are_exact(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.5) == 1.0

    def test_frozen_value(self):
        assert binary_entropy(0.375) == pytest.approx(H_375, abs=1e-12)

    @pytest.mark.parametrize("q", [0.01, 0.11, 0.3, 0.49])
    def test_symmetry(self, q):
        assert binary_entropy(q) == pytest.approx(binary_entropy(1.0 - q), abs=1e-15)

    @pytest.mark.parametrize("q", [-0.1, 1.1, 2.0])
    def test_domain(self, q):
        with pytest.raises(BadParam):
            binary_entropy(q)


class TestPluginMutualInformation:
    def test_perfect_correlation_is_one_bit(self):
        assert plugin_mutual_information({(0, 0): 5, (1, 1): 5}) == 1.0

    def test_independent_uniform_is_zero(self):
        table = {(0, 0): 3, (0, 1): 3, (1, 0): 3, (1, 1): 3}
        assert plugin_mutual_information(table) == 0.0

    def test_constant_column_is_exactly_zero(self):
        assert plugin_mutual_information({(0, BOT): 3, (1, BOT): 7}) == 0.0
        assert plugin_mutual_information({(0, 0): 4}) == 0.0

    def test_symmetric_binary_channel(self):
        # flip probability 1/4 in exact proportions
        table = {(0, 0): 3, (0, 1): 1, (1, 0): 1, (1, 1): 3}
        assert plugin_mutual_information(table) == pytest.approx(I_AB_25, abs=1e-12)

    @pytest.mark.parametrize("reveal, hide, expected", [(2, 2, 0.5), (1, 3, 0.25)])
    def test_reveal_or_abstain_channel_gives_reveal_rate(self, reveal, hide, expected):
        # y equals x with probability p, otherwise the abstain symbol; the
        # plug-in value collapses to p, and these proportions keep every
        # intermediate a dyadic rational so the result is exact
        table = {(0, 0): reveal, (1, 1): reveal, (0, BOT): hide, (1, BOT): hide}
        assert plugin_mutual_information(table) == expected

    def test_zero_count_entries_are_ignored(self):
        assert plugin_mutual_information({(0, 0): 5, (1, 1): 5, (0, 1): 0}) == 1.0

    def test_non_integer_labels(self):
        assert plugin_mutual_information({("a", "x"): 2, ("b", "y"): 2}) == 1.0

    def test_empty_table_rejected(self):
        with pytest.raises(BadParam):
            plugin_mutual_information({})
        with pytest.raises(BadParam):
            plugin_mutual_information({(0, 0): 0})


class TestCorrelationProbabilities:
    def setup_method(self):
        self.vac_e = quantum.make_basis_state(
            ((MODE_E, quantum.ModeKind.PHOTON),), (quantum.VAC,))
        self.swap = quantum.op_swap(MODE_B, MODE_E)
        self.ident = quantum.op_z_pow(0, MODE_B)

    def test_true_rate_of_the_swap_probe_is_zero(self):
        assert p_corr_true(self.swap, self.vac_e) == 0.0

    def test_true_rate_without_interference_is_zero(self):
        assert p_corr_true(self.ident, None) == 0.0

    def test_true_rate_oracle_hook(self):
        # a fully correlated input makes the equal-bits projector certain
        both_zero = quantum.make_basis_state(
            ((MODE_A, quantum.ModeKind.QUBIT), (MODE_B, quantum.ModeKind.PHOTON)),
            (0, 0))
        assert p_corr_true(self.ident, None, mixture=[(1.0, both_zero)]) == 1.0

    def test_overlap_formula_on_the_swap_probe(self):
        assert p_corr_claimed(self.swap, self.swap, self.vac_e) == 0.5

    def test_overlap_formula_on_identity(self):
        ident_be = quantum.unitary_operator(
            (MODE_B, MODE_E),
            (quantum.ModeKind.PHOTON, quantum.ModeKind.PHOTON),
            np.eye(9),
        )
        value = p_corr_claimed(ident_be, ident_be, self.vac_e)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_swap_probe_gap_is_half(self):
        gap = abs(p_corr_claimed(self.swap, self.swap, self.vac_e)
                  - p_corr_true(self.swap, self.vac_e))
        assert gap == pytest.approx(0.5, abs=1e-12)

    def test_observables_are_rejected(self):
        parity = quantum.op_parity(MODE_A, MODE_B)
        with pytest.raises(NotUnitary):
            p_corr_true(parity, None)


class TestAnalyticReport:
    def test_attack_on_alice_reference_point(self):
        rep = analytic_report("alice", AttackParams(p=0.5, epsilon=0.5))
        assert rep.x == 0.25
        assert rep.q_total == 0.375
        assert rep.p_corr == 0.0
        assert rep.i_ab == pytest.approx(I_AB_375, abs=1e-12)
        assert rep.i_eve == 0.5
        assert rep.i_eve_cross == 0.0
        assert rep.security_lhs == pytest.approx(H_375, abs=1e-12)
        assert rep.security_holds
        assert rep.advantage

    def test_attack_on_bob_information_rate(self):
        rep = analytic_report("bob", AttackParams(p=0.6, epsilon=0.1))
        assert rep.i_eve == 0.3
        assert rep.i_eve_cross == 0.0

    def test_tuning_report_ignores_p(self):
        rep = analytic_report("tuning", AttackParams(p=0.7, epsilon=0.4))
        assert rep.p == 0.0
        assert rep.i_eve == 0.0
        assert rep.x == 0.4
        assert not rep.advantage

    def test_weak_tuning_approaches_the_insecure_edge(self):
        rep = analytic_report("tuning", AttackParams(p=0.0, epsilon=0.01))
        assert rep.q_total == pytest.approx(0.495, abs=1e-15)
        assert rep.security_lhs < 1.0
        assert rep.security_holds
        assert 0.0 < rep.i_ab < 1e-3

    def test_x_identity_on_a_grid(self):
        for p in (0.0, 0.25, 0.5, 0.75):
            for eps in (0.25, 0.5, 1.0):
                with pytest.warns(UserWarning) if eps > 0.5 else no_warning():
                    params = AttackParams(p=p, epsilon=eps)
                rep = analytic_report("alice", params)
                assert abs(rep.x - eps * (1.0 - p)) <= 1e-15
                assert rep.q_total == (1.0 - rep.x) / 2.0
                assert rep.security_holds == (rep.security_lhs < 1.0)
                assert rep.advantage == (rep.i_eve > rep.i_ab)

    def test_unknown_attack_rejected(self):
        with pytest.raises(BadParam):
            analytic_report("swap", AttackParams(p=0.1, epsilon=0.5))


class TestInformationRange:
    def test_endpoints(self):
        assert i_ab_range_sup(0.0) == 1.0
        assert i_ab_range_sup(0.5) == pytest.approx(I_AB_25, abs=1e-12)

    def test_is_a_supremum_for_the_tunable_attack(self):
        with pytest.warns(UserWarning):
            params = AttackParams(p=0.5, epsilon=1.0 - 1e-9)
        rep = analytic_report("alice", params)
        sup = i_ab_range_sup(0.5)
        assert rep.i_ab < sup
        assert sup - rep.i_ab < 1e-6

    @pytest.mark.parametrize("p", [-0.01, 1.0, 1.5])
    def test_domain(self, p):
        with pytest.raises(BadParam):
            i_ab_range_sup(p)


class TestSecurityCondition:
    def test_boundary_is_insecure(self):
        assert security_condition(0.5, 0.0) == (1.0, False)

    def test_noiseless_case(self):
        assert security_condition(0.0, 0.0) == (0.0, True)

    def test_reference_point(self):
        lhs, holds = security_condition(0.375, 0.0)
        assert lhs == pytest.approx(H_375, abs=1e-12)
        assert holds

    def test_correlated_detections_count_against_security(self):
        lhs, holds = security_condition(0.375, 0.375)
        assert lhs == pytest.approx(2 * H_375, abs=1e-12)
        assert not holds

    def test_domain(self):
        with pytest.raises(BadParam):
            security_condition(1.2, 0.0)


def no_warning():
    import warnings

    class _Ctx:
        def __enter__(self):
            self._caught = warnings.catch_warnings()
            self._caught.__enter__()
            warnings.simplefilter("error")
            return self

        def __exit__(self, *exc):
            return self._caught.__exit__(*exc)

    return _Ctx()


def _mm_round(index, j, k, m, eve_j=None, eve_k=None, branch=None):
    k_view_a, j_view_b = (m ^ j, m ^ k) if m in (0, 1) else (None, None)
    return RoundOutcome(
        index=index, mode=MM, j=j, k=k, m=m,
        k_view_a=k_view_a, j_view_b=j_view_b,
        eve_j=eve_j, eve_k=eve_k, eve_branch=branch,
        cm_detected=None, cm_bob=None, cm_alice=None, cm_correlated=None,
    )


def _cm_round(index, j, detected, correlated):
    return RoundOutcome(
        index=index, mode=CM, j=j, k=None, m=None,
        k_view_a=None, j_view_b=None,
        eve_j=None, eve_k=None, eve_branch=None,
        cm_detected=detected, cm_bob=0 if detected else None,
        cm_alice=1, cm_correlated=correlated,
    )


def _log(outcomes):
    config = ProtocolConfig(rounds=len(outcomes))
    return TrialLog(config=config, attack={"name": "none"}, outcomes=tuple(outcomes))


class TestEmpiricalStatistics:
    def test_hand_built_log(self):
        outcomes = [
            # two clean rounds, one where Bob's view of j is wrong, one where
            # Alice's view of k is wrong
            _mm_round(0, j=0, k=0, m=0),
            _mm_round(1, j=1, k=1, m=0),
            RoundOutcome(index=2, mode=MM, j=0, k=0, m=0, k_view_a=0,
                         j_view_b=1, eve_j=None, eve_k=None, eve_branch=None,
                         cm_detected=None, cm_bob=None, cm_alice=None,
                         cm_correlated=None),
            RoundOutcome(index=3, mode=MM, j=1, k=0, m=1, k_view_a=0,
                         j_view_b=1, eve_j=None, eve_k=None, eve_branch=None,
                         cm_detected=None, cm_bob=None, cm_alice=None,
                         cm_correlated=None),
            _mm_round(4, j=0, k=1, m="FAIL"),
            _cm_round(5, j=0, detected=True, correlated=False),
            _cm_round(6, j=1, detected=True, correlated=True),
            _cm_round(7, j=0, detected=False, correlated=False),
        ]
        # round 3 above flips nothing: m=1, j=1, k=0 gives j_view_b=1 == j
        # and k_view_a=0 == k, so only round 2 carries errors
        stats = empirical_statistics(_log(outcomes))
        assert stats.n_rounds == 8
        assert stats.n_mm == 5
        assert stats.n_mm_valid == 4
        assert stats.n_cm == 3
        assert stats.q_a_hat == 0.25
        assert stats.q_b_hat == 0.0
        assert stats.p_obs_hat == pytest.approx(2 / 3, abs=1e-15)
        assert stats.p_corr_hat == pytest.approx(1 / 3, abs=1e-15)

    def test_interceptor_tables(self):
        # interceptor reveals j on half the valid rounds, exactly
        outcomes = [
            _mm_round(0, j=0, k=0, m=0, eve_j=0, branch="E"),
            _mm_round(1, j=1, k=0, m=1, eve_j=1, branch="E"),
            _mm_round(2, j=0, k=1, m=1),
            _mm_round(3, j=1, k=1, m=0),
        ]
        stats = empirical_statistics(_log(outcomes))
        assert stats.i_aj_eve_hat == 0.5
        assert stats.i_bk_eve_hat == 0.0

    def test_no_valid_message_rounds_reports_absent(self):
        outcomes = [
            _mm_round(0, j=0, k=1, m="FAIL"),
            _cm_round(1, j=0, detected=True, correlated=False),
        ]
        stats = empirical_statistics(_log(outcomes))
        assert stats.q_a_hat is None
        assert stats.q_b_hat is None
        assert stats.i_aj_eve_hat is None
        assert stats.i_bk_eve_hat is None
        assert stats.i_ab_hat is None
        assert stats.p_obs_hat == 1.0

    def test_no_control_rounds_reports_absent(self):
        stats = empirical_statistics(_log([_mm_round(0, j=0, k=0, m=0)]))
        assert stats.p_corr_hat is None
        assert stats.p_obs_hat is None

    def test_honest_trial_is_error_free(self):
        log = run_experiment(ProtocolConfig(rounds=2000, master_seed=11), honest())
        stats = empirical_statistics(log)
        assert stats.q_a_hat == 0.0
        assert stats.q_b_hat == 0.0
        assert stats.p_corr_hat == 0.0
        assert stats.p_obs_hat == 1.0
        # the partners' table is perfectly correlated, so the plug-in MI is
        # the entropy of the j margin: 1 up to sampling imbalance
        assert 0.99 < stats.i_ab_hat <= 1.0
        assert stats.i_aj_eve_hat == 0.0

    def test_attack_statistics_track_the_analytic_point(self):
        log = run_experiment(
            ProtocolConfig(rounds=20000, master_seed=5),
            alice_key_attack(AttackParams(p=0.5, epsilon=0.5)),
        )
        stats = empirical_statistics(log)
        rep = analytic_report("alice", AttackParams(p=0.5, epsilon=0.5))
        n = stats.n_mm_valid
        sigma = math.sqrt(rep.q_total * (1 - rep.q_total) / n)
        assert abs(stats.q_a_hat - rep.q_total) < 3 * sigma
        assert abs(stats.q_b_hat - rep.q_total) < 3 * sigma
        assert abs(stats.i_aj_eve_hat - rep.i_eve) < 0.02
        assert stats.p_corr_hat == 0.0


class TestLossReport:
    def test_alice_reference_numbers(self):
        rep = loss_report(0.6, 0.8, "alice", p=0.5)
        assert rep.p_max == pytest.approx(0.25, abs=1e-12)
        assert rep.p_obs_predicted == pytest.approx(0.3, abs=1e-15)

    def test_bob_reference_numbers(self):
        rep = loss_report(0.6, 0.8, "bob", p=0.0)
        assert rep.p_max == pytest.approx(2 / 3, abs=1e-12)

    def test_bob_observed_rate(self):
        rep = loss_report(0.8, None, "bob", p=0.5)
        assert rep.p_obs_predicted == pytest.approx(0.65, abs=1e-15)
        assert rep.p_max is None

    def test_bob_below_half_never_needs_a_better_line(self):
        rep = loss_report(0.4, None, "bob", p=0.5)
        assert rep.p_max == 1.0
        # p_obs = 0.4*0.5 + 0.25 = 0.45, excess fraction 0.05/0.45
        assert rep.filter_fraction == pytest.approx(1 / 9, abs=1e-12)

    def test_bob_filter_vanishes_without_interception(self):
        assert loss_report(0.4, None, "bob", p=0.0).filter_fraction == 0.0
        assert loss_report(0.5, None, "bob", p=0.7).filter_fraction == 0.0

    def test_alice_has_no_filter(self):
        assert loss_report(0.4, None, "alice", p=0.5).filter_fraction is None

    def test_without_replacement_line_the_bound_is_absent(self):
        assert loss_report(0.6, None, "alice", p=0.1).p_max is None
        assert loss_report(0.6, None, "bob", p=0.1).p_max is None

    def test_bob_replacement_below_the_detection_floor(self):
        with pytest.raises(UndefinedLossBound):
            loss_report(0.6, 0.5, "bob", p=0.1)

    def test_replacement_must_beat_the_bare_line(self):
        with pytest.raises(BadParam):
            loss_report(0.6, 0.5, "alice", p=0.1)
        with pytest.raises(BadParam):
            loss_report(0.8, 0.6, "bob", p=0.1)

    @pytest.mark.parametrize(
        "args",
        [
            (0.0, None, "alice", 0.1),
            (1.2, None, "alice", 0.1),
            (0.6, 1.2, "alice", 0.1),
            (0.6, 0.8, "alice", 1.0),
            (0.6, 0.8, "alice", -0.1),
            (0.6, 0.8, "swap", 0.1),
        ],
    )
    def test_domain(self, args):
        with pytest.raises(BadParam):
            loss_report(*args)
