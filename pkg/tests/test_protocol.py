"""Round-engine behavior: draw determinism, honest statistics, loss,
round-shape invariants and serialization."""

import json

import pytest

from qdkd import analysis, protocol
from qdkd.attacks import honest, swap_vacuum
from qdkd.errors import BadParam, UnknownMode
from qdkd.protocol import (
    CM,
    CSV_COLUMNS,
    MM,
    ChannelTap,
    ProtocolConfig,
    RoundOutcome,
    derive_partner_keys,
    round_record,
    rounds_csv_text,
    run_experiment,
    run_round,
)
from qdkd.quantum import FAIL, VAC, ModeKind, make_basis_state, op_x_pow, op_z_pow
from qdkd.rng import SplitMix64


@pytest.fixture(autouse=True)
def pure_backend(monkeypatch):
    """These tests exercise the reference path explicitly; backend-equality
    coverage lives in its own module."""
    monkeypatch.setenv("QDKD_BACKEND", "python")


def small_config(rounds=400, seed=11, cm=0.5, transmission=1.0):
    return ProtocolConfig(rounds=rounds, master_seed=seed,
                          cm_probability=cm, transmission=transmission)


class TestProtocolConfig:
    def test_defaults(self):
        cfg = ProtocolConfig(rounds=10)
        assert cfg.cm_probability == 0.5
        assert cfg.transmission == 1.0
        assert cfg.master_seed == 0

    @pytest.mark.parametrize("kwargs", [
        {"rounds": -1},
        {"rounds": 2.5},
        {"rounds": 1, "cm_probability": 1.5},
        {"rounds": 1, "cm_probability": -0.1},
        {"rounds": 1, "transmission": 0.0},
        {"rounds": 1, "transmission": 1.2},
        {"rounds": 1, "master_seed": "zero"},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(BadParam):
            ProtocolConfig(**kwargs)


class TestDerivePartnerKeys:
    @pytest.mark.parametrize("m", [0, 1])
    @pytest.mark.parametrize("j", [0, 1])
    @pytest.mark.parametrize("k", [0, 1])
    def test_xor_rule(self, m, j, k):
        k_view, j_view = derive_partner_keys(m, j, k)
        assert k_view == m ^ j
        assert j_view == m ^ k

    def test_rejects_non_bits(self):
        with pytest.raises(BadParam):
            derive_partner_keys(FAIL, 0, 1)
        with pytest.raises(BadParam):
            derive_partner_keys(0, 2, 1)


class TestHonestRounds:
    def test_message_rounds_are_error_free(self):
        cfg = small_config(rounds=300, seed=5)
        strat = honest()
        for out in run_experiment(cfg, strat).outcomes:
            if out.mode == MM:
                assert out.m == out.j ^ out.k
                assert out.j_view_b == out.j
                assert out.k_view_a == out.k
                assert out.eve_j is None and out.eve_k is None
                assert out.eve_branch is None

    def test_control_rounds_detect_and_anticorrelate(self):
        cfg = small_config(rounds=300, seed=6)
        for out in run_experiment(cfg, honest()).outcomes:
            if out.mode == CM:
                assert out.cm_detected is True
                assert out.cm_correlated is False
                assert out.cm_alice == 1 - out.cm_bob

    def test_round_is_deterministic_given_index(self):
        cfg = small_config(rounds=1, seed=123)
        strat = honest()
        assert run_round(cfg, strat, 7) == run_round(cfg, strat, 7)

    def test_mode_frequency_tracks_cm_probability(self):
        cfg = small_config(rounds=4000, seed=9, cm=0.3)
        log = run_experiment(cfg, honest())
        n_cm = sum(1 for o in log.outcomes if o.mode == CM)
        sigma = (0.3 * 0.7 / 4000) ** 0.5
        assert abs(n_cm / 4000 - 0.3) < 4 * sigma


class TestRoundShapes:
    def test_message_round_has_no_control_fields(self):
        cfg = small_config(rounds=60, seed=2, cm=0.0)
        for out in run_experiment(cfg, honest()).outcomes:
            assert out.mode == MM
            assert out.k is not None and out.m is not None
            assert out.cm_detected is None
            assert out.cm_correlated is None
            assert out.cm_bob is None and out.cm_alice is None

    def test_control_round_has_no_message_fields(self):
        cfg = small_config(rounds=60, seed=3, cm=1.0)
        for out in run_experiment(cfg, honest()).outcomes:
            assert out.mode == CM
            assert out.k is None and out.m is None
            assert out.k_view_a is None and out.j_view_b is None
            assert out.cm_detected is not None


class TestLoss:
    def test_detection_rate_matches_transmission(self):
        cfg = small_config(rounds=6000, seed=21, cm=1.0, transmission=0.7)
        stats = analysis.empirical_statistics(run_experiment(cfg, honest()))
        sigma = (0.7 * 0.3 / stats.n_cm) ** 0.5
        assert abs(stats.p_obs_hat - 0.7) < 3 * sigma

    def test_lost_photons_fail_the_interference_readout(self):
        cfg = small_config(rounds=6000, seed=22, cm=0.0, transmission=0.6)
        log = run_experiment(cfg, honest())
        n_fail = sum(1 for o in log.outcomes if o.m is FAIL)
        sigma = (0.4 * 0.6 / 6000) ** 0.5
        assert abs(n_fail / 6000 - 0.4) < 3 * sigma

    def test_surviving_rounds_stay_error_free(self):
        cfg = small_config(rounds=2000, seed=23, cm=0.0, transmission=0.5)
        stats = analysis.empirical_statistics(run_experiment(cfg, honest()))
        assert stats.q_a_hat == 0.0
        assert stats.q_b_hat == 0.0

    def test_lost_round_never_produces_detection(self):
        cfg = small_config(rounds=2000, seed=24, cm=1.0, transmission=0.4)
        log = run_experiment(cfg, honest())
        rate = sum(o.cm_detected for o in log.outcomes) / 2000
        sigma = (0.4 * 0.6 / 2000) ** 0.5
        assert abs(rate - 0.4) < 3 * sigma


class TestRunExperiment:
    def test_log_is_pure_function_of_config(self):
        cfg = small_config(rounds=200, seed=77)
        a = run_experiment(cfg, honest())
        b = run_experiment(cfg, honest())
        assert a.outcomes == b.outcomes

    def test_different_seeds_differ(self):
        a = run_experiment(small_config(rounds=100, seed=1), honest())
        b = run_experiment(small_config(rounds=100, seed=2), honest())
        assert a.outcomes != b.outcomes

    def test_thread_count_does_not_change_the_log(self):
        cfg = small_config(rounds=301, seed=13)
        seq = run_experiment(cfg, honest(), threads=1)
        par = run_experiment(cfg, honest(), threads=4)
        assert seq.outcomes == par.outcomes

    def test_threads_env_var(self, monkeypatch):
        monkeypatch.setenv("QDKD_THREADS", "3")
        cfg = small_config(rounds=90, seed=14)
        assert run_experiment(cfg, honest()).outcomes == \
            run_experiment(cfg, honest(), threads=1).outcomes

    def test_bad_threads_rejected(self, monkeypatch):
        with pytest.raises(BadParam):
            run_experiment(small_config(rounds=1), honest(), threads=0)
        monkeypatch.setenv("QDKD_THREADS", "soon")
        with pytest.raises(BadParam):
            run_experiment(small_config(rounds=1), honest())
        monkeypatch.setenv("QDKD_THREADS", "-2")
        with pytest.raises(BadParam):
            run_experiment(small_config(rounds=1), honest())

    def test_env_zero_threads_means_default(self, monkeypatch):
        monkeypatch.setenv("QDKD_THREADS", "0")
        log = run_experiment(small_config(rounds=5), honest())
        assert len(log.outcomes) == 5

    def test_attack_descriptor_recorded(self):
        log = run_experiment(small_config(rounds=1), swap_vacuum())
        assert log.attack == {"name": "swap", "p": None, "epsilon": None}

    def test_zero_rounds(self):
        log = run_experiment(small_config(rounds=0), honest())
        assert log.outcomes == ()


class TestChannelTap:
    def state(self):
        return make_basis_state(protocol.LAYOUT, (0, 0, VAC))

    def test_allows_line_and_tap_modes(self):
        tap = ChannelTap(self.state())
        tap.apply(op_x_pow(1, protocol.MODE_B))
        tap.apply(op_z_pow(1, protocol.MODE_E))
        assert tap.measure_photon(protocol.MODE_B, SplitMix64(1)) == 1

    def test_blocks_the_stored_qubit(self):
        tap = ChannelTap(self.state())
        with pytest.raises(UnknownMode):
            tap.apply(op_z_pow(1, protocol.MODE_A, ModeKind.QUBIT))
        with pytest.raises(UnknownMode):
            tap.measure_photon(protocol.MODE_A, SplitMix64(1))

    def test_rogue_strategy_cannot_touch_the_qubit(self):
        class Rogue(type(honest())):
            def forward(self, tap, rng, notes):
                tap.apply(op_z_pow(1, protocol.MODE_A, ModeKind.QUBIT))

        with pytest.raises(UnknownMode):
            run_round(small_config(rounds=1), Rogue(), 0)


class TestSerialization:
    def log(self):
        return run_experiment(small_config(rounds=50, seed=31, transmission=0.8), honest())

    def test_csv_header_and_shape(self):
        text = rounds_csv_text(self.log())
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 51

    def test_csv_bytes_are_reproducible(self):
        assert rounds_csv_text(self.log()) == rounds_csv_text(self.log())

    def test_round_records_are_json_ready(self):
        rec = [round_record(o) for o in self.log().outcomes]
        parsed = json.loads(json.dumps(rec))
        assert parsed[0]["index"] == 0
        assert {r["mode"] for r in parsed} <= {MM, CM}

    def test_absent_fields_render_empty(self):
        out = RoundOutcome(index=0, mode=CM, j=1, k=None, m=None,
                           k_view_a=None, j_view_b=None, eve_j=None,
                           eve_k=None, eve_branch=None, cm_detected=True,
                           cm_bob=1, cm_alice=0, cm_correlated=False)
        line = rounds_csv_text(protocol.TrialLog(
            config=small_config(rounds=1), attack={}, outcomes=(out,),
        )).strip().split("\n")[1]
        assert line == "0,CM,1,,,,,,,1,0,"

    def test_failed_readout_renders_as_fail(self):
        cfg = small_config(rounds=40, seed=41, cm=0.0, transmission=0.3)
        text = rounds_csv_text(run_experiment(cfg, honest()))
        assert ",FAIL," in text
