"""Live sessions: recommendations, event log, replay equivalence."""

import json

import numpy as np
import pytest

from targetrial import rng as rngmod
from targetrial.engine import Scenario, TrialConfig, simulate_trial
from targetrial.policies import PolicySpec
from targetrial.sessions import (LiveSession, NotReadyError, SessionConfig,
                                 SessionError, SessionStore, UnknownArmError)

WE = PolicySpec.we_sym(1, 0.55, burn_in=5)


def session_config(policy=WE, seed=77, n_arms=4, n_patients=100,
                   sigmas=(2.0, 2.0, 2.0, 4.0), free_entry=False):
    return SessionConfig(n_arms=n_arms, n_patients=n_patients, policy=policy,
                         targets=(0.0,) * n_arms, sigmas=sigmas, seed=seed,
                         free_entry=free_entry)


class TestLiveSession:
    def test_burn_in_recommendations(self):
        cfg = SessionConfig(n_arms=2, n_patients=10, policy=PolicySpec.we_sym(2, 1, burn_in=1),
                            targets=(0.0, 0.0), sigmas=(1.0, 1.0), seed=1)
        s = LiveSession("s1", cfg)
        assert s.recommendation()[0] == 0
        s.record(0, 0.4)
        assert s.recommendation()[0] == 1

    def test_recommendation_idempotent(self):
        s = LiveSession("s", session_config())
        first = s.recommendation()
        for _ in range(5):
            assert s.recommendation() == first

    def test_protocol_enforced_without_free_entry(self):
        s = LiveSession("s", session_config())
        with pytest.raises(SessionError, match="protocol allocates"):
            s.record(3, 1.0)   # burn-in expects arm 0

    def test_free_entry_allows_any_arm(self):
        s = LiveSession("s", session_config(free_entry=True))
        s.record(3, 1.0)
        assert s.arm_states()[3].count == 1

    def test_unknown_arm(self):
        s = LiveSession("s", session_config())
        with pytest.raises(UnknownArmError):
            s.record(9, 1.0)

    def test_non_finite_value(self):
        s = LiveSession("s", session_config())
        with pytest.raises(SessionError):
            s.record(0, float("nan"))

    def test_finalize_requires_all_outcomes(self):
        s = LiveSession("s", session_config())
        s.record(0, 1.0)
        with pytest.raises(NotReadyError):
            s.finalize(0.95)

    def test_forced_finalize(self):
        s = LiveSession("s", session_config(n_patients=100))
        gen = np.random.default_rng(4)
        for _ in range(12):
            arm, _ = s.recommendation()
            s.record(arm, float(gen.normal()))
        result = s.finalize(0.95, force=True)
        assert result.best != result.second
        assert 0.0 < result.pi < 1.0

    def test_threshold_comparison(self):
        s = LiveSession("s", session_config(n_patients=8, n_arms=2,
                                            sigmas=(1.0, 1.0),
                                            policy=PolicySpec.we_sym(2, 1, burn_in=1)))
        values = [0.05, 3.0, 0.01, -0.02, 0.03, 0.02, -0.04, 0.01]
        for v in values:
            arm, _ = s.recommendation()
            s.record(arm, v)
        result = s.finalize(0.95)
        assert result.reject == (result.pi > 0.95)

    def test_gains_panel_during_adaptive_phase(self):
        s = LiveSession("s", session_config())
        gen = np.random.default_rng(9)
        for _ in range(20):   # burn-in: 4 arms x 5
            arm, gains = s.recommendation()
            assert gains is None
            s.record(arm, float(gen.normal()))
        arm, gains = s.recommendation()
        assert gains is not None and len(gains) == 4
        assert int(np.argmax(gains)) == arm

    def test_phase_transitions(self):
        s = LiveSession("s", session_config(n_patients=24))
        assert s.phase == "burn_in"
        gen = np.random.default_rng(2)
        for _ in range(20):
            arm, _ = s.recommendation()
            s.record(arm, float(gen.normal()))
        assert s.phase == "adaptive"
        for _ in range(4):
            arm, _ = s.recommendation()
            s.record(arm, float(gen.normal()))
        assert s.phase == "full"
        s.finalize(0.95)
        assert s.phase == "complete"


class TestReplayEquivalence:
    @pytest.mark.parametrize("policy", [
        WE,
        PolicySpec.fr(burn_in=5),
        PolicySpec.cb(burn_in=5),
        PolicySpec.we_asym(2.0, 1.2, kappa=1.0, burn_in=5),
        PolicySpec.ts(draws=200, burn_in=5),
    ])
    def test_session_replays_simulated_trial(self, policy):
        scen = Scenario.univariate([1.91, -3.36, -0.37, 3.99], [2, 2, 2, 4], 0.0)
        cfg = TrialConfig(100, policy, seed=1234)
        out = simulate_trial(scen, cfg)
        z, _ = rngmod.trial_streams(cfg.seed, 0, 100, 1)
        responses = scen.means[out.allocations] + scen.sigmas[out.allocations] * z[:, 0]

        s = LiveSession("replay", session_config(policy=policy, seed=1234))
        for t in range(100):
            arm, _ = s.recommendation()
            assert arm == out.allocations[t]
            s.record(arm, float(responses[t]))
        result = s.finalize(0.95)
        assert (result.best, result.second) == (out.best, out.second)
        assert result.pi == out.pi


class TestSessionStore:
    def test_create_record_finalize_roundtrip(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = SessionStore(log)
        s = store.create(session_config(n_patients=8, n_arms=2, sigmas=(1.0, 1.0),
                                        policy=PolicySpec.we_sym(2, 1.0, burn_in=1)),
                         session_id="abc")
        gen = np.random.default_rng(3)
        for _ in range(8):
            arm, _ = s.recommendation()
            store.record("abc", arm, float(gen.normal()))
        result = store.finalize("abc", 0.9)

        reloaded = SessionStore(log)
        s2 = reloaded.get("abc")
        assert s2.outcomes == s.outcomes
        assert s2.final == result
        assert [a.mean for a in s2.arm_states()] == [a.mean for a in s.arm_states()]

    def test_crash_replay_partial(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = SessionStore(log)
        s = store.create(session_config(), session_id="s1")
        gen = np.random.default_rng(8)
        for _ in range(30):
            arm, _ = s.recommendation()
            store.record("s1", arm, float(gen.normal()))
        # "crash": a fresh store must continue with identical recommendations
        resumed = SessionStore(log).get("s1")
        assert resumed.next_patient == 31
        assert resumed.recommendation() == s.recommendation()

    def test_rejected_events_never_logged(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = SessionStore(log)
        store.create(session_config(), session_id="s1")
        with pytest.raises(SessionError):
            store.record("s1", 2, 1.0)   # protocol expects arm 0
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert [l["event"] for l in lines] == ["created"]

    def test_unknown_session(self, tmp_path):
        store = SessionStore(tmp_path / "x.jsonl")
        with pytest.raises(KeyError):
            store.get("nope")

    def test_event_log_fields(self, tmp_path):
        log = tmp_path / "events.jsonl"
        store = SessionStore(log)
        store.create(session_config(), session_id="sx")
        store.record("sx", 0, 1.25)
        rec = json.loads(log.read_text().splitlines()[1])
        assert rec["event"] == "outcome"
        assert rec["session"] == "sx"
        assert rec["arm"] == 0 and rec["value"] == 1.25
        assert "ts" in rec and rec["patient"] == 1

    def test_duplicate_session_id(self, tmp_path):
        store = SessionStore(tmp_path / "e.jsonl")
        store.create(session_config(), session_id="dup")
        with pytest.raises(SessionError):
            store.create(session_config(), session_id="dup")
