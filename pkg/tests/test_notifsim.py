"""Environment dynamics, behavior policy, metrics, rollouts, A/B harness."""

import numpy as np
import pytest

from notifdt.dtmodel.config import DONT_SEND, SEND_BADGE, SEND_PUSH
from notifdt.notifsim import (
    BehaviorPolicy,
    ConstantPolicy,
    IneligibleActionError,
    SimConfig,
    SimEnv,
    ab_compare,
    behavior_policy,
    generate_logs,
    heuristic_action,
    read_logs,
    rollout,
    sessions_metric,
    tick_draws,
    write_logs,
)
from notifdt.notifsim.env import R_CLICK, R_PENALTY, R_VISIT


class TestEnvStep:
    def test_dont_send_has_zero_penalty_and_click(self):
        env = SimEnv(SimConfig(), 1, seed=0)
        uid = env.user_ids()[0]
        _, r, _ = env.step(uid, DONT_SEND)
        assert r[R_PENALTY] == 0.0 and r[R_CLICK] == 0.0

    def test_ineligible_action_rejected(self):
        env = SimEnv(SimConfig(p_full_eas=0.0, p_no_push=1.0), 1, seed=1)
        uid = env.user_ids()[0]
        assert env.current_eas(uid)[SEND_PUSH] == 0
        with pytest.raises(IneligibleActionError):
            env.step(uid, SEND_PUSH)

    def test_send_raises_fatigue_vs_skip(self):
        def fatigue_after(second_action):
            env = SimEnv(SimConfig(p_full_eas=1.0, p_no_push=0.0), 1, seed=2)
            uid = env.user_ids()[0]
            env.step(uid, SEND_PUSH)
            _, _, info = env.step(uid, second_action)
            return info["fatigue"]

        assert fatigue_after(SEND_PUSH) > fatigue_after(DONT_SEND)

    def test_fatigue_monotone_in_sends(self):
        # inserting a send anywhere never lowers later fatigue
        rng = np.random.default_rng(3)
        for trial in range(20):
            n = 12
            actions = rng.integers(0, 2, size=n)  # badge or dont_send pattern
            flip = int(rng.integers(0, n))
            base_seq = [SEND_BADGE if a else DONT_SEND for a in actions]
            more_seq = list(base_seq)
            more_seq[flip] = SEND_PUSH

            def run(seq):
                env = SimEnv(SimConfig(p_full_eas=1.0, p_no_push=0.0), 1, seed=trial)
                uid = env.user_ids()[0]
                fat = []
                for a in seq:
                    _, _, info = env.step(uid, a)
                    fat.append(info["fatigue"])
                return np.array(fat)

            assert (run(more_seq) >= run(base_seq) - 1e-12).all()

    def test_zero_engagement_user_never_visits(self):
        cfg = SimConfig(engagement_low=0.0, engagement_high=0.0)
        env = SimEnv(cfg, 1, seed=4)
        uid = env.user_ids()[0]
        visits = 0
        n = 10_000
        for _ in range(n):
            _, r, _ = env.step(uid, DONT_SEND)
            visits += r[R_VISIT]
        assert visits / n < 0.01

    def test_state_is_deterministic_given_seed(self):
        a = SimEnv(SimConfig(), 3, seed=5)
        b = SimEnv(SimConfig(), 3, seed=5)
        for uid in a.user_ids():
            np.testing.assert_array_equal(a.current_state(uid), b.current_state(uid))
        uid = a.user_ids()[0]
        _, ra, _ = a.step(uid, DONT_SEND)
        _, rb, _ = b.step(uid, DONT_SEND)
        np.testing.assert_array_equal(ra, rb)


class TestBehaviorPolicy:
    def test_greedy_is_deterministic_heuristic(self):
        cfg = SimConfig()
        state = np.zeros(6)
        state[0] = 0.9  # quality above the push threshold
        eas = np.ones(3, dtype=np.uint8)
        a = behavior_policy(state, eas, 0, 0.0, 0.99, 0.5, cfg)
        assert a == SEND_PUSH == heuristic_action(0.9, eas, 0, cfg)
        assert behavior_policy(state, eas, 1, 0.0, 0.99, 0.5, cfg) == DONT_SEND
        state[0] = 0.6
        assert behavior_policy(state, eas, 0, 0.0, 0.99, 0.5, cfg) == SEND_BADGE

    def test_full_exploration_is_uniform(self):
        cfg = SimConfig()
        rng = np.random.default_rng(6)
        eas = np.ones(3, dtype=np.uint8)
        counts = np.zeros(3)
        n = 30_000
        for _ in range(n):
            a = behavior_policy(np.zeros(6), eas, 0, 1.0, rng.random(), rng.random(), cfg)
            counts[a] += 1
        np.testing.assert_allclose(counts / n, 1 / 3, atol=0.01)

    def test_singleton_eas_forced(self):
        cfg = SimConfig()
        eas = np.array([0, 0, 1], dtype=np.uint8)
        for u in (0.0, 0.5, 0.999):
            assert behavior_policy(np.zeros(6), eas, 0, 1.0, 0.0, u, cfg) == DONT_SEND


class TestGenerateLogs:
    def test_shapes_and_counts(self):
        logs = generate_logs(SimConfig(), 100, 50, 0.1, seed=7)
        assert len(logs) == 100
        assert all(l.length == 50 for l in logs)

    def test_export_is_byte_identical(self, tmp_path):
        cfg = SimConfig()
        paths = []
        for i in range(2):
            logs = generate_logs(cfg, 20, 30, 0.2, seed=8)
            p = tmp_path / f"l{i}.ndtlog"
            write_logs(p, logs, cfg, 0.2, 8)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]

    def test_roundtrip(self, tmp_path):
        cfg = SimConfig()
        logs = generate_logs(cfg, 5, 12, 0.3, seed=9)
        p = tmp_path / "l.ndtlog"
        write_logs(p, logs, cfg, 0.3, 9)
        loaded, header = read_logs(p)
        assert header["epsilon"] == 0.3 and header["n_users"] == 5
        for a, b in zip(logs, loaded):
            assert a.user_id == b.user_id
            np.testing.assert_array_equal(a.states, b.states)
            np.testing.assert_array_equal(a.actions, b.actions)
            np.testing.assert_array_equal(a.rewards, b.rewards)

    def test_exploration_rate_matches_epsilon(self):
        epsilon, n_users, n_steps = 0.1, 150, 80
        logs = generate_logs(SimConfig(), n_users, n_steps, epsilon, seed=10)
        explored = total = 0
        for uidx in range(n_users):
            for t in range(n_steps):
                draws = tick_draws(10, uidx, t)
                explored += draws[4] < epsilon
                total += 1
        assert abs(explored / total - epsilon) < 0.01
        assert len(logs) == n_users


class TestSessions:
    def test_examples(self):
        minute = 60_000
        assert sessions_metric([]) == 0
        assert sessions_metric(np.array([0, 10, 50]) * minute) == 2
        assert sessions_metric(np.array([0, 29, 58]) * minute) == 1

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError, match="sorted"):
            sessions_metric([5, 3])

    def test_brute_force_oracle(self):
        def oracle(ts, gap):
            ts = sorted(ts)
            if not ts:
                return 0
            sessions = 1
            for a, b in zip(ts, ts[1:]):
                if b - a >= gap:
                    sessions += 1
            return sessions

        rng = np.random.default_rng(11)
        for _ in range(500):
            n = int(rng.integers(0, 40))
            ts = np.sort(rng.integers(0, 10_000, size=n))
            assert sessions_metric(ts, gap_ms=600) == oracle(ts.tolist(), 600)


class TestRollout:
    def test_never_send_policy(self):
        rep = rollout(ConstantPolicy(DONT_SEND), SimConfig(), 20, 30, seed=12)
        assert rep.volume == 0 and rep.ctr == 0.0 and rep.zero_send
        assert rep.reward_returns[0] == 0.0

    def test_always_push_volume_counts_eligible_steps(self):
        cfg = SimConfig()
        rep = rollout(ConstantPolicy(SEND_PUSH), cfg, 10, 25, seed=13)
        env = SimEnv(cfg, 10, seed=13)
        eligible = 0
        for uid in env.user_ids():
            for _ in range(25):
                eligible += int(env.current_eas(uid)[SEND_PUSH])
                env.step(uid, SEND_PUSH if env.current_eas(uid)[SEND_PUSH]
                         else DONT_SEND)
        assert rep.sends_push == eligible
        assert rep.volume == rep.sends_badge + rep.sends_push

    def test_behavior_policy_beats_silence_on_sessions(self):
        cfg = SimConfig()
        silent = rollout(ConstantPolicy(DONT_SEND), cfg, 80, 50, seed=14)
        active = rollout(BehaviorPolicy(cfg, epsilon=0.0), cfg, 80, 50, seed=14)
        assert active.sessions >= silent.sessions
        assert 0.0 <= active.ctr <= 1.0

    def test_identical_seeds_identical_reports(self):
        cfg = SimConfig()
        a = rollout(BehaviorPolicy(cfg, epsilon=0.1, seed=1), cfg, 15, 20, seed=15)
        b = rollout(BehaviorPolicy(cfg, epsilon=0.1, seed=1), cfg, 15, 20, seed=15)
        assert a.as_dict() == b.as_dict()
        np.testing.assert_array_equal(a.per_user["sessions"], b.per_user["sessions"])


class TestABCompare:
    def test_policy_vs_itself_all_nss(self):
        cfg = SimConfig()

        def factory():
            return BehaviorPolicy(cfg, epsilon=0.0)

        res = ab_compare(factory, factory, cfg, 15, 20, seeds=[16], n_boot=100)
        for d in res.deltas:
            assert d.delta_pct == 0.0
            assert d.nss

    def test_zero_send_baseline_is_undefined(self):
        cfg = SimConfig()
        res = ab_compare(
            lambda: ConstantPolicy(SEND_PUSH),
            lambda: ConstantPolicy(DONT_SEND),
            cfg, 10, 15, seeds=[17], n_boot=50,
        )
        by_name = {d.metric: d for d in res.deltas}
        assert by_name["volume"].undefined_baseline
        assert "undefined baseline" in by_name["volume"].format()
        assert not by_name["sessions"].undefined_baseline

    def test_report_text_mentions_nss(self):
        cfg = SimConfig()

        def factory():
            return ConstantPolicy(DONT_SEND)

        res = ab_compare(factory, factory, cfg, 5, 10, seeds=[18], n_boot=20)
        assert "NSS" in res.to_text()
