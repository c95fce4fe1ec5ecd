"""Behavior policies for log generation and rollout baselines."""

import numpy as np

from ..dtmodel.config import DONT_SEND, SEND_BADGE, SEND_PUSH
from .config import FEATURE_INDEX, SimConfig


def heuristic_action(quality, eas, recent_sends, cfg: SimConfig):
    """Quality thresholds plus a frequency cap over the last cap_window ticks."""
    if recent_sends > 0:
        return DONT_SEND
    if quality >= cfg.push_threshold and eas[SEND_PUSH]:
        return SEND_PUSH
    if quality >= cfg.badge_threshold and eas[SEND_BADGE]:
        return SEND_BADGE
    return DONT_SEND


def behavior_policy(state, eas, recent_sends, epsilon, u_explore, u_pick,
                    cfg: SimConfig):
    """Epsilon-greedy over the heuristic: with probability epsilon, uniform
    over the eligible set; otherwise the deterministic heuristic."""
    eas = np.asarray(eas)
    if not eas.any():
        raise ValueError("eligible action set is empty")
    if epsilon > 0 and u_explore < epsilon:
        eligible = np.flatnonzero(eas)
        return int(eligible[min(int(u_pick * len(eligible)), len(eligible) - 1)])
    return heuristic_action(state[FEATURE_INDEX["quality"]], eas, recent_sends, cfg)


class BehaviorPolicy:
    """Rollout-protocol wrapper; tracks its own recent sends per user."""

    def __init__(self, cfg: SimConfig, epsilon=0.0, seed=0):
        self.cfg = cfg
        self.epsilon = float(epsilon)
        self.rng = np.random.default_rng(seed)
        self._recent = {}

    def act(self, user_id, state, eas):
        hist = self._recent.setdefault(user_id, [])
        recent = sum(1 for a in hist[-self.cfg.cap_window:] if a != DONT_SEND)
        u_explore = self.rng.random() if self.epsilon > 0 else 1.0
        u_pick = self.rng.random() if self.epsilon > 0 else 0.0
        action = behavior_policy(
            state, eas, recent, self.epsilon, u_explore, u_pick, self.cfg
        )
        hist.append(action)
        return action


class ConstantPolicy:
    """Always the same action when eligible, else dont_send."""

    def __init__(self, action):
        self.action = int(action)

    def act(self, user_id, state, eas):
        if eas[self.action]:
            return self.action
        return DONT_SEND
