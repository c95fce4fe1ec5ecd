"""Log segmentation into fixed-length training windows with RTG labels.

A window spans T context steps plus H look-ahead steps. Every context step t
carries the discounted return-to-go label sum(gamma^l * r_{t+l}, l=0..H), so
the last H steps of a user's log are never context steps. Logs shorter than
T+H (but longer than H) produce one left-padded window when padding is on.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ..dtmodel.config import N_ACTIONS, PAD_ACTION


class PipelineError(ValueError):
    pass


@dataclass
class UserLog:
    """One user's interaction stream, strictly increasing timestamps."""

    user_id: str
    timestamps: np.ndarray  # (S,) int64 ms
    states: np.ndarray      # (S, state_dim) float
    eas: np.ndarray         # (S, 3) uint8
    actions: np.ndarray     # (S,) int64
    rewards: np.ndarray     # (S, n_r) float
    realized: np.ndarray    # (S, n_r) uint8, 1 = realized, 0 = predicted proxy

    def __post_init__(self):
        if len(self.timestamps) > 1 and not (np.diff(self.timestamps) > 0).all():
            raise PipelineError(
                f"user {self.user_id}: timestamps must be strictly increasing"
            )

    @property
    def length(self):
        return len(self.timestamps)


@dataclass
class TrajectoryWindow:
    """T context steps (left-padded if needed); labels folded in, horizon dropped."""

    user_id: str
    start: int              # context start index in the raw log (first real step)
    states: np.ndarray      # (T, state_dim)
    rtg: np.ndarray         # (T, n_r)
    actions: np.ndarray     # (T,) int64, PAD_ACTION on pads
    rewards: np.ndarray     # (T, n_r)
    eas: np.ndarray         # (T, 3) uint8
    timestamps: np.ndarray  # (T,) int64, 0 on pads
    step_real: np.ndarray   # (T,) uint8


def compute_rtg(rewards, t, horizon, gamma):
    """Discounted look-ahead sum over steps t..t+horizon (horizon+1 terms)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim == 1:
        rewards = rewards[:, None]
    if t < 0 or t + horizon >= len(rewards):
        raise PipelineError(
            f"RTG at step {t} needs {horizon} look-ahead steps; "
            f"log has {len(rewards)}"
        )
    disc = gamma ** np.arange(horizon + 1, dtype=np.float64)
    return disc @ rewards[t : t + horizon + 1]


def segment(log, context_len, horizon, gamma, stride=1, pad_short=True):
    """Slide a T+H window over one user's log; windows never cross users.

    Returns floor((L - (T+H)) / stride) + 1 windows when L >= T+H, one
    left-padded window when H < L < T+H and pad_short, else none.
    """
    if stride < 1:
        raise PipelineError("stride must be >= 1")
    t_len, h = context_len, horizon
    length = log.length
    n_r = log.rewards.shape[1]
    state_dim = log.states.shape[1]

    def build(ctx_start, n_real, pad):
        w = TrajectoryWindow(
            user_id=log.user_id,
            start=ctx_start,
            states=np.zeros((t_len, state_dim), dtype=np.float64),
            rtg=np.zeros((t_len, n_r), dtype=np.float64),
            actions=np.full(t_len, PAD_ACTION, dtype=np.int64),
            rewards=np.zeros((t_len, n_r), dtype=np.float64),
            eas=np.zeros((t_len, N_ACTIONS), dtype=np.uint8),
            timestamps=np.zeros(t_len, dtype=np.int64),
            step_real=np.zeros(t_len, dtype=np.uint8),
        )
        sl = slice(ctx_start, ctx_start + n_real)
        w.states[pad:] = log.states[sl]
        w.actions[pad:] = log.actions[sl]
        w.rewards[pad:] = log.rewards[sl]
        w.eas[pad:] = log.eas[sl]
        w.timestamps[pad:] = log.timestamps[sl]
        w.step_real[pad:] = 1
        for j in range(n_real):
            w.rtg[pad + j] = compute_rtg(log.rewards, ctx_start + j, h, gamma)
        return w

    windows = []
    if length >= t_len + h:
        n_full = (length - (t_len + h)) // stride + 1
        for widx in range(n_full):
            windows.append(build(widx * stride, t_len, 0))
    elif length > h and pad_short:
        n_real = length - h
        windows.append(build(0, n_real, t_len - n_real))
    return windows


def segment_logs(logs, context_len, horizon, gamma, stride=1, pad_short=True):
    """Segment many users; canonical output order (user id, start index)."""
    out = []
    for log in sorted(logs, key=lambda l: l.user_id):
        out.extend(segment(log, context_len, horizon, gamma, stride, pad_short))
    return out


def split_users(user_ids, ratio, seed):
    """Disjoint user-level (train, validation) partition, deterministic by seed."""
    if not user_ids:
        raise PipelineError("cannot split an empty user list")
    if not (0.0 < ratio < 1.0):
        raise PipelineError(f"split ratio must be in (0, 1), got {ratio}")
    ids = sorted(user_ids)
    rng = np.random.default_rng(seed)
    rng.shuffle(ids)
    n_train = int(np.floor(len(ids) * ratio + 0.5))
    train, val = sorted(ids[:n_train]), sorted(ids[n_train:])
    if not train or not val:
        warnings.warn(
            f"user split {ratio} over {len(ids)} users left one side empty",
            stacklevel=2,
        )
    return train, val


def manual_prompt(r1_prime, observed_rewards):
    """Sequential prompt update: initial trajectory return minus the rewards
    observed so far. Only meaningful when all reward components are realized."""
    r1_prime = np.asarray(r1_prime, dtype=np.float64)
    observed = np.asarray(observed_rewards, dtype=np.float64)
    if observed.size == 0:
        return r1_prime.copy()
    if r1_prime.ndim == 0:
        return r1_prime - observed.sum()
    return r1_prime - observed.reshape(-1, r1_prime.shape[0]).sum(axis=0)
