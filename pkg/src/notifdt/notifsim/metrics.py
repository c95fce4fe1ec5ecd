"""Rollout metrics: sessions, notification volume, CTR, realized returns."""

from dataclasses import dataclass, field

import numpy as np

SESSION_GAP_MS = 30 * 60_000


def sessions_metric(view_timestamps_ms, gap_ms=SESSION_GAP_MS):
    """Count maximal runs of page views with consecutive gaps < gap_ms.

    Timestamps must be sorted ascending; a gap of exactly gap_ms starts a
    new session.
    """
    ts = np.asarray(view_timestamps_ms, dtype=np.int64)
    if ts.size == 0:
        return 0
    if ts.size > 1 and (np.diff(ts) < 0).any():
        raise ValueError("page view timestamps must be sorted")
    return 1 + int((np.diff(ts) >= gap_ms).sum())


@dataclass
class MetricsReport:
    """Aggregate rollout outcome plus per-user rows for bootstrapping."""

    n_users: int
    n_steps: int
    sessions: int
    volume: int
    clicks: int
    sends_badge: int
    sends_push: int
    ctr: float
    zero_send: bool
    reward_returns: np.ndarray          # (n_r,) summed over users and steps
    per_user: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_user_rows(cls, rows, n_steps, n_rewards):
        """rows: list of dicts with sessions/volume/clicks/sends_*/returns."""
        sessions = sum(r["sessions"] for r in rows)
        badge = sum(r["sends_badge"] for r in rows)
        push = sum(r["sends_push"] for r in rows)
        clicks = sum(r["clicks"] for r in rows)
        volume = badge + push
        returns = np.zeros(n_rewards)
        for r in rows:
            returns += r["returns"]
        per_user = {
            "sessions": np.array([r["sessions"] for r in rows], dtype=np.int64),
            "volume": np.array(
                [r["sends_badge"] + r["sends_push"] for r in rows], dtype=np.int64
            ),
            "clicks": np.array([r["clicks"] for r in rows], dtype=np.int64),
        }
        return cls(
            n_users=len(rows),
            n_steps=n_steps,
            sessions=sessions,
            volume=volume,
            clicks=clicks,
            sends_badge=badge,
            sends_push=push,
            ctr=(clicks / volume) if volume else 0.0,
            zero_send=volume == 0,
            reward_returns=returns,
            per_user=per_user,
        )

    def as_dict(self):
        return {
            "n_users": self.n_users,
            "n_steps": self.n_steps,
            "sessions": self.sessions,
            "volume": self.volume,
            "clicks": self.clicks,
            "sends_badge": self.sends_badge,
            "sends_push": self.sends_push,
            "ctr": round(self.ctr, 6),
            "zero_send": self.zero_send,
            "reward_returns": [round(float(x), 6) for x in self.reward_returns],
        }

    def to_text(self):
        d = self.as_dict()
        lines = [f"{k}: {v}" for k, v in d.items()]
        if self.zero_send:
            lines.append("note: ctr reported as 0.0 with zero sends")
        return "\n".join(lines)
