"""Online-style rollouts and paired A/B comparison with bootstrap intervals."""

from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .env import SimEnv
from .metrics import MetricsReport, sessions_metric


def rollout(policy, cfg: SimConfig, n_users, n_steps, seed):
    """Run one policy over a fresh environment; deterministic given seed.

    The policy exposes act(user_id, state, eas) -> action and may expose
    begin_user(user_id) and observe(user_id, action, reward, info) hooks
    (the decision-service adapter uses them to maintain its history).
    """
    env = SimEnv(cfg, n_users, seed)
    rows = []
    for uid in env.user_ids():
        if hasattr(policy, "begin_user"):
            policy.begin_user(uid)
        state = env.current_state(uid)
        returns = np.zeros(cfg.n_rewards)
        for _ in range(n_steps):
            eas = env.current_eas(uid)
            action = policy.act(uid, state, eas)
            state, reward, info = env.step(uid, action)
            returns += reward
            if hasattr(policy, "observe"):
                policy.observe(uid, action, reward, info)
        u = env.users[uid]
        rows.append({
            "sessions": sessions_metric(np.sort(np.asarray(u.page_views))),
            "sends_badge": u.sends_badge,
            "sends_push": u.sends_push,
            "clicks": u.clicks,
            "returns": returns,
        })
    return MetricsReport.from_user_rows(rows, n_steps, cfg.n_rewards)


@dataclass
class MetricDelta:
    metric: str
    treatment: float
    control: float
    delta_pct: float | None       # None when the baseline is zero
    ci_low: float | None
    ci_high: float | None
    nss: bool | None
    undefined_baseline: bool = False

    def format(self):
        if self.undefined_baseline:
            return f"{self.metric}: undefined baseline (control total is 0)"
        tag = " (NSS)" if self.nss else ""
        return (
            f"{self.metric}: {self.delta_pct:+.2f}% "
            f"[{self.ci_low:+.2f}%, {self.ci_high:+.2f}%]{tag} "
            f"(treatment {self.treatment:g}, control {self.control:g})"
        )


@dataclass
class ABResult:
    deltas: list
    n_users: int
    n_seeds: int
    n_boot: int

    def to_text(self):
        head = (
            f"paired A/B over {self.n_seeds} seed(s) x {self.n_users} users, "
            f"{self.n_boot} bootstrap resamples (NSS: not statistically significant)"
        )
        return "\n".join([head] + [d.format() for d in self.deltas])


def _delta_pct(t, c):
    if c == 0:
        return None
    return 100.0 * (t - c) / c


def ab_compare(
    treatment_factory,
    control_factory,
    cfg: SimConfig,
    n_users,
    n_steps,
    seeds,
    n_boot=1000,
    boot_seed=0,
):
    """Paired rollouts per seed (same environment randomness for both arms),
    then user-level bootstrap intervals on the relative deltas.

    Factories build a fresh policy per (arm, seed); reusing one stateful
    policy across arms would leak history between them.
    """
    t_rows = {"sessions": [], "volume": [], "clicks": []}
    c_rows = {"sessions": [], "volume": [], "clicks": []}
    for seed in seeds:
        rep_t = rollout(treatment_factory(), cfg, n_users, n_steps, seed)
        rep_c = rollout(control_factory(), cfg, n_users, n_steps, seed)
        for key in t_rows:
            t_rows[key].append(rep_t.per_user[key])
            c_rows[key].append(rep_c.per_user[key])
    t_arr = {k: np.concatenate(v).astype(np.float64) for k, v in t_rows.items()}
    c_arr = {k: np.concatenate(v).astype(np.float64) for k, v in c_rows.items()}
    n = len(t_arr["sessions"])

    rng = np.random.default_rng(boot_seed)
    idx = rng.integers(0, n, size=(n_boot, n))

    def metric_values(arr, take):
        return {
            "sessions": arr["sessions"][take].sum(),
            "volume": arr["volume"][take].sum(),
            "ctr": (
                arr["clicks"][take].sum() / arr["volume"][take].sum()
                if arr["volume"][take].sum() > 0
                else 0.0
            ),
        }

    full = np.arange(n)
    t_point = metric_values(t_arr, full)
    c_point = metric_values(c_arr, full)

    deltas = []
    for metric in ("sessions", "volume", "ctr"):
        t_val, c_val = t_point[metric], c_point[metric]
        point = _delta_pct(t_val, c_val)
        if point is None:
            deltas.append(MetricDelta(metric, t_val, c_val, None, None, None, None,
                                      undefined_baseline=True))
            continue
        boots = []
        for b in range(n_boot):
            take = idx[b]
            tv = metric_values(t_arr, take)[metric]
            cv = metric_values(c_arr, take)[metric]
            d = _delta_pct(tv, cv)
            if d is not None:
                boots.append(d)
        boots = np.asarray(boots)
        lo, hi = np.percentile(boots, [2.5, 97.5]) if boots.size else (0.0, 0.0)
        deltas.append(
            MetricDelta(metric, t_val, c_val, point, float(lo), float(hi),
                        nss=bool(lo <= 0.0 <= hi))
        )
    return ABResult(deltas, n_users, len(seeds), n_boot)
