"""Prompt tuning: sweep target quantile levels and measure the realized
policy behavior under paired simulation seeds."""

import numpy as np

from ..notifsim import SimConfig, rollout
from ..seqstore import SequenceStore
from .service import DecisionService, DTServicePolicy

SWEEP_COLUMNS = (
    "alpha", "rhat_click_mean", "rhat_click_std", "sessions", "volume",
    "clicks", "ctr", "sends_badge", "sends_push",
)


def prompt_sweep(
    model,
    model_key,
    sim_cfg: SimConfig,
    click_alphas,
    *,
    n_users,
    n_steps,
    seed,
    base_alpha=0.5,
    capacity=16,
    collect_reports=None,
):
    """One paired rollout per click-reward target level.

    The click component's level varies; the other components stay at
    base_alpha. Every setting sees identical environment randomness (same
    seed), so differences are attributable to the prompt alone. Returns one
    row dict per level (flat, plot-ready).
    """
    nr = model.cfg.n_rewards
    rows = []
    for alpha in click_alphas:
        alphas = np.full(nr, base_alpha, dtype=np.float64)
        alphas[0] = float(alpha)
        service = DecisionService(
            model, SequenceStore(capacity), model_key=model_key,
            mode="learned", default_alphas=alphas,
        )
        policy = DTServicePolicy(
            service, tick_ms=sim_cfg.tick_minutes * 60_000
        )
        report = rollout(policy, sim_cfg, n_users, n_steps, seed)
        if collect_reports is not None:
            collect_reports.append(report)
        prompts = np.asarray(service.prompt_log)
        rows.append({
            "alpha": float(alpha),
            "rhat_click_mean": round(float(prompts[:, 0].mean()), 6),
            "rhat_click_std": round(float(prompts[:, 0].std()), 6),
            "sessions": report.sessions,
            "volume": report.volume,
            "clicks": report.clicks,
            "ctr": round(report.ctr, 6),
            "sends_badge": report.sends_badge,
            "sends_push": report.sends_push,
        })
    return rows


def sweep_table(rows):
    """Tab-separated flat table with a fixed column order."""
    lines = ["\t".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append("\t".join(str(row[c]) for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"


def monotonicity_verdict(rows):
    """Direction summary: is the mean predicted click RTG strictly increasing
    and the realized CTR non-decreasing across the sweep?"""
    rhat = [r["rhat_click_mean"] for r in rows]
    ctr = [r["ctr"] for r in rows]
    return {
        "rhat_strictly_increasing": all(b > a for a, b in zip(rhat, rhat[1:])),
        "ctr_non_decreasing": all(b >= a for a, b in zip(ctr, ctr[1:])),
    }
