"""Training loop, evaluation metrics, and the line-delimited metrics log."""

import json

import numpy as np

from ..diffcore import Adam
from .model import DecisionTransformer, collate


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    pass


def evaluate(model, batch, batch_size=256):
    """Held-out metrics: action accuracy (all steps and last step), mean
    pinball loss per (step, reward, level) element, and the loss parts."""
    n = batch.size
    correct_all = total_all = correct_last = total_last = 0
    loss_action = loss_rtg = 0.0
    pinball_elems = 0
    nr_m = model.cfg.n_rewards * model.cfg.n_quantiles
    for lo in range(0, n, batch_size):
        sub = batch.slice(slice(lo, min(lo + batch_size, n)))
        h_s, h_r = model.hidden_states(sub)
        logits = model.predict_action_logits(h_s, h_r, sub.eas)
        qpred = model.predict_quantiles(h_s)
        b = sub.size
        loss_action += float(model.loss_action(logits, sub).data) * b
        loss_rtg += float(model.loss_rtg(qpred, sub).data) * b

        pred = np.argmax(logits.data, axis=-1)
        real = sub.step_real.astype(bool)
        correct_all += int((pred[real] == sub.actions[real]).sum())
        total_all += int(real.sum())
        last = real[:, -1]
        correct_last += int((pred[last, -1] == sub.actions[last, -1]).sum())
        total_last += int(last.sum())
        pinball_elems += int(real.sum()) * nr_m

    lam = model.cfg.rtg_loss_weight
    return {
        "action_accuracy": correct_last / max(1, total_last),
        "action_accuracy_all_steps": correct_all / max(1, total_all),
        "pinball_loss": loss_rtg / max(1, pinball_elems),
        "loss_action": loss_action / max(1, n),
        "loss_rtg": loss_rtg / max(1, n),
        "loss_total": (loss_action + lam * loss_rtg) / max(1, n),
    }


def train_model(
    windows,
    cfg,
    *,
    epochs=5,
    batch_size=64,
    lr=1e-3,
    lr_decay="cosine",
    seed=0,
    loss_mode="total",
    eval_windows=None,
    metrics_path=None,
    log=None,
):
    """Train a fresh model on TrajectoryWindows; deterministic given seed.

    Returns (model, per-epoch metrics list). Metrics are evaluated on
    eval_windows when given, else on the training set, and appended as one
    JSON object per line to metrics_path when set.
    """
    if not windows:
        raise TrainingError("empty training dataset")
    if lr_decay not in ("cosine", "constant"):
        raise TrainingError(f"unknown lr_decay {lr_decay!r}")
    model = DecisionTransformer(cfg)
    data = collate(windows, cfg)
    eval_batch = collate(eval_windows, cfg) if eval_windows else data
    opt = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    steps_per_epoch = (data.size + batch_size - 1) // batch_size
    total_steps = max(1, epochs * steps_per_epoch)
    step = 0
    fh = open(metrics_path, "w") if metrics_path else None
    try:
        for epoch in range(1, epochs + 1):
            order = rng.permutation(data.size)
            epoch_loss = 0.0
            n_batches = 0
            for lo in range(0, data.size, batch_size):
                if lr_decay == "cosine":
                    opt.lr = lr * (0.05 + 0.95 * 0.5 * (
                        1.0 + np.cos(np.pi * step / total_steps)
                    ))
                step += 1
                sub = data.slice(order[lo : lo + batch_size])
                parts = model.train_step(sub, opt, loss_mode)
                if not np.isfinite(parts["loss_total"]):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {n_batches}: {parts}"
                    )
                epoch_loss += parts["loss_total"]
                n_batches += 1
            metrics = evaluate(model, eval_batch)
            record = {
                "epoch": epoch,
                "action_accuracy": round(metrics["action_accuracy"], 6),
                "pinball_loss": round(metrics["pinball_loss"], 6),
                "loss_total": round(epoch_loss / max(1, n_batches), 6),
            }
            history.append(record)
            if fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            if log:
                log(record)
    finally:
        if fh:
            fh.close()
    return model, history


def rtg_label_percentiles(windows, q):
    """Per-reward percentile of the RTG labels over all real steps.

    Used for the cohort-level constant prompt (q=70) and the manual-update
    starting prompt (q=100).
    """
    rows = [w.rtg[w.step_real.astype(bool)] for w in windows]
    labels = np.concatenate(rows, axis=0)
    return np.percentile(labels, q, axis=0)
