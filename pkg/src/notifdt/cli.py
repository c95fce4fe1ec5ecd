"""Single entry point: simulate -> segment -> train -> eval -> serve/sweep/ab.

Exit codes: 0 success, 1 runtime failure, 2 configuration error (bad config,
unknown keys, or a missing upstream artifact).
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class MissingArtifact(Exception):
    def __init__(self, path, hint):
        super().__init__(f"missing artifact {path}; run `notifdt {hint}` first")


def _need(path, hint):
    if not os.path.exists(path):
        raise MissingArtifact(path, hint)
    return path


def _ensure_dirs(cfg):
    for sub in ("datasets", "checkpoints", "logs", "reports"):
        os.makedirs(cfg.path(sub), exist_ok=True)


def _echo_config(cfg):
    _ensure_dirs(cfg)
    with open(cfg.path("resolved_config.yaml"), "w") as fh:
        fh.write(cfg.to_yaml())


def model_key_for(cfg):
    """Deterministic model-version key from the config blocks that shape it."""
    payload = json.dumps(
        {"model": cfg.model, "pipeline": cfg.pipeline, "training": cfg.training},
        sort_keys=True,
    ).encode()
    return "dt-" + hashlib.sha256(payload).hexdigest()[:10]


# -- subcommands ----------------------------------------------------------


def cmd_simulate(cfg, args):
    from .notifsim import generate_logs, write_logs

    sim = cfg.sim_config()
    s = cfg.simulator
    logs = generate_logs(sim, s["n_users"], s["n_steps"], s["epsilon"], s["seed"])
    write_logs(cfg.logs_file, logs, sim, s["epsilon"], s["seed"])
    print(f"wrote {len(logs)} user logs x {s['n_steps']} steps -> {cfg.logs_file}")
    return EXIT_OK


def cmd_segment(cfg, args):
    from .notifsim import read_logs
    from .pipeline import DatasetMeta, segment_logs, split_users, write_windows

    logs, header = read_logs(_need(cfg.logs_file, "simulate"))
    pl = cfg.pipeline
    train_ids, val_ids = split_users(
        [l.user_id for l in logs], pl["split_ratio"], pl["split_seed"]
    )
    meta = DatasetMeta(pl["context_len"], pl["horizon"], pl["gamma"],
                       header["n_rewards"], header["state_dim"])
    out = {}
    for name, ids, path in (
        ("train", set(train_ids), cfg.train_file),
        ("val", set(val_ids), cfg.val_file),
    ):
        windows = segment_logs(
            [l for l in logs if l.user_id in ids],
            pl["context_len"], pl["horizon"], pl["gamma"],
            pl["stride"], pl["pad_short"],
        )
        write_windows(path, windows, meta)
        out[name] = len(windows)
    print(f"segmented {out['train']} train / {out['val']} val windows "
          f"({len(train_ids)}/{len(val_ids)} users)")
    return EXIT_OK


def cmd_train(cfg, args):
    from .dtmodel import rtg_label_percentiles, train_model
    from .pipeline import read_windows

    dt = cfg.dt_config()
    expect = {
        "context_len": dt.context_len, "horizon": dt.horizon,
        "gamma": dt.gamma, "n_rewards": dt.n_rewards, "state_dim": dt.state_dim,
    }
    train_windows, _ = read_windows(_need(cfg.train_file, "segment"), expect)
    val_windows, _ = read_windows(_need(cfg.val_file, "segment"), expect)
    tr = cfg.training
    model, history = train_model(
        train_windows, dt,
        epochs=tr["epochs"], batch_size=tr["batch_size"],
        lr=tr["learning_rate"], lr_decay=tr["lr_decay"], seed=tr["seed"],
        loss_mode=tr["loss_mode"], eval_windows=val_windows,
        metrics_path=cfg.metrics_file,
        log=lambda rec: print(
            f"epoch {rec['epoch']}: accuracy={rec['action_accuracy']:.4f} "
            f"pinball={rec['pinball_loss']:.4f} loss={rec['loss_total']:.4f}"
        ),
    )
    extras = {
        "model_key": model_key_for(cfg),
        "constant_prompt": [float(x) for x in rtg_label_percentiles(train_windows, 70)],
        "manual_start": [float(x) for x in rtg_label_percentiles(train_windows, 100)],
        "train_windows": len(train_windows),
        "val_windows": len(val_windows),
    }
    model.save(cfg.checkpoint_file, extras)
    print(f"checkpoint -> {cfg.checkpoint_file} (key {extras['model_key']})")
    return EXIT_OK


def _load_model(cfg):
    from .dtmodel import DecisionTransformer

    return DecisionTransformer.load(_need(cfg.checkpoint_file, "train"))


def cmd_eval(cfg, args):
    from .dtmodel import collate, evaluate
    from .pipeline import read_windows

    model, extras = _load_model(cfg)
    val_windows, _ = read_windows(_need(cfg.val_file, "segment"))
    metrics = evaluate(model, collate(val_windows, model.cfg))
    path = cfg.path("reports", "eval.tsv")
    with open(path, "w") as fh:
        keys = sorted(metrics)
        fh.write("\t".join(keys) + "\n")
        fh.write("\t".join(f"{metrics[k]:.6f}" for k in keys) + "\n")
    print(f"validation action accuracy: {metrics['action_accuracy']:.4f}")
    print(f"validation pinball loss:    {metrics['pinball_loss']:.4f}")
    print(f"report -> {path}")
    return EXIT_OK


def _build_service(cfg, model, extras):
    from .decisionsvc import DecisionService
    from .seqstore import SequenceStore

    sv = cfg.serving
    return DecisionService(
        model,
        SequenceStore(sv["capacity"]),
        model_key=extras.get("model_key", model_key_for(cfg)),
        mode=sv["mode"],
        default_alphas=sv["default_alphas"],
        constant_prompt=extras.get("constant_prompt"),
        manual_start=extras.get("manual_start"),
    )


def cmd_serve(cfg, args):
    from .decisionsvc import DecisionServer, measure_throughput

    model, extras = _load_model(cfg)
    service = _build_service(cfg, model, extras)
    server = DecisionServer(service, cfg.serving["host"], cfg.serving["port"])
    host, port = server.address
    print(f"decision service on {host}:{port} (model {service.model_key})")
    if args.measure:
        server.serve_in_thread()
        stats = measure_throughput(
            host, port, n_requests=args.measure,
            n_users=max(1, min(64, args.measure // 20)),
            state_dim=model.cfg.state_dim,
        )
        server.shutdown()
        path = cfg.path("reports", "throughput.txt")
        with open(path, "w") as fh:
            for k, v in stats.items():
                fh.write(f"{k}: {v}\n")
        print("; ".join(f"{k}={v}" for k, v in stats.items()))
        print(f"report -> {path}")
        return EXIT_OK
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_sweep(cfg, args):
    from .decisionsvc import monotonicity_verdict, prompt_sweep, sweep_table

    model, extras = _load_model(cfg)
    ev = cfg.evaluation
    rows = prompt_sweep(
        model, extras.get("model_key", model_key_for(cfg)), cfg.sim_config(),
        ev["sweep_alphas"], n_users=ev["sweep_users"], n_steps=ev["sweep_steps"],
        seed=ev["sweep_seed"], capacity=cfg.serving["capacity"],
    )
    path = cfg.path("reports", "sweep.tsv")
    with open(path, "w") as fh:
        fh.write(sweep_table(rows))
    verdict = monotonicity_verdict(rows)
    with open(cfg.path("reports", "sweep_verdict.json"), "w") as fh:
        json.dump(verdict, fh, sort_keys=True)
    print(sweep_table(rows), end="")
    print(f"monotonicity: {verdict}")
    print(f"report -> {path}")
    return EXIT_OK


def cmd_ab(cfg, args):
    from .decisionsvc import DTServicePolicy
    from .notifsim import BehaviorPolicy, ab_compare

    model, extras = _load_model(cfg)
    sim = cfg.sim_config()
    ev = cfg.evaluation

    def treatment():
        service = _build_service(cfg, model, extras)
        return DTServicePolicy(service, tick_ms=sim.tick_minutes * 60_000)

    def control():
        return BehaviorPolicy(sim, epsilon=ev["ab_epsilon"], seed=0)

    result = ab_compare(
        treatment, control, sim, ev["ab_users"], ev["ab_steps"],
        seeds=ev["ab_seeds"], n_boot=ev["ab_bootstrap"],
    )
    path = cfg.path("reports", "ab.txt")
    with open(path, "w") as fh:
        fh.write(result.to_text() + "\n")
    print(result.to_text())
    print(f"report -> {path}")
    return EXIT_OK


def cmd_store_admin(cfg, args):
    from .seqstore import SequenceStore, load_snapshot, save_snapshot

    snap = os.path.join(cfg.snapshot_dir, "store.snap")
    if os.path.exists(snap):
        store = load_snapshot(snap)
    else:
        store = SequenceStore(cfg.serving["capacity"])
    if args.store_cmd == "clear":
        store.clear_all()
        print("cleared all records")
    elif args.store_cmd == "ttl":
        days = args.days if args.days is not None else cfg.serving["ttl_days"]
        now_ms = args.now_ms
        if now_ms is None:
            stamps = [
                r.timestamp_ms for uid in store.users()
                for r in store.read_sequence(uid)
            ]
            now_ms = max(stamps, default=0)
        evicted = store.evict_ttl(now_ms, int(days * 86_400_000))
        print(f"evicted {evicted} records older than {days} days (now={now_ms})")
    os.makedirs(cfg.snapshot_dir, exist_ok=True)
    save_snapshot(store, snap)
    print(f"snapshot -> {snap}")
    return EXIT_OK


def cmd_gradcheck(cfg, args):
    from .diffcore import check_gradients
    from .dtmodel import DecisionTransformer, DTConfig, WindowBatch

    dt = cfg.dt_config()
    small = DTConfig(
        state_dim=dt.state_dim, context_len=2, horizon=dt.horizon,
        gamma=dt.gamma, rtg_loss_weight=dt.rtg_loss_weight,
        n_rewards=dt.n_rewards, grid=dt.grid, d_model=16, n_heads=2,
        n_layers=2, mlp_hidden=24, action_head_mode=dt.action_head_mode,
        seed=dt.seed, dtype="float64",
    )
    model = DecisionTransformer(small)
    rng = np.random.default_rng(args.seed)
    b, t = 2, small.context_len
    batch = WindowBatch(
        states=rng.normal(size=(b, t, small.state_dim)),
        rtg=rng.normal(size=(b, t, small.n_rewards)),
        actions=rng.integers(0, 3, size=(b, t)),
        rewards=rng.normal(size=(b, t, small.n_rewards)),
        eas=np.ones((b, t, 3), dtype=np.uint8),
        step_real=np.ones((b, t), dtype=np.uint8),
    )
    batch.actions = batch.actions.astype(np.int64)
    result = check_gradients(
        lambda: model.loss(batch)[0], model.params, step=1e-5
    )
    print(result)
    ok = result.max_rel_error <= 1e-4
    print("gradcheck", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_report(cfg, args):
    sections = []
    labels = [
        ("resolved_config.yaml", "resolved config"),
        (os.path.join("logs", "train_metrics.ndjson"), "training metrics"),
        (os.path.join("reports", "eval.tsv"), "validation metrics"),
        (os.path.join("reports", "sweep.tsv"), "prompt sweep"),
        (os.path.join("reports", "sweep_verdict.json"), "sweep monotonicity"),
        (os.path.join("reports", "ab.txt"), "A/B comparison"),
        (os.path.join("reports", "throughput.txt"), "serving throughput"),
    ]
    stages = 0
    for rel, title in labels:
        path = cfg.path(rel)
        if os.path.exists(path):
            if rel != "resolved_config.yaml":
                stages += 1
            with open(path) as fh:
                body = fh.read().rstrip()
            sections.append(f"== {title} ({rel})\n{body}")
    if not stages:
        raise MissingArtifact(cfg.run_dir, "simulate/segment/train/...")
    text = "\n\n".join(sections) + "\n"
    out = cfg.path("reports", "report.txt")
    with open(out, "w") as fh:
        fh.write(text)
    print(text, end="")
    print(f"report -> {out}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


COMMANDS = {
    "simulate": cmd_simulate,
    "segment": cmd_segment,
    "train": cmd_train,
    "eval": cmd_eval,
    "serve": cmd_serve,
    "sweep": cmd_sweep,
    "ab": cmd_ab,
    "store-admin": cmd_store_admin,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="notifdt",
        description="notification decision transformer: simulate, train, serve",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", required=True, help="YAML run config")
        if name == "serve":
            p.add_argument("--measure", type=int, default=0,
                           help="measure N sequential decisions, report, exit")
        if name == "gradcheck":
            p.add_argument("--seed", type=int, default=0)
        if name == "store-admin":
            p.add_argument("store_cmd", choices=["clear", "ttl"])
            p.add_argument("--days", type=float, default=None)
            p.add_argument("--now-ms", type=int, default=None)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    overrides = [a for a in argv if a.startswith("--") and "." in a.split("=")[0]]
    rest = [a for a in argv if a not in overrides]
    parser = build_parser()
    args = parser.parse_args(rest)

    from .runconfig import RunConfigError, load_config

    try:
        cfg = load_config(args.config, [o.lstrip("-") for o in overrides])
        _echo_config(cfg)
    except RunConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except MissingArtifact as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
