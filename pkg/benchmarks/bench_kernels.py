"""Compare the compiled kernel backend against the numpy reference.

Times each fused kernel pair (forward + backward) and one full training
step of the default model under both backends.

    python benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import time

import numpy as np

from notifdt.diffcore import Adam, kernels
from notifdt.dtmodel import DecisionTransformer, DTConfig, WindowBatch


def timeit(fn, repeat):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat * 1e6  # us


def kernel_cases(dtype):
    rng = np.random.default_rng(0)
    n, d, c = 1024, 64, 16
    x = rng.normal(size=(n, d)).astype(dtype)
    gamma = np.ones(d, dtype=dtype)
    beta = np.zeros(d, dtype=dtype)
    dy = rng.normal(size=(n, d)).astype(dtype)
    scores = rng.normal(size=(n, c)).astype(dtype)
    allowed = (rng.random((n, c)) < 0.6).astype(np.uint8)
    allowed[:, 0] = 1
    flat = rng.normal(size=n * d).astype(dtype)
    dflat = rng.normal(size=n * d).astype(dtype)
    pred = rng.normal(size=n).astype(dtype)
    target = rng.normal(size=n).astype(dtype)
    alpha = np.full(n, 0.25, dtype=dtype)
    w = np.ones(n, dtype=dtype)
    logits = rng.normal(size=(n, 3)).astype(dtype)
    targets = rng.integers(0, 3, size=n).astype(np.int64)

    def ln():
        y, mean, rstd = kernels.layernorm_forward(x, gamma, beta, 1e-5)
        kernels.layernorm_backward(dy, x, gamma, mean, rstd)

    def softmax():
        p = kernels.masked_softmax_forward(scores, allowed)
        kernels.masked_softmax_backward(p.copy(), p)

    def gelu():
        kernels.gelu_forward(flat)
        kernels.gelu_backward(flat, dflat)

    def pinball():
        kernels.pinball_forward(pred, target, alpha, w)
        kernels.pinball_backward(pred, target, alpha, w, 1.0)

    def xent():
        _, p = kernels.softmax_xent_forward(logits, targets, w)
        kernels.softmax_xent_backward(p, targets, w, 1.0)

    return {
        "layernorm fwd+bwd (1024x64)": ln,
        "masked softmax fwd+bwd (1024x16)": softmax,
        "gelu fwd+bwd (64k)": gelu,
        "pinball fwd+bwd (1024)": pinball,
        "softmax-xent fwd+bwd (1024x3)": xent,
    }


def train_step_case():
    cfg = DTConfig(seed=0)
    model = DecisionTransformer(cfg)
    opt = Adam(model.parameters(), lr=1e-3)
    rng = np.random.default_rng(1)
    b, t = 64, cfg.context_len
    batch = WindowBatch(
        states=rng.normal(size=(b, t, cfg.state_dim)).astype(np.float32),
        rtg=rng.normal(size=(b, t, cfg.n_rewards)).astype(np.float32),
        actions=rng.integers(0, 3, size=(b, t)).astype(np.int64),
        rewards=rng.normal(size=(b, t, cfg.n_rewards)).astype(np.float32),
        eas=np.ones((b, t, 3), dtype=np.uint8),
        step_real=np.ones((b, t), dtype=np.uint8),
    )
    return lambda: model.train_step(batch, opt)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "c" not in backends:
        print("compiled backend unavailable; only the numpy reference will run")

    rows = []
    for dtype in (np.float32, np.float64):
        for name, fn in kernel_cases(dtype).items():
            label = f"{name} [{np.dtype(dtype).name}]"
            per = {}
            for be in backends:
                kernels.use_backend(be)
                per[be] = timeit(fn, args.repeat)
            rows.append((label, per))

    step = train_step_case()
    per = {}
    for be in backends:
        kernels.use_backend(be)
        per[be] = timeit(step, max(5, args.repeat // 20))
    rows.append(("full train step (batch 64, default model)", per))

    width = max(len(r[0]) for r in rows)
    header = f"{'case'.ljust(width)}  " + "  ".join(f"{be:>12}" for be in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>9}"
    print(header)
    for label, per in rows:
        line = label.ljust(width) + "  " + "  ".join(
            f"{per[be]:>10.1f}us" for be in backends
        )
        if len(backends) == 2:
            line += f"  {per['py'] / per['c']:>8.2f}x"
        print(line)


if __name__ == "__main__":
    main()
