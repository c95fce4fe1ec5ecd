"""Offline log generation and the binary export consumed by the pipeline.

Export layout (little-endian; see docs/FORMATS.md):

    magic    4 bytes b"NDTL"
    version  u32 1
    n_users  u32
    state_dim u32
    n_r      u32
    tick_minutes u32
    epsilon  f64
    seed     u64
    per user:
        name_len u16 + UTF-8 user id
        n_steps  u32
        timestamps n*i8 ... arrays in order: timestamps i64, states f64,
        eas u8, actions i64, rewards f64, realized u8
"""

import struct

import numpy as np

from ..dtmodel.config import DONT_SEND
from ..pipeline.windows import UserLog
from .config import STATE_DIM, SimConfig
from .env import SimEnv
from .policies import behavior_policy

MAGIC = b"NDTL"
VERSION = 1


class LogFormatError(ValueError):
    pass


def generate_logs(cfg: SimConfig, n_users, n_steps, epsilon, seed):
    """Epsilon-greedy behavior logs, one UserLog per simulated user.

    Exploration consumes the environment's reserved per-tick draws, so the
    output is a pure function of (cfg, n_users, n_steps, epsilon, seed).
    """
    if n_users < 1 or n_steps < 1:
        raise ValueError("n_users and n_steps must be >= 1")
    env = SimEnv(cfg, n_users, seed)
    logs = []
    for uid in env.user_ids():
        ts = np.zeros(n_steps, dtype=np.int64)
        states = np.zeros((n_steps, STATE_DIM), dtype=np.float64)
        eas = np.zeros((n_steps, 3), dtype=np.uint8)
        actions = np.zeros(n_steps, dtype=np.int64)
        rewards = np.zeros((n_steps, cfg.n_rewards), dtype=np.float64)
        realized = np.zeros((n_steps, cfg.n_rewards), dtype=np.uint8)
        state = env.current_state(uid)
        recent = []
        for t in range(n_steps):
            ts[t] = env.now_ms(uid)
            states[t] = state
            eas[t] = env.current_eas(uid)
            u_explore, u_pick = env.exploration_draws(uid)
            n_recent = sum(1 for a in recent[-cfg.cap_window:] if a != DONT_SEND)
            action = behavior_policy(
                state, eas[t], n_recent, epsilon, u_explore, u_pick, cfg
            )
            recent.append(action)
            state, reward, info = env.step(uid, action)
            actions[t] = action
            rewards[t] = reward
            realized[t] = info["realized"]
        logs.append(UserLog(uid, ts, states, eas, actions, rewards, realized))
    return logs


def write_logs(path, logs, cfg: SimConfig, epsilon, seed):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIII", VERSION, len(logs), STATE_DIM,
                             cfg.n_rewards, cfg.tick_minutes))
        fh.write(struct.pack("<dQ", float(epsilon), int(seed)))
        for log in logs:
            ub = log.user_id.encode("utf-8")
            fh.write(struct.pack("<H", len(ub)))
            fh.write(ub)
            fh.write(struct.pack("<I", log.length))
            fh.write(np.ascontiguousarray(log.timestamps, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(log.states, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(log.eas, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(log.actions, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(log.rewards, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(log.realized, dtype=np.uint8).tobytes())


def read_logs(path):
    """Returns (logs, header dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise LogFormatError("truncated log export")
        out = raw[off : off + n]
        off += n
        return out

    if take(4) != MAGIC:
        raise LogFormatError("not a log export (bad magic)")
    version, n_users, state_dim, n_r, tick_minutes = struct.unpack("<IIIII", take(20))
    if version != VERSION:
        raise LogFormatError(f"unsupported log export version {version}")
    epsilon, seed = struct.unpack("<dQ", take(16))

    def arr(dtype, shape):
        dt = np.dtype(dtype)
        n = int(np.prod(shape))
        return (
            np.frombuffer(take(n * dt.itemsize), dtype=dt)
            .reshape(shape)
            .astype(dt.newbyteorder("="), copy=True)
        )

    logs = []
    for _ in range(n_users):
        (ln,) = struct.unpack("<H", take(2))
        uid = take(ln).decode("utf-8")
        (n_steps,) = struct.unpack("<I", take(4))
        logs.append(UserLog(
            user_id=uid,
            timestamps=arr("<i8", (n_steps,)),
            states=arr("<f8", (n_steps, state_dim)),
            eas=arr(np.uint8, (n_steps, 3)),
            actions=arr("<i8", (n_steps,)),
            rewards=arr("<f8", (n_steps, n_r)),
            realized=arr(np.uint8, (n_steps, n_r)),
        ))
    if off != len(raw):
        raise LogFormatError("trailing bytes after last user")
    header = {
        "n_users": n_users,
        "state_dim": state_dim,
        "n_rewards": n_r,
        "tick_minutes": tick_minutes,
        "epsilon": epsilon,
        "seed": seed,
    }
    return logs, header
