"""Binary dataset file for trajectory windows.

Layout (little-endian; see docs/FORMATS.md):

    magic    4 bytes b"NDTW"
    version  u32     1
    T, H     u32 u32
    gamma    f64
    n_r      u32
    state_dim u32
    n_users  u32, then per user: name_len u16 + UTF-8 name
    count    u32     number of windows, then fixed-size records:
        uid_idx u32, start u32,
        states  T*state_dim f64, rtg T*n_r f64, actions T i64,
        rewards T*n_r f64, eas T*3 u8, timestamps T i64, step_real T u8

Round-trips are lossless at 64-bit.
"""

import struct

import numpy as np

from .windows import TrajectoryWindow

MAGIC = b"NDTW"
VERSION = 1


class DatasetHeaderError(ValueError):
    pass


class DatasetMeta:
    def __init__(self, context_len, horizon, gamma, n_rewards, state_dim):
        self.context_len = int(context_len)
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.n_rewards = int(n_rewards)
        self.state_dim = int(state_dim)

    def check(self, **expected):
        for key, want in expected.items():
            have = getattr(self, key)
            if isinstance(want, float):
                ok = abs(have - want) < 1e-12
            else:
                ok = have == want
            if not ok:
                raise DatasetHeaderError(
                    f"dataset header {key}={have} does not match configured {want}"
                )
        return self

    def as_dict(self):
        return {
            "context_len": self.context_len,
            "horizon": self.horizon,
            "gamma": self.gamma,
            "n_rewards": self.n_rewards,
            "state_dim": self.state_dim,
        }


def write_windows(path, windows, meta):
    users = sorted({w.user_id for w in windows})
    uid_idx = {u: i for i, u in enumerate(users)}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, meta.context_len, meta.horizon))
        fh.write(struct.pack("<d", meta.gamma))
        fh.write(struct.pack("<II", meta.n_rewards, meta.state_dim))
        fh.write(struct.pack("<I", len(users)))
        for u in users:
            ub = u.encode("utf-8")
            fh.write(struct.pack("<H", len(ub)))
            fh.write(ub)
        fh.write(struct.pack("<I", len(windows)))
        for w in windows:
            fh.write(struct.pack("<II", uid_idx[w.user_id], w.start))
            fh.write(np.ascontiguousarray(w.states, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(w.rtg, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(w.actions, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(w.rewards, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(w.eas, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(w.timestamps, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(w.step_real, dtype=np.uint8).tobytes())


def read_windows(path, expect=None):
    """Returns (windows, meta); raises DatasetHeaderError on a config mismatch."""
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise DatasetHeaderError("truncated dataset file")
        out = raw[off : off + n]
        off += n
        return out

    if take(4) != MAGIC:
        raise DatasetHeaderError("not a windows dataset (bad magic)")
    version, t_len, horizon = struct.unpack("<III", take(12))
    if version != VERSION:
        raise DatasetHeaderError(f"unsupported dataset version {version}")
    (gamma,) = struct.unpack("<d", take(8))
    n_r, state_dim = struct.unpack("<II", take(8))
    meta = DatasetMeta(t_len, horizon, gamma, n_r, state_dim)
    if expect:
        meta.check(**expect)

    (n_users,) = struct.unpack("<I", take(4))
    users = []
    for _ in range(n_users):
        (ln,) = struct.unpack("<H", take(2))
        users.append(take(ln).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))

    def arr(dtype, shape):
        dt = np.dtype(dtype)
        n = int(np.prod(shape))
        return (
            np.frombuffer(take(n * dt.itemsize), dtype=dt)
            .reshape(shape)
            .astype(dt.newbyteorder("="), copy=True)
        )

    windows = []
    for _ in range(count):
        uid_idx, start = struct.unpack("<II", take(8))
        windows.append(
            TrajectoryWindow(
                user_id=users[uid_idx],
                start=start,
                states=arr("<f8", (t_len, state_dim)),
                rtg=arr("<f8", (t_len, n_r)),
                actions=arr("<i8", (t_len,)),
                rewards=arr("<f8", (t_len, n_r)),
                eas=arr(np.uint8, (t_len, 3)),
                timestamps=arr("<i8", (t_len,)),
                step_real=arr(np.uint8, (t_len,)),
            )
        )
    if off != len(raw):
        raise DatasetHeaderError("trailing bytes after last window")
    return windows, meta
