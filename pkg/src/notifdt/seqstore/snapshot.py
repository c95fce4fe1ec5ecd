"""Store snapshots: full binary dump and reload.

Layout (little-endian; see docs/FORMATS.md):

    magic    4 bytes b"NDTS"
    version  u8  1
    compress u8  0 (reserved; compression is out of scope)
    capacity u32
    n_users  u32
    per user (sorted by user id):
        name_len u16 + UTF-8 id
        cursor   u32
        per slot (capacity of them):
            occupied u8; if 1, the SlotRecord byte image (see store.py)
"""

import struct

from .store import SequenceStore, SlotRecord

MAGIC = b"NDTS"
VERSION = 1


class SnapshotError(ValueError):
    pass


def save_snapshot(store, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        users = store.users()
        fh.write(struct.pack("<BBII", VERSION, 0, store.capacity, len(users)))
        for uid in users:
            buf = store._buffer(uid, create=False)
            with buf.lock:
                slots = list(buf.slots)
                cursor = buf.cursor
            ub = uid.encode("utf-8")
            fh.write(struct.pack("<H", len(ub)))
            fh.write(ub)
            fh.write(struct.pack("<I", cursor))
            for rec in slots:
                if rec is None:
                    fh.write(b"\x00")
                else:
                    fh.write(b"\x01")
                    fh.write(rec.to_bytes())


def load_snapshot(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise SnapshotError("not a store snapshot (bad magic)")
    version, compress, capacity, n_users = struct.unpack_from("<BBII", raw, 4)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if compress != 0:
        raise SnapshotError("compressed snapshots are not supported")
    off = 14
    store = SequenceStore(capacity)
    for _ in range(n_users):
        (ln,) = struct.unpack_from("<H", raw, off)
        off += 2
        uid = raw[off : off + ln].decode("utf-8")
        off += ln
        (cursor,) = struct.unpack_from("<I", raw, off)
        off += 4
        buf = store._buffer(uid, create=True)
        for i in range(capacity):
            occupied = raw[off]
            off += 1
            if occupied:
                rec, off = SlotRecord.from_buffer(raw, off)
                buf.slots[i] = rec
        buf.cursor = cursor
    if off != len(raw):
        raise SnapshotError("trailing bytes after last user")
    return store
