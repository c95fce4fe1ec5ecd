"""Per-user fixed-capacity circular buffer of (float, long, string) records.

Writes overwrite the cursor slot round-robin and must carry a strictly
increasing timestamp per user; reads reconstruct chronological order from the
persisted timestamps, never from physical slot order, so TTL holes and even
physically scrambled slots are harmless. Reads are safe concurrently with
writes to other users; writes to one user are serialized by a per-user lock.
"""

import struct
import threading
from dataclasses import dataclass

import numpy as np

DEFAULT_CAPACITY = 16
IGNORE_ALL = "__ignore_all__"  # model-key sentinel: drop the whole history


class StoreError(ValueError):
    pass


class MonotonicityError(StoreError):
    """Write rejected: timestamp not strictly newer than the stored maximum."""


@dataclass(frozen=True)
class SlotRecord:
    """One timestep: float payload, long payload, string tags, timestamp."""

    floats: tuple       # float payload (state, prompt, rewards, ...)
    longs: tuple        # action, flag bits, counters
    strings: tuple      # strings[0] is the model-version key
    timestamp_ms: int

    @classmethod
    def make(cls, floats, longs, strings, timestamp_ms):
        return cls(
            floats=tuple(float(x) for x in np.asarray(floats, dtype=np.float64).reshape(-1)),
            longs=tuple(int(x) for x in np.asarray(longs, dtype=np.int64).reshape(-1)),
            strings=tuple(str(s) for s in strings),
            timestamp_ms=int(timestamp_ms),
        )

    def to_bytes(self):
        """Canonical byte image; used for isolation checks and snapshots."""
        out = [struct.pack("<qI", self.timestamp_ms, len(self.floats))]
        out.append(np.asarray(self.floats, dtype="<f8").tobytes())
        out.append(struct.pack("<I", len(self.longs)))
        out.append(np.asarray(self.longs, dtype="<i8").tobytes())
        out.append(struct.pack("<I", len(self.strings)))
        for s in self.strings:
            sb = s.encode("utf-8")
            out.append(struct.pack("<I", len(sb)))
            out.append(sb)
        return b"".join(out)

    @classmethod
    def from_buffer(cls, raw, off):
        ts, nf = struct.unpack_from("<qI", raw, off)
        off += 12
        floats = np.frombuffer(raw, dtype="<f8", count=nf, offset=off)
        off += 8 * nf
        (nl,) = struct.unpack_from("<I", raw, off)
        off += 4
        longs = np.frombuffer(raw, dtype="<i8", count=nl, offset=off)
        off += 8 * nl
        (ns,) = struct.unpack_from("<I", raw, off)
        off += 4
        strings = []
        for _ in range(ns):
            (ln,) = struct.unpack_from("<I", raw, off)
            off += 4
            strings.append(raw[off : off + ln].decode("utf-8"))
            off += ln
        rec = cls(tuple(float(x) for x in floats), tuple(int(x) for x in longs),
                  tuple(strings), int(ts))
        return rec, off


class _UserBuffer:
    __slots__ = ("slots", "cursor", "lock")

    def __init__(self, capacity):
        self.slots = [None] * capacity
        self.cursor = 0
        self.lock = threading.Lock()

    def max_timestamp(self):
        stamps = [r.timestamp_ms for r in self.slots if r is not None]
        return max(stamps) if stamps else None

    def occupancy(self):
        return sum(1 for r in self.slots if r is not None)


class SequenceStore:
    def __init__(self, capacity=DEFAULT_CAPACITY):
        if capacity < 1:
            raise StoreError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._buffers = {}
        self._lock = threading.Lock()  # guards the user map only

    def _buffer(self, user_id, create):
        with self._lock:
            buf = self._buffers.get(user_id)
            if buf is None and create:
                buf = self._buffers[user_id] = _UserBuffer(self.capacity)
            return buf

    def users(self):
        with self._lock:
            return sorted(self._buffers)

    def write_partial(self, user_id, record):
        """Overwrite exactly the cursor slot; returns the slot index written.

        Rejects timestamps not strictly greater than every stored timestamp
        for the user (clear_all / full TTL eviction reset the constraint).
        """
        if not isinstance(record, SlotRecord):
            raise StoreError("write_partial expects a SlotRecord")
        buf = self._buffer(user_id, create=True)
        with buf.lock:
            newest = buf.max_timestamp()
            if newest is not None and record.timestamp_ms <= newest:
                raise MonotonicityError(
                    f"timestamp {record.timestamp_ms} not newer than stored "
                    f"{newest} for user {user_id!r}"
                )
            slot = buf.cursor
            buf.slots[slot] = record
            buf.cursor = (slot + 1) % self.capacity
            return slot

    def read_sequence(self, user_id, max_len=None):
        """Up to max_len most recent records, oldest -> newest by timestamp."""
        buf = self._buffer(user_id, create=False)
        if buf is None:
            return []
        with buf.lock:
            occupied = [r for r in buf.slots if r is not None]
        occupied.sort(key=lambda r: r.timestamp_ms)
        if max_len is not None:
            occupied = occupied[len(occupied) - min(len(occupied), max_len):]
        return occupied

    def occupancy(self, user_id=None):
        if user_id is not None:
            buf = self._buffer(user_id, create=False)
            return buf.occupancy() if buf else 0
        with self._lock:
            bufs = list(self._buffers.values())
        return sum(b.occupancy() for b in bufs)

    def evict_ttl(self, now_ms, ttl_ms):
        """Empty every slot older than the TTL; holes are left in place."""
        if ttl_ms <= 0:
            raise StoreError("ttl must be positive")
        evicted = 0
        with self._lock:
            bufs = list(self._buffers.values())
        for buf in bufs:
            with buf.lock:
                for i, rec in enumerate(buf.slots):
                    if rec is not None and now_ms - rec.timestamp_ms > ttl_ms:
                        buf.slots[i] = None
                        evicted += 1
        return evicted

    def clear_all(self):
        """Empty every buffer; timestamp monotonicity restarts from scratch."""
        with self._lock:
            bufs = list(self._buffers.values())
        for buf in bufs:
            with buf.lock:
                buf.slots = [None] * self.capacity
                buf.cursor = 0

    def slot_images(self, user_id):
        """Byte image per physical slot (None for empty); for isolation tests."""
        buf = self._buffer(user_id, create=False)
        if buf is None:
            return [None] * self.capacity
        with buf.lock:
            return [r.to_bytes() if r is not None else None for r in buf.slots]


def apply_history_mask(records, current_key, key_index=0):
    """Keep records whose model-version key matches; the ignore-all sentinel
    anywhere drops the entire history (bootstrap mode)."""
    kept = []
    for rec in records:
        key = rec.strings[key_index] if len(rec.strings) > key_index else ""
        if key == IGNORE_ALL:
            return []
        if key == current_key:
            kept.append(rec)
    return kept
