from .snapshot import SnapshotError, load_snapshot, save_snapshot
from .store import (
    DEFAULT_CAPACITY,
    IGNORE_ALL,
    MonotonicityError,
    SequenceStore,
    SlotRecord,
    StoreError,
    apply_history_mask,
)

__all__ = [
    "DEFAULT_CAPACITY",
    "IGNORE_ALL",
    "MonotonicityError",
    "SequenceStore",
    "SlotRecord",
    "SnapshotError",
    "StoreError",
    "apply_history_mask",
    "load_snapshot",
    "save_snapshot",
]
