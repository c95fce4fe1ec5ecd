from .datasetio import DatasetHeaderError, DatasetMeta, read_windows, write_windows
from .windows import (
    PipelineError,
    TrajectoryWindow,
    UserLog,
    compute_rtg,
    manual_prompt,
    segment,
    segment_logs,
    split_users,
)

__all__ = [
    "DatasetHeaderError",
    "DatasetMeta",
    "PipelineError",
    "TrajectoryWindow",
    "UserLog",
    "compute_rtg",
    "manual_prompt",
    "read_windows",
    "segment",
    "segment_logs",
    "split_users",
    "write_windows",
]
