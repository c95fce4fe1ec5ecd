from .quantiles import GridError, interpolate_quantile, sort_quantile_rows
from .server import (
    DecisionServer,
    ProtocolError,
    ServiceClient,
    measure_throughput,
    recv_message,
    send_message,
)
from .service import (
    DecisionRequest,
    DecisionResponse,
    DecisionService,
    DTServicePolicy,
    ServiceError,
)
from .sweep import monotonicity_verdict, prompt_sweep, sweep_table

__all__ = [
    "DTServicePolicy",
    "DecisionRequest",
    "DecisionResponse",
    "DecisionServer",
    "DecisionService",
    "GridError",
    "ProtocolError",
    "ServiceClient",
    "ServiceError",
    "interpolate_quantile",
    "measure_throughput",
    "monotonicity_verdict",
    "prompt_sweep",
    "recv_message",
    "send_message",
    "sort_quantile_rows",
    "sweep_table",
]
