"""notifdt: multi-objective decision transformer for notification decisions.

Subpackages: diffcore (autodiff substrate), dtmodel (the transformer and its
losses), pipeline (log -> training windows), notifsim (synthetic environment
and metrics), seqstore (per-user circular buffer), decisionsvc (nearline
decision path and prompt tuning), cli (one entry point for the whole chain).
"""

__version__ = "0.1.0"
