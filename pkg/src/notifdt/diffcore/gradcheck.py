"""Finite-difference verification of tape gradients.

Central differences per parameter entry, with a one-sided-slope comparison
to detect kinks (pinball loss at pred == target): entries whose left and
right slopes disagree are skipped and reported instead of failed.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import GraphError, backward, zero_grad


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str = ""
    worst_index: int = -1
    n_checked: int = 0
    n_skipped_kinks: int = 0
    per_param: dict = field(default_factory=dict)

    def __str__(self):
        return (
            f"max_rel_error={self.max_rel_error:.3e} at "
            f"{self.worst_param}[{self.worst_index}] "
            f"({self.n_checked} entries, {self.n_skipped_kinks} kinks skipped)"
        )


def check_gradients(loss_fn, params, step=1e-5, kink_tol=0.3):
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` runs a fresh forward pass and returns the scalar loss tensor;
    ``params`` is a mapping name -> Tensor (float64 required). The relative
    error per entry is |analytic - numeric| / max(1, |numeric|).
    """
    if not isinstance(params, dict):
        params = {p.name or f"p{i}": p for i, p in enumerate(params)}
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise GraphError(f"gradient check requires float64 params ({name})")

    zero_grad(params.values())
    loss0 = loss_fn()
    f0 = float(loss0.data)
    if not np.isfinite(f0):
        raise GraphError("non-finite loss in gradient check")
    backward(loss0)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    res = GradCheckResult(max_rel_error=0.0)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(loss_fn().data)
            flat[i] = orig - step
            fm = float(loss_fn().data)
            flat[i] = orig

            right = (fp - f0) / step
            left = (f0 - fm) / step
            if abs(right - left) > kink_tol * (1.0 + max(abs(right), abs(left))):
                res.n_skipped_kinks += 1
                continue
            numeric = (fp - fm) / (2.0 * step)
            rel = abs(a[i] - numeric) / max(1.0, abs(numeric))
            res.n_checked += 1
            worst = max(worst, rel)
            if rel > res.max_rel_error:
                res.max_rel_error = rel
                res.worst_param = name
                res.worst_index = i
        res.per_param[name] = worst
    return res
