"""Quantile-row conditioning and linear interpolation of off-grid levels."""

import numpy as np


class GridError(ValueError):
    pass


def sort_quantile_rows(qmat):
    """Sort each reward's predicted quantile row ascending.

    Quantile regression does not prevent crossings; sorting restores
    monotonicity before interpolation. Returns (sorted matrix, number of
    rows that had crossings).
    """
    q = np.asarray(qmat, dtype=np.float64)
    crossings = int((np.diff(q, axis=-1) < 0).any(axis=-1).sum())
    return np.sort(q, axis=-1), crossings


def interpolate_quantile(qmat, grid, alphas):
    """Per-reward prompt from the predicted quantile matrix.

    Exact at grid levels; linear between the nearest strict neighbors
    (weight (a_u - a) / (a_u - a_l) on the lower entry); clamped to the
    boundary entries outside the grid.
    """
    q = np.asarray(qmat, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    if q.ndim != 2 or q.shape[1] != grid.shape[0]:
        raise GridError(f"quantile matrix {q.shape} does not match grid {grid.shape}")
    if alphas.shape[0] != q.shape[0]:
        raise GridError(f"need one target level per reward, got {alphas.shape[0]}")
    m = grid.shape[0]
    out = np.empty(q.shape[0])
    for i, a in enumerate(alphas):
        if not (0.0 < a < 1.0):
            raise GridError(f"target level must be in (0, 1), got {a}")
        exact = np.nonzero(grid == a)[0]
        if exact.size:
            out[i] = q[i, exact[0]]
            continue
        if m < 2:
            raise GridError(
                f"level {a} is off the single-point grid; cannot interpolate"
            )
        if a < grid[0]:
            out[i] = q[i, 0]
        elif a > grid[-1]:
            out[i] = q[i, -1]
        else:
            u = int(np.searchsorted(grid, a, side="right"))
            l = u - 1
            lam = (grid[u] - a) / (grid[u] - grid[l])
            out[i] = lam * q[i, l] + (1.0 - lam) * q[i, u]
    return out
