"""Numeric tolerances shared by every module.

Tests and callers that want tighter or looser numerics build their own
``NumericPolicy`` and pass it explicitly; nothing reads global state.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    row_sum_tol: float = 1e-12
    """Absolute tolerance on rate-matrix row sums (scaled by the row's size)."""
    distribution_tol: float = 1e-12
    """Tolerance on probability vectors summing to one."""
    expm_tail: float = 1e-13
    """Poisson tail mass discarded by the uniformization series."""
    uniformization_max_mass: float = 50.0
    """Largest rate*time handled by a single series; larger ones are squared."""
    qsd_tol: float = 1e-12
    qsd_max_iter: int = 1_000_000
    residual_tol: float = 1e-10
    survival_floor: float = 1e-300
    lambda_bound_safety: float = 1.05
    lambda_grid_points: int = 400


DEFAULT_POLICY = NumericPolicy()
