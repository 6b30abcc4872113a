"""Weighted least-squares state estimation with residual-based bad-data detection.

The estimator minimizes sum_i (z_i - h_i x)^2 / sigma_i^2 over the available
measurements only; unavailable rows are removed from the problem entirely
(equivalent to estimating on the physically reduced model).  The detector
compares the weighted residual sum of squares J against a chi-square quantile
with (m_available - n) degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .exceptions import ContractError, EstimationError
from .grid import MeasurementVector, StateVector


@dataclass(frozen=True)
class EstimationResult:
    estimate: StateVector
    residual: np.ndarray          # m entries; 0.0 on unavailable rows
    objective: float              # weighted residual sum of squares J
    bdd_alarm: bool
    bdd_statistic: float          # == objective
    bdd_threshold: float
    degrees_of_freedom: int
    available: np.ndarray
    normalized_residuals: np.ndarray  # |r_i| / sqrt(var(r_i)); 0.0 when unavailable

    @property
    def largest_normalized_residual(self) -> tuple[int, float]:
        i = int(np.argmax(self.normalized_residuals))
        return i, float(self.normalized_residuals[i])


def wls_estimate(h: np.ndarray, z: MeasurementVector, sigmas: np.ndarray,
                 significance: float = 0.05) -> EstimationResult:
    """WLS fit of the state to the available rows of z.

    Raises EstimationError (carrying the deficient rank) when the available
    rows do not determine the state.
    """
    h = np.asarray(h, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    m, n = h.shape
    if len(z) != m or sigmas.shape != (m,):
        raise ContractError("z, sigmas and H disagree on the measurement count")
    avail = z.available
    m_avail = int(avail.sum())

    hw = h[avail] / sigmas[avail, None]
    zw = z.values[avail] / sigmas[avail]

    # orthogonal (SVD) solve; also gives the rank decision at 1e-8 relative
    u, s, vt = np.linalg.svd(hw, full_matrices=False)
    rank = int(np.sum(s > 1e-8 * s[0])) if s.size and s[0] > 0 else 0
    if rank < n:
        raise EstimationError(
            f"unobservable: available rows have rank {rank} < {n}",
            rank=rank, required=n)
    x_hat = vt.T @ ((u.T @ zw) / s)

    residual = np.zeros(m)
    residual[avail] = z.values[avail] - h[avail] @ x_hat
    rw = residual[avail] / sigmas[avail]
    objective = float(rw @ rw)

    # studentized residuals via the hat-matrix diagonal of the scaled problem
    leverage = np.einsum("ij,ij->i", u, u)
    denom = np.sqrt(np.maximum(1.0 - leverage, 1e-12))
    normalized = np.zeros(m)
    normalized[avail] = np.abs(rw) / denom

    dof = m_avail - n
    if dof > 0:
        threshold = float(chi2.ppf(1.0 - significance, df=dof))
        alarm = objective > threshold
    else:
        threshold = float("inf")
        alarm = False

    return EstimationResult(
        estimate=StateVector(x_hat),
        residual=residual,
        objective=objective,
        bdd_alarm=alarm,
        bdd_statistic=objective,
        bdd_threshold=threshold,
        degrees_of_freedom=dof,
        available=avail.copy(),
        normalized_residuals=normalized,
    )


def bad_data_detect(result: EstimationResult, significance: float) -> bool:
    """Chi-square test on the weighted residual objective.

    Alarm iff J exceeds the (1 - significance) quantile with
    (m_available - n) degrees of freedom.
    """
    if not 0.0 < significance < 1.0:
        raise ContractError("significance must lie in (0, 1)")
    if result.degrees_of_freedom <= 0:
        raise EstimationError("no redundancy: m_available <= n, detection impossible")
    threshold = float(chi2.ppf(1.0 - significance, df=result.degrees_of_freedom))
    return result.bdd_statistic > threshold
