"""Trajectory evaluation: cross-trial sample covariance, scale factor,
ATE, RPE, and box-and-whisker statistics.

The sample covariance is the uncentered second-moment matrix of the error
states across Monte-Carlo runs at a fixed timestep, divided by N - 1; a
centered variant is available behind a flag for sensitivity checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .geom import umeyama_align

__all__ = [
    "BoxStats",
    "CovarianceSeries",
    "absolute_trajectory_error",
    "box_stats",
    "mean_sample_covariance",
    "relative_pose_error",
    "sample_covariance",
    "sample_covariance_series",
    "scale_factor",
]


def sample_covariance(errors: np.ndarray, centered: bool = False) -> np.ndarray:
    """Cross-run covariance of N error vectors at one timestep.

    errors is (N, d). Computed as sum_n e_n e_n^T / (N - 1) with no mean
    subtraction (set centered=True for the conventional estimator).
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 2 or e.shape[0] < 2:
        raise ValueError("sample_covariance needs at least 2 error vectors")
    if centered:
        e = e - e.mean(axis=0)
    return (e.T @ e) / (e.shape[0] - 1)


@dataclass(frozen=True)
class CovarianceSeries:
    """Per-timestep cross-trial covariances and their summaries."""

    t: np.ndarray  # (T,)
    matrices: np.ndarray  # (T, d, d)
    mean_matrix: np.ndarray  # (d, d), the time-average
    fro_norms: np.ndarray  # (T,), ||Sigma(t)||_F

    @property
    def mean_fro_norm(self) -> float:
        return float(np.linalg.norm(self.mean_matrix))


def sample_covariance_series(
    t: np.ndarray, errors: np.ndarray, centered: bool = False
) -> CovarianceSeries:
    """Eq.-by-eq covariance series for errors shaped (N_trials, T, d)."""
    e = np.asarray(errors, dtype=float)
    if e.ndim != 3 or e.shape[0] < 2:
        raise ValueError("need (N>=2, T, d) error array")
    if centered:
        e = e - e.mean(axis=0, keepdims=True)
    mats = np.einsum("nti,ntj->tij", e, e) / (e.shape[0] - 1)
    mean_matrix = mats.mean(axis=0)
    fro = np.linalg.norm(mats, axis=(1, 2))
    return CovarianceSeries(
        t=np.asarray(t, dtype=float), matrices=mats, mean_matrix=mean_matrix, fro_norms=fro
    )


def mean_sample_covariance(series) -> np.ndarray:
    """Arithmetic mean of the per-timestep covariance matrices."""
    if isinstance(series, CovarianceSeries):
        mats = series.matrices
    else:
        mats = np.asarray(series, dtype=float)
    if mats.ndim != 3 or mats.shape[0] == 0:
        raise ValueError("mean_sample_covariance needs a non-empty matrix series")
    return mats.mean(axis=0)


def scale_factor(
    estimated: np.ndarray, ground_truth: np.ndarray, guard: float = 0.1
) -> float:
    """Mean ratio of centered translation norms, estimate over truth.

    Both sequences are centered at their centroids first; timesteps where
    the centered ground-truth norm is <= `guard` meters are excluded (that
    norm is the denominator). A value below 1 means the estimated
    trajectory is smaller than the true one.
    """
    est = np.asarray(estimated, dtype=float).reshape(-1, 3)
    gt = np.asarray(ground_truth, dtype=float).reshape(-1, 3)
    if est.shape != gt.shape or est.shape[0] < 2:
        raise ValueError("need equal-length sequences of >= 2 translations")
    est_c = est - est.mean(axis=0)
    gt_c = gt - gt.mean(axis=0)
    est_norm = np.linalg.norm(est_c, axis=1)
    gt_norm = np.linalg.norm(gt_c, axis=1)
    include = gt_norm > guard
    if not np.any(include):
        raise ValueError("no timestep passes the scale guard")
    return float(np.mean(est_norm[include] / gt_norm[include]))


def absolute_trajectory_error(
    estimated_pos: np.ndarray, ground_truth_pos: np.ndarray
) -> float:
    """Translation RMSE after closed-form rigid alignment of the estimate."""
    est = np.asarray(estimated_pos, dtype=float).reshape(-1, 3)
    gt = np.asarray(ground_truth_pos, dtype=float).reshape(-1, 3)
    g = umeyama_align(est, gt)
    res = g.transform(est) - gt
    return float(np.sqrt(np.mean(np.sum(res * res, axis=1))))


def relative_pose_error(
    estimated: Sequence[Tuple[np.ndarray, np.ndarray]],
    ground_truth: Sequence[Tuple[np.ndarray, np.ndarray]],
    delta_steps: int,
) -> float:
    """Translational RMSE of relative-motion mismatch over a fixed lag.

    Sequences are (rotation, translation) pairs on a common time grid;
    delta_steps is the lag in grid steps. For each t the error is the
    translation of (Q_t^-1 Q_{t+d})^-1 (P_t^-1 P_{t+d}) with Q the truth
    and P the estimate.
    """
    n = len(estimated)
    if len(ground_truth) != n:
        raise ValueError("sequences must have equal length")
    if delta_steps < 1 or delta_steps >= n:
        raise ValueError("delta longer than the trajectory")
    sq = []
    for k in range(n - delta_steps):
        Rp0, tp0 = estimated[k]
        Rp1, tp1 = estimated[k + delta_steps]
        Rq0, tq0 = ground_truth[k]
        Rq1, tq1 = ground_truth[k + delta_steps]
        # relative motions: A = P0^-1 P1, B = Q0^-1 Q1
        Ra = Rp0.T @ Rp1
        ta = Rp0.T @ (tp1 - tp0)
        Rb = Rq0.T @ Rq1
        tb = Rq0.T @ (tq1 - tq0)
        # E = B^-1 A; translation part:
        te = Rb.T @ (ta - tb)
        sq.append(float(te @ te))
    return float(np.sqrt(np.mean(sq)))


@dataclass(frozen=True)
class BoxStats:
    """Box-and-whisker summary under the linear-interpolation quartile
    convention; whiskers reach the most extreme points within 1.5 IQR of
    the box, everything beyond is a flier."""

    q1: float
    median: float
    q3: float
    mean: float
    whisker_lo: float
    whisker_hi: float
    fliers: Tuple[float, ...]

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def as_dict(self) -> dict:
        return {
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "mean": self.mean,
            "whisker_lo": self.whisker_lo,
            "whisker_hi": self.whisker_hi,
            "fliers": list(self.fliers),
        }


def box_stats(values) -> BoxStats:
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("box_stats needs at least one value")
    q1, med, q3 = np.percentile(x, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_limit = q1 - 1.5 * iqr
    hi_limit = q3 + 1.5 * iqr
    inside = x[(x >= lo_limit) & (x <= hi_limit)]
    whisker_lo = float(inside.min())
    whisker_hi = float(inside.max())
    fliers = tuple(float(v) for v in np.sort(x[(x < lo_limit) | (x > hi_limit)]))
    return BoxStats(
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        mean=float(x.mean()),
        whisker_lo=whisker_lo,
        whisker_hi=whisker_hi,
        fliers=fliers,
    )
