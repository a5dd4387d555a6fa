"""Filter configuration, state container, and strapdown propagation.

The error state is ordered [dtheta, dT, dv, dbg, dba] (15 motion states)
followed by one 3-vector block per in-state feature. The attitude error is
multiplicative on the left: R_true = exp(skew(dtheta)) @ R_estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .. import _kernels
from ..geom import (
    CameraIntrinsics,
    exp_rotation,
    log_rotation,
    right_jacobian,
    skew,
)
from ..sensors import DEFAULT_GRAVITY, ImuSample
from ..trajgen import GroundTruthSample

__all__ = [
    "FilterConfig",
    "FilterState",
    "ErrorStateSample",
    "MOTION_DIM",
    "apply_retraction",
    "error_state",
    "init_filter",
    "motion_difference",
    "propagate",
    "propagation_jacobians",
    "symmetrize",
]

MOTION_DIM = 15


@dataclass(frozen=True)
class FilterConfig:
    """Estimator tuning; mirrors the simulated sensor parameters."""

    sigma_p_filter: float = 0.5  # px, measurement std assumed by the EKF
    max_state_features: int = 60
    tracker_min: int = 250
    tracker_max: int = 500
    gate_prob: float = 0.95
    max_gate_failures: int = 3
    catastrophic_gate_factor: float = 10.0  # d^2 beyond factor*threshold kills the track
    max_candidate_age: float = 2.0  # s a candidate may live unseeded
    parallax_min_deg: float = 1.0  # ray angle needed to triangulate
    feature_init_std: float = 0.5  # m, subfilter seed uncertainty
    init_cov_motion: float = 1e-6  # initial variance, rotation/position/velocity
    init_cov_bias: float = 1e-4  # initial variance, bias blocks
    sigma_a: float = 1e-4  # assumed IMU densities (per sqrt(Hz))
    sigma_g: float = 1e-5
    sigma_ba: float = 3e-4
    sigma_bg: float = 5e-6
    gravity: Tuple[float, float, float] = DEFAULT_GRAVITY
    intrinsics: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(275.0, 275.0, 320.0, 240.0, 640, 480)
    )
    z_near: float = 0.05

    def __post_init__(self):
        if self.sigma_p_filter <= 0:
            raise ValueError("sigma_p_filter must be positive")
        if self.max_state_features < 1:
            raise ValueError("max_state_features must be >= 1")
        if self.tracker_min > self.tracker_max:
            raise ValueError("tracker_min must be <= tracker_max")
        if not 0.0 < self.gate_prob < 1.0:
            raise ValueError("gate_prob must be in (0, 1)")

    @property
    def chi2_threshold(self) -> float:
        """chi-square quantile at gate_prob for 2 dof: -2 ln(1 - p)."""
        return -2.0 * math.log(1.0 - self.gate_prob)


class ErrorStateSample(NamedTuple):
    t: float
    e: np.ndarray  # [rotation error (3), translation error (3), velocity error (3)]


class FilterState:
    """Nominal state, in-state feature map, and error covariance."""

    def __init__(self, rot, pos, vel, bg, ba, P, feature_ids=None, feature_pos=None):
        self.rot = np.array(rot, dtype=float)
        self.pos = np.array(pos, dtype=float)
        self.vel = np.array(vel, dtype=float)
        self.bg = np.array(bg, dtype=float)
        self.ba = np.array(ba, dtype=float)
        self.P = np.array(P, dtype=float)
        self.feature_ids: List[int] = list(feature_ids or [])
        self.feature_pos = (
            np.array(feature_pos, dtype=float).reshape(-1, 3)
            if feature_pos is not None
            else np.zeros((0, 3))
        )
        self._index = {fid: k for k, fid in enumerate(self.feature_ids)}

    @property
    def dim(self) -> int:
        return MOTION_DIM + 3 * len(self.feature_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    def feature_index(self, fid: int) -> int:
        return self._index[fid]

    def feature_position(self, fid: int) -> np.ndarray:
        return self.feature_pos[self._index[fid]]

    def copy(self) -> "FilterState":
        return FilterState(
            self.rot, self.pos, self.vel, self.bg, self.ba, self.P,
            list(self.feature_ids), self.feature_pos.copy(),
        )

    def add_feature(self, fid: int, position, cov3: np.ndarray) -> None:
        """Append a feature block; cross covariances start at zero."""
        if fid in self._index:
            raise ValueError(f"feature {fid} already in state")
        old = self.dim
        P = np.zeros((old + 3, old + 3))
        P[:old, :old] = self.P
        P[old:, old:] = cov3
        self.P = P
        self._index[fid] = len(self.feature_ids)
        self.feature_ids.append(fid)
        self.feature_pos = np.vstack([self.feature_pos, np.asarray(position, dtype=float)])

    def remove_feature(self, fid: int) -> None:
        k = self._index.pop(fid)
        self.feature_ids.pop(k)
        self.feature_pos = np.delete(self.feature_pos, k, axis=0)
        sl = MOTION_DIM + 3 * k
        keep = np.r_[0:sl, sl + 3 : self.P.shape[0]]
        self.P = self.P[np.ix_(keep, keep)]
        for fid2, k2 in self._index.items():
            if k2 > k:
                self._index[fid2] = k2 - 1

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.rot))
            and np.all(np.isfinite(self.pos))
            and np.all(np.isfinite(self.vel))
            and np.all(np.isfinite(self.bg))
            and np.all(np.isfinite(self.ba))
            and np.all(np.isfinite(self.feature_pos))
            and np.all(np.isfinite(self.P))
        )


def symmetrize(P: np.ndarray) -> None:
    """In-place 0.5 (P + P^T)."""
    np.copyto(P, 0.5 * (P + P.T))


def init_filter(cfg: FilterConfig, truth0: GroundTruthSample) -> FilterState:
    """Start at the true motion state with zero biases and no features.

    The workbench evaluates error growth under input perturbations, not
    global initialization, so the initial covariance is small.
    """
    P = np.zeros((MOTION_DIM, MOTION_DIM))
    d = np.concatenate([
        np.full(9, cfg.init_cov_motion),
        np.full(6, cfg.init_cov_bias),
    ])
    np.fill_diagonal(P, d)
    return FilterState(
        rot=truth0.rot_sb,
        pos=truth0.T_sb,
        vel=truth0.v_sb,
        bg=np.zeros(3),
        ba=np.zeros(3),
        P=P,
    )


def propagate(state: FilterState, imu: ImuSample, dt: float, cfg: FilterConfig) -> FilterState:
    """One strapdown step: returns the propagated copy of `state`.

    Nominal model (right-hand sides at the pre-update state, matching the
    trajectory generator's explicit Euler):
        R <- R exp((gyro - bg) dt);  T <- T + v dt;
        v <- v + (R (accel - ba) + gravity) dt
    and P <- F P F^T + G Q G^T with the analytic Jacobians of that map and
    Q from cfg's noise densities.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not (np.all(np.isfinite(imu.gyro)) and np.all(np.isfinite(imu.accel))):
        raise ValueError("non-finite IMU input")
    out = state.copy()
    _propagate_inplace(out, imu.gyro[None, :], imu.accel[None, :], dt, cfg)
    return out


def _propagate_inplace(state: FilterState, gyro, accel, dt, cfg: FilterConfig) -> None:
    _kernels.propagate_chunk(
        state.rot, state.pos, state.vel, state.bg, state.ba, state.P,
        np.ascontiguousarray(gyro, dtype=float),
        np.ascontiguousarray(accel, dtype=float),
        float(dt),
        cfg.sigma_g**2, cfg.sigma_a**2, cfg.sigma_bg**2, cfg.sigma_ba**2,
        np.asarray(cfg.gravity, dtype=float),
    )
    symmetrize(state.P)


def propagation_jacobians(
    state: FilterState, imu: ImuSample, dt: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic (F, G) of the motion block for one strapdown step.

    F is 15x15 over [dtheta, dT, dv, dbg, dba]; G is 15x12 over the noise
    inputs [gyro white, accel white, bg walk, ba walk].
    """
    w_hat = (imu.gyro - state.bg) * dt
    a_hat = imu.accel - state.ba
    Rot = exp_rotation(w_hat)
    Jr = right_jacobian(w_hat)
    R_new = state.rot @ Rot
    Ra = state.rot @ a_hat
    M = R_new @ Jr

    F = np.eye(MOTION_DIM)
    F[0:3, 9:12] = -dt * M
    F[3:6, 6:9] = dt * np.eye(3)
    F[6:9, 0:3] = -dt * skew(Ra)
    F[6:9, 12:15] = -dt * state.rot

    G = np.zeros((MOTION_DIM, 12))
    G[0:3, 0:3] = dt * M
    G[6:9, 3:6] = dt * state.rot
    G[9:12, 6:9] = np.eye(3)
    G[12:15, 9:12] = np.eye(3)
    return F, G


def apply_retraction(state: FilterState, delta: np.ndarray) -> FilterState:
    """state (+) delta: left-multiplicative for attitude, additive elsewhere.

    delta may cover just the 15 motion states or the full error dimension.
    """
    delta = np.asarray(delta, dtype=float)
    out = state.copy()
    out.rot = exp_rotation(delta[0:3]) @ out.rot
    out.pos = out.pos + delta[3:6]
    out.vel = out.vel + delta[6:9]
    out.bg = out.bg + delta[9:12]
    out.ba = out.ba + delta[12:15]
    if delta.shape[0] > MOTION_DIM:
        out.feature_pos = out.feature_pos + delta[MOTION_DIM:].reshape(-1, 3)
    return out


def motion_difference(a: FilterState, b: FilterState) -> np.ndarray:
    """a (-) b over the 15 motion states (inverse of apply_retraction)."""
    return np.concatenate([
        log_rotation(a.rot @ b.rot.T),
        a.pos - b.pos,
        a.vel - b.vel,
        a.bg - b.bg,
        a.ba - b.ba,
    ])


def error_state(state: FilterState, truth: GroundTruthSample, t: Optional[float] = None) -> ErrorStateSample:
    """e(t) = estimate minus truth over [rotation, translation, velocity].

    The rotation component is the relative-rotation log, log(R_hat R^T),
    which agrees with naive rotation-vector subtraction to first order and
    stays well-defined near the +-pi representation boundary.
    """
    if t is not None and abs(t - truth.t) > 1e-9:
        raise ValueError(f"timestamp mismatch: state at {t}, truth at {truth.t}")
    e = np.concatenate([
        log_rotation(state.rot @ truth.rot_sb.T),
        state.pos - truth.T_sb,
        state.vel - truth.v_sb,
    ])
    return ErrorStateSample(t=truth.t, e=e)
