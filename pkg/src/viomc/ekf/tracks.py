"""Feature lifecycle bookkeeping and per-candidate depth subfilters.

Lifecycle: candidate -> in_state -> dead, candidate -> dead, and
in_state -> rejected -> dead. A rejected feature blocks its id from
re-candidacy while it stays in view; once it leaves view the id may return
later as a fresh candidate.

Each candidate owns a 3-state EKF over its spatial position, seeded by
two-view triangulation once the rays separate enough. The trace of the
subfilter covariance is the depth-confidence score used for promotion.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from ..geom import bearing, Pose
from .state import FilterConfig, FilterState
from .triangulation import InsufficientParallax, triangulate_angular

__all__ = [
    "Track",
    "TrackStatus",
    "TrackTable",
    "select_in_state_features",
    "subfilter_depth_update",
]


class TrackStatus(Enum):
    CANDIDATE = "candidate"
    IN_STATE = "in_state"
    REJECTED = "rejected"
    DEAD = "dead"


@dataclass
class Track:
    feature_id: int
    status: TrackStatus
    created_t: float
    first_pixel: np.ndarray  # measurement at first detection
    first_rot: np.ndarray  # estimated camera pose at first detection
    first_pos: np.ndarray
    last_pixel: Optional[np.ndarray] = None
    first_ray_s: Optional[np.ndarray] = None  # spatial ray of first obs
    est_pos: Optional[np.ndarray] = None  # subfilter mean (spatial frame)
    est_cov: Optional[np.ndarray] = None  # subfilter 3x3 covariance
    gate_failures: int = 0
    n_subfilter_updates: int = 0

    @property
    def seeded(self) -> bool:
        return self.est_pos is not None

    def copy(self) -> "Track":
        return Track(
            feature_id=self.feature_id,
            status=self.status,
            created_t=self.created_t,
            first_pixel=self.first_pixel.copy(),
            first_rot=self.first_rot.copy(),
            first_pos=self.first_pos.copy(),
            last_pixel=None if self.last_pixel is None else self.last_pixel.copy(),
            first_ray_s=None if self.first_ray_s is None else self.first_ray_s.copy(),
            est_pos=None if self.est_pos is None else self.est_pos.copy(),
            est_cov=None if self.est_cov is None else self.est_cov.copy(),
            gate_failures=self.gate_failures,
            n_subfilter_updates=self.n_subfilter_updates,
        )


class TrackTable:
    """id -> Track map with small conveniences."""

    def __init__(self):
        self.tracks: Dict[int, Track] = {}

    def __len__(self) -> int:
        return len(self.tracks)

    def __contains__(self, fid: int) -> bool:
        return fid in self.tracks

    def __getitem__(self, fid: int) -> Track:
        return self.tracks[fid]

    def add(self, track: Track) -> None:
        self.tracks[track.feature_id] = track

    def remove(self, fid: int) -> None:
        del self.tracks[fid]

    def ids(self):
        return sorted(self.tracks.keys())

    def by_status(self, status: TrackStatus):
        return [self.tracks[fid] for fid in self.ids() if self.tracks[fid].status is status]

    def copy(self) -> "TrackTable":
        out = TrackTable()
        for fid, tr in self.tracks.items():
            out.tracks[fid] = tr.copy()
        return out


def _seed_covariance(cfg: FilterConfig, depth: float) -> np.ndarray:
    """Isotropic seed uncertainty, grown with depth (far points triangulate
    worse for the same pixel error)."""
    std = max(cfg.feature_init_std, 0.25 * depth)
    return (std * std) * np.eye(3)


def try_seed(track: Track, rot_est: np.ndarray, pos_est: np.ndarray, pixel: np.ndarray, cfg: FilterConfig) -> bool:
    """Attempt two-view seeding between the first detection and now.

    Seeds est_pos/est_cov on success. Failure (insufficient parallax or a
    seed behind either camera) leaves the track unseeded.
    """
    b0 = bearing(track.first_pixel, cfg.intrinsics)
    b1 = bearing(pixel, cfg.intrinsics)
    rel_rot = track.first_rot.T @ rot_est
    rel_t = track.first_rot.T @ (pos_est - track.first_pos)
    try:
        point_c0, _residual = triangulate_angular(
            b0, b1, Pose(rel_rot, rel_t), parallax_min_deg=cfg.parallax_min_deg
        )
    except InsufficientParallax:
        return False
    if point_c0[2] <= cfg.z_near:
        return False
    depth_now = float((rel_rot.T @ (point_c0 - rel_t))[2])
    if depth_now <= cfg.z_near:
        return False
    track.est_pos = track.first_rot @ point_c0 + track.first_pos
    track.est_cov = _seed_covariance(cfg, float(point_c0[2]))
    track.n_subfilter_updates = 0
    track.gate_failures = 0
    return True


def batch_refine(
    X: np.ndarray,
    P: np.ndarray,
    pixels: np.ndarray,
    rot_est: np.ndarray,
    pos_est: np.ndarray,
    cfg: FilterConfig,
    threshold: float,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gated EKF refinement of m landmark positions against one frame.

    X (m,3), P (m,3,3), pixels (m,2). Returns (X', P', accepted, d2):
    `accepted` marks measurements that passed the gate and were applied
    (points behind the camera never are); `d2` is the squared Mahalanobis
    innovation distance (inf where unusable), which the caller compares
    against the catastrophic-failure threshold.
    """
    K_int = cfg.intrinsics
    m = X.shape[0]
    var = cfg.sigma_p_filter**2
    Xc = (X - pos_est) @ rot_est
    z = Xc[:, 2]
    usable = z > cfg.z_near
    zs = np.where(usable, z, 1.0)
    u = K_int.fx * Xc[:, 0] / zs + K_int.cx
    v = K_int.fy * Xc[:, 1] / zs + K_int.cy
    r = pixels - np.stack([u, v], axis=1)

    J = np.zeros((m, 2, 3))
    J[:, 0, 0] = K_int.fx / zs
    J[:, 0, 2] = -K_int.fx * Xc[:, 0] / (zs * zs)
    J[:, 1, 1] = K_int.fy / zs
    J[:, 1, 2] = -K_int.fy * Xc[:, 1] / (zs * zs)
    H = J @ rot_est.T  # (m, 2, 3)

    PHt = np.einsum("mij,mkj->mik", P, H)  # (m, 3, 2)
    S = np.einsum("mij,mjk->mik", H, PHt)  # (m, 2, 2)
    S[:, 0, 0] += var
    S[:, 1, 1] += var
    det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
    inv = np.empty_like(S)
    inv[:, 0, 0] = S[:, 1, 1]
    inv[:, 1, 1] = S[:, 0, 0]
    inv[:, 0, 1] = -S[:, 0, 1]
    inv[:, 1, 0] = -S[:, 1, 0]
    inv /= det[:, None, None]
    d2 = np.einsum("mi,mij,mj->m", r, inv, r)
    d2 = np.where(usable, d2, np.inf)
    accepted = usable & (d2 <= threshold)

    Kg = np.einsum("mij,mjk->mik", PHt, inv)  # (m, 3, 2)
    X_new = X + np.einsum("mij,mj->mi", Kg, r)
    IKH = np.eye(3)[None] - np.einsum("mij,mjk->mik", Kg, H)
    P_new = np.einsum("mij,mjk,mlk->mil", IKH, P, IKH) + var * np.einsum(
        "mij,mkj->mik", Kg, Kg
    )
    P_new = 0.5 * (P_new + np.transpose(P_new, (0, 2, 1)))

    keep = ~accepted
    X_new[keep] = X[keep]
    P_new[keep] = P[keep]
    return X_new, P_new, accepted, d2


def subfilter_depth_update(
    track: Track,
    rot_est: np.ndarray,
    pos_est: np.ndarray,
    pixel: np.ndarray,
    cfg: FilterConfig,
) -> Track:
    """Advance one candidate's depth estimate with this frame's pixel.

    Unseeded tracks attempt two-view seeding; seeded tracks run the gated
    3-state EKF refinement. Gate failures accumulate in
    track.gate_failures (the caller applies the death rules).
    """
    if track.status is not TrackStatus.CANDIDATE:
        raise ValueError("subfilter updates apply to candidates only")
    pixel = np.asarray(pixel, dtype=float)
    track.last_pixel = pixel
    if not track.seeded:
        try_seed(track, rot_est, pos_est, pixel, cfg)
        return track
    X, P, accepted, d2 = batch_refine(
        track.est_pos[None], track.est_cov[None], pixel[None],
        rot_est, pos_est, cfg, cfg.chi2_threshold,
    )
    if accepted[0]:
        track.est_pos = X[0]
        track.est_cov = P[0]
        track.gate_failures = 0
        track.n_subfilter_updates += 1
    elif d2[0] >= cfg.catastrophic_gate_factor * cfg.chi2_threshold:
        track.gate_failures = cfg.max_gate_failures
    else:
        track.gate_failures += 1
    return track


def select_in_state_features(state: FilterState, tracks: TrackTable, cfg: FilterConfig):
    """Fill state vacancies with the most depth-confident seeded candidates.

    Confidence is the subfilter covariance trace (smaller is better); the
    promoted block enters P with zero cross terms. Returns the promoted ids.
    """
    promoted = []
    vacancies = cfg.max_state_features - state.n_features
    if vacancies <= 0:
        return promoted
    eligible = [tr for tr in tracks.by_status(TrackStatus.CANDIDATE) if tr.seeded]
    eligible.sort(key=lambda tr: (float(np.trace(tr.est_cov)), tr.feature_id))
    for tr in eligible[:vacancies]:
        state.add_feature(tr.feature_id, tr.est_pos, tr.est_cov)
        tr.status = TrackStatus.IN_STATE
        tr.gate_failures = 0
        promoted.append(tr.feature_id)
    return promoted
