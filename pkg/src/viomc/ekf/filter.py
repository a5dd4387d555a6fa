"""The estimator under test: error-state EKF over motion + landmark states.

Per vision frame: tracker bookkeeping, candidate depth subfilters, a
chi-square gate on every in-state innovation, one stacked Joseph-form
update over the accepted measurements, then vacancy refill by promotion.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Optional, Tuple

import numpy as np

from ..geom import exp_rotation, orthonormalize_rotation
from ..sensors import VisionFrame
from ..trajgen import GroundTruthSample
from .state import (
    MOTION_DIM,
    FilterConfig,
    FilterState,
    _propagate_inplace,
    init_filter,
    symmetrize,
)
from .tracks import (
    Track,
    TrackStatus,
    TrackTable,
    batch_refine,
    select_in_state_features,
    try_seed,
)

__all__ = [
    "FilterNumericsError",
    "FrameDiagnostics",
    "VioFilter",
    "mahalanobis_gate",
    "process_frame",
]


class FilterNumericsError(RuntimeError):
    """A linear solve inside the update failed (singular innovation)."""


def mahalanobis_gate(r, S, gate_prob: float) -> bool:
    """Accept iff r^T S^-1 r <= chi-square quantile(gate_prob, dof=2)."""
    r = np.asarray(r, dtype=float)
    S = np.asarray(S, dtype=float)
    threshold = -2.0 * math.log(1.0 - gate_prob)
    try:
        x = np.linalg.solve(S, r)
    except np.linalg.LinAlgError as err:
        raise FilterNumericsError("singular innovation covariance") from err
    d2 = float(r @ x)
    if not np.isfinite(d2) or d2 < 0:
        raise FilterNumericsError("ill-conditioned innovation covariance")
    return d2 <= threshold


class FrameDiagnostics(NamedTuple):
    t: float
    n_tracked: int  # live candidate + in-state tracks after the frame
    n_in_state: int
    n_gated_out: int  # in-state measurements rejected this frame
    n_candidates: int
    gated_ids: Tuple[int, ...]
    accepted_ids: Tuple[int, ...]
    promoted_ids: Tuple[int, ...]
    died_ids: Tuple[int, ...]


def _batch_skew(p: np.ndarray) -> np.ndarray:
    m = p.shape[0]
    out = np.zeros((m, 3, 3))
    out[:, 0, 1] = -p[:, 2]
    out[:, 0, 2] = p[:, 1]
    out[:, 1, 0] = p[:, 2]
    out[:, 1, 2] = -p[:, 0]
    out[:, 2, 0] = -p[:, 1]
    out[:, 2, 1] = p[:, 0]
    return out


class VioFilter:
    """Owns one trial's FilterState + TrackTable; strictly sequential use."""

    def __init__(
        self,
        cfg: FilterConfig,
        truth0: Optional[GroundTruthSample] = None,
        state: Optional[FilterState] = None,
        tracks: Optional[TrackTable] = None,
    ):
        self.cfg = cfg
        if state is None:
            if truth0 is None:
                raise ValueError("need truth0 or an explicit state")
            state = init_filter(cfg, truth0)
        self.state = state
        self.tracks = tracks if tracks is not None else TrackTable()
        self.threshold = cfg.chi2_threshold

    def tracked_ids(self):
        """Ids the bookkeeping tracker currently follows (the swap pool)."""
        return {
            fid
            for fid, tr in self.tracks.tracks.items()
            if tr.status in (TrackStatus.CANDIDATE, TrackStatus.IN_STATE)
        }

    def propagate_block(self, gyro: np.ndarray, accel: np.ndarray, dt: float) -> None:
        """Propagate through a contiguous run of IMU samples."""
        _propagate_inplace(self.state, gyro, accel, dt, self.cfg)
        self.state.rot = orthonormalize_rotation(self.state.rot)

    # ------------------------------------------------------------------
    def process_frame(self, frame: VisionFrame) -> FrameDiagnostics:
        cfg = self.cfg
        state = self.state
        tracks = self.tracks
        t = frame.t
        row_of = {int(fid): k for k, fid in enumerate(frame.ids)}
        died = []

        # (1) Tracker bookkeeping: disappeared ids die; new ids become
        # candidates while capacity allows (ascending id order), excess is
        # ignored. Rejected ids still in view keep blocking their slot.
        for fid in tracks.ids():
            if fid not in row_of:
                tr = tracks[fid]
                if tr.status is TrackStatus.IN_STATE:
                    state.remove_feature(fid)
                tracks.remove(fid)
                died.append(fid)
        for fid in sorted(row_of):
            if fid not in tracks and len(tracks) < cfg.tracker_max:
                px = frame.pixels[row_of[fid]].copy()
                tr = Track(
                    feature_id=fid,
                    status=TrackStatus.CANDIDATE,
                    created_t=t,
                    first_pixel=px,
                    first_rot=state.rot.copy(),
                    first_pos=state.pos.copy(),
                    last_pixel=px,
                )
                tr.first_ray_s = self._spatial_ray(px)
                tracks.add(tr)

        # (2) Candidate subfilters: refine previously seeded candidates,
        # then attempt seeding, then apply the death rules.
        candidates = tracks.by_status(TrackStatus.CANDIDATE)
        seeded = [tr for tr in candidates if tr.seeded]
        if seeded:
            X = np.stack([tr.est_pos for tr in seeded])
            P3 = np.stack([tr.est_cov for tr in seeded])
            px = np.stack([frame.pixels[row_of[tr.feature_id]] for tr in seeded])
            Xn, Pn, ok, d2 = batch_refine(
                X, P3, px, state.rot, state.pos, cfg, self.threshold
            )
            catastrophic = cfg.catastrophic_gate_factor * self.threshold
            for i, tr in enumerate(seeded):
                tr.last_pixel = px[i]
                if ok[i]:
                    tr.est_pos = Xn[i]
                    tr.est_cov = Pn[i]
                    tr.gate_failures = 0
                    tr.n_subfilter_updates += 1
                elif d2[i] >= catastrophic:
                    tr.gate_failures = cfg.max_gate_failures
                else:
                    tr.gate_failures += 1
        unseeded = [tr for tr in candidates if not tr.seeded]
        if unseeded:
            px = np.stack([frame.pixels[row_of[tr.feature_id]] for tr in unseeded])
            rays = self._spatial_rays(px)
            first_rays = np.stack([tr.first_ray_s for tr in unseeded])
            cosang = np.clip(np.sum(rays * first_rays, axis=1), -1.0, 1.0)
            enough = np.degrees(np.arccos(cosang)) >= cfg.parallax_min_deg
            for i, tr in enumerate(unseeded):
                tr.last_pixel = px[i]
                if enough[i]:
                    try_seed(tr, state.rot, state.pos, px[i], cfg)
        for tr in candidates:
            expired = not tr.seeded and (t - tr.created_t) > cfg.max_candidate_age
            if expired or tr.gate_failures >= cfg.max_gate_failures:
                tracks.remove(tr.feature_id)
                died.append(tr.feature_id)

        # (3) In-state features: per-feature chi-square gate, one stacked
        # Joseph update over the accepted set, then the rejection rules: a
        # catastrophic innovation (a swap, not noise) cuts the track at
        # once; borderline failures must persist max_gate_failures frames.
        gated, accepted_ids, catastrophic_ids = self._update_in_state(frame, row_of)
        for fid in gated:
            tr = tracks[fid]
            if fid in catastrophic_ids:
                tr.gate_failures = cfg.max_gate_failures
            else:
                tr.gate_failures += 1
            if tr.gate_failures >= cfg.max_gate_failures:
                tr.status = TrackStatus.REJECTED
                state.remove_feature(fid)
        for fid in accepted_ids:
            tracks[fid].gate_failures = 0

        # (4) Refill vacancies with the most confident seeded candidates.
        promoted = select_in_state_features(state, tracks, cfg)

        n_tracked = sum(
            1
            for tr in tracks.tracks.values()
            if tr.status in (TrackStatus.CANDIDATE, TrackStatus.IN_STATE)
        )
        return FrameDiagnostics(
            t=t,
            n_tracked=n_tracked,
            n_in_state=state.n_features,
            n_gated_out=len(gated),
            n_candidates=sum(
                1 for tr in tracks.tracks.values() if tr.status is TrackStatus.CANDIDATE
            ),
            gated_ids=tuple(gated),
            accepted_ids=tuple(accepted_ids),
            promoted_ids=tuple(promoted),
            died_ids=tuple(died),
        )

    # ------------------------------------------------------------------
    def _spatial_ray(self, pixel: np.ndarray) -> np.ndarray:
        return self._spatial_rays(pixel[None])[0]

    def _spatial_rays(self, pixels: np.ndarray) -> np.ndarray:
        K = self.cfg.intrinsics
        d = np.empty((pixels.shape[0], 3))
        d[:, 0] = (pixels[:, 0] - K.cx) / K.fx
        d[:, 1] = (pixels[:, 1] - K.cy) / K.fy
        d[:, 2] = 1.0
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d @ self.state.rot.T

    def _update_in_state(self, frame: VisionFrame, row_of) -> Tuple[list, list, set]:
        cfg = self.cfg
        state = self.state
        fids = list(state.feature_ids)
        if not fids:
            return [], [], set()
        K = cfg.intrinsics
        var = cfg.sigma_p_filter**2
        m = len(fids)
        rows = np.array([row_of[f] for f in fids])
        meas = frame.pixels[rows]

        p_rel = state.feature_pos - state.pos  # (m, 3) spatial
        Xc = p_rel @ state.rot
        z = Xc[:, 2]
        usable = z > cfg.z_near
        zs = np.where(usable, z, 1.0)
        pred = np.stack(
            [K.fx * Xc[:, 0] / zs + K.cx, K.fy * Xc[:, 1] / zs + K.cy], axis=1
        )
        r = meas - pred

        J = np.zeros((m, 2, 3))
        J[:, 0, 0] = K.fx / zs
        J[:, 0, 2] = -K.fx * Xc[:, 0] / (zs * zs)
        J[:, 1, 1] = K.fy / zs
        J[:, 1, 2] = -K.fy * Xc[:, 1] / (zs * zs)
        B = J @ state.rot.T  # (m, 2, 3): d pixel / d feature position
        Htheta = np.einsum("mij,mjk->mik", B, _batch_skew(p_rel))
        # H blocks: dtheta -> Htheta, dT -> -B, dX -> B.

        # Per-feature innovation covariance from the relevant P blocks.
        idx = np.empty((m, 9), dtype=np.intp)
        idx[:, 0:3] = np.arange(3)
        idx[:, 3:6] = np.arange(3, 6)
        slots = np.array([state.feature_index(f) for f in fids])
        idx[:, 6:9] = MOTION_DIM + 3 * slots[:, None] + np.arange(3)
        Hrow = np.concatenate([Htheta, -B, B], axis=2)  # (m, 2, 9)
        Psub = state.P[idx[:, :, None], idx[:, None, :]]  # (m, 9, 9)
        S = np.einsum("mij,mjk,mlk->mil", Hrow, Psub, Hrow)
        S[:, 0, 0] += var
        S[:, 1, 1] += var
        det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
        if np.any(det <= 0) or not np.all(np.isfinite(det)):
            raise FilterNumericsError("singular per-feature innovation covariance")
        inv = np.empty_like(S)
        inv[:, 0, 0] = S[:, 1, 1]
        inv[:, 1, 1] = S[:, 0, 0]
        inv[:, 0, 1] = -S[:, 0, 1]
        inv[:, 1, 0] = -S[:, 1, 0]
        inv /= det[:, None, None]
        d2 = np.einsum("mi,mij,mj->m", r, inv, r)
        d2 = np.where(usable, d2, np.inf)
        accept = usable & (d2 <= self.threshold)

        gated = [fid for i, fid in enumerate(fids) if not accept[i]]
        accepted = [fid for i, fid in enumerate(fids) if accept[i]]
        catastrophic = {
            fid
            for i, fid in enumerate(fids)
            if d2[i] >= cfg.catastrophic_gate_factor * self.threshold
        }
        if accepted:
            self._apply_stacked_update(fids, accept, r, Htheta, B, slots)
        return gated, accepted, catastrophic

    def _apply_stacked_update(self, fids, accept, r, Htheta, B, slots) -> None:
        state = self.state
        var = self.cfg.sigma_p_filter**2
        dim = state.dim
        sel = np.flatnonzero(accept)
        a = sel.shape[0]
        H = np.zeros((2 * a, dim))
        rs = np.empty(2 * a)
        for out_i, i in enumerate(sel):
            rr = slice(2 * out_i, 2 * out_i + 2)
            H[rr, 0:3] = Htheta[i]
            H[rr, 3:6] = -B[i]
            c = MOTION_DIM + 3 * slots[i]
            H[rr, c : c + 3] = B[i]
            rs[rr] = r[i]

        P = state.P
        PHt = P @ H.T
        S = H @ PHt
        S[np.arange(2 * a), np.arange(2 * a)] += var
        try:
            Kt = np.linalg.solve(S, PHt.T)
        except np.linalg.LinAlgError as err:
            raise FilterNumericsError("singular stacked innovation covariance") from err
        Kg = Kt.T
        delta = Kg @ rs
        IKH = np.eye(dim) - Kg @ H
        state.P = IKH @ P @ IKH.T + var * (Kg @ Kg.T)
        symmetrize(state.P)

        state.rot = orthonormalize_rotation(exp_rotation(delta[0:3]) @ state.rot)
        state.pos = state.pos + delta[3:6]
        state.vel = state.vel + delta[6:9]
        state.bg = state.bg + delta[9:12]
        state.ba = state.ba + delta[12:15]
        if dim > MOTION_DIM:
            state.feature_pos = state.feature_pos + delta[MOTION_DIM:].reshape(-1, 3)


def process_frame(
    state: FilterState, tracks: TrackTable, frame: VisionFrame, cfg: FilterConfig
) -> Tuple[FilterState, TrackTable, FrameDiagnostics]:
    """Functional wrapper over VioFilter.process_frame (inputs untouched)."""
    flt = VioFilter(cfg, state=state.copy(), tracks=tracks.copy())
    diag = flt.process_frame(frame)
    return flt.state, flt.tracks, diag
