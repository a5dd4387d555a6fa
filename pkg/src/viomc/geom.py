"""Rotations, poses, the pinhole camera model, and rigid trajectory alignment.

Everything here is a pure function of immutable values; the rest of the
package builds on these primitives. Rotations are stored as orthonormal
3x3 matrices internally; axis-angle rotation vectors appear only at I/O
boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "AlignmentError",
    "CameraIntrinsics",
    "PixelPoint",
    "Pose",
    "bearing",
    "exp_rotation",
    "is_rotation",
    "log_rotation",
    "orthonormalize_rotation",
    "project",
    "project_points",
    "right_jacobian",
    "skew",
    "umeyama_align",
]

# Angle below which the Rodrigues/log formulas switch to their Taylor series.
_SMALL_ANGLE = 1e-8
_SO3_TOL = 1e-6


class AlignmentError(ValueError):
    """Raised when a point set is too degenerate to align."""


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def exp_rotation(w) -> np.ndarray:
    """Axis-angle exponential: rotation about w/||w|| by angle ||w||.

    Uses the closed Rodrigues form, with the series limit at w = 0.
    """
    w = np.asarray(w, dtype=float)
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    K = skew(w)
    if theta < _SMALL_ANGLE:
        # sin(t)/t -> 1 - t^2/6, (1-cos t)/t^2 -> 1/2 - t^2/24
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def is_rotation(R, tol: float = 1e-9) -> bool:
    """SO(3) membership: orthonormal to `tol` and det = +1."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    if not np.allclose(R.T @ R, np.eye(3), atol=tol):
        return False
    return abs(np.linalg.det(R) - 1.0) <= 10.0 * tol


def log_rotation(R) -> np.ndarray:
    """Principal logarithm of a rotation matrix, as a rotation vector.

    ||result|| <= pi. At angle pi, where the axis sign is ambiguous, the
    convention is that the first nonzero component of the axis is positive.

    Raises ValueError for input that is not orthonormal to 1e-6.
    """
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol=_SO3_TOL):
        raise ValueError("log_rotation: input is not a rotation matrix")
    return _log_unchecked(R)


def _log_unchecked(R: np.ndarray) -> np.ndarray:
    """log_rotation without the SO(3) validation (hot-loop variant)."""
    trace = min(max(float(np.trace(R)), -1.0), 3.0)
    cos_theta = (trace - 1.0) / 2.0
    cos_theta = min(max(cos_theta, -1.0), 1.0)
    theta = math.acos(cos_theta)
    if theta < _SMALL_ANGLE:
        # w ~ vee(R - R^T)/2 to first order
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if math.pi - theta > 1e-4:
        factor = theta / (2.0 * math.sin(theta))
        return factor * np.array(
            [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]
        )
    # Near pi the antisymmetric part vanishes; recover the axis from the
    # symmetric part R = I + (1 - cos)*K^2 + ... => (R + I)/2 ~ axis axis^T.
    B = (R + np.eye(3)) / 2.0
    axis = np.sqrt(np.maximum(np.diag(B), 0.0))
    # Fix relative signs from the off-diagonal products.
    k = int(np.argmax(axis))
    for i in range(3):
        if i != k and axis[i] > 0.0:
            if B[k, i] < 0.0:
                axis[i] = -axis[i]
    norm = np.linalg.norm(axis)
    if norm == 0.0:  # pragma: no cover - unreachable for valid input
        raise ValueError("log_rotation: degenerate axis")
    axis = axis / norm
    # Deterministic sign: first nonzero component positive.
    for c in axis:
        if abs(c) > 1e-12:
            if c < 0.0:
                axis = -axis
            break
    return theta * axis


def right_jacobian(w) -> np.ndarray:
    """Right Jacobian of SO(3): exp(w + d) ~ exp(w) @ exp(right_jacobian(w) @ d)."""
    w = np.asarray(w, dtype=float)
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    K = skew(w)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + (K @ K) / 6.0
    t2 = theta * theta
    a = (1.0 - math.cos(theta)) / t2
    b = (theta - math.sin(theta)) / (t2 * theta)
    return np.eye(3) - a * K + b * (K @ K)


def orthonormalize_rotation(R) -> np.ndarray:
    """Project a nearly-orthonormal matrix back onto SO(3) (polar factor)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x_out = rotation @ x_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not is_rotation(R, tol=1e-9):
            raise ValueError("Pose rotation is not in SO(3) to 1e-9")
        R = R.copy()
        t = t.copy()
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self * other)(x) = self(other(x))."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def transform(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation


class PixelPoint(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Distortion-free pinhole intrinsics."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


def project(X_c, K: CameraIntrinsics) -> Optional[PixelPoint]:
    """Pinhole projection of a camera-frame point; None when z <= 0."""
    x, y, z = np.asarray(X_c, dtype=float)
    if z <= 0.0:
        return None
    return PixelPoint(K.fx * x / z + K.cx, K.fy * y / z + K.cy)


def project_points(X_c: np.ndarray, K: CameraIntrinsics):
    """Vectorized projection of (n, 3) camera-frame points.

    Returns (pixels (n, 2), in_front (n,) bool). Pixels for points with
    z <= 0 are NaN.
    """
    X_c = np.asarray(X_c, dtype=float)
    z = X_c[:, 2]
    in_front = z > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * X_c[:, 0] / z + K.cx
        v = K.fy * X_c[:, 1] / z + K.cy
    px = np.stack([u, v], axis=1)
    px[~in_front] = np.nan
    return px, in_front


def bearing(p, K: CameraIntrinsics) -> np.ndarray:
    """Unit ray through a pixel: normalize(((u-cx)/fx, (v-cy)/fy, 1))."""
    u, v = p
    d = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
    return d / np.linalg.norm(d)


def umeyama_align(estimated: np.ndarray, ground_truth: np.ndarray) -> Pose:
    """Closed-form rigid alignment (rotation + translation, no scale).

    Returns the Pose g minimizing sum ||g(estimated_i) - ground_truth_i||^2
    over the two (n, 3) translation sequences.

    Raises AlignmentError for n < 3 or (near-)collinear point sets, where
    the rotation is not determined.
    """
    X = np.asarray(estimated, dtype=float).reshape(-1, 3)
    Y = np.asarray(ground_truth, dtype=float).reshape(-1, 3)
    if X.shape != Y.shape:
        raise AlignmentError("sequences must have equal length")
    n = X.shape[0]
    if n < 3:
        raise AlignmentError("need at least 3 poses to align")
    mu_x = X.mean(axis=0)
    mu_y = Y.mean(axis=0)
    Xc = X - mu_x
    Yc = Y - mu_y
    cov = (Yc.T @ Xc) / n
    U, d, Vt = np.linalg.svd(cov)
    scale = max(float(np.linalg.norm(Xc)), float(np.linalg.norm(Yc)), 1e-30)
    if d[1] <= 1e-9 * scale * scale / n:
        raise AlignmentError("point sets are collinear; rotation is ambiguous")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    t = mu_y - R @ mu_x
    return Pose(R, t)
