"""Two-view triangulation minimizing angular reprojection error.

The measured rays are corrected by the smallest rotations that make them
coplanar with the baseline (minimizing the summed squared sines of the
correction angles), then intersected exactly. Nearly-parallel corrected
rays fall back to the midpoint of the common perpendicular of the raw rays.
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from ..geom import Pose

__all__ = ["InsufficientParallax", "triangulate_angular"]

_MIN_BASELINE = 1e-9


class InsufficientParallax(ValueError):
    """The ray geometry does not determine a depth (initialization not ready)."""


def _midpoint_of_common_perpendicular(d0, d1, t) -> np.ndarray:
    """Closest-approach midpoint of rays s0*d0 and t + s1*d1."""
    a = d0 @ d0
    b = d0 @ d1
    c = d1 @ d1
    det = a * c - b * b
    if abs(det) < 1e-15:
        raise InsufficientParallax("rays are parallel")
    s0 = (c * (d0 @ t) - b * (d1 @ t)) / det
    s1 = (b * (d0 @ t) - a * (d1 @ t)) / det
    return 0.5 * ((s0 * d0) + (t + s1 * d1))


def triangulate_angular(
    bearing0: np.ndarray,
    bearing1: np.ndarray,
    relative_pose: Pose,
    parallax_min_deg: float = 1.0,
) -> Tuple[np.ndarray, float]:
    """Triangulate from two unit bearings; returns (point, residual).

    `bearing0` is in the first camera's frame, `bearing1` in the second's;
    `relative_pose` maps second-camera coordinates into the first camera's
    frame. The returned point is in the first camera's frame; the residual
    is the sum of squared sines of the two bearing correction angles.

    Raises InsufficientParallax when the baseline is (near) zero or the
    angle between the two rays is below `parallax_min_deg`.
    """
    m0 = np.asarray(bearing0, dtype=float)
    m1 = relative_pose.rotation @ np.asarray(bearing1, dtype=float)
    t = np.asarray(relative_pose.translation, dtype=float)

    baseline = np.linalg.norm(t)
    if baseline < _MIN_BASELINE:
        raise InsufficientParallax("baseline is zero")
    cos_par = float(np.clip(m0 @ m1, -1.0, 1.0))
    parallax = math.degrees(math.acos(cos_par))
    if parallax < parallax_min_deg:
        raise InsufficientParallax(
            f"parallax {parallax:.4f} deg below {parallax_min_deg} deg"
        )

    # Optimal epipolar-plane normal: minimize (m0.n)^2 + (m1.n)^2 over unit
    # n perpendicular to the baseline (a 2x2 eigenproblem in baseline-perp
    # coordinates).
    b_hat = t / baseline
    a = np.zeros(3)
    a[int(np.argmin(np.abs(b_hat)))] = 1.0
    p = np.cross(b_hat, a)
    p /= np.linalg.norm(p)
    q = np.cross(b_hat, p)
    A = np.array([[m0 @ p, m0 @ q], [m1 @ p, m1 @ q]])
    ata = A.T @ A
    # Smallest-eigenvalue eigenvector of the symmetric 2x2 ata.
    half_tr = 0.5 * (ata[0, 0] + ata[1, 1])
    det = ata[0, 0] * ata[1, 1] - ata[0, 1] * ata[1, 0]
    lam = half_tr - math.sqrt(max(half_tr * half_tr - det, 0.0))
    v = np.array([ata[0, 1], lam - ata[0, 0]])
    if np.linalg.norm(v) < 1e-12:
        v = np.array([lam - ata[1, 1], ata[1, 0]])
    if np.linalg.norm(v) < 1e-12:
        v = np.array([1.0, 0.0])
    v /= np.linalg.norm(v)
    n = v[0] * p + v[1] * q

    s0 = float(m0 @ n)
    s1 = float(m1 @ n)
    residual = s0 * s0 + s1 * s1
    c0 = m0 - s0 * n
    c1 = m1 - s1 * n
    n0 = np.linalg.norm(c0)
    n1 = np.linalg.norm(c1)
    if n0 < 1e-12 or n1 < 1e-12:
        raise InsufficientParallax("corrected rays are degenerate")
    c0 /= n0
    c1 /= n1

    cross = np.cross(c0, c1)
    if np.linalg.norm(cross) < math.sin(math.radians(parallax_min_deg)) * 1e-3:
        # Coplanar but (numerically) parallel: fall back to the raw rays'
        # closest-approach midpoint.
        return _midpoint_of_common_perpendicular(m0, m1, t), residual

    # Exact intersection of the coplanar corrected rays: s0 c0 - s1 c1 = t.
    M = np.stack([c0, -c1], axis=1)  # 3x2
    sol, *_ = np.linalg.lstsq(M, t, rcond=None)
    point0 = sol[0] * c0
    point1 = t + sol[1] * c1
    return 0.5 * (point0 + point1), residual
