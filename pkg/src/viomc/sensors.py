"""Synthetic IMU measurements and attributed point-cloud pixel observations.

This replaces real image processing: vision "measurements" are direct
projections of a fixed, globally-attributed point cloud, so every per-frame
observation carries the true landmark id until a perturbation says
otherwise.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np

from .geom import CameraIntrinsics, PixelPoint
from .trajgen import Trajectory

__all__ = [
    "ImuConfig",
    "ImuData",
    "ImuSample",
    "PointCloud",
    "VisionFrame",
    "generate_point_cloud",
    "load_imu_csv",
    "load_frames_jsonl",
    "render_frame",
    "save_imu_csv",
    "save_frames_jsonl",
    "simulate_imu",
]

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


@dataclass(frozen=True)
class ImuConfig:
    """Continuous-time noise densities (units per sqrt(Hz)) and sample rate.

    Discretization convention: white-noise per-sample std = sigma * sqrt(rate);
    bias-random-walk per-sample increment std = sigma_b / sqrt(rate).
    """

    sigma_a: float = 1e-4  # accelerometer noise, m/s^2/sqrt(Hz)
    sigma_g: float = 1e-5  # gyroscope noise, rad/s/sqrt(Hz)
    sigma_ba: float = 3e-4  # accelerometer bias walk, m/s^2/sqrt(Hz)
    sigma_bg: float = 5e-6  # gyroscope bias walk, rad/s/sqrt(Hz)
    rate: float = 400.0
    gravity: Tuple[float, float, float] = DEFAULT_GRAVITY

    def __post_init__(self):
        if min(self.sigma_a, self.sigma_g, self.sigma_ba, self.sigma_bg) < 0:
            raise ValueError("noise densities must be non-negative")
        if self.rate <= 0:
            raise ValueError("rate must be positive")


class ImuSample(NamedTuple):
    t: float
    gyro: np.ndarray  # rad/s
    accel: np.ndarray  # m/s^2 specific force


@dataclass(frozen=True)
class ImuData:
    """Simulated IMU stream plus the ground-truth bias walks behind it."""

    t: np.ndarray  # (n,)
    gyro: np.ndarray  # (n, 3)
    accel: np.ndarray  # (n, 3)
    bias_g: np.ndarray  # (n, 3)
    bias_a: np.ndarray  # (n, 3)

    def __len__(self) -> int:
        return self.t.shape[0]

    def sample(self, k: int) -> ImuSample:
        return ImuSample(float(self.t[k]), self.gyro[k], self.accel[k])


def simulate_imu(traj: Trajectory, cfg: ImuConfig, seed) -> ImuData:
    """Corrupt the trajectory's true body rates/specific force per `cfg`.

    gyro = omega_b + b_g + n_g, accel = R^T (alpha_s - gravity) + b_a + n_a,
    with biases starting at zero and random-walking. Deterministic given
    seed (all noise blocks are drawn even when their sigma is zero, so the
    stream layout never depends on the configuration).
    """
    if abs(traj.imu_rate - cfg.rate) > 1e-9:
        raise ValueError(
            f"trajectory rate {traj.imu_rate} Hz != IMU rate {cfg.rate} Hz"
        )
    n = len(traj)
    rng = np.random.default_rng(seed)
    std_white_g = cfg.sigma_g * np.sqrt(cfg.rate)
    std_white_a = cfg.sigma_a * np.sqrt(cfg.rate)
    std_walk_g = cfg.sigma_bg / np.sqrt(cfg.rate)
    std_walk_a = cfg.sigma_ba / np.sqrt(cfg.rate)

    n_g = rng.normal(0.0, std_white_g, size=(n, 3))
    n_a = rng.normal(0.0, std_white_a, size=(n, 3))
    inc_g = rng.normal(0.0, std_walk_g, size=(n, 3))
    inc_a = rng.normal(0.0, std_walk_a, size=(n, 3))
    inc_g[0] = 0.0
    inc_a[0] = 0.0
    bias_g = np.cumsum(inc_g, axis=0)
    bias_a = np.cumsum(inc_a, axis=0)

    gravity = np.asarray(cfg.gravity, dtype=float)
    specific_force = np.einsum("nji,nj->ni", traj.rot, traj.alpha_s - gravity)
    gyro = traj.omega_b + bias_g + n_g
    accel = specific_force + bias_a + n_a
    return ImuData(t=traj.t.copy(), gyro=gyro, accel=accel, bias_g=bias_g, bias_a=bias_a)


@dataclass(frozen=True)
class PointCloud:
    """Fixed landmark set with stable integer ids."""

    ids: np.ndarray  # (m,) int64
    points: np.ndarray  # (m, 3) spatial frame, meters

    def __post_init__(self):
        if len(np.unique(self.ids)) != self.ids.shape[0]:
            raise ValueError("point-cloud ids must be unique")
        self.ids.flags.writeable = False
        self.points.flags.writeable = False

    def __len__(self) -> int:
        return self.ids.shape[0]


def generate_point_cloud(count: int, box_min, box_max, seed) -> PointCloud:
    """iid uniform points in the axis-aligned box, deterministic given seed."""
    if count <= 0:
        raise ValueError("count must be positive")
    lo = np.asarray(box_min, dtype=float)
    hi = np.asarray(box_max, dtype=float)
    if np.any(hi < lo):
        raise ValueError("box_max must be >= box_min componentwise")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(count, 3))
    return PointCloud(ids=np.arange(count, dtype=np.int64), points=pts)


@dataclass(frozen=True)
class VisionFrame:
    """Attributed pixel observations at one vision timestep."""

    t: float
    ids: np.ndarray  # (m,) int64
    pixels: np.ndarray  # (m, 2) float

    def __post_init__(self):
        self.ids.flags.writeable = False
        self.pixels.flags.writeable = False

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def observations(self) -> List[Tuple[int, PixelPoint]]:
        return [
            (int(i), PixelPoint(float(u), float(v)))
            for i, (u, v) in zip(self.ids, self.pixels)
        ]


def render_frame(
    pose,
    cloud: PointCloud,
    K: CameraIntrinsics,
    t: float = 0.0,
    z_near: float = 0.05,
) -> VisionFrame:
    """Project every cloud point visible from the camera-to-spatial pose.

    `pose` is the camera-to-spatial transform (a geom.Pose or any object
    with .rotation and .translation). A point is visible iff its
    camera-frame depth exceeds z_near and its projection lands inside
    [0, width) x [0, height).
    """
    rot_cs = np.asarray(pose.rotation, dtype=float)
    pos_cs = np.asarray(pose.translation, dtype=float)
    X_c = (cloud.points - pos_cs) @ rot_cs  # row-vector form of R^T (X - T)
    z = X_c[:, 2]
    in_front = z > z_near
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * X_c[:, 0] / z + K.cx
        v = K.fy * X_c[:, 1] / z + K.cy
    visible = (
        in_front & (u >= 0.0) & (u < K.width) & (v >= 0.0) & (v < K.height)
    )
    return VisionFrame(
        t=t,
        ids=cloud.ids[visible].copy(),
        pixels=np.stack([u[visible], v[visible]], axis=1),
    )


def save_imu_csv(imu: ImuData, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "gx", "gy", "gz", "ax", "ay", "az"])
        for k in range(len(imu)):
            row = np.concatenate([[imu.t[k]], imu.gyro[k], imu.accel[k]])
            writer.writerow([f"{x:.17g}" for x in row])


def load_imu_csv(path) -> ImuData:
    data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
    n = data.shape[0]
    return ImuData(
        t=data[:, 0].copy(),
        gyro=data[:, 1:4].copy(),
        accel=data[:, 4:7].copy(),
        bias_g=np.zeros((n, 3)),
        bias_a=np.zeros((n, 3)),
    )


def save_frames_jsonl(frames, path) -> None:
    """One frame per line: {"t": ..., "obs": [[id, u, v], ...]}."""
    with open(path, "w") as fh:
        for fr in frames:
            obs = [
                [int(i), float(u), float(v)]
                for i, (u, v) in zip(fr.ids, fr.pixels)
            ]
            fh.write(json.dumps({"t": fr.t, "obs": obs}) + "\n")


def load_frames_jsonl(path) -> List[VisionFrame]:
    frames = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            obs = rec["obs"]
            ids = np.array([o[0] for o in obs], dtype=np.int64)
            px = np.array([[o[1], o[2]] for o in obs], dtype=float).reshape(-1, 2)
            frames.append(VisionFrame(t=float(rec["t"]), ids=ids, pixels=px))
    return frames
