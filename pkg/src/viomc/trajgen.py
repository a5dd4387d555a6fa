"""Bounded Brownian-input ground-truth trajectories and excitation checks.

Linear acceleration and angular velocity in the spatial frame evolve as
random walks (an increment per IMU step); states integrate by explicit
Euler inside a box, reflecting the driving input off the box faces. The
excitation measure quantifies the worst-covered direction of a 3D signal;
a trajectory is sufficiently exciting when angular velocity, angular
acceleration, angular jerk, and linear jerk all have positive measure.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .geom import exp_rotation

__all__ = [
    "ExcitationReport",
    "GroundTruthSample",
    "Trajectory",
    "TrajectoryConfig",
    "excitation_report",
    "generate_brownian_trajectory",
    "load_trajectory_csv",
    "minimum_excitation",
    "save_trajectory_csv",
]


@dataclass(frozen=True)
class TrajectoryConfig:
    """Random-walk trajectory parameters (per-IMU-step increment stds)."""

    sigma_alpha: float = 0.1  # m/s^2 acceleration-walk step std
    sigma_omega: float = 0.001  # rad/s angular-velocity-walk step std
    v_min: Tuple[float, float, float] = (-3.0, -1.0, -1.0)
    v_max: Tuple[float, float, float] = (3.0, 1.0, 1.0)
    t_min: Tuple[float, float, float] = (-6.0, -3.0, -3.0)
    t_max: Tuple[float, float, float] = (6.0, 3.0, 3.0)
    w_bound: float = math.pi
    duration: float = 80.0
    imu_rate: float = 400.0
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0 or self.imu_rate <= 0:
            raise ValueError("duration and imu_rate must be positive")
        if self.sigma_alpha < 0 or self.sigma_omega < 0:
            raise ValueError("walk stds must be non-negative")
        if self.w_bound <= 0:
            raise ValueError("w_bound must be positive")
        for lo, hi, name in (
            (self.v_min, self.v_max, "v"),
            (self.t_min, self.t_max, "t"),
        ):
            if not all(a < b for a, b in zip(lo, hi)):
                raise ValueError(f"{name}_min must be < {name}_max componentwise")


@dataclass(frozen=True)
class GroundTruthSample:
    """True state and inputs at one IMU timestep."""

    t: float
    w_sb: np.ndarray  # rotation vector, body to spatial
    T_sb: np.ndarray  # m
    v_sb: np.ndarray  # m/s
    alpha_s: np.ndarray  # spatial-frame linear acceleration, m/s^2
    omega_s: np.ndarray  # spatial-frame angular velocity, rad/s
    alpha_b: np.ndarray  # body-frame counterparts
    omega_b: np.ndarray
    rot_sb: np.ndarray  # 3x3 rotation realizing w_sb


@dataclass(frozen=True)
class Trajectory:
    """Ground-truth state/input series on the uniform IMU grid."""

    t: np.ndarray  # (n,)
    w: np.ndarray  # (n, 3)
    rot: np.ndarray  # (n, 3, 3)
    pos: np.ndarray  # (n, 3)
    vel: np.ndarray  # (n, 3)
    alpha_s: np.ndarray  # (n, 3)
    omega_s: np.ndarray  # (n, 3)
    alpha_b: np.ndarray  # (n, 3)
    omega_b: np.ndarray  # (n, 3)
    imu_rate: float
    path_length: float

    def __post_init__(self):
        for name in ("t", "w", "rot", "pos", "vel", "alpha_s", "omega_s", "alpha_b", "omega_b"):
            getattr(self, name).flags.writeable = False

    def __len__(self) -> int:
        return self.t.shape[0]

    def sample(self, k: int) -> GroundTruthSample:
        return GroundTruthSample(
            t=float(self.t[k]),
            w_sb=self.w[k],
            T_sb=self.pos[k],
            v_sb=self.vel[k],
            alpha_s=self.alpha_s[k],
            omega_s=self.omega_s[k],
            alpha_b=self.alpha_b[k],
            omega_b=self.omega_b[k],
            rot_sb=self.rot[k],
        )

    @property
    def samples(self):
        return [self.sample(k) for k in range(len(self))]


def generate_brownian_trajectory(
    cfg: TrajectoryConfig,
    initial_alpha: Optional[Sequence[float]] = None,
    initial_omega: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Generate the bounded random-walk trajectory for `cfg`.

    Deterministic given cfg.seed. Initial state is the origin at identity
    orientation with zero velocity; initial inputs default to zero.
    """
    n = int(round(cfg.duration * cfg.imu_rate)) + 1
    dt = 1.0 / cfg.imu_rate
    rng = np.random.default_rng(cfg.seed)
    xi_a = rng.normal(0.0, cfg.sigma_alpha, size=(n, 3))
    xi_w = rng.normal(0.0, cfg.sigma_omega, size=(n, 3))

    w = np.empty((n, 3))
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    alpha_s = np.empty((n, 3))
    omega_s = np.empty((n, 3))
    rot = np.empty((n, 3, 3))

    alpha0 = np.zeros(3) if initial_alpha is None else np.asarray(initial_alpha, dtype=float)
    omega0 = np.zeros(3) if initial_omega is None else np.asarray(initial_omega, dtype=float)

    _kernels.brownian_integrate(
        dt,
        np.ascontiguousarray(xi_a),
        np.ascontiguousarray(xi_w),
        alpha0,
        omega0,
        np.zeros(3),
        np.zeros(3),
        np.zeros(3),
        np.asarray(cfg.v_min, dtype=float),
        np.asarray(cfg.v_max, dtype=float),
        np.asarray(cfg.t_min, dtype=float),
        np.asarray(cfg.t_max, dtype=float),
        float(cfg.w_bound),
        w,
        pos,
        vel,
        alpha_s,
        omega_s,
        rot,
    )

    t = np.arange(n) * dt
    alpha_b = np.einsum("nji,nj->ni", rot, alpha_s)
    omega_b = np.einsum("nji,nj->ni", rot, omega_s)
    path_length = float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1)))
    return Trajectory(
        t=t,
        w=w,
        rot=rot,
        pos=pos,
        vel=vel,
        alpha_s=alpha_s,
        omega_s=omega_s,
        alpha_b=alpha_b,
        omega_b=omega_b,
        imu_rate=cfg.imu_rate,
        path_length=path_length,
    )


def _fibonacci_sphere(n: int) -> np.ndarray:
    """Near-uniform deterministic unit directions (spiral lattice)."""
    i = np.arange(n)
    ga = math.pi * (3.0 - math.sqrt(5.0))
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(ga * i), r * np.sin(ga * i), z], axis=1)


def _direction_values(f: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """sup over samples of ||f x dir|| for each unit direction."""
    norms2 = np.sum(f * f, axis=1)
    out = np.empty(dirs.shape[0])
    chunk = max(1, int(4_000_000 // max(1, f.shape[0])))
    for s in range(0, dirs.shape[0], chunk):
        d = dirs[s : s + chunk]
        dots = f @ d.T
        out[s : s + chunk] = np.sqrt(
            np.maximum(0.0, norms2[:, None] - dots * dots).max(axis=0)
        )
    return out


def minimum_excitation(
    f: np.ndarray,
    interval: Optional[Tuple[int, int]] = None,
    n_directions: int = 1000,
) -> float:
    """Worst-covered-direction measure of a sampled 3D signal.

    Approximates inf over unit x of sup over t of ||f(t) x x|| with a
    deterministic sphere lattice (the coordinate axes are always included
    as candidates) refined locally around the incumbent direction.
    """
    f = np.asarray(f, dtype=float).reshape(-1, 3)
    if interval is not None:
        f = f[interval[0] : interval[1]]
    if f.shape[0] < 1:
        raise ValueError("minimum_excitation: empty interval")

    dirs = np.concatenate([np.eye(3), _fibonacci_sphere(n_directions)], axis=0)
    vals = _direction_values(f, dirs)
    best_idx = int(np.argmin(vals))
    best_dir = dirs[best_idx]
    best_val = float(vals[best_idx])

    # Shrinking spherical-cap refinement around the incumbent.
    cap = 2.0 / math.sqrt(n_directions)
    j = np.arange(128)
    ga = math.pi * (3.0 - math.sqrt(5.0))
    disk_r = np.sqrt((j + 0.5) / 128.0)
    disk = np.stack([disk_r * np.cos(ga * j), disk_r * np.sin(ga * j)], axis=1)
    for _ in range(6):
        a = np.argmin(np.abs(best_dir))
        e = np.zeros(3)
        e[a] = 1.0
        u = np.cross(best_dir, e)
        u /= np.linalg.norm(u)
        v = np.cross(best_dir, u)
        cand = best_dir[None, :] + cap * (disk[:, :1] * u + disk[:, 1:2] * v)
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        cvals = _direction_values(f, cand)
        ci = int(np.argmin(cvals))
        if cvals[ci] < best_val:
            best_val = float(cvals[ci])
            best_dir = cand[ci]
        cap *= 0.35
    return best_val


class ExcitationReport(NamedTuple):
    angular_velocity: float
    angular_acceleration: float
    angular_jerk: float
    linear_jerk: float

    def all_positive(self) -> bool:
        return all(v > 0.0 for v in self)


def _finite_difference(f: np.ndarray, dt: float) -> np.ndarray:
    """Central differences at interior samples, one-sided at the ends."""
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * dt)
    d[0] = (f[1] - f[0]) / dt
    d[-1] = (f[-1] - f[-2]) / dt
    return d


def excitation_report(traj: Trajectory) -> ExcitationReport:
    """Excitation measure of the four signals that must each cover 3-DOF."""
    if len(traj) < 4:
        raise ValueError("excitation_report: need at least 4 samples")
    dt = 1.0 / traj.imu_rate
    omega = traj.omega_s
    omega_dot = _finite_difference(omega, dt)
    omega_ddot = _finite_difference(omega_dot, dt)
    alpha_dot = _finite_difference(traj.alpha_s, dt)
    return ExcitationReport(
        angular_velocity=minimum_excitation(omega),
        angular_acceleration=minimum_excitation(omega_dot),
        angular_jerk=minimum_excitation(omega_ddot),
        linear_jerk=minimum_excitation(alpha_dot),
    )


_CSV_COLUMNS = (
    ["t"]
    + [f"w{c}" for c in "xyz"]
    + [f"T{c}" for c in "xyz"]
    + [f"v{c}" for c in "xyz"]
    + [f"alpha{c}" for c in "xyz"]
    + [f"omega{c}" for c in "xyz"]
)


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per sample: t, w(3), T(3), v(3), alpha_s(3), omega_s(3)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for k in range(len(traj)):
            row = np.concatenate(
                [[traj.t[k]], traj.w[k], traj.pos[k], traj.vel[k], traj.alpha_s[k], traj.omega_s[k]]
            )
            writer.writerow([f"{x:.17g}" for x in row])


def load_trajectory_csv(path) -> Trajectory:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    if data.shape[1] != len(_CSV_COLUMNS):
        raise ValueError(f"trajectory CSV must have {len(_CSV_COLUMNS)} columns")
    t = data[:, 0]
    w = data[:, 1:4]
    pos = data[:, 4:7]
    vel = data[:, 7:10]
    alpha_s = data[:, 10:13]
    omega_s = data[:, 13:16]
    rot = np.stack([exp_rotation(wk) for wk in w])
    alpha_b = np.einsum("nji,nj->ni", rot, alpha_s)
    omega_b = np.einsum("nji,nj->ni", rot, omega_s)
    n = t.shape[0]
    rate = (n - 1) / (t[-1] - t[0]) if n > 1 else 0.0
    path_length = float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1)))
    return Trajectory(
        t=t.copy(),
        w=w.copy(),
        rot=rot,
        pos=pos.copy(),
        vel=vel.copy(),
        alpha_s=alpha_s.copy(),
        omega_s=omega_s.copy(),
        alpha_b=alpha_b,
        omega_b=omega_b,
        imu_rate=float(rate),
        path_length=path_length,
    )
