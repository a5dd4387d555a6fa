"""Monte-Carlo experiment orchestration: seed policy, trial execution,
cross-trial aggregation, and result export.

Seed policy (counter-based, so adding sweep values never perturbs existing
trials): the trajectory and point cloud have their own seeds and are shared
by every trial; each trial's IMU-noise stream is keyed by (experiment_seed,
trial_index) only, so the zero-perturbation corner of every sweep axis runs
identical trials; perturbation streams are keyed by (experiment_seed, axis,
value_index, trial_index).
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .ekf import FilterConfig, VioFilter, error_state
from .geom import Pose, exp_rotation, log_rotation
from .metrics import (
    BoxStats,
    absolute_trajectory_error,
    box_stats,
    relative_pose_error,
    sample_covariance_series,
    scale_factor,
)
from .perturb import PerturbationConfig, PerturbationPipeline
from .sensors import ImuConfig, generate_point_cloud, render_frame, simulate_imu
from .trajgen import TrajectoryConfig, generate_brownian_trajectory

__all__ = [
    "ExperimentResult",
    "ExperimentSpec",
    "TrialResult",
    "ValueResult",
    "SWEEP_AXES",
    "export_results",
    "recompute_covariance_csv",
    "run_experiment",
    "run_trial",
]

SWEEP_AXES = ("gaussian", "drift", "attribution")
_IMU_STREAM_TAG = 1
_PERTURB_STREAM_TAG = 2


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines an experiment's outputs, bit for bit."""

    sweep_axis: str = "gaussian"
    sweep_values: Tuple[float, ...] = (0.5, 1.0, 2.0)
    n_trials: int = 20
    experiment_seed: int = 0
    trajectory_seed: int = 1
    cloud_seed: int = 2
    sigma_p_filter_rule: str = "equal"  # equal | plus_quarter | fixed
    sigma_p_filter_fixed: float = 0.5
    trajectory: TrajectoryConfig = field(
        default_factory=lambda: TrajectoryConfig(duration=20.0)
    )
    imu: ImuConfig = field(default_factory=ImuConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    frame_rate: float = 25.0
    cloud_count: int = 300
    cloud_box_scale: float = 1.75
    rpe_delta: float = 1.0
    noiseless_imu: bool = False
    # Base corruption levels applied to every trial; the sweep axis
    # overrides its own parameter per sweep value.
    base_perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}")
        if self.n_trials < 2:
            raise ValueError("n_trials must be >= 2")
        if len(self.sweep_values) == 0:
            raise ValueError("sweep_values must be non-empty")
        if len(set(self.sweep_values)) != len(self.sweep_values):
            raise ValueError("sweep_values must be unique")
        if self.sigma_p_filter_rule not in ("equal", "plus_quarter", "fixed"):
            raise ValueError("unknown sigma_p_filter_rule")
        if self.sigma_p_filter_rule in ("equal", "plus_quarter") and self.sweep_axis != "gaussian":
            raise ValueError(
                "the equal/plus_quarter rules tie sigma_p_filter to the "
                "gaussian axis; use fixed for other sweeps"
            )
        for v in self.sweep_values:
            if self.sigma_p_filter(v) <= 0:
                raise ValueError(
                    f"resolved sigma_p_filter must be positive (value {v})"
                )
        ratio = self.trajectory.imu_rate / self.frame_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("imu_rate must be an integer multiple of frame_rate")
        for s in (self.experiment_seed, self.trajectory_seed, self.cloud_seed):
            if s < 0:
                raise ValueError("seeds must be non-negative")

    def sigma_p_filter(self, sweep_value: float) -> float:
        """The measurement std the EKF assumes for this sweep value."""
        if self.sigma_p_filter_rule == "equal":
            return float(sweep_value)
        if self.sigma_p_filter_rule == "plus_quarter":
            return float(sweep_value) + 0.25
        return self.sigma_p_filter_fixed

    def perturbation(self, sweep_value: float) -> PerturbationConfig:
        base = self.base_perturbation
        if self.sweep_axis == "gaussian":
            return replace(base, sigma_p=float(sweep_value))
        if self.sweep_axis == "drift":
            return replace(base, sigma_b=float(sweep_value))
        return replace(base, eta=float(sweep_value))

    @property
    def axis_index(self) -> int:
        return SWEEP_AXES.index(self.sweep_axis)

    @property
    def imu_stride(self) -> int:
        return int(round(self.trajectory.imu_rate / self.frame_rate))

    def cloud_box(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = self.cloud_box_scale * np.asarray(self.trajectory.t_min, dtype=float)
        hi = self.cloud_box_scale * np.asarray(self.trajectory.t_max, dtype=float)
        return lo, hi

    def value_index(self, sweep_value: float) -> int:
        for k, v in enumerate(self.sweep_values):
            if v == sweep_value:
                return k
        raise ValueError(f"{sweep_value} is not in sweep_values")

    def trial_seed_id(self, value_index: int, trial_index: int) -> int:
        """A stable integer identifying the trial's perturbation stream."""
        ss = self._perturb_seed(value_index, trial_index)
        return int(ss.generate_state(1, np.uint64)[0])

    def _imu_seed(self, trial_index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            (self.experiment_seed, _IMU_STREAM_TAG, trial_index)
        )

    def _perturb_seed(self, value_index: int, trial_index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            (
                self.experiment_seed,
                _PERTURB_STREAM_TAG,
                self.axis_index,
                value_index,
                trial_index,
            )
        )


@dataclass
class TrialResult:
    sweep_value: float
    trial_index: int
    seed: int
    ate: float  # nan when not computable
    rpe: float
    rho: float
    divergent: bool
    n_frames: int  # frames completed (== total unless divergent)
    n_frames_total: int
    t: np.ndarray  # (n_frames,)
    errors: np.ndarray  # (n_frames, 9)
    est_w: np.ndarray  # (n_frames, 3)
    est_pos: np.ndarray
    est_vel: np.ndarray
    track_counts: np.ndarray  # (n_frames, 3): tracked, in_state, gated_out
    gate_counts: Dict[str, int]  # clean/swapped presented/rejected totals


class _TrialContext:
    """Immutable shared inputs: trajectory, cloud, clean frames, truth."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.traj = generate_brownian_trajectory(spec.trajectory)
        lo, hi = spec.cloud_box()
        self.cloud = generate_point_cloud(spec.cloud_count, lo, hi, spec.cloud_seed)
        stride = spec.imu_stride
        n_imu = len(self.traj)
        self.frame_indices = np.arange(0, n_imu, stride)
        self.frames = []
        K = spec.filter.intrinsics
        for k in self.frame_indices:
            pose = Pose(self.traj.rot[k], self.traj.pos[k])
            self.frames.append(
                render_frame(
                    pose, self.cloud, K, t=float(self.traj.t[k]), z_near=spec.filter.z_near
                )
            )

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def _run_trial(ctx: _TrialContext, sweep_value: float, trial_index: int) -> TrialResult:
    spec = ctx.spec
    value_index = spec.value_index(sweep_value)
    sigma_bar = spec.sigma_p_filter(sweep_value)
    fcfg = replace(spec.filter, sigma_p_filter=sigma_bar)
    imu_cfg = spec.imu
    if spec.noiseless_imu:
        imu_cfg = replace(imu_cfg, sigma_a=0.0, sigma_g=0.0, sigma_ba=0.0, sigma_bg=0.0)
    imu = simulate_imu(ctx.traj, imu_cfg, spec._imu_seed(trial_index))
    pipeline = PerturbationPipeline(
        spec.perturbation(sweep_value), spec._perturb_seed(value_index, trial_index)
    )

    traj = ctx.traj
    dt = 1.0 / traj.imu_rate
    stride = spec.imu_stride
    F = ctx.n_frames
    flt = VioFilter(fcfg, truth0=traj.sample(0))

    t_arr = np.empty(F)
    errors = np.empty((F, 9))
    est_w = np.empty((F, 3))
    est_pos = np.empty((F, 3))
    est_vel = np.empty((F, 3))
    track_counts = np.zeros((F, 3), dtype=np.int64)
    gate_counts = {
        "clean_presented": 0,
        "clean_rejected": 0,
        "swapped_presented": 0,
        "swapped_rejected": 0,
    }

    divergent = False
    completed = 0
    for f in range(F):
        k = int(ctx.frame_indices[f])
        if f > 0:
            flt.propagate_block(imu.gyro[k - stride : k], imu.accel[k - stride : k], dt)
        pool = flt.tracked_ids()
        frame, swapped = pipeline.apply(ctx.frames[f], pool_ids=pool)
        diag = flt.process_frame(frame)

        swapped_set = {int(s) for s in swapped}
        for fid in diag.accepted_ids:
            key = "swapped" if fid in swapped_set else "clean"
            gate_counts[f"{key}_presented"] += 1
        for fid in diag.gated_ids:
            key = "swapped" if fid in swapped_set else "clean"
            gate_counts[f"{key}_presented"] += 1
            gate_counts[f"{key}_rejected"] += 1

        state = flt.state
        if not state.is_finite():
            divergent = True
            break
        truth = traj.sample(k)
        e = error_state(state, truth).e
        t_arr[f] = truth.t
        errors[f] = e
        est_w[f] = log_rotation(state.rot)
        est_pos[f] = state.pos
        est_vel[f] = state.vel
        track_counts[f] = (diag.n_tracked, diag.n_in_state, diag.n_gated_out)
        completed = f + 1

    n = completed
    ate = rpe = rho = float("nan")
    gt_pos = traj.pos[ctx.frame_indices[:n]]
    gt_rot = traj.rot[ctx.frame_indices[:n]]
    delta_steps = int(round(spec.rpe_delta * spec.frame_rate))
    if n >= 3:
        try:
            ate = absolute_trajectory_error(est_pos[:n], gt_pos)
        except ValueError:
            pass
        try:
            rho = scale_factor(est_pos[:n], gt_pos)
        except ValueError:
            pass
        if delta_steps < n:
            est_seq = [(exp_rotation(est_w[i]), est_pos[i]) for i in range(n)]
            gt_seq = [(gt_rot[i], gt_pos[i]) for i in range(n)]
            rpe = relative_pose_error(est_seq, gt_seq, delta_steps)

    return TrialResult(
        sweep_value=float(sweep_value),
        trial_index=trial_index,
        seed=spec.trial_seed_id(value_index, trial_index),
        ate=ate,
        rpe=rpe,
        rho=rho,
        divergent=divergent,
        n_frames=n,
        n_frames_total=F,
        t=t_arr[:n].copy(),
        errors=errors[:n].copy(),
        est_w=est_w[:n].copy(),
        est_pos=est_pos[:n].copy(),
        est_vel=est_vel[:n].copy(),
        track_counts=track_counts[:n].copy(),
        gate_counts=gate_counts,
    )


def run_trial(spec: ExperimentSpec, sweep_value: float, trial_index: int) -> TrialResult:
    """Run one Monte-Carlo trial from scratch (context built internally).

    Bit-identical to the same trial inside run_experiment.
    """
    if not 0 <= trial_index < spec.n_trials:
        raise ValueError("trial_index out of range")
    return _run_trial(_TrialContext(spec), sweep_value, trial_index)


@dataclass
class ValueResult:
    sweep_value: float
    trials: List[TrialResult]
    box_ate: Optional[BoxStats]
    box_rpe: Optional[BoxStats]
    box_rho: Optional[BoxStats]
    box_cov_norm: Optional[BoxStats]  # distribution over time of ||Sigma(t)||_F
    cov_t: Optional[np.ndarray]
    cov_fro: Optional[np.ndarray]  # (T,)
    cov_diag: Optional[np.ndarray]  # (T, 9)
    sigma_bar: Optional[np.ndarray]  # (9, 9) mean sample covariance
    sigma_bar_fro: float
    n_divergent: int
    n_excluded_box: int
    n_excluded_cov: int
    gate_counts: Dict[str, int]

    @property
    def mean_ate(self) -> float:
        return self.box_ate.mean if self.box_ate else float("nan")

    @property
    def mean_rpe(self) -> float:
        return self.box_rpe.mean if self.box_rpe else float("nan")

    def gate_rejection_fractions(self) -> Tuple[float, float]:
        """(clean fraction, swapped fraction) of gate rejections."""
        g = self.gate_counts
        clean = g["clean_rejected"] / g["clean_presented"] if g["clean_presented"] else 0.0
        swapped = (
            g["swapped_rejected"] / g["swapped_presented"]
            if g["swapped_presented"]
            else 0.0
        )
        return clean, swapped


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    values: List[ValueResult]


def _aggregate_value(
    spec: ExperimentSpec, sweep_value: float, trials: List[TrialResult]
) -> ValueResult:
    F = trials[0].n_frames_total if trials else 0
    eligible = []
    for tr in trials:
        if not tr.divergent:
            eligible.append(tr)
        elif tr.n_frames >= 0.5 * F:
            eligible.append(tr)
    ates = [tr.ate for tr in eligible if math.isfinite(tr.ate)]
    rpes = [tr.rpe for tr in eligible if math.isfinite(tr.rpe)]
    rhos = [tr.rho for tr in eligible if math.isfinite(tr.rho)]
    n_excluded_box = len(trials) - len(ates)

    full = [tr for tr in trials if not tr.divergent]
    n_excluded_cov = len(trials) - len(full)
    cov_t = cov_fro = cov_diag = sigma_bar = None
    box_cov = None
    sigma_bar_fro = float("nan")
    if len(full) >= 2:
        stack = np.stack([tr.errors for tr in full])
        series = sample_covariance_series(full[0].t, stack)
        cov_t = series.t
        cov_fro = series.fro_norms
        cov_diag = np.stack([np.diag(m) for m in series.matrices])
        sigma_bar = series.mean_matrix
        sigma_bar_fro = float(np.linalg.norm(sigma_bar))
        box_cov = box_stats(cov_fro)

    gate_totals = {
        "clean_presented": 0,
        "clean_rejected": 0,
        "swapped_presented": 0,
        "swapped_rejected": 0,
    }
    for tr in trials:
        for key in gate_totals:
            gate_totals[key] += tr.gate_counts[key]

    return ValueResult(
        sweep_value=float(sweep_value),
        trials=trials,
        box_ate=box_stats(ates) if ates else None,
        box_rpe=box_stats(rpes) if rpes else None,
        box_rho=box_stats(rhos) if rhos else None,
        box_cov_norm=box_cov,
        cov_t=cov_t,
        cov_fro=cov_fro,
        cov_diag=cov_diag,
        sigma_bar=sigma_bar,
        sigma_bar_fro=sigma_bar_fro,
        n_divergent=sum(1 for tr in trials if tr.divergent),
        n_excluded_box=n_excluded_box,
        n_excluded_cov=n_excluded_cov,
        gate_counts=gate_totals,
    )


_WORKER_CTX: Optional[_TrialContext] = None


def _worker_init(spec: ExperimentSpec) -> None:
    global _WORKER_CTX
    _WORKER_CTX = _TrialContext(spec)


def _worker_run(sweep_value: float, trial_index: int) -> TrialResult:
    return _run_trial(_WORKER_CTX, sweep_value, trial_index)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    """Execute n_trials per sweep value and aggregate across trials.

    The result is independent of `workers`; trials are deterministic work
    units and aggregation runs over the (value, trial) order.
    """
    tasks = [
        (v, ti) for v in spec.sweep_values for ti in range(spec.n_trials)
    ]
    results: Dict[Tuple[float, int], TrialResult] = {}
    if workers <= 1:
        ctx = _TrialContext(spec)
        for v, ti in tasks:
            results[(v, ti)] = _run_trial(ctx, v, ti)
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(spec,)
        ) as pool:
            futures = {(v, ti): pool.submit(_worker_run, v, ti) for v, ti in tasks}
            for key, fut in futures.items():
                results[key] = fut.result()

    values = []
    for v in spec.sweep_values:
        trials = [results[(v, ti)] for ti in range(spec.n_trials)]
        values.append(_aggregate_value(spec, v, trials))
    return ExperimentResult(spec=spec, values=values)


# ----------------------------------------------------------------------
# Export

def _fmt(x) -> str:
    return repr(float(x))


def _spec_to_dict(spec: ExperimentSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["filter"]["intrinsics"] = dataclasses.asdict(spec.filter.intrinsics)
    return d


def export_results(result: ExperimentResult, outdir, include_errors: bool = True) -> List[str]:
    """Write experiment.json, trials.csv, covariance.csv (and errors.csv).

    Returns the list of paths written. Scalars are written with shortest
    round-trip formatting, so re-importing reproduces them exactly.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []

    trials_path = os.path.join(outdir, "trials.csv")
    with open(trials_path, "w", newline="") as fh:
        fh.write("sweep_value,trial_index,seed,ate,rpe,rho,divergent\n")
        for vr in result.values:
            for tr in vr.trials:
                fh.write(
                    f"{_fmt(tr.sweep_value)},{tr.trial_index},{tr.seed},"
                    f"{_fmt(tr.ate)},{_fmt(tr.rpe)},{_fmt(tr.rho)},{int(tr.divergent)}\n"
                )
    written.append(trials_path)

    cov_path = os.path.join(outdir, "covariance.csv")
    with open(cov_path, "w", newline="") as fh:
        fh.write("t,sweep_value," + "fro_norm," + ",".join(f"d{i}" for i in range(9)) + "\n")
        for vr in result.values:
            if vr.cov_t is None:
                continue
            for k in range(vr.cov_t.shape[0]):
                diag = ",".join(_fmt(x) for x in vr.cov_diag[k])
                fh.write(
                    f"{_fmt(vr.cov_t[k])},{_fmt(vr.sweep_value)},{_fmt(vr.cov_fro[k])},{diag}\n"
                )
    written.append(cov_path)

    if include_errors:
        err_path = os.path.join(outdir, "errors.csv")
        with open(err_path, "w", newline="") as fh:
            fh.write(
                "sweep_value,trial_index,t," + ",".join(f"e{i}" for i in range(9)) + "\n"
            )
            for vr in result.values:
                for tr in vr.trials:
                    for k in range(tr.n_frames):
                        es = ",".join(_fmt(x) for x in tr.errors[k])
                        fh.write(
                            f"{_fmt(tr.sweep_value)},{tr.trial_index},{_fmt(tr.t[k])},{es}\n"
                        )
        written.append(err_path)

    summary = {
        "spec": _spec_to_dict(result.spec),
        "values": [
            {
                "sweep_value": vr.sweep_value,
                "sigma_p_filter": result.spec.sigma_p_filter(vr.sweep_value),
                "n_trials": len(vr.trials),
                "n_divergent": vr.n_divergent,
                "n_excluded_box": vr.n_excluded_box,
                "n_excluded_cov": vr.n_excluded_cov,
                "ate": vr.box_ate.as_dict() if vr.box_ate else None,
                "rpe": vr.box_rpe.as_dict() if vr.box_rpe else None,
                "rho": vr.box_rho.as_dict() if vr.box_rho else None,
                "cov_norm": vr.box_cov_norm.as_dict() if vr.box_cov_norm else None,
                "sigma_bar_fro": vr.sigma_bar_fro,
                "gate_counts": vr.gate_counts,
            }
            for vr in result.values
        ],
    }
    json_path = os.path.join(outdir, "experiment.json")
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(json_path)
    return written


def recompute_covariance_csv(outdir) -> str:
    """Rebuild covariance.csv from errors.csv (brute-force re-aggregation).

    Uses only full-length trials per sweep value (matching the aggregation
    rule) and the per-timestep uncentered second-moment formula.
    """
    err_path = os.path.join(outdir, "errors.csv")
    data = np.atleast_2d(np.genfromtxt(err_path, delimiter=",", skip_header=1))
    if data.size == 0:
        raise ValueError(f"no error rows in {err_path}")
    sweep_values = data[:, 0]
    trial_idx = data[:, 1].astype(int)
    t = data[:, 2]
    e = data[:, 3:12]

    cov_path = os.path.join(outdir, "covariance.csv")
    with open(cov_path, "w", newline="") as fh:
        fh.write("t,sweep_value," + "fro_norm," + ",".join(f"d{i}" for i in range(9)) + "\n")
        for v in dict.fromkeys(sweep_values.tolist()):
            mask = sweep_values == v
            trials = sorted(set(trial_idx[mask].tolist()))
            per_trial = {ti: t[mask & (trial_idx == ti)] for ti in trials}
            n_frames = max(len(ts) for ts in per_trial.values())
            full = [ti for ti in trials if len(per_trial[ti]) == n_frames]
            if len(full) < 2:
                continue
            stack = np.stack([e[mask & (trial_idx == ti)] for ti in full])
            t_ref = per_trial[full[0]]
            series = sample_covariance_series(t_ref, stack)
            diag = np.stack([np.diag(m) for m in series.matrices])
            for k in range(series.t.shape[0]):
                ds = ",".join(_fmt(x) for x in diag[k])
                fh.write(
                    f"{_fmt(series.t[k])},{_fmt(v)},{_fmt(series.fro_norms[k])},{ds}\n"
                )
    return cov_path
