"""Declarative experiment configuration (TOML) and shipped presets."""
from __future__ import annotations

import sys
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ekf import FilterConfig
from .geom import CameraIntrinsics
from .harness import ExperimentSpec
from .perturb import PerturbationConfig
from .sensors import ImuConfig
from .trajgen import TrajectoryConfig

__all__ = ["load_experiment_spec", "load_preset", "preset_names", "spec_from_dict"]


def _triple(x):
    return tuple(float(v) for v in x)


def spec_from_dict(doc: dict) -> ExperimentSpec:
    """Build an ExperimentSpec from a parsed config document.

    Every section is optional; omitted keys fall back to the package
    defaults (the full-scale experiment values).
    """
    tr = doc.get("trajectory", {})
    traj = TrajectoryConfig(
        sigma_alpha=float(tr.get("sigma_alpha", 0.1)),
        sigma_omega=float(tr.get("sigma_omega", 0.001)),
        v_min=_triple(tr.get("v_min", (-3.0, -1.0, -1.0))),
        v_max=_triple(tr.get("v_max", (3.0, 1.0, 1.0))),
        t_min=_triple(tr.get("t_min", (-6.0, -3.0, -3.0))),
        t_max=_triple(tr.get("t_max", (6.0, 3.0, 3.0))),
        w_bound=float(tr.get("w_bound", 3.141592653589793)),
        duration=float(tr.get("duration", 20.0)),
        imu_rate=float(tr.get("imu_rate", 400.0)),
        seed=int(tr.get("seed", 1)),
    )

    im = doc.get("imu", {})
    imu = ImuConfig(
        sigma_a=float(im.get("sigma_a", 1e-4)),
        sigma_g=float(im.get("sigma_g", 1e-5)),
        sigma_ba=float(im.get("sigma_ba", 3e-4)),
        sigma_bg=float(im.get("sigma_bg", 5e-6)),
        rate=traj.imu_rate,
        gravity=_triple(im.get("gravity", (0.0, 0.0, -9.81))),
    )

    cam = doc.get("camera", {})
    intrinsics = CameraIntrinsics(
        fx=float(cam.get("fx", 275.0)),
        fy=float(cam.get("fy", 275.0)),
        cx=float(cam.get("cx", 320.0)),
        cy=float(cam.get("cy", 240.0)),
        width=int(cam.get("width", 640)),
        height=int(cam.get("height", 480)),
    )

    fl = doc.get("filter", {})
    fcfg = FilterConfig(
        sigma_p_filter=float(fl.get("sigma_p_filter", 0.5)),
        max_state_features=int(fl.get("max_state_features", 60)),
        tracker_min=int(fl.get("tracker_min", 250)),
        tracker_max=int(fl.get("tracker_max", 500)),
        gate_prob=float(fl.get("gate_prob", 0.95)),
        max_gate_failures=int(fl.get("max_gate_failures", 3)),
        max_candidate_age=float(fl.get("max_candidate_age", 2.0)),
        parallax_min_deg=float(fl.get("parallax_min_deg", 1.0)),
        feature_init_std=float(fl.get("feature_init_std", 0.5)),
        init_cov_motion=float(fl.get("init_cov_motion", 1e-6)),
        init_cov_bias=float(fl.get("init_cov_bias", 1e-4)),
        sigma_a=imu.sigma_a,
        sigma_g=imu.sigma_g,
        sigma_ba=imu.sigma_ba,
        sigma_bg=imu.sigma_bg,
        gravity=imu.gravity,
        intrinsics=intrinsics,
        z_near=float(fl.get("z_near", 0.05)),
    )

    ex = doc.get("experiment", {})
    cloud = doc.get("cloud", {})
    # Base corruption levels; the swept axis overrides its own key per
    # sweep value. A sigma_p_filter key here is shorthand for the fixed rule.
    pe = doc.get("perturbation", {})
    base_perturbation = PerturbationConfig(
        sigma_p=float(pe.get("sigma_p", 0.0)),
        sigma_b=float(pe.get("sigma_b", 0.0)),
        eta=float(pe.get("eta", 0.0)),
    )
    rule = str(ex.get("sigma_p_filter_rule", "equal"))
    fixed = ex.get("sigma_p_filter_fixed", 0.5)
    if "sigma_p_filter" in pe:
        rule = "fixed"
        fixed = pe["sigma_p_filter"]
    return ExperimentSpec(
        sweep_axis=str(ex.get("axis", "gaussian")),
        sweep_values=tuple(float(v) for v in ex.get("values", (0.5, 1.0, 2.0))),
        n_trials=int(ex.get("trials", 20)),
        experiment_seed=int(ex.get("seed", 0)),
        trajectory_seed=traj.seed,
        cloud_seed=int(cloud.get("seed", 2)),
        sigma_p_filter_rule=rule,
        sigma_p_filter_fixed=float(fixed),
        trajectory=traj,
        imu=imu,
        filter=fcfg,
        frame_rate=float(ex.get("frame_rate", 25.0)),
        cloud_count=int(cloud.get("count", 300)),
        cloud_box_scale=float(cloud.get("box_scale", 1.75)),
        rpe_delta=float(ex.get("rpe_delta", 1.0)),
        noiseless_imu=bool(ex.get("noiseless_imu", False)),
        base_perturbation=base_perturbation,
    )


def load_experiment_spec(path) -> ExperimentSpec:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return spec_from_dict(doc)


def preset_names():
    files = resources.files("viomc").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> ExperimentSpec:
    data = resources.files("viomc").joinpath("presets", f"{name}.toml").read_bytes()
    return spec_from_dict(tomllib.loads(data.decode()))
