"""Command-line front end.

Subcommands: generate-trajectory, excitation, run-trial, run-experiment,
export. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import os
import sys


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="viomc", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_config(p, required=False):
        p.add_argument("--config", help="experiment TOML file")
        p.add_argument(
            "--preset",
            help="shipped preset name (e.g. full_gaussian, desk_gaussian)",
        )

    p = sub.add_parser("generate-trajectory", help="emit trajectory CSV + excitation report")
    add_config(p)
    p.add_argument("--seed", type=int, help="trajectory seed override")
    p.add_argument("--duration", type=float, help="duration override, seconds")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("excitation", help="excitation report for a trajectory CSV")
    p.add_argument("--trajectory", required=True, help="trajectory CSV path")

    p = sub.add_parser("run-trial", help="run one Monte-Carlo trial")
    add_config(p)
    p.add_argument("--sweep-value", type=float, required=True)
    p.add_argument("--trial", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run-experiment", help="run a full sweep")
    add_config(p)
    p.add_argument("--trials", type=int, help="override trial count")
    p.add_argument("--seed", type=int, help="override experiment seed")
    p.add_argument("--values", help="override sweep values, comma-separated")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--skip-errors", action="store_true", help="omit errors.csv")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("export", help="recompute covariance.csv from errors.csv")
    p.add_argument("--dir", required=True, help="experiment output directory")
    return parser


def _load_spec(args):
    from .config import load_experiment_spec, load_preset

    if getattr(args, "config", None):
        return load_experiment_spec(args.config)
    if getattr(args, "preset", None):
        return load_preset(args.preset)
    from .config import spec_from_dict

    return spec_from_dict({})


def _cmd_generate_trajectory(args) -> int:
    from dataclasses import replace

    from .trajgen import excitation_report, generate_brownian_trajectory, save_trajectory_csv

    spec = _load_spec(args)
    cfg = spec.trajectory
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.duration is not None:
        cfg = replace(cfg, duration=args.duration)
    traj = generate_brownian_trajectory(cfg)
    save_trajectory_csv(traj, args.out)
    report = excitation_report(traj)
    print(f"wrote {args.out}: {len(traj)} samples, path length {traj.path_length:.2f} m")
    _print_excitation(report)
    return 0


def _print_excitation(report) -> None:
    print("excitation (worst-covered-direction measure, zero means a dead direction):")
    print(f"  angular velocity:     {report.angular_velocity:.6g}")
    print(f"  angular acceleration: {report.angular_acceleration:.6g}")
    print(f"  angular jerk:         {report.angular_jerk:.6g}")
    print(f"  linear jerk:          {report.linear_jerk:.6g}")


def _cmd_excitation(args) -> int:
    from .trajgen import excitation_report, load_trajectory_csv

    traj = load_trajectory_csv(args.trajectory)
    _print_excitation(excitation_report(traj))
    return 0


def _cmd_run_trial(args) -> int:
    from .ekf.io import save_estimate_csv
    from .harness import run_trial

    spec = _load_spec(args)
    result = run_trial(spec, args.sweep_value, args.trial)
    os.makedirs(args.out, exist_ok=True)
    est_path = os.path.join(args.out, f"estimate_v{args.sweep_value}_t{args.trial}.csv")
    save_estimate_csv(result.t, result.est_w, result.est_pos, result.est_vel, est_path)
    diag_path = os.path.join(args.out, f"diagnostics_v{args.sweep_value}_t{args.trial}.jsonl")
    _save_trial_diagnostics(result, diag_path)
    print(
        f"trial {args.trial} @ {args.sweep_value}: "
        f"ate={result.ate:.6g} m rpe={result.rpe:.6g} m rho={result.rho:.6g}"
        + (" DIVERGED" if result.divergent else "")
    )
    print(f"wrote {est_path} and {diag_path}")
    return 0


def _save_trial_diagnostics(result, path) -> None:
    from types import SimpleNamespace

    from .ekf.io import save_diagnostics_jsonl

    records = [
        SimpleNamespace(
            t=float(result.t[k]),
            n_tracked=int(result.track_counts[k, 0]),
            n_in_state=int(result.track_counts[k, 1]),
            n_gated_out=int(result.track_counts[k, 2]),
        )
        for k in range(result.n_frames)
    ]
    save_diagnostics_jsonl(records, path)


def _cmd_run_experiment(args) -> int:
    from dataclasses import replace

    from .harness import export_results, run_experiment

    spec = _load_spec(args)
    overrides = {}
    if args.trials is not None:
        overrides["n_trials"] = args.trials
    if args.seed is not None:
        overrides["experiment_seed"] = args.seed
    if args.values:
        overrides["sweep_values"] = tuple(float(v) for v in args.values.split(","))
    if overrides:
        spec = replace(spec, **overrides)
    result = run_experiment(spec, workers=args.workers)
    written = export_results(result, args.out, include_errors=not args.skip_errors)
    for vr in result.values:
        mean_ate = vr.box_ate.mean if vr.box_ate else float("nan")
        print(
            f"value {vr.sweep_value}: mean ATE {mean_ate:.6g} m, "
            f"mean-cov |.|_F {vr.sigma_bar_fro:.6g}, divergent {vr.n_divergent}"
        )
    print("wrote " + ", ".join(written))
    return 0


def _cmd_export(args) -> int:
    from .harness import recompute_covariance_csv

    path = recompute_covariance_csv(args.dir)
    print(f"recomputed {path}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    handlers = {
        "generate-trajectory": _cmd_generate_trajectory,
        "excitation": _cmd_excitation,
        "run-trial": _cmd_run_trial,
        "run-experiment": _cmd_run_experiment,
        "export": _cmd_export,
    }
    try:
        return handlers[args.command](args)
    except (OSError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
