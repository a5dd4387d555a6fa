"""File formats owned by the estimator: estimate CSV and diagnostics JSONL."""
from __future__ import annotations

import csv
import json

import numpy as np

__all__ = [
    "load_estimate_csv",
    "save_diagnostics_jsonl",
    "save_estimate_csv",
]


def save_estimate_csv(t, w, pos, vel, path) -> None:
    """Rows of t, rotation vector (3), translation (3), velocity (3)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "wx", "wy", "wz", "Tx", "Ty", "Tz", "vx", "vy", "vz"]
        )
        for k in range(len(t)):
            row = np.concatenate([[t[k]], w[k], pos[k], vel[k]])
            writer.writerow([f"{x:.17g}" for x in row])


def load_estimate_csv(path):
    data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
    return data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7:10]


def save_diagnostics_jsonl(diagnostics, path) -> None:
    """One frame per line: {t, n_tracked, n_in_state, n_gated_out}."""
    with open(path, "w") as fh:
        for d in diagnostics:
            fh.write(
                json.dumps(
                    {
                        "t": d.t,
                        "n_tracked": d.n_tracked,
                        "n_in_state": d.n_in_state,
                        "n_gated_out": d.n_gated_out,
                    }
                )
                + "\n"
            )
