"""Timing comparison of the compiled kernels against the pure-NumPy fallback.

Run:  python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from viomc._kernels import pure
from viomc.geom import exp_rotation

try:
    from viomc._kernels import _native as native
except ImportError:
    native = None


def time_call(fn, *args, repeats=3, **kwargs):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_brownian(impl, n=32_001, seed=0):
    rng = np.random.default_rng(seed)
    kwargs = dict(
        dt=1.0 / 400.0,
        xi_a=rng.normal(0, 0.1, size=(n, 3)),
        xi_w=rng.normal(0, 0.001, size=(n, 3)),
        alpha0=np.zeros(3),
        omega0=np.zeros(3),
        w0=np.zeros(3),
        pos0=np.zeros(3),
        vel0=np.zeros(3),
        v_min=np.array([-3.0, -1.0, -1.0]),
        v_max=np.array([3.0, 1.0, 1.0]),
        t_min=np.array([-6.0, -3.0, -3.0]),
        t_max=np.array([6.0, 3.0, 3.0]),
        w_bound=np.pi,
        w_out=np.empty((n, 3)),
        pos_out=np.empty((n, 3)),
        vel_out=np.empty((n, 3)),
        alpha_out=np.empty((n, 3)),
        omega_out=np.empty((n, 3)),
        rot_out=np.empty((n, 3, 3)),
    )
    return time_call(impl.brownian_integrate, **kwargs)


def bench_propagate(impl, steps=8_000, n_features=60, seed=0):
    rng = np.random.default_rng(seed)
    n = 15 + 3 * n_features
    A = rng.normal(size=(n, n))

    def run():
        impl.propagate_chunk(
            rot=exp_rotation(rng.normal(size=3)),
            pos=rng.normal(size=3),
            vel=rng.normal(size=3),
            bg=np.zeros(3),
            ba=np.zeros(3),
            P=(A @ A.T) * 1e-4,
            gyro=rng.normal(size=(steps, 3)),
            accel=rng.normal(size=(steps, 3)) + [0, 0, 9.81],
            dt=1.0 / 400.0,
            var_g=1e-10,
            var_a=1e-8,
            var_bg=2.5e-11,
            var_ba=9e-8,
            gravity=np.array([0.0, 0.0, -9.81]),
        )

    return time_call(run)


def main():
    rows = []
    rows.append(("brownian_integrate (80 s @ 400 Hz)", bench_brownian(pure),
                 bench_brownian(native) if native else None))
    rows.append(("propagate_chunk (8000 steps, 60 features)", bench_propagate(pure),
                 bench_propagate(native) if native else None))
    print(f"{'kernel':<45}{'pure [s]':>10}{'native [s]':>12}{'speedup':>9}")
    for name, t_pure, t_native in rows:
        if t_native is None:
            print(f"{name:<45}{t_pure:>10.3f}{'n/a':>12}{'n/a':>9}")
        else:
            print(f"{name:<45}{t_pure:>10.3f}{t_native:>12.3f}{t_pure / t_native:>8.1f}x")
    if native is None:
        print("\ncompiled extension not built; run `pip install -e .` first")


if __name__ == "__main__":
    main()
