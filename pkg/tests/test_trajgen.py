import numpy as np
import pytest

from viomc.geom import exp_rotation
from viomc.trajgen import (
    TrajectoryConfig,
    excitation_report,
    generate_brownian_trajectory,
    load_trajectory_csv,
    minimum_excitation,
    save_trajectory_csv,
)

FULL_CFG = TrajectoryConfig(duration=20.0, seed=42)


def brute_force_excitation(f, n_directions=100_000):
    """Dense-sphere oracle for the worst-covered-direction measure."""
    f = np.asarray(f, dtype=float).reshape(-1, 3)
    i = np.arange(n_directions)
    ga = np.pi * (3.0 - np.sqrt(5.0))
    z = 1.0 - 2.0 * (i + 0.5) / n_directions
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    dirs = np.stack([r * np.cos(ga * i), r * np.sin(ga * i), z], axis=1)
    norms2 = np.sum(f * f, axis=1)
    best = np.inf
    for s in range(0, n_directions, 512):
        d = dirs[s : s + 512]
        dots = f @ d.T
        vals = np.sqrt(np.maximum(0.0, norms2[:, None] - dots**2).max(axis=0))
        best = min(best, float(vals.min()))
    return best


class TestBrownianTrajectory:
    def test_stationary_when_unexcited(self):
        cfg = TrajectoryConfig(sigma_alpha=0.0, sigma_omega=0.0, duration=1.0, seed=0)
        traj = generate_brownian_trajectory(cfg)
        assert traj.path_length == 0.0
        np.testing.assert_array_equal(traj.pos, 0.0)
        np.testing.assert_array_equal(traj.vel, 0.0)
        np.testing.assert_array_equal(traj.w, 0.0)

    def test_constant_acceleration_reflects_at_velocity_bound(self):
        # v grows at 1 m/s^2 and reflects at the +3 m/s bound near t = 3 s.
        cfg = TrajectoryConfig(
            sigma_alpha=0.0,
            sigma_omega=0.0,
            t_min=(-100.0, -3.0, -3.0),
            t_max=(100.0, 3.0, 3.0),
            duration=4.0,
            seed=0,
        )
        traj = generate_brownian_trajectory(cfg, initial_alpha=(1.0, 0.0, 0.0))
        dt = 1.0 / cfg.imu_rate
        t_hit = 3.0
        before = traj.t < t_hit - 2 * dt
        after = (traj.t > t_hit + 2 * dt) & (traj.t < 3.5)
        np.testing.assert_allclose(traj.alpha_s[before, 0], 1.0)
        np.testing.assert_allclose(traj.alpha_s[after, 0], -1.0)
        # closed form: v = t, T = t^2/2 up to the Euler offset, before the hit
        k = 800  # t = 2.0
        assert abs(traj.vel[k, 0] - 2.0) < 1e-9
        assert abs(traj.pos[k, 0] - 0.5 * 2.0**2) < 2.0 * dt
        assert np.max(traj.vel[:, 0]) <= 3.0

    def test_position_bound_reflects(self):
        cfg = TrajectoryConfig(
            sigma_alpha=0.0,
            sigma_omega=0.0,
            v_min=(-10.0, -1.0, -1.0),
            v_max=(10.0, 1.0, 1.0),
            t_min=(-2.0, -3.0, -3.0),
            t_max=(2.0, 3.0, 3.0),
            duration=4.0,
            seed=0,
        )
        traj = generate_brownian_trajectory(cfg, initial_alpha=(1.0, 0.0, 0.0))
        assert np.max(traj.pos[:, 0]) <= 2.0
        # It actually reaches the bound and comes back.
        assert np.max(traj.pos[:, 0]) == 2.0
        assert traj.pos[-1, 0] < 2.0

    def test_default_config_respects_all_bounds(self):
        cfg = FULL_CFG
        traj = generate_brownian_trajectory(cfg)
        assert np.all(traj.vel >= np.asarray(cfg.v_min) - 0.0)
        assert np.all(traj.vel <= np.asarray(cfg.v_max) + 0.0)
        assert np.all(traj.pos >= np.asarray(cfg.t_min) - 0.0)
        assert np.all(traj.pos <= np.asarray(cfg.t_max) + 0.0)
        assert np.all(np.abs(traj.w) <= cfg.w_bound)

    def test_determinism(self):
        a = generate_brownian_trajectory(FULL_CFG)
        b = generate_brownian_trajectory(FULL_CFG)
        np.testing.assert_array_equal(a.pos, b.pos)
        np.testing.assert_array_equal(a.alpha_s, b.alpha_s)
        np.testing.assert_array_equal(a.rot, b.rot)

    def test_seed_changes_trajectory(self):
        a = generate_brownian_trajectory(FULL_CFG)
        b = generate_brownian_trajectory(TrajectoryConfig(duration=20.0, seed=43))
        assert not np.allclose(a.pos, b.pos)

    def test_body_frame_inputs_consistent(self):
        traj = generate_brownian_trajectory(TrajectoryConfig(duration=2.0, seed=9))
        k = 321
        R = traj.rot[k]
        np.testing.assert_allclose(traj.alpha_b[k], R.T @ traj.alpha_s[k], atol=1e-14)
        np.testing.assert_allclose(traj.omega_b[k], R.T @ traj.omega_s[k], atol=1e-14)

    def test_rotation_matches_rotation_vector(self):
        traj = generate_brownian_trajectory(TrajectoryConfig(duration=1.0, seed=5))
        for k in (0, 100, 400):
            np.testing.assert_allclose(traj.rot[k], exp_rotation(traj.w[k]), atol=1e-12)

    def test_uniform_timestamps(self):
        traj = generate_brownian_trajectory(TrajectoryConfig(duration=1.0, seed=5))
        np.testing.assert_allclose(np.diff(traj.t), 1.0 / 400.0, atol=1e-12)

    def test_rotation_bound_reflects_below_pi(self):
        # A tight rotation bound makes the omega reflection rule observable.
        cfg = TrajectoryConfig(
            sigma_alpha=0.0,
            sigma_omega=0.0,
            w_bound=0.5,
            duration=2.0,
            seed=0,
        )
        traj = generate_brownian_trajectory(cfg, initial_omega=(0.0, 0.0, 1.0))
        assert np.max(np.abs(traj.w)) <= 0.5 + 1e-12
        # omega flips at the +0.5 bound (t ~ 0.5) and back at -0.5 (t ~ 1.5)
        assert traj.omega_s[400, 2] == -1.0  # t = 1.0
        assert traj.omega_s[760, 2] == 1.0  # t = 1.9
        assert np.min(traj.w[:, 2]) == -0.5
        assert np.max(traj.w[:, 2]) == 0.5


class TestMinimumExcitation:
    def test_uncovered_direction_gives_zero(self):
        f = np.tile([0.0, 0.0, 3.0], (50, 1))
        assert minimum_excitation(f) == pytest.approx(0.0, abs=1e-12)

    def test_zero_signal(self):
        assert minimum_excitation(np.zeros((10, 3))) == 0.0

    def test_three_axes_value(self):
        # min over x of max_i ||e_i x x|| = sqrt(2/3) at |x_i| = 1/sqrt(3)
        f = np.eye(3)
        val = minimum_excitation(f)
        assert val == pytest.approx(np.sqrt(2.0 / 3.0), rel=0.02)

    def test_matches_brute_force_on_random_signals(self):
        rng = np.random.default_rng(123)
        for _ in range(10):
            f = rng.normal(size=(40, 3))
            mine = minimum_excitation(f)
            oracle = brute_force_excitation(f, 100_000)
            assert mine == pytest.approx(oracle, rel=0.02, abs=1e-9)

    def test_axis_directions_are_feasible(self):
        rng = np.random.default_rng(7)
        f = rng.normal(size=(60, 3))
        axis_bound = min(
            np.max(np.linalg.norm(np.cross(f, e), axis=1)) for e in np.eye(3)
        )
        assert minimum_excitation(f) <= axis_bound + 1e-12

    def test_rotation_invariance(self):
        rng = np.random.default_rng(21)
        f = rng.normal(size=(50, 3))
        base = minimum_excitation(f)
        for _ in range(5):
            R = exp_rotation(rng.normal(size=3))
            rotated = f @ R.T
            assert minimum_excitation(rotated) == pytest.approx(base, rel=0.02)

    def test_empty_interval_rejected(self):
        with pytest.raises(ValueError):
            minimum_excitation(np.zeros((5, 3)), interval=(2, 2))


class TestExcitationReport:
    def test_stationary_is_all_zero(self):
        cfg = TrajectoryConfig(sigma_alpha=0.0, sigma_omega=0.0, duration=0.5, seed=0)
        traj = generate_brownian_trajectory(cfg)
        rep = excitation_report(traj)
        assert all(v == pytest.approx(0.0, abs=1e-12) for v in rep)
        assert not rep.all_positive()

    def test_brownian_trajectory_fully_excited(self):
        traj = generate_brownian_trajectory(TrajectoryConfig(duration=5.0, seed=2))
        rep = excitation_report(traj)
        assert rep.all_positive()

    def test_planar_rotation_has_zero_angular_excitation(self):
        cfg = TrajectoryConfig(sigma_alpha=0.05, sigma_omega=0.0, duration=1.0, seed=3)
        traj = generate_brownian_trajectory(cfg, initial_omega=(0.0, 0.0, 0.3))
        rep = excitation_report(traj)
        assert rep.angular_velocity == pytest.approx(0.0, abs=1e-9)

    def test_too_short_rejected(self):
        traj = generate_brownian_trajectory(TrajectoryConfig(duration=1.0, seed=3))
        short = type(traj)(
            t=traj.t[:3].copy(),
            w=traj.w[:3].copy(),
            rot=traj.rot[:3].copy(),
            pos=traj.pos[:3].copy(),
            vel=traj.vel[:3].copy(),
            alpha_s=traj.alpha_s[:3].copy(),
            omega_s=traj.omega_s[:3].copy(),
            alpha_b=traj.alpha_b[:3].copy(),
            omega_b=traj.omega_b[:3].copy(),
            imu_rate=traj.imu_rate,
            path_length=0.0,
        )
        with pytest.raises(ValueError):
            excitation_report(short)


class TestTrajectoryCsv:
    def test_round_trip(self, tmp_path):
        traj = generate_brownian_trajectory(TrajectoryConfig(duration=1.0, seed=8))
        path = tmp_path / "traj.csv"
        save_trajectory_csv(traj, path)
        loaded = load_trajectory_csv(path)
        np.testing.assert_array_equal(loaded.t, traj.t)
        np.testing.assert_array_equal(loaded.pos, traj.pos)
        np.testing.assert_array_equal(loaded.vel, traj.vel)
        np.testing.assert_array_equal(loaded.alpha_s, traj.alpha_s)
        np.testing.assert_array_equal(loaded.omega_s, traj.omega_s)
        assert loaded.imu_rate == pytest.approx(traj.imu_rate)
        assert loaded.path_length == pytest.approx(traj.path_length)
