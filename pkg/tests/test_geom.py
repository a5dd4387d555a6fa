import numpy as np
import pytest

from viomc.geom import (
    AlignmentError,
    CameraIntrinsics,
    PixelPoint,
    Pose,
    bearing,
    exp_rotation,
    is_rotation,
    log_rotation,
    orthonormalize_rotation,
    project,
    right_jacobian,
    umeyama_align,
)

NOMINAL_K = CameraIntrinsics(275.0, 275.0, 320.0, 240.0, 640, 480)


class TestExpLog:
    def test_exp_zero_is_identity(self):
        np.testing.assert_allclose(exp_rotation([0, 0, 0]), np.eye(3))

    def test_quarter_turn_about_z(self):
        R = exp_rotation([0, 0, np.pi / 2])
        np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    def test_log_identity(self):
        np.testing.assert_allclose(log_rotation(np.eye(3)), [0, 0, 0])

    def test_round_trip_small(self):
        w = np.array([0.1, 0.2, 0.3])
        np.testing.assert_allclose(log_rotation(exp_rotation(w)), w, atol=1e-9)

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            w = direction * rng.uniform(0.0, np.pi - 1e-3)
            R = exp_rotation(w)
            assert is_rotation(R, tol=1e-9)
            np.testing.assert_allclose(log_rotation(R), w, atol=1e-9)

    def test_log_at_pi_sign_convention(self):
        w = log_rotation(exp_rotation([np.pi, 0, 0]))
        np.testing.assert_allclose(w, [np.pi, 0, 0], atol=1e-7)
        # Axis with a leading negative component flips to the convention.
        w2 = log_rotation(exp_rotation(np.array([-np.pi, 0.0, 0.0])))
        np.testing.assert_allclose(w2, [np.pi, 0, 0], atol=1e-7)

    def test_log_rejects_non_orthonormal(self):
        bad = np.eye(3) * 1.01
        with pytest.raises(ValueError):
            log_rotation(bad)

    def test_right_jacobian_definition(self):
        # exp(w + d) ~ exp(w) exp(Jr(w) d)
        rng = np.random.default_rng(5)
        for _ in range(20):
            w = rng.normal(size=3)
            d = rng.normal(size=3) * 1e-6
            lhs = exp_rotation(w + d)
            rhs = exp_rotation(w) @ exp_rotation(right_jacobian(w) @ d)
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_orthonormalize(self):
        rng = np.random.default_rng(3)
        R = exp_rotation(rng.normal(size=3))
        noisy = R + 1e-6 * rng.normal(size=(3, 3))
        fixed = orthonormalize_rotation(noisy)
        assert is_rotation(fixed, tol=1e-12)
        np.testing.assert_allclose(fixed, R, atol=1e-5)


class TestPinhole:
    def test_optical_axis_maps_to_principal_point(self):
        assert project([0, 0, 1], NOMINAL_K) == PixelPoint(320.0, 240.0)

    def test_unit_offset(self):
        # u = 275 * 1/1 + 320
        assert project([1, 0, 1], NOMINAL_K) == PixelPoint(595.0, 240.0)

    def test_behind_camera_is_not_visible(self):
        assert project([0, 0, -1.0], NOMINAL_K) is None
        assert project([0.5, 0.5, 0.0], NOMINAL_K) is None

    def test_bearing_center(self):
        np.testing.assert_allclose(bearing((320.0, 240.0), NOMINAL_K), [0, 0, 1])

    def test_bearing_inverts_project(self):
        b = bearing((595.0, 240.0), NOMINAL_K)
        np.testing.assert_allclose(b, np.array([1, 0, 1]) / np.sqrt(2), atol=1e-12)

    @pytest.mark.parametrize("z", [0.5, 1.0, 10.0])
    def test_project_bearing_round_trip(self, z):
        rng = np.random.default_rng(17)
        for _ in range(100):
            px = rng.uniform([0, 0], [NOMINAL_K.width, NOMINAL_K.height])
            p = project(bearing(px, NOMINAL_K) * z, NOMINAL_K)
            np.testing.assert_allclose([p.u, p.v], px, atol=1e-9)


class TestPose:
    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 2.0, np.zeros(3))

    def test_compose_inverse(self):
        rng = np.random.default_rng(2)
        a = Pose(exp_rotation(rng.normal(size=3)), rng.normal(size=3))
        ident = a.compose(a.inverse())
        np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(ident.translation, 0, atol=1e-12)


class TestUmeyama:
    def _random_path(self, rng, n=40):
        return np.cumsum(rng.normal(size=(n, 3)), axis=0)

    def test_identical_sequences(self):
        rng = np.random.default_rng(0)
        X = self._random_path(rng)
        g = umeyama_align(X, X)
        np.testing.assert_allclose(g.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(g.translation, 0, atol=1e-9)

    def test_pure_offset(self):
        rng = np.random.default_rng(1)
        gt = self._random_path(rng)
        est = gt + np.array([1.0, 2.0, 3.0])
        g = umeyama_align(est, gt)
        np.testing.assert_allclose(g.translation, [-1, -2, -3], atol=1e-9)
        np.testing.assert_allclose(g.transform(est), gt, atol=1e-9)

    def test_recovers_rotation(self):
        rng = np.random.default_rng(4)
        gt = self._random_path(rng)
        R = exp_rotation([0, 0, np.deg2rad(30)])
        est = gt @ R.T
        g = umeyama_align(est, gt)
        np.testing.assert_allclose(g.rotation, R.T, atol=1e-9)
        residual = np.linalg.norm(g.transform(est) - gt)
        assert residual < 1e-9

    def test_alignment_never_increases_rms(self):
        rng = np.random.default_rng(9)
        gt = self._random_path(rng)
        est = gt + rng.normal(scale=0.3, size=gt.shape)
        g = umeyama_align(est, gt)
        rms_before = np.sqrt(np.mean(np.sum((est - gt) ** 2, axis=1)))
        rms_after = np.sqrt(np.mean(np.sum((g.transform(est) - gt) ** 2, axis=1)))
        assert rms_after <= rms_before + 1e-12

    def test_degenerate_collinear(self):
        line = np.outer(np.arange(10.0), [1.0, 0.0, 0.0])
        with pytest.raises(AlignmentError):
            umeyama_align(line, line)

    def test_too_short(self):
        with pytest.raises(AlignmentError):
            umeyama_align(np.zeros((2, 3)), np.zeros((2, 3)))
