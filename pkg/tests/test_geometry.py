import math

import numpy as np
import numpy.testing as npt
import pytest

from se3bc import geometry as geo


def random_axis_angle(rng, max_angle=math.pi - 1e-3):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0.0, max_angle)


def random_rotation(rng, max_angle=math.pi - 1e-3):
    return geo.exp_so3(random_axis_angle(rng, max_angle))


def random_se3(rng, max_angle=math.pi - 1e-3, trans_scale=1.0):
    return geo.se3(random_rotation(rng, max_angle), rng.normal(scale=trans_scale, size=3))


def series_exp(theta, terms=20):
    # Independent oracle: truncated matrix-exponential power series.
    k = geo.skew(theta)
    out = np.eye(3)
    term = np.eye(3)
    for n in range(1, terms + 1):
        term = term @ k / n
        out = out + term
    return out


class TestExpLog:
    def test_zero_rotation_is_identity(self):
        npt.assert_array_equal(geo.exp_so3(np.zeros(3)), np.eye(3))

    def test_half_turn_about_x(self):
        npt.assert_allclose(geo.exp_so3([math.pi, 0, 0]), np.diag([1.0, -1.0, -1.0]), atol=1e-15)

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            theta = random_axis_angle(rng, 1.3)
            theta *= 1.3 / max(np.linalg.norm(theta), 1e-12)
            npt.assert_allclose(geo.exp_so3(theta), series_exp(theta), atol=1e-12)

    def test_log_identity(self):
        npt.assert_array_equal(geo.log_so3(np.eye(3)), np.zeros(3))

    def test_log_half_turn_canonical_sign(self):
        npt.assert_allclose(geo.log_so3(np.diag([1.0, -1.0, -1.0])), [math.pi, 0, 0], atol=1e-12)

    def test_round_trip_1000(self):
        rng = np.random.default_rng(123)
        worst = 0.0
        for _ in range(1000):
            theta = random_axis_angle(rng)
            back = geo.log_so3(geo.exp_so3(theta))
            worst = max(worst, float(np.linalg.norm(back - theta)))
        assert worst < 1e-9

    def test_small_angle_round_trip(self):
        for mag in [0.0, 1e-12, 1e-9, 1e-7, 1e-5]:
            theta = np.array([mag, 0.0, 0.0])
            npt.assert_allclose(geo.log_so3(geo.exp_so3(theta)), theta, atol=1e-15)

    def test_exact_pi_all_axes(self):
        for axis in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
            theta = math.pi * np.array(axis, dtype=float)
            back = geo.log_so3(geo.exp_so3(theta))
            npt.assert_allclose(back, theta, atol=1e-9)

    def test_pi_sign_convention_first_nonzero_positive(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            back = geo.log_so3(geo.exp_so3(math.pi * axis))
            nz = back[np.abs(back) > 1e-12]
            assert nz[0] > 0
            # same rotation either way round
            npt.assert_allclose(geo.exp_so3(back), geo.exp_so3(math.pi * axis), atol=1e-9)

    def test_rejects_non_rotation(self):
        with pytest.raises(geo.InvalidRotationError):
            geo.log_so3(np.eye(3) * 1.01)
        with pytest.raises(geo.InvalidRotationError):
            geo.log_so3(np.diag([1.0, 1.0, -1.0]))  # det = -1

    def test_rejects_non_finite(self):
        with pytest.raises(geo.GeometryError):
            geo.exp_so3([np.nan, 0, 0])


class TestSE3:
    def test_pose_round_trip_identity(self):
        npt.assert_array_equal(geo.pose_to_se3(np.zeros(6)), np.eye(4))

    def test_pure_translation(self):
        t = geo.pose_to_se3([1, 2, 3, 0, 0, 0])
        expect = np.eye(4)
        expect[:3, 3] = [1, 2, 3]
        npt.assert_array_equal(t, expect)

    def test_pose_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            pose = np.concatenate([rng.normal(size=3), random_axis_angle(rng)])
            npt.assert_allclose(geo.se3_to_pose(geo.pose_to_se3(pose)), pose, atol=1e-9)

    def test_compose_identity(self):
        rng = np.random.default_rng(2)
        t = random_se3(rng)
        npt.assert_allclose(geo.se3_compose(t, np.eye(4)), t, atol=0)

    def test_compose_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            t = random_se3(rng)
            npt.assert_allclose(geo.se3_compose(t, geo.se3_inverse(t)), np.eye(4), atol=1e-12)
            npt.assert_allclose(geo.se3_compose(geo.se3_inverse(t), t), np.eye(4), atol=1e-12)

    def test_compose_matches_matmul_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a, b = random_se3(rng), random_se3(rng)
            npt.assert_allclose(geo.se3_compose(a, b), np.asarray(a) @ np.asarray(b), atol=1e-12)

    def test_compose_associative(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a, b, c = (random_se3(rng) for _ in range(3))
            npt.assert_allclose(
                geo.se3_compose(geo.se3_compose(a, b), c),
                geo.se3_compose(a, geo.se3_compose(b, c)),
                atol=1e-12,
            )

    def test_inverse_identity(self):
        npt.assert_array_equal(geo.se3_inverse(np.eye(4)), np.eye(4))

    def test_inverse_pure_translation(self):
        t = geo.pose_to_se3([1, 0, 0, 0, 0, 0])
        npt.assert_allclose(geo.se3_inverse(t), geo.pose_to_se3([-1, 0, 0, 0, 0, 0]), atol=0)

    def test_manifold_by_construction(self):
        # pose_to_se3 output is always a valid transform, with no
        # re-orthogonalization anywhere on the path.
        rng = np.random.default_rng(8)
        for _ in range(200):
            pose = np.concatenate([rng.normal(size=3), random_axis_angle(rng)])
            geo.check_se3(geo.pose_to_se3(pose), atol=1e-9)


class TestRelativeAction:
    def test_same_pose_gives_zero(self):
        rng = np.random.default_rng(9)
        t = random_se3(rng)
        a = geo.relative_action(t, t)
        npt.assert_allclose(a.dp, np.zeros(3), atol=1e-12)
        npt.assert_allclose(a.dtheta, np.zeros(3), atol=1e-12)
        assert not a.chart_violation

    def test_pure_translation_from_identity(self):
        t_b = geo.pose_to_se3([0.1, 0, 0, 0, 0, 0])
        a = geo.relative_action(np.eye(4), t_b)
        npt.assert_allclose(a.dp, [0.1, 0, 0], atol=0)
        npt.assert_array_equal(a.dtheta, np.zeros(3))

    def test_apply_zero_action(self):
        rng = np.random.default_rng(10)
        t = random_se3(rng)
        npt.assert_allclose(geo.apply_action(t, geo.RelativeAction.zero()), t, atol=0)

    def test_apply_translation_from_identity(self):
        a = geo.RelativeAction(np.array([0, 0, 0.05]), np.zeros(3))
        npt.assert_allclose(
            geo.apply_action(np.eye(4), a), geo.pose_to_se3([0, 0, 0.05, 0, 0, 0]), atol=0
        )

    def test_recovery_round_trip_1000(self):
        rng = np.random.default_rng(12)
        worst = 0.0
        for _ in range(1000):
            t_a, t_b = random_se3(rng), random_se3(rng)
            a = geo.relative_action(t_a, t_b)
            worst = max(worst, float(np.max(np.abs(geo.apply_action(t_a, a) - t_b))))
        assert worst < 1e-9

    def test_chart_violation_flag(self):
        t_b = geo.se3(geo.exp_so3([math.pi, 0, 0]), np.zeros(3))
        assert geo.relative_action(np.eye(4), t_b).chart_violation
        t_c = geo.se3(geo.exp_so3([1.0, 0, 0]), np.zeros(3))
        assert not geo.relative_action(np.eye(4), t_c).chart_violation

    def test_chained_reconstruction_h64(self):
        rng = np.random.default_rng(13)
        poses = [random_se3(rng, max_angle=1.0)]
        for _ in range(64):
            step = np.concatenate([rng.normal(scale=0.02, size=3), rng.normal(scale=0.05, size=3)])
            poses.append(poses[-1] @ geo.pose_to_se3(step))
        actions = [geo.relative_action(poses[h - 1], poses[h]) for h in range(1, 65)]
        cur = poses[0]
        for a in actions:
            cur = geo.apply_action(cur, a)
        assert np.max(np.abs(cur - poses[-1])) < 1e-8

    def test_gripper_range_checked(self):
        with pytest.raises(geo.GeometryError):
            geo.RelativeAction(np.zeros(3), np.zeros(3), gripper=1.5)


class TestCameraFrame:
    def test_identity_extrinsic(self):
        rng = np.random.default_rng(14)
        t = random_se3(rng)
        npt.assert_allclose(geo.world_to_camera(t, np.eye(4)), t, atol=0)

    def test_world_pose_equal_to_extrinsic(self):
        rng = np.random.default_rng(15)
        ext = random_se3(rng)
        npt.assert_allclose(geo.world_to_camera(ext, ext), np.eye(4), atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(16)
        for _ in range(100):
            t, ext = random_se3(rng), random_se3(rng)
            back = geo.camera_to_world(geo.world_to_camera(t, ext), ext)
            npt.assert_allclose(back, t, atol=1e-12)

    def test_alignment_identity(self):
        # The camera-frame readout is exactly g @ T with g = extrinsic^-1.
        rng = np.random.default_rng(17)
        for _ in range(100):
            t, ext = random_se3(rng), random_se3(rng)
            npt.assert_allclose(
                geo.world_to_camera(t, ext), geo.se3_inverse(ext) @ t, atol=1e-12
            )


class TestPinhole:
    INTR = geo.CameraIntrinsic(fx=100.0, fy=100.0, cx=0.0, cy=0.0, width=200, height=200)

    def test_optical_axis(self):
        uv, out = geo.project_pinhole([0, 0, 1.0], self.INTR)
        npt.assert_array_equal(uv, [0.0, 0.0])
        assert not out

    def test_unit_slope_ray(self):
        uv, _ = geo.project_pinhole([1.0, 0, 1.0], self.INTR)
        npt.assert_array_equal(uv, [100.0, 0.0])

    def test_matches_division_oracle(self):
        rng = np.random.default_rng(18)
        intr = geo.CameraIntrinsic(fx=85.3, fy=91.7, cx=64.0, cy=48.0, width=128, height=96)
        for _ in range(200):
            p = np.array([rng.normal(), rng.normal(), rng.uniform(0.1, 3.0)])
            uv, _ = geo.project_pinhole(p, intr)
            expect = np.array([85.3 * p[0] / p[2] + 64.0, 91.7 * p[1] / p[2] + 48.0])
            npt.assert_allclose(uv, expect, atol=1e-12)

    def test_out_of_frame_flag(self):
        uv, out = geo.project_pinhole([10.0, 0, 1.0], self.INTR)
        assert out
        npt.assert_array_equal(uv, [1000.0, 0.0])  # unclamped

    def test_behind_camera(self):
        with pytest.raises(geo.BehindCameraError):
            geo.project_pinhole([0, 0, -0.5], self.INTR)
        with pytest.raises(geo.BehindCameraError):
            geo.project_pinhole([0, 0, 0.0], self.INTR)

    def test_intrinsic_validation(self):
        with pytest.raises(geo.GeometryError):
            geo.CameraIntrinsic(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
        with pytest.raises(geo.GeometryError):
            geo.CameraIntrinsic(fx=1, fy=1, cx=20, cy=0, width=10, height=10)


class TestRotationConvert:
    def test_zero_axis_angle_to_quat(self):
        npt.assert_array_equal(
            geo.rotation_convert(np.zeros(3), "axis_angle", "quaternion"), [1, 0, 0, 0]
        )

    def test_quarter_turn_closed_form(self):
        q = geo.rotation_convert([math.pi / 2, 0, 0], "axis_angle", "quaternion")
        npt.assert_allclose(q, [math.cos(math.pi / 4), math.sin(math.pi / 4), 0, 0], atol=1e-15)

    def test_all_pairwise_round_trips(self):
        rng = np.random.default_rng(19)
        charts = ["axis_angle", "quaternion", "euler"]
        for _ in range(100):
            # keep pitch clear of the gimbal band
            r = geo.exp_so3(random_axis_angle(rng, 1.2))
            for src in charts:
                for dst in charts:
                    v = geo.rotation_convert(r, "matrix", src)
                    w = geo.rotation_convert(v, src, dst)
                    back = geo.rotation_convert(w, dst, "matrix")
                    npt.assert_allclose(back, r, atol=1e-9)

    def test_quaternion_canonical_sign(self):
        rng = np.random.default_rng(20)
        for _ in range(100):
            q = geo.rotation_convert(random_rotation(rng), "matrix", "quaternion")
            assert q[0] >= 0
            npt.assert_allclose(np.linalg.norm(q), 1.0, atol=1e-12)

    def test_euler_pitch_range(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            e = geo.rotation_convert(geo.exp_so3(random_axis_angle(rng, 1.2)), "matrix", "euler")
            assert -math.pi / 2 < e[1] < math.pi / 2

    def test_gimbal_lock_rejected(self):
        r = geo.euler_to_matrix([0.3, math.pi / 2 - 1e-9, 0.2])
        with pytest.raises(geo.GimbalLockError):
            geo.matrix_to_euler(r)

    def test_unknown_chart(self):
        with pytest.raises(geo.GeometryError):
            geo.rotation_convert(np.zeros(3), "axis_angle", "cayley")
