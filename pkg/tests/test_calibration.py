import numpy as np
import pytest

from railgauge.calibration import (
    CalibrationSet,
    calibrate_camera,
    decompose_projection_matrix,
    estimate_projection_matrix,
    fit_laser_plane,
)
from railgauge.errors import CalibrationQualityWarning, DegenerateConfigurationError
from railgauge.vision import CameraModel, LaserPlane, camera_looking_at, project


# near-field setup: trihedral at roughly the rail distance, camera close
# enough for wide angular coverage (depth and focal length decorrelate)
_EXTENT = 0.5
_ORIGIN = np.array([0.05, -0.75, -0.35])
_CAM_POS = np.array([-0.25, -0.15, 0.15])


def reference_camera():
    m = np.array([[1800.0, 1.2, 14.0], [0.0, 1760.0, -9.0], [0.0, 0.0, 1.0]])
    aimed = camera_looking_at(m, _CAM_POS, _ORIGIN + 0.55 * _EXTENT)
    return CameraModel(m, aimed.u_cam, aimed.euler_cam)


def trihedral_points(n_per_plane=5, rng=None, extent=_EXTENT, origin=_ORIGIN):
    """Points on three mutually orthogonal planes meeting at `origin`."""
    origin = np.asarray(origin)
    pts = []
    for idx, (a, b) in enumerate([(1, 2), (0, 2), (0, 1)]):
        if rng is None:
            grid = np.linspace(0.05, extent, n_per_plane)
            coords = np.column_stack([grid, np.roll(grid, 2 + idx)])
        else:
            coords = rng.uniform(0.03, extent, (n_per_plane, 2))
        for u, v in coords:
            p = origin.copy()
            p[a] += u
            p[b] += v
            pts.append(p)
    return np.array(pts)


def synthetic_set(cam, rng=None, sigma_px=0.0, n_per_plane=5):
    points = trihedral_points(n_per_plane, rng=rng)
    pixels = np.array([project(cam, p)[0] for p in points])
    if sigma_px > 0.0:
        pixels = pixels + rng.normal(0.0, sigma_px, pixels.shape)
    plane = LaserPlane(1.0, 0.05, -0.02, -0.12)
    # laser points: intersections of the light sheet with two pattern planes
    q = []
    for y in (-0.65, -0.55, -0.45):
        x = -(plane.b * y + plane.c * _ORIGIN[2] + plane.d) / plane.a
        q.append([x, y, _ORIGIN[2]])
    for z in (-0.25, -0.10, 0.05):
        x = -(plane.b * _ORIGIN[1] + plane.c * z + plane.d) / plane.a
        q.append([x, _ORIGIN[1], z])
    return CalibrationSet(points, pixels, np.array(q)), plane


class TestCameraCalibration:
    def test_noiseless_recovery(self):
        cam = reference_camera()
        cal_set, _ = synthetic_set(cam)
        result = calibrate_camera(cal_set)
        est = result.camera
        assert result.reprojection_rms < 1e-8
        assert np.abs(est.m_int - cam.m_int).max() / np.abs(cam.m_int).max() < 1e-8
        assert np.abs(est.u_cam - cam.u_cam).max() < 1e-8
        assert np.abs(est.a_cam - cam.a_cam).max() < 1e-8
        assert result.quality_ok

    def test_projection_matrix_sign_and_scale(self):
        cam = reference_camera()
        cal_set, _ = synthetic_set(cam)
        p = estimate_projection_matrix(cal_set.pattern_points, cal_set.pattern_pixels)
        depths = np.hstack([cal_set.pattern_points, np.ones((len(cal_set.pattern_points), 1))]) @ p[2]
        assert np.all(depths > 0)
        k, r, u = decompose_projection_matrix(p)
        assert k[2, 2] == pytest.approx(1.0)
        assert np.all(np.diag(k) > 0)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)

    def test_too_few_points(self):
        cam = reference_camera()
        pts = trihedral_points()[:5]
        pixels = np.array([project(cam, p)[0] for p in pts])
        with pytest.raises(DegenerateConfigurationError):
            calibrate_camera(CalibrationSet(pts, pixels, np.zeros((0, 3))))

    def test_coplanar_points_degenerate(self):
        cam = reference_camera()
        rng = np.random.default_rng(2)
        pts = np.column_stack(
            [rng.uniform(0.0, 0.4, 12), rng.uniform(-0.7, -0.4, 12), np.full(12, -0.15)]
        )
        pixels = np.array([project(cam, p)[0] for p in pts])
        with pytest.raises(DegenerateConfigurationError):
            calibrate_camera(CalibrationSet(pts, pixels, np.zeros((0, 3))))

    def test_noise_monte_carlo_translation(self):
        cam = reference_camera()
        rng = np.random.default_rng(4)
        errs = []
        for _ in range(100):
            cal_set, _ = synthetic_set(cam, rng=rng, sigma_px=0.3, n_per_plane=15)
            result = calibrate_camera(cal_set)
            errs.append(np.linalg.norm(result.camera.u_cam - cam.u_cam))
        errs = np.array(errs)
        assert 3.0 * errs.std() < 0.5e-3
        assert errs.mean() < 0.5e-3

    def test_reported_rms_is_self_consistent(self):
        cam = reference_camera()
        rng = np.random.default_rng(6)
        cal_set, _ = synthetic_set(cam, rng=rng, sigma_px=0.4)
        result = calibrate_camera(cal_set)
        err2 = []
        for u, px in zip(cal_set.pattern_points, cal_set.pattern_pixels):
            n, _ = project(result.camera, u)
            err2.append(np.sum((n - px) ** 2))
        assert result.reprojection_rms == pytest.approx(np.sqrt(np.mean(err2)), rel=1e-12)

    def test_pixel_origin_shift_invariance(self):
        """Hartley normalization: conditioning independent of pixel offsets."""
        cam = reference_camera()
        cal_set, _ = synthetic_set(cam)
        shifted = CalibrationSet(
            cal_set.pattern_points, cal_set.pattern_pixels + 1000.0, cal_set.laser_points
        )
        res0 = calibrate_camera(cal_set)
        res1 = calibrate_camera(shifted)
        assert res1.reprojection_rms < 1e-7
        # the principal point absorbs the shift; pose is unchanged
        assert np.abs(res1.camera.m_int[:2, 2] - res0.camera.m_int[:2, 2] - 1000.0).max() < 1e-6
        assert np.abs(res1.camera.u_cam - res0.camera.u_cam).max() < 1e-8

    def test_quality_warning(self):
        cam = reference_camera()
        rng = np.random.default_rng(8)
        cal_set, _ = synthetic_set(cam, rng=rng, sigma_px=25.0)
        with pytest.warns(CalibrationQualityWarning):
            result = calibrate_camera(cal_set, rms_threshold=2.0)
        assert not result.quality_ok

    def test_refinement_not_worse(self):
        cam = reference_camera()
        rng = np.random.default_rng(10)
        cal_set, _ = synthetic_set(cam, rng=rng, sigma_px=0.5)
        plain = calibrate_camera(cal_set)
        refined = calibrate_camera(cal_set, refine=True)
        assert refined.reprojection_rms <= plain.reprojection_rms * (1.0 + 1e-9)


class TestLaserPlaneFit:
    def test_axis_plane(self):
        pts = np.array([[0.0, 0.0, 0.5], [1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [1.0, 1.0, 0.5]])
        plane, rms = fit_laser_plane(pts)
        sign = np.sign(plane.c)
        assert np.allclose(sign * np.array([plane.a, plane.b, plane.c]), [0, 0, 1], atol=1e-12)
        assert sign * plane.d == pytest.approx(-0.5, abs=1e-12)
        assert rms < 1e-12

    def test_random_plane_exact(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            normal = rng.normal(size=3)
            normal /= np.linalg.norm(normal)
            d = rng.uniform(-1.0, 1.0)
            e1 = np.cross(normal, [1.0, 0.3, -0.2])
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(normal, e1)
            uv = rng.uniform(-1.0, 1.0, (8, 2))
            pts = -d * normal + uv[:, [0]] * e1 + uv[:, [1]] * e2
            plane, rms = fit_laser_plane(pts)
            n_est = np.array([plane.a, plane.b, plane.c])
            if n_est @ normal < 0:
                n_est, d_est = -n_est, -plane.d
            else:
                d_est = plane.d
            assert np.abs(n_est - normal).max() < 1e-12
            assert abs(d_est - d) < 1e-12
            assert rms < 1e-12

    def test_noise_normal_accuracy(self):
        rng = np.random.default_rng(14)
        normal = np.array([1.0, 0.0, 0.0])
        angles = []
        for _ in range(100):
            y, z = rng.uniform(-0.2, 0.2, (2, 20))
            pts = np.column_stack([np.zeros(20), y, z]) + rng.normal(0.0, 1e-4, (20, 3))
            plane, _ = fit_laser_plane(pts)
            n_est = np.array([plane.a, plane.b, plane.c])
            n_est *= np.sign(n_est @ normal)
            angles.append(np.arccos(np.clip(n_est @ normal, -1.0, 1.0)))
        assert np.degrees(np.mean(angles)) < 0.1

    def test_collinear_rejected(self):
        pts = np.column_stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)])
        with pytest.raises(DegenerateConfigurationError):
            fit_laser_plane(pts)

    def test_too_few(self):
        with pytest.raises(DegenerateConfigurationError):
            fit_laser_plane(np.zeros((2, 3)))

    def test_unit_normal_and_orthogonal_residuals(self):
        rng = np.random.default_rng(16)
        pts = rng.uniform(-1.0, 1.0, (30, 3))
        pts[:, 2] = 0.3 * pts[:, 0] - 0.2 * pts[:, 1] + rng.normal(0.0, 0.01, 30)
        plane, _ = fit_laser_plane(pts)
        assert np.hypot(np.hypot(plane.a, plane.b), plane.c) == pytest.approx(1.0, abs=1e-12)
        # residuals are extremal: shifting along the normal cannot reduce RMS
        res = plane.residual(pts)
        assert abs(res.mean()) < 1e-12
