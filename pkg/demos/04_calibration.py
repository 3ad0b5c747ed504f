"""Camera and laser-plane calibration from a trihedral pattern.

Synthetic correspondences: pattern points P (3D + pixels) on three
orthogonal planes, laser points Q (3D only) where the light sheet hits
the pattern. The projection matrix comes from a normalized direct linear
transform and splits into intrinsics and pose; the laser plane is a
total-least-squares fit. Writes the recovered rig parameter file.
"""

from pathlib import Path

import numpy as np

import railgauge as rg
from railgauge import fileio
from railgauge.calibration import CalibrationSet

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# ground truth rig
m_int = np.array([[1800.0, 1.2, 14.0], [0.0, 1760.0, -9.0], [0.0, 0.0, 1.0]])
cam_true = rg.camera_looking_at(m_int, [-0.25, -0.15, 0.15], [0.33, -0.48, -0.08])
plane_true = rg.LaserPlane(1.0, 0.05, -0.02, -0.12)

# trihedral pattern close to the rail position (wide angular coverage
# keeps focal length and depth decorrelated)
rng = np.random.default_rng(0)
corner = np.array([0.05, -0.75, -0.35])
points = []
for a, b in [(1, 2), (0, 2), (0, 1)]:
    for _ in range(5):
        p = corner.copy()
        p[a] += rng.uniform(0.03, 0.5)
        p[b] += rng.uniform(0.03, 0.5)
        points.append(p)
points = np.array(points)
pixels = np.array([rg.project(cam_true, p)[0] for p in points])
pixels += rng.normal(0.0, 0.3, pixels.shape)  # 0.3 px measurement noise

# laser intersections with two pattern planes
q_pts = []
for y in (-0.65, -0.55, -0.45):
    x = -(plane_true.b * y + plane_true.c * corner[2] + plane_true.d) / plane_true.a
    q_pts.append([x, y, corner[2]])
for z in (-0.25, -0.10, 0.05):
    x = -(plane_true.b * corner[1] + plane_true.c * z + plane_true.d) / plane_true.a
    q_pts.append([x, corner[1], z])

cal_set = CalibrationSet(points, pixels, np.array(q_pts))
result = rg.calibrate_camera(cal_set, refine=True)
plane_fit, plane_rms = rg.fit_laser_plane(cal_set.laser_points)

print(f"reprojection RMS: {result.reprojection_rms:.3f} px (quality ok: {result.quality_ok})")
print(f"camera position error: {np.linalg.norm(result.camera.u_cam - cam_true.u_cam) * 1e3:.3f} mm")
print(f"rotation error: {np.abs(result.camera.a_cam - cam_true.a_cam).max():.2e}")
n_err = np.abs(np.array([plane_fit.a, plane_fit.b, plane_fit.c]) - plane_true.normal).max()
print(f"laser plane: normal error {n_err:.2e}, point RMS {plane_rms:.2e} m")

fileio.save_rig(out / "rig_right.txt", result.camera, plane_fit, side="right")
print(f"rig file written to {out / 'rig_right.txt'}")
