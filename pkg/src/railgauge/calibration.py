"""Camera and laser-plane calibration from trihedral-pattern points.

Inputs are correspondences measured in the TGMS frame: pattern points P
with known 3D position and pixel position, and laser points Q with known
3D position only (they lie on the light sheet where it crosses the
pattern). The camera projection matrix is estimated by a homogeneous
direct linear transform with Hartley-style isotropic normalization of
both point sets, then decomposed (RQ) into intrinsics and pose. The
laser plane is a total-least-squares fit (smallest singular vector of
the centered Q cloud).

An optional Gauss-Newton refinement polishes the reprojection residual;
the DLT estimate is already exact on noiseless data.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateConfigurationError, CalibrationQualityWarning
from .frames import euler_zyx_from_matrix
from .vision import CameraModel, LaserPlane, project

_RANK_TOL = 1e-10


@dataclass
class CalibrationSet:
    """Pattern correspondences (u_tgms, pixel) and laser points (u_tgms)."""

    pattern_points: np.ndarray  # (n, 3)
    pattern_pixels: np.ndarray  # (n, 2)
    laser_points: np.ndarray  # (m, 3)

    def __post_init__(self):
        self.pattern_points = np.atleast_2d(np.asarray(self.pattern_points, dtype=float))
        self.pattern_pixels = np.atleast_2d(np.asarray(self.pattern_pixels, dtype=float))
        self.laser_points = np.atleast_2d(np.asarray(self.laser_points, dtype=float))
        if len(self.pattern_points) != len(self.pattern_pixels):
            raise ValueError("pattern points and pixels must pair up")


@dataclass
class CameraCalibration:
    camera: CameraModel
    reprojection_rms: float  # px
    quality_ok: bool


def _normalize_3d(points):
    centroid = points.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((points - centroid) ** 2, axis=1)))
    if scale == 0.0:
        raise DegenerateConfigurationError("3D points are coincident")
    s = np.sqrt(3.0) / scale
    t = np.eye(4)
    t[:3, :3] *= s
    t[:3, 3] = -s * centroid
    return t


def _normalize_2d(points):
    centroid = points.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((points - centroid) ** 2, axis=1)))
    if scale == 0.0:
        raise DegenerateConfigurationError("pixels are coincident")
    s = np.sqrt(2.0) / scale
    t = np.eye(3)
    t[:2, :2] *= s
    t[:2, 2] = -s * centroid
    return t


def estimate_projection_matrix(points, pixels):
    """Normalized DLT estimate of the 3x4 projection matrix."""
    n = len(points)
    if n < 6:
        raise DegenerateConfigurationError(f"need >= 6 correspondences, got {n}")
    t3 = _normalize_3d(points)
    t2 = _normalize_2d(pixels)
    xh = np.hstack([points, np.ones((n, 1))]) @ t3.T
    uv = np.hstack([pixels, np.ones((n, 1))]) @ t2.T
    a = np.zeros((2 * n, 12))
    a[0::2, 0:4] = xh
    a[0::2, 8:12] = -uv[:, [0]] * xh
    a[1::2, 4:8] = xh
    a[1::2, 8:12] = -uv[:, [1]] * xh
    _, sv, vt = np.linalg.svd(a)
    # rank must be 11: coplanar P points leave a 2D null space
    if sv[10] < _RANK_TOL * sv[0]:
        raise DegenerateConfigurationError("correspondences are degenerate (coplanar points?)")
    p_norm = vt[-1].reshape(3, 4)
    p = np.linalg.inv(t2) @ p_norm @ t3
    # fix the overall sign so depths come out positive
    depths = np.hstack([points, np.ones((n, 1))]) @ p[2]
    if np.median(depths) < 0:
        p = -p
    return p / np.linalg.norm(p[2, :3])


def decompose_projection_matrix(p):
    """Split P into (m_int, a_cam, u_cam) with Rz Ry Rx camera pose angles.

    m_int has a positive diagonal and unit lower-right entry.
    """
    m = p[:, :3]
    k, r = scipy.linalg.rq(m)
    signs = np.sign(np.diag(k))
    signs[signs == 0] = 1.0
    s = np.diag(signs)
    k, r = k @ s, s @ r
    if np.linalg.det(r) < 0:
        # det(M) < 0 cannot come from a physical camera with positive depths
        raise DegenerateConfigurationError("projection matrix decomposes to a mirrored camera")
    t = np.linalg.solve(k, p[:, 3])
    u_cam = -r.T @ t
    k /= k[2, 2]
    return k, r, u_cam


def _reprojection_rms(cam, points, pixels):
    err2 = 0.0
    for u, px in zip(points, pixels):
        n, _ = project(cam, u)
        err2 += float(np.sum((n - px) ** 2))
    return np.sqrt(err2 / len(points))


def _refine(cam, points, pixels, iterations=10):
    """Gauss-Newton polish of the 11 camera parameters (numeric Jacobian)."""

    def pack(c):
        m = c.m_int
        return np.array(
            [m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2], *c.u_cam, *c.euler_cam]
        )

    def unpack(v):
        m = np.array([[v[0], v[1], v[2]], [0.0, v[3], v[4]], [0.0, 0.0, 1.0]])
        return CameraModel(m, v[5:8], v[8:11])

    def residuals(v):
        c = unpack(v)
        out = np.empty(2 * len(points))
        for i, (u, px) in enumerate(zip(points, pixels)):
            n, _ = project(c, u)
            out[2 * i : 2 * i + 2] = n - px
        return out

    v = pack(cam)
    r = residuals(v)
    for _ in range(iterations):
        jac = np.empty((len(r), len(v)))
        for j in range(len(v)):
            h = 1e-7 * max(1.0, abs(v[j]))
            vp = v.copy()
            vp[j] += h
            jac[:, j] = (residuals(vp) - r) / h
        try:
            dv = np.linalg.lstsq(jac, -r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        v_new = v + dv
        r_new = residuals(v_new)
        if np.sum(r_new**2) >= np.sum(r**2):
            break
        v, r = v_new, r_new
    return unpack(v)


def calibrate_camera(cal_set, rms_threshold=2.0, refine=False):
    """Camera model from pattern correspondences (DLT + RQ decomposition).

    Warns (and flags the result) when the reprojection RMS exceeds
    rms_threshold pixels.
    """
    points = cal_set.pattern_points
    pixels = cal_set.pattern_pixels
    p = estimate_projection_matrix(points, pixels)
    k, r, u_cam = decompose_projection_matrix(p)
    euler = euler_zyx_from_matrix(r.T)
    cam = CameraModel(k, u_cam, np.array(euler))
    if refine:
        cam = _refine(cam, points, pixels)
    rms = _reprojection_rms(cam, points, pixels)
    ok = rms <= rms_threshold
    if not ok:
        warnings.warn(
            f"reprojection RMS {rms:.3f} px above {rms_threshold} px",
            CalibrationQualityWarning,
        )
    return CameraCalibration(camera=cam, reprojection_rms=rms, quality_ok=ok)


def fit_laser_plane(points):
    """Total-least-squares plane through the laser points.

    Returns (LaserPlane, rms_residual). Raises for collinear input.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 3:
        raise DegenerateConfigurationError(f"need >= 3 laser points, got {len(points)}")
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if sv[1] < 1e-10 * max(sv[0], 1e-300):
        raise DegenerateConfigurationError("laser points are collinear")
    normal = vt[-1]
    d = -float(normal @ centroid)
    plane = LaserPlane(*normal, d)
    rms = float(np.sqrt(np.mean(plane.residual(points) ** 2)))
    return plane, rms
