"""Pin-hole projection and laser-plane triangulation in the TGMS frame.

A camera is described by an upper-triangular intrinsic matrix (pixel
units, principal-point-relative image coordinates) and by its pose in
the TGMS frame (position + roll/pitch/yaw of the camera axes). The
extrinsic matrix maps homogeneous TGMS coordinates to camera
coordinates; depth is measured along the camera Z axis.

The laser light sheet is the plane a x + b y + c z + d = 0 in TGMS
coordinates, with (a, b, c) stored unit-length so d is a signed
distance. A pixel constrains a point up to the unknown projective scale
factor; adding the plane equation closes the 4x4 linear system that
recovers the 3D point, keeping the scale factor observable for the
behind-camera check.

No lens distortion model: inputs are assumed distortion-corrected
upstream.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, EmptyCloudError, SingularGeometryError
from .frames import euler_zyx_from_matrix, rotation_zyx

_DEPTH_EPS = 1e-9
_RAY_PLANE_EPS = 1e-10


@dataclass(frozen=True)
class CameraModel:
    m_int: np.ndarray  # (3, 3) intrinsics, upper triangular, positive diagonal
    u_cam: np.ndarray  # (3,) camera origin in the TGMS frame [m]
    euler_cam: np.ndarray  # (3,) roll/pitch/yaw of camera frame in TGMS frame [rad]
    pixel_bounds: tuple | None = None  # (half_width, half_height) in px, optional
    a_cam: np.ndarray = field(init=False)  # TGMS-from-camera rotation
    m_ext: np.ndarray = field(init=False)  # (3, 4)
    proj: np.ndarray = field(init=False)  # (3, 4) projection matrix

    def __post_init__(self):
        m = np.asarray(self.m_int, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("m_int must be 3x3")
        if np.any(np.abs(m[np.tril_indices(3, -1)]) > 0.0):
            raise ValueError("m_int must be upper triangular")
        if np.any(np.diag(m) <= 0.0):
            raise ValueError("m_int needs a positive diagonal")
        object.__setattr__(self, "m_int", m)
        object.__setattr__(self, "u_cam", np.asarray(self.u_cam, dtype=float).reshape(3))
        object.__setattr__(self, "euler_cam", np.asarray(self.euler_cam, dtype=float).reshape(3))
        a = rotation_zyx(*self.euler_cam)
        ext = np.hstack([a.T, (-a.T @ self.u_cam)[:, None]])
        object.__setattr__(self, "a_cam", a)
        object.__setattr__(self, "m_ext", ext)
        object.__setattr__(self, "proj", m @ ext)

    def in_bounds(self, pixel):
        if self.pixel_bounds is None:
            return True
        hw, hh = self.pixel_bounds
        return abs(pixel[0]) <= hw and abs(pixel[1]) <= hh


@dataclass(frozen=True)
class LaserPlane:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        n = np.hypot(np.hypot(self.a, self.b), self.c)
        if n == 0.0:
            raise ValueError("laser plane normal cannot be zero")
        object.__setattr__(self, "a", self.a / n)
        object.__setattr__(self, "b", self.b / n)
        object.__setattr__(self, "c", self.c / n)
        object.__setattr__(self, "d", self.d / n)

    @property
    def normal(self):
        return np.array([self.a, self.b, self.c])

    def residual(self, points):
        """Signed point-plane distances, vectorized."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.normal + self.d


def project(cam, u_tgms):
    """Project a TGMS-frame point; returns (pixel (2,), depth c).

    Raises BehindCameraError when the depth along the optical axis is not
    strictly positive.
    """
    u = np.asarray(u_tgms, dtype=float).reshape(3)
    h = cam.proj @ np.append(u, 1.0)
    c = h[2]
    if c <= _DEPTH_EPS:
        raise BehindCameraError(f"point depth {c:.3e} <= {_DEPTH_EPS}")
    return h[:2] / c, c


def back_ray(cam, pixel):
    """Direction (TGMS frame, not normalized) of the ray through a pixel."""
    n1 = np.array([pixel[0], pixel[1], 1.0])
    return cam.a_cam @ np.linalg.solve(cam.m_int, n1)


def triangulate_on_plane(cam, plane, pixel):
    """Intersect the back-projected pixel ray with the laser plane.

    Solves the joint linear system in (point, scale factor) so the depth
    stays observable; raises SingularGeometryError for rays parallel to
    the plane and BehindCameraError for negative depth.
    """
    ray = back_ray(cam, pixel)
    denom = abs(np.dot(ray, plane.normal)) / np.linalg.norm(ray)
    if denom <= _RAY_PLANE_EPS:
        raise SingularGeometryError("pixel ray is parallel to the laser plane")
    m = np.zeros((4, 4))
    m[:3, :3] = cam.proj[:, :3]
    m[0, 3] = -pixel[0]
    m[1, 3] = -pixel[1]
    m[2, 3] = -1.0
    m[3, :3] = plane.normal
    rhs = np.array([-cam.proj[0, 3], -cam.proj[1, 3], -cam.proj[2, 3], -plane.d])
    sol = np.linalg.solve(m, rhs)
    if sol[3] <= 0.0:
        raise BehindCameraError("triangulated point lies behind the camera")
    return sol[:3]


def triangulate_cloud(cam, plane, pixels):
    """Per-pixel triangulation; degenerate pixels are dropped and counted.

    Returns (points (m, 3), dropped). Raises EmptyCloudError when nothing
    survives.
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    if pixels.size == 0:
        raise EmptyCloudError("no pixels to triangulate")
    points = []
    dropped = 0
    for px in pixels:
        try:
            points.append(triangulate_on_plane(cam, plane, px))
        except (SingularGeometryError, BehindCameraError):
            dropped += 1
    if not points:
        raise EmptyCloudError("all pixels degenerate")
    return np.array(points), dropped


def camera_looking_at(m_int, position, target, pixel_bounds=None):
    """Camera model with the optical axis through a target point.

    The image y axis is aligned as closely as possible with TGMS 'down'
    (-Z), the usual mounting for rail-watching cameras.
    """
    position = np.asarray(position, dtype=float)
    z_axis = np.asarray(target, dtype=float) - position
    nz = np.linalg.norm(z_axis)
    if nz < 1e-12:
        raise ValueError("camera target coincides with its position")
    z_axis = z_axis / nz
    down = np.array([0.0, 0.0, -1.0])
    y_axis = down - (down @ z_axis) * z_axis
    ny = np.linalg.norm(y_axis)
    if ny < 1e-9:  # looking straight down: fall back to +X as image-down
        y_axis = np.array([1.0, 0.0, 0.0]) - z_axis[0] * z_axis
        ny = np.linalg.norm(y_axis)
    y_axis = y_axis / ny
    x_axis = np.cross(y_axis, z_axis)
    a = np.column_stack([x_axis, y_axis, z_axis])
    euler = np.array(euler_zyx_from_matrix(a))
    return CameraModel(m_int, position, euler, pixel_bounds=pixel_bounds)


def triangulate_cloud_fast(cam, plane, pixels):
    """Batched triangulation for well-conditioned pixel sets.

    Same linear system as `triangulate_on_plane`, solved for all pixels
    at once; callers are expected to have validated geometry. Points with
    non-positive scale factor are dropped.
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    n = len(pixels)
    m = np.zeros((n, 4, 4))
    m[:, :3, :3] = cam.proj[:, :3]
    m[:, 0, 3] = -pixels[:, 0]
    m[:, 1, 3] = -pixels[:, 1]
    m[:, 2, 3] = -1.0
    m[:, 3, :3] = plane.normal
    rhs = np.broadcast_to(
        np.array([-cam.proj[0, 3], -cam.proj[1, 3], -cam.proj[2, 3], -plane.d]), (n, 4)
    )
    sol = np.linalg.solve(m, rhs[..., None])[..., 0]
    keep = sol[:, 3] > 0.0
    if not np.any(keep):
        raise EmptyCloudError("all pixels degenerate")
    return sol[keep, :3], int(np.sum(~keep))
