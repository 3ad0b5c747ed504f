"""Rotation conventions shared by every module.

Global frame: X/Y horizontal, Z up. Gravity acts along -Z, so a resting
capacitive accelerometer aligned with the global frame reads (0, 0, +g).

Track frame (TF): X tangent to the ideal centerline (forward), Y to the
left rail, Z completing the right-handed triad (up-ish). Its orientation
is the yaw-pitch-roll product Rz(psi) @ Ry(theta) @ Rx(phi):

    psi    heading, positive turning left,
    theta  slope, positive descending in the forward direction,
    phi    cant, positive raising the left rail.

Body-to-track rotations use the same angle order. For small angles the
first-order form `small_rotation` is used throughout the measurement
equations; it is linear in the angles (and therefore only approximately
orthonormal).
"""

import numpy as np

G_ACCEL = 9.80665  # standard gravity [m/s^2]


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_zyx(phi, theta, psi):
    """Exact yaw-pitch-roll rotation Rz(psi) Ry(theta) Rx(phi)."""
    return rot_z(psi) @ rot_y(theta) @ rot_x(phi)


def rotation_zyx_batch(phi, theta, psi):
    """Vectorized `rotation_zyx`: inputs (n,), output (n, 3, 3)."""
    phi, theta, psi = np.broadcast_arrays(phi, theta, psi)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    a = np.empty(phi.shape + (3, 3))
    a[..., 0, 0] = ct * cp
    a[..., 0, 1] = sf * st * cp - cf * sp
    a[..., 0, 2] = sf * sp + cf * st * cp
    a[..., 1, 0] = ct * sp
    a[..., 1, 1] = cf * cp + sf * st * sp
    a[..., 1, 2] = cf * st * sp - sf * cp
    a[..., 2, 0] = -st
    a[..., 2, 1] = sf * ct
    a[..., 2, 2] = cf * ct
    return a


def rotation_small_pitch_roll(phi, theta, psi):
    """Track rotation linearized in pitch and roll only (yaw stays exact)."""
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array(
        [
            [cp, -sp, phi * sp + theta * cp],
            [sp, cp, theta * sp - phi * cp],
            [-theta, phi, 1.0],
        ]
    )


def small_rotation(phi, theta, psi):
    """First-order body-to-track rotation for small roll/pitch/yaw."""
    return np.array(
        [
            [1.0, -psi, theta],
            [psi, 1.0, -phi],
            [-theta, phi, 1.0],
        ]
    )


def small_rotation_rate(phi_dot, theta_dot, psi_dot):
    """Time derivative of `small_rotation` (it is linear in the angles)."""
    return np.array(
        [
            [0.0, -psi_dot, theta_dot],
            [psi_dot, 0.0, -phi_dot],
            [-theta_dot, phi_dot, 0.0],
        ]
    )


def euler_zyx_from_matrix(a):
    """Extract (phi, theta, psi) with a = Rz(psi) Ry(theta) Rx(phi).

    Valid away from the theta = +-pi/2 gimbal singularity.
    """
    theta = np.arcsin(np.clip(-a[2, 0], -1.0, 1.0))
    psi = np.arctan2(a[1, 0], a[0, 0])
    phi = np.arctan2(a[2, 1], a[2, 2])
    return phi, theta, psi


def skew(v):
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )
