"""Gyroscope/accelerometer attitude filter with track-based correction.

A gradient-descent orientation filter in the Madgwick family: the
quaternion is propagated with the gyroscope and corrected toward the
direction of gravity observed by the accelerometer. The standard filter
assumes the accelerometer reads gravity alone, which fails on a vehicle
(centripetal acceleration in curves reaches a sizeable fraction of g).
Here the accelerometer is first corrected by the acceleration an ideal
body would have riding the track frame at the measured speed,

    a_grav = a_imu - A_body^T A_track (vdot, rho_h v^2, -rho_v v^2),

which removes the motion component to first order and leaves a far
cleaner gravity reference.

Implementation notes: the gyro step uses the exact quaternion exponential
of the trapezoid-averaged angular rate (plain Euler integration of the
quaternion rate leaves curve-entry errors visible at the measurement
tolerances). The corrective step is the normalized objective gradient
with its magnitude clamped to min(beta dt, ||f||/2), so it behaves like
the classic constant-rate step far from alignment but converges smoothly
(no beta*dt limit cycle) once aligned. Yaw is unobservable from gravity
and is driven by the gyroscope alone.
"""

from dataclasses import dataclass

import numpy as np

from .errors import OutOfEnvelopeError
from .frames import euler_zyx_from_matrix

_GRAD_EPS = 1e-14
_FREE_FALL_EPS = 1e-6
_GIMBAL_LIMIT = 1.4  # rad


# -- quaternion helpers (scalar-first, body-to-global convention) -------


def quat_multiply(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_normalize(q):
    return q / np.linalg.norm(q)


def quat_from_axis_angle(axis_angle):
    angle = np.linalg.norm(axis_angle)
    if angle < 1e-300:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = axis_angle / angle
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def matrix_from_quat(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(a):
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    tr = np.trace(a)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (a[2, 1] - a[1, 2]) / s, (a[0, 2] - a[2, 0]) / s, (a[1, 0] - a[0, 1]) / s]
        )
    elif a[0, 0] > a[1, 1] and a[0, 0] > a[2, 2]:
        s = np.sqrt(1.0 + a[0, 0] - a[1, 1] - a[2, 2]) * 2
        q = np.array(
            [(a[2, 1] - a[1, 2]) / s, 0.25 * s, (a[0, 1] + a[1, 0]) / s, (a[0, 2] + a[2, 0]) / s]
        )
    elif a[1, 1] > a[2, 2]:
        s = np.sqrt(1.0 + a[1, 1] - a[0, 0] - a[2, 2]) * 2
        q = np.array(
            [(a[0, 2] - a[2, 0]) / s, (a[0, 1] + a[1, 0]) / s, 0.25 * s, (a[1, 2] + a[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + a[2, 2] - a[0, 0] - a[1, 1]) * 2
        q = np.array(
            [(a[1, 0] - a[0, 1]) / s, (a[0, 2] + a[2, 0]) / s, (a[1, 2] + a[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


# -- filter --------------------------------------------------------------


def predicted_body_acceleration(state, v, vdot):
    """Acceleration of an ideal body riding the track frame (TF components)."""
    return np.array([vdot, state.rho_h * v * v, -state.rho_v * v * v])


def _gravity_direction_body(q):
    w, x, y, z = q
    return np.array([2 * (x * z - w * y), 2 * (w * x + y * z), 1 - 2 * (x * x + y * y)])


def _objective_gradient(q, v_meas):
    """Madgwick objective f and gradient J^T f for the gravity direction."""
    w, x, y, z = q
    f = _gravity_direction_body(q) - v_meas
    jt_f = np.array(
        [
            -2 * y * f[0] + 2 * x * f[1],
            2 * z * f[0] + 2 * w * f[1] - 4 * x * f[2],
            -2 * w * f[0] + 2 * z * f[1] - 4 * y * f[2],
            2 * x * f[0] + 2 * y * f[1],
        ]
    )
    return f, jt_f


@dataclass
class StepFlags:
    free_fall: bool = False
    corrected: bool = True


class AttitudeFilter:
    """Streaming attitude estimator. One instance per run; sequential use."""

    def __init__(self, q0=None, beta=0.05):
        self.q = quat_normalize(np.asarray(q0, dtype=float)) if q0 is not None else np.array(
            [1.0, 0.0, 0.0, 0.0]
        )
        self.beta = beta
        self._prev_omega = None

    @property
    def rotation(self):
        """Body-to-global rotation matrix of the current estimate."""
        return matrix_from_quat(self.q)

    def step(self, omega, accel, dt, predicted_a=None, a_track=None):
        """Advance one sample interval.

        omega/accel are the body-frame IMU readings; predicted_a the
        track-frame acceleration of an ideal track-rider (None or zeros
        recovers the gravity-only baseline) and a_track the track-frame
        orientation used to rotate it into the body frame.
        """
        omega = np.asarray(omega, dtype=float)
        accel = np.asarray(accel, dtype=float)
        omega_avg = omega if self._prev_omega is None else 0.5 * (self._prev_omega + omega)
        self._prev_omega = omega
        self.q = quat_normalize(quat_multiply(self.q, quat_from_axis_angle(omega_avg * dt)))

        if self.beta == 0.0:
            return StepFlags(corrected=False)
        a_grav = accel.copy()
        if predicted_a is not None:
            rot = a_track if a_track is not None else np.eye(3)
            a_grav = accel - self.rotation.T @ (rot @ np.asarray(predicted_a, dtype=float))
        norm = np.linalg.norm(a_grav)
        if norm < _FREE_FALL_EPS:
            return StepFlags(free_fall=True, corrected=False)
        f, grad = _objective_gradient(self.q, a_grav / norm)
        gn = np.linalg.norm(grad)
        if gn < _GRAD_EPS:
            return StepFlags(corrected=False)
        step_len = min(self.beta * dt, 0.5 * float(np.linalg.norm(f)))
        self.q = quat_normalize(self.q - step_len * grad / gn)
        return StepFlags()


def relative_euler(attitude, a_track):
    """Small roll/pitch/yaw of the body relative to the track frame.

    attitude may be a quaternion or a body-to-global rotation matrix.
    """
    a_body = matrix_from_quat(attitude) if np.shape(attitude) == (4,) else np.asarray(attitude)
    rel = a_track.T @ a_body
    phi, theta, psi = euler_zyx_from_matrix(rel)
    if abs(theta) > _GIMBAL_LIMIT:
        raise OutOfEnvelopeError(f"pitch {theta:.3f} rad outside the service envelope")
    return np.array([phi, theta, psi])


def estimate_gyro_bias(t, gyro, rest_duration):
    """Mean angular rate over the initial rest window (zero window: no bias)."""
    if rest_duration <= 0.0:
        return np.zeros(3)
    mask = np.asarray(t) <= np.asarray(t)[0] + rest_duration
    if not np.any(mask):
        return np.zeros(3)
    return np.asarray(gyro)[mask].mean(axis=0)


def run_attitude_filter(t, gyro, accel, a_track, predicted_a, q0, beta=0.05, gyro_bias=None):
    """Run the filter over sample arrays; returns (euler (n,3), quats (n,4)).

    a_track: (n,3,3) track rotations at each sample, predicted_a: (n,3)
    track-frame accelerations (zeros for the gravity-only baseline).
    Output Euler angles are relative to the track frame. Deterministic.
    """
    t = np.asarray(t, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    if gyro_bias is not None:
        gyro = gyro - np.asarray(gyro_bias, dtype=float)
    accel = np.asarray(accel, dtype=float)
    filt = AttitudeFilter(q0=q0, beta=beta)
    n = len(t)
    euler = np.empty((n, 3))
    quats = np.empty((n, 4))
    euler[0] = relative_euler(filt.q, a_track[0])
    quats[0] = filt.q
    for k in range(1, n):
        dt = t[k] - t[k - 1]
        filt.step(gyro[k], accel[k], dt, predicted_a=predicted_a[k], a_track=a_track[k])
        euler[k] = relative_euler(filt.q, a_track[k])
        quats[k] = filt.q
    return euler, quats
