"""Synthetic sensor streams for a rig riding an irregular track.

The simulator prescribes the rig motion kinematically: arc length from a
piecewise-linear speed profile, plus an optional harmonic relative
motion (lateral/vertical offsets and small attitude angles w.r.t. the
track frame). From that trajectory it produces, noiseless or noisy:

    - IMU samples: body-frame specific force (kinematic acceleration of
      the body origin plus rotated gravity) and body angular rate,
    - an encoder log s_app = k * s_true (+ optional noise),
    - per-frame pixel clouds: the laser plane is intersected with the
      swept irregular rail surface by per-ray root finding along the arc
      length (the highlighted section is only approximately a
      cross-section), and the 3D points are projected through the camera,
    - ground-truth irregularity records on the frame positions.

Body kinematics follow the same linearized body-to-track conventions as
the measurement equations (small-angle body rotation, exact track
rotation), with global-to-body component maps using the true matrix
inverse; on layouts where the track rotation is exactly orthonormal in
the small-angle sense (flat, uncanted) the noiseless streams invert the
measurement equations to machine precision. Seeded runs are
bit-reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import VisibilityError
from .frames import G_ACCEL
from .pipeline import ImuData, EncoderData, twist
from .track import IrregularityField, rails_from_irregularities


# -- speed profile ---------------------------------------------------------


class SpeedProfile:
    """Piecewise-linear forward speed; holds the last value beyond the knots."""

    def __init__(self, t_knots, v_knots):
        self.t_knots = np.asarray(t_knots, dtype=float)
        self.v_knots = np.asarray(v_knots, dtype=float)
        if len(self.t_knots) != len(self.v_knots) or len(self.t_knots) < 1:
            raise ValueError("need matching, non-empty knot arrays")
        if np.any(np.diff(self.t_knots) <= 0):
            raise ValueError("knot times must increase")
        if np.any(self.v_knots < 0):
            raise ValueError("speeds must be >= 0")
        # arc length at the knots (exact: v is linear per segment)
        ds = 0.5 * (self.v_knots[:-1] + self.v_knots[1:]) * np.diff(self.t_knots)
        self.s_knots = np.concatenate([[0.0], np.cumsum(ds)])

    @classmethod
    def constant(cls, v):
        return cls([0.0], [v])

    def v_at(self, t):
        return np.interp(t, self.t_knots, self.v_knots)

    def vdot_at(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.t_knots) == 1:
            return np.zeros_like(t)
        slopes = np.diff(self.v_knots) / np.diff(self.t_knots)
        idx = np.clip(np.searchsorted(self.t_knots, t, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        return np.where(t >= self.t_knots[-1], 0.0, out)

    def s_at(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.t_knots) == 1:
            return self.v_knots[0] * (t - self.t_knots[0])
        idx = np.clip(np.searchsorted(self.t_knots, t, side="right") - 1, 0, len(self.t_knots) - 2)
        tau = t - self.t_knots[idx]
        v0 = self.v_knots[idx]
        a = (self.v_knots[idx + 1] - self.v_knots[idx]) / (
            self.t_knots[idx + 1] - self.t_knots[idx]
        )
        s = self.s_knots[idx] + v0 * tau + 0.5 * a * tau * tau
        past = t >= self.t_knots[-1]
        s_past = self.s_knots[-1] + self.v_knots[-1] * (t - self.t_knots[-1])
        return np.where(past, s_past, s)

    def time_at_s(self, s_target):
        """First time the arc length reaches s_target (bisection)."""
        t_hi = self.t_knots[-1] + 1.0
        while self.s_at(t_hi) < s_target:
            t_hi *= 2.0
            if t_hi > 1e9:
                raise ValueError("speed profile never reaches the target arc length")
        t_lo = self.t_knots[0]
        for _ in range(200):
            mid = 0.5 * (t_lo + t_hi)
            if self.s_at(mid) < s_target:
                t_lo = mid
            else:
                t_hi = mid
        return 0.5 * (t_lo + t_hi)


# -- prescribed relative motion ---------------------------------------------


@dataclass
class PrescribedMotion:
    """Harmonic TGMS-to-track motion, channels evaluated over arc length.

    channels: dict mapping 'r_y', 'r_z', 'roll', 'pitch', 'yaw' to lists
    of (amplitude, wavelength, phase) harmonics.
    """

    channels: dict = field(default_factory=dict)

    @classmethod
    def zero(cls):
        return cls({})

    @classmethod
    def band_random(cls, rng, names, amplitude, band, n_harmonics=8):
        """Seeded random harmonic mix within a wavelength band."""
        channels = {}
        for name in names:
            lams = rng.uniform(band[0], band[1], n_harmonics)
            phases = rng.uniform(0.0, 2.0 * np.pi, n_harmonics)
            amps = rng.uniform(0.3, 1.0, n_harmonics)
            amps *= amplitude / np.sqrt(np.sum(amps**2) / 2.0)
            channels[name] = list(zip(amps, lams, phases))
        return cls(channels)

    def _eval_channel(self, name, s, v, vdot):
        x = np.zeros_like(s)
        xd = np.zeros_like(s)
        xdd = np.zeros_like(s)
        for amp, lam, phase in self.channels.get(name, ()):
            k = 2.0 * np.pi / lam
            u = k * s + phase
            sin_u, cos_u = np.sin(u), np.cos(u)
            x += amp * sin_u
            xd += amp * cos_u * k * v
            xdd += -amp * sin_u * (k * v) ** 2 + amp * cos_u * k * vdot
        return x, xd, xdd

    def eval(self, s, v, vdot):
        out = {}
        for name in ("r_y", "r_z", "roll", "pitch", "yaw"):
            out[name] = self._eval_channel(name, s, v, vdot)
        r = np.stack([out["r_y"][0], out["r_z"][0]], axis=1)
        rdot = np.stack([out["r_y"][1], out["r_z"][1]], axis=1)
        rddot = np.stack([out["r_y"][2], out["r_z"][2]], axis=1)
        ang = np.stack([out["roll"][0], out["pitch"][0], out["yaw"][0]], axis=1)
        rate = np.stack([out["roll"][1], out["pitch"][1], out["yaw"][1]], axis=1)
        acc = np.stack([out["roll"][2], out["pitch"][2], out["yaw"][2]], axis=1)
        return r, rdot, rddot, ang, rate, acc


def make_irregularity_field(length, components, ds=0.25):
    """Irregularity field from sine/step components on (al, vp, gv, cl).

    components: iterable of dicts with keys
        channel: 'al' | 'vp' | 'gv' | 'cl'
        kind:    'sine' (amplitude, wavelength, phase) or
                 'step' (amplitude, position)
    """
    n = int(np.ceil(length / ds)) + 1
    s = ds * np.arange(n)
    chan = {k: np.zeros(n) for k in ("al", "vp", "gv", "cl")}
    for comp in components:
        target = chan[comp["channel"]]
        if comp["kind"] == "sine":
            k = 2.0 * np.pi / comp["wavelength"]
            target += comp["amplitude"] * np.sin(k * s + comp.get("phase", 0.0))
        elif comp["kind"] == "step":
            target += np.where(s >= comp["position"], comp["amplitude"], 0.0)
        else:
            raise ValueError(f"unknown component kind {comp['kind']!r}")
    y_l, z_l, y_r, z_r = rails_from_irregularities(
        chan["al"], chan["vp"], chan["gv"], chan["cl"]
    )
    return IrregularityField(0.0, ds, np.column_stack([y_l, z_l, y_r, z_r]))


# -- scenario ---------------------------------------------------------------


@dataclass
class Scenario:
    layout: object
    irregularity: IrregularityField
    template: object = None
    cam_left: object = None
    plane_left: object = None
    cam_right: object = None
    plane_right: object = None
    speed: SpeedProfile = None
    motion: PrescribedMotion = field(default_factory=PrescribedMotion.zero)
    imu_rate: float = 200.0
    camera_rate: float = 40.0  # 0 disables the cameras
    encoder_rate: float = 200.0
    duration: float | None = None
    s_margin: float = 5.0
    points_per_frame: int = 120
    sigma_accel: float = 0.0
    sigma_gyro: float = 0.0
    sigma_pixel: float = 0.0
    encoder_drift: float = 1.0
    sigma_encoder: float = 0.0
    seed: int = 0
    twist_base: float = 3.0


@dataclass
class SimOutput:
    imu: ImuData
    encoder: EncoderData
    frames: dict  # frame_id -> {side: (m, 2) pixels}
    truth: dict  # s, al, vp, gv, cl, tw arrays at the frame positions
    t_frames: np.ndarray
    s_frames: np.ndarray
    camera_rate: float


def _small_rotation_batch(ang):
    n = len(ang)
    a = np.zeros((n, 3, 3))
    phi, theta, psi = ang[:, 0], ang[:, 1], ang[:, 2]
    a[:, 0, 0] = a[:, 1, 1] = a[:, 2, 2] = 1.0
    a[:, 0, 1] = -psi
    a[:, 0, 2] = theta
    a[:, 1, 0] = psi
    a[:, 1, 2] = -phi
    a[:, 2, 0] = -theta
    a[:, 2, 1] = phi
    return a


def _body_streams(layout, speed, motion, t):
    """Noiseless IMU streams and rig states along the ride."""
    s = speed.s_at(t)
    v = speed.v_at(t)
    vdot = speed.vdot_at(t)
    rho_h, rho_hp, rho_tw, cant, _ = layout.horizontal_at(s)
    _, rho_v = layout.vertical_at(s)
    a_t = layout.rotation_at(s)
    v2 = v * v
    rddot_t = np.stack([vdot, rho_h * v2, -rho_v * v2], axis=1)
    w_t = np.stack([rho_tw * v, rho_v * v, rho_h * v], axis=1)
    al_t = np.stack(
        [rho_tw * vdot, rho_v * vdot, rho_h * vdot + rho_hp * v2], axis=1
    )

    r, rdot, rddot, ang, rate, angacc = motion.eval(s, v, vdot)
    zeros = np.zeros((len(t), 1))
    r3 = np.hstack([zeros, r])
    rdot3 = np.hstack([zeros, rdot])
    rddot3 = np.hstack([zeros, rddot])

    acc_tf = (
        rddot_t
        + rddot3
        + np.cross(al_t, r3)
        + np.cross(w_t, np.cross(w_t, r3))
        + 2.0 * np.cross(w_t, rdot3)
    )
    gravity_tf = G_ACCEL * a_t[:, 2, :]  # rows of A^T: track-frame gravity direction
    a_ti = _small_rotation_batch(ang)
    accel_body = np.linalg.solve(a_ti, (acc_tf + gravity_tf)[..., None])[..., 0]
    gyro_body = np.einsum("nji,nj->ni", a_ti, w_t) + rate
    return {
        "s": s,
        "v": v,
        "vdot": vdot,
        "accel": accel_body,
        "gyro": gyro_body,
        "r": r,
        "ang": ang,
        "a_t": a_t,
        "a_ti": a_ti,
    }


def _rail_surface_points(layout, irr, s_vec, side, prof):
    """Global positions of rail-head points at (s_vec[i], prof[i])."""
    pos = layout.position_at(s_vec)
    rot = layout.rotation_at(s_vec)
    y_l, z_l, y_r, z_r = irr.at(s_vec)
    delta = (z_l - z_r) / (2.0 * layout.half_gauge)
    beta = layout.rail_inclination if side == "left" else -layout.rail_inclination
    ang = beta + delta
    c, sn = np.cos(ang), np.sin(ang)
    py, pz = prof[:, 0], prof[:, 1]
    ry = c * py - sn * pz
    rz = sn * py + c * pz
    lat = layout.half_gauge if side == "left" else -layout.half_gauge
    y_ir = y_l if side == "left" else y_r
    z_ir = z_l if side == "left" else z_r
    local = np.stack([np.zeros_like(ry), lat + y_ir + ry, z_ir + rz], axis=1)
    return pos + np.einsum("nij,nj->ni", rot, local)


def _slice_and_project(layout, irr, template, plane, cam, s_body, r_body, ang, n_pts, side, label):
    """Laser-plane slice of one rail, projected to pixels.

    Returns (pixels (m,2), points_tgms (m,3)); raises VisibilityError when
    nothing lands on the sensor.
    """
    a_t = layout.rotation_at(np.array([s_body]))[0]
    a_ti = _small_rotation_batch(ang[None, :])[0]
    a_i = a_t @ a_ti
    r_i = layout.position_at(np.array([s_body]))[0] + a_t @ np.array(
        [0.0, r_body[0], r_body[1]]
    )
    alphas = np.linspace(template.alpha_min, template.alpha_max, n_pts)
    prof = template.point(alphas)
    s_vec = np.full(n_pts, s_body)

    def residual(sv):
        p = _rail_surface_points(layout, irr, sv, side, prof)
        u = np.linalg.solve(a_i, (p - r_i).T).T
        return u, u @ plane.normal + plane.d

    u, zeta = residual(s_vec)
    if np.max(np.abs(zeta)) > 1e-12:
        _, zeta2 = residual(s_vec + 1e-4)
        slope = (zeta2 - zeta) / 1e-4
        slope = np.where(np.abs(slope) < 1e-6, 1.0, slope)
        for _ in range(30):
            s_vec = s_vec - zeta / slope
            u, zeta = residual(s_vec)
            if np.max(np.abs(zeta)) < 1e-12:
                break
        else:
            raise VisibilityError(f"{label}: laser slice did not converge")

    h = np.hstack([u, np.ones((n_pts, 1))]) @ cam.proj.T
    depth = h[:, 2]
    keep = depth > 1e-9
    pix = np.full((n_pts, 2), np.nan)
    pix[keep] = h[keep, :2] / depth[keep, None]
    if cam.pixel_bounds is not None:
        hw, hh = cam.pixel_bounds
        keep &= (np.abs(pix[:, 0]) <= hw) & (np.abs(pix[:, 1]) <= hh)
    if not np.any(keep):
        raise VisibilityError(f"{label}: no rail-head points visible")
    return pix[keep], u[keep]


def simulate(scenario):
    """Generate the full synthetic sensor set for one scenario."""
    sc = scenario
    rng = np.random.default_rng(sc.seed)
    layout = sc.layout
    s_end = layout.total_length - sc.s_margin
    t_end = sc.speed.time_at_s(s_end)
    if sc.duration is not None:
        t_end = min(t_end, sc.duration)

    # IMU
    n_imu = int(np.floor(t_end * sc.imu_rate)) + 1
    t_imu = np.arange(n_imu) / sc.imu_rate
    body = _body_streams(layout, sc.speed, sc.motion, t_imu)
    accel = body["accel"].copy()
    gyro = body["gyro"].copy()
    if sc.sigma_accel > 0.0:
        accel += rng.normal(0.0, sc.sigma_accel, accel.shape)
    if sc.sigma_gyro > 0.0:
        gyro += rng.normal(0.0, sc.sigma_gyro, gyro.shape)
    imu = ImuData(t=t_imu, accel=accel, gyro=gyro)

    # encoder
    n_enc = int(np.floor(t_end * sc.encoder_rate)) + 1
    t_enc = np.arange(n_enc) / sc.encoder_rate
    s_true_enc = sc.speed.s_at(t_enc)
    s_app = sc.encoder_drift * s_true_enc
    if sc.sigma_encoder > 0.0:
        s_app = s_app + rng.normal(0.0, sc.sigma_encoder, s_app.shape)
    encoder = EncoderData(t=t_enc, s_app=s_app)

    # camera frames
    frames = {}
    t_frames = np.array([])
    s_frames = np.array([])
    if sc.camera_rate > 0.0:
        n_frames = int(np.floor(t_end * sc.camera_rate)) + 1
        t_frames = np.arange(n_frames) / sc.camera_rate
        s_frames = sc.speed.s_at(t_frames)
        v_f = sc.speed.v_at(t_frames)
        vdot_f = sc.speed.vdot_at(t_frames)
        r_f, _, _, ang_f, _, _ = sc.motion.eval(s_frames, v_f, vdot_f)
        for fid in range(n_frames):
            per_side = {}
            for side, cam, plane in (
                ("left", sc.cam_left, sc.plane_left),
                ("right", sc.cam_right, sc.plane_right),
            ):
                pix, _ = _slice_and_project(
                    layout,
                    sc.irregularity,
                    sc.template,
                    plane,
                    cam,
                    s_frames[fid],
                    r_f[fid],
                    ang_f[fid],
                    sc.points_per_frame,
                    side,
                    f"frame {fid} ({side})",
                )
                if sc.sigma_pixel > 0.0:
                    pix = pix + rng.normal(0.0, sc.sigma_pixel, pix.shape)
                per_side[side] = pix
            frames[fid] = per_side

    # ground truth at the frame positions (or a 0.25 m grid without cameras)
    s_truth = s_frames if len(s_frames) else np.arange(0.0, s_end, 0.25)
    rec = sc.irregularity.records(s_truth)
    tw = (
        twist(s_truth, rec[:, 3], sc.twist_base)
        if len(s_truth) >= 2 and s_truth[-1] - s_truth[0] > sc.twist_base
        else np.full(len(s_truth), np.nan)
    )
    truth = {
        "s": s_truth,
        "al": rec[:, 0],
        "vp": rec[:, 1],
        "gv": rec[:, 2],
        "cl": rec[:, 3],
        "tw": tw,
    }
    return SimOutput(
        imu=imu,
        encoder=encoder,
        frames=frames,
        truth=truth,
        t_frames=t_frames,
        s_frames=s_frames,
        camera_rate=sc.camera_rate,
    )
