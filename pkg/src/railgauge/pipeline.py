"""Irregularity measurement pipeline.

Per-frame measurement equations (small TGMS-to-track angles): with
u_l, u_r the fitted left/right rail-profile origins in the TGMS frame
(lateral, vertical components), roll the TGMS-to-track roll angle and
L_r the half gauge,

    gv = (u_l - u_r)_y - roll (u_l - u_r)_z - 2 L_r
    cl = roll (u_l - u_r)_y + (u_l - u_r)_z
    al = (u_l + u_r)_y / 2 - roll (u_l + u_r)_z / 2 + r_y
    vp = roll (u_l + u_r)_y / 2 + (u_l + u_r)_z / 2 + r_z

gv and cl are relative measures: they never touch the TGMS position r.
The lateral/vertical deviation r = (r_y, r_z) of the TGMS from the track
frame obeys a second-order linear time-varying ODE driven by the
projected accelerometer signal minus gravity and the ideal track
acceleration:

    r'' + C(t) r' + K(t) r = F(t)
    C = [[0, -2 V rho_tw], [2 V rho_tw, 0]]
    K = [[-V^2 (rho_tw^2 + rho_h^2),  V^2 rho_v rho_h - Vdot rho_tw],
         [ V^2 rho_v rho_h + Vdot rho_tw, -V^2 (rho_tw^2 + rho_v^2)]]
    F = [a_y + a_x psi - a_z phi - g phi_t - rho_h V^2,
         a_z - a_x theta + a_y phi - g + rho_v V^2]

integrated with fixed-step classic Runge-Kutta. On straight track every
curvature term vanishes and the forcing reduces exactly (bitwise) to the
tangent-track form. Double integration leaves the long-wavelength part
of r unobservable; an optional zero-phase spatial high-pass (default off
here, 70 m in the CLI service configuration) removes it.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import StreamGapError
from .frames import G_ACCEL
from .fusion import quat_from_matrix, run_attitude_filter, estimate_gyro_bias
from .odometry import OdometryTracker, correct_s, extract_curvature_functions
from .railhead import fit_profile
from .vision import triangulate_cloud_fast
from .errors import EmptyCloudError, DegenerateCloudError


# -- measurement equations ----------------------------------------------


def relative_irregularities(u_left, u_right, roll, half_gauge):
    """(gauge variation, cross level) from the fitted rail origins."""
    dy = u_left[0] - u_right[0]
    dz = u_left[1] - u_right[1]
    gv = dy - roll * dz - 2.0 * half_gauge
    cl = roll * dy + dz
    return gv, cl


def absolute_irregularities(u_left, u_right, roll, r_y, r_z):
    """(alignment, vertical profile) from rail origins and TGMS deviation."""
    sy = u_left[0] + u_right[0]
    sz = u_left[1] + u_right[1]
    al = 0.5 * sy - 0.5 * roll * sz + r_y
    vp = 0.5 * roll * sy + 0.5 * sz + r_z
    return al, vp


@dataclass
class FramePair:
    """Fitted rail origins of one camera frame."""

    t: float
    u_left: np.ndarray  # (2,)
    u_right: np.ndarray  # (2,)
    roll_left: float
    roll_right: float
    rms_left: float
    rms_right: float

    def side_order_ok(self):
        return self.u_left[0] > self.u_right[0]


# -- relative-motion ODE --------------------------------------------------


def straight_track_forcing(a_imu, euler):
    """Tangent-track forcing (all curvatures zero), vectorized."""
    a = np.atleast_2d(a_imu)
    e = np.atleast_2d(euler)
    phi, theta, psi = e[:, 0], e[:, 1], e[:, 2]
    f = np.empty((len(a), 2))
    f[:, 0] = a[:, 1] + a[:, 0] * psi - a[:, 2] * phi
    f[:, 1] = a[:, 2] - a[:, 0] * theta + a[:, 1] * phi - G_ACCEL
    return f


def relative_motion_coefficients(a_imu, euler, rho_h, rho_v, rho_tw, cant, v, vdot):
    """(C, K, F) arrays of the relative-motion ODE, vectorized over samples.

    The forcing is evaluated with the same term order as
    `straight_track_forcing`, so zero curvatures reduce to it bitwise.
    """
    a = np.atleast_2d(a_imu)
    e = np.atleast_2d(euler)
    n = len(a)
    phi, theta, psi = e[:, 0], e[:, 1], e[:, 2]
    rho_h, rho_v, rho_tw = (np.broadcast_to(x, (n,)) for x in (rho_h, rho_v, rho_tw))
    cant = np.broadcast_to(cant, (n,))
    v, vdot = np.broadcast_to(v, (n,)), np.broadcast_to(vdot, (n,))
    v2 = v * v

    f = np.empty((n, 2))
    f[:, 0] = a[:, 1] + a[:, 0] * psi - a[:, 2] * phi - G_ACCEL * cant - rho_h * v2
    f[:, 1] = a[:, 2] - a[:, 0] * theta + a[:, 1] * phi - G_ACCEL + rho_v * v2

    c = np.zeros((n, 2, 2))
    c[:, 0, 1] = -2.0 * v * rho_tw
    c[:, 1, 0] = 2.0 * v * rho_tw

    k = np.empty((n, 2, 2))
    k[:, 0, 0] = -v2 * (rho_tw * rho_tw + rho_h * rho_h)
    k[:, 0, 1] = v2 * rho_v * rho_h - vdot * rho_tw
    k[:, 1, 0] = v2 * rho_v * rho_h + vdot * rho_tw
    k[:, 1, 1] = -v2 * (rho_tw * rho_tw + rho_v * rho_v)
    return c, k, f


def rk4_ltv(c_nodes, k_nodes, f_nodes, c_mids, k_mids, f_mids, dt, r0, rdot0):
    """Classic RK4 for r'' + C r' + K r = F on a fixed grid.

    Coefficients are supplied at the n sample nodes and the n-1 interval
    midpoints. Returns (r (n,2), rdot (n,2)).
    """
    n = len(f_nodes)
    r = np.empty((n, 2))
    v = np.empty((n, 2))
    r[0], v[0] = r0, rdot0

    def acc(ci, ki, fi, rr, vv):
        return fi - ci @ vv - ki @ rr

    for i in range(n - 1):
        h = dt[i] if np.ndim(dt) else dt
        r1, v1 = r[i], v[i]
        a1 = acc(c_nodes[i], k_nodes[i], f_nodes[i], r1, v1)
        r2, v2 = r1 + 0.5 * h * v1, v1 + 0.5 * h * a1
        a2 = acc(c_mids[i], k_mids[i], f_mids[i], r2, v2)
        r3, v3 = r1 + 0.5 * h * v2, v1 + 0.5 * h * a2
        a3 = acc(c_mids[i], k_mids[i], f_mids[i], r3, v3)
        r4, v4 = r1 + h * v3, v1 + h * a3
        a4 = acc(c_nodes[i + 1], k_nodes[i + 1], f_nodes[i + 1], r4, v4)
        r[i + 1] = r1 + h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        v[i + 1] = v1 + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return r, v


def integrate_relative_motion(inputs_at, t_grid, r0=(0.0, 0.0), rdot0=(0.0, 0.0)):
    """Integrate the relative-motion ODE with callable inputs.

    inputs_at(t_array) must return (a_imu (m,3), euler (m,3), rho_h,
    rho_v, rho_tw, cant, v, vdot) evaluated at the queried times; it is
    called on the grid nodes and on the interval midpoints, so analytic
    inputs retain full 4th-order convergence.
    """
    t = np.asarray(t_grid, dtype=float)
    mids = 0.5 * (t[:-1] + t[1:])
    cn, kn, fn = relative_motion_coefficients(*_coerce_inputs(inputs_at(t)))
    cm, km, fm = relative_motion_coefficients(*_coerce_inputs(inputs_at(mids)))
    return rk4_ltv(cn, kn, fn, cm, km, fm, np.diff(t), np.asarray(r0), np.asarray(rdot0))


def _coerce_inputs(tup):
    a, e, rho_h, rho_v, rho_tw, cant, v, vdot = tup
    return (
        np.atleast_2d(a),
        np.atleast_2d(e),
        np.asarray(rho_h, dtype=float),
        np.asarray(rho_v, dtype=float),
        np.asarray(rho_tw, dtype=float),
        np.asarray(cant, dtype=float),
        np.asarray(v, dtype=float),
        np.asarray(vdot, dtype=float),
    )


# -- twist and filtering --------------------------------------------------


def twist(s, cl, base=3.0):
    """Cross-level difference over a base length, per meter of base.

    tw(s) = [cl(s) - cl(s - base)] / base, linear interpolation at the
    lagged abscissa; entries within the first base length are NaN.
    """
    s = np.asarray(s, dtype=float)
    cl = np.asarray(cl, dtype=float)
    if base <= 0.0:
        raise ValueError("twist base must be > 0")
    if base > s[-1] - s[0]:
        raise ValueError("twist base exceeds the covered span")
    lag = np.interp(s - base, s, cl)
    tw = (cl - lag) / base
    tw[s - base < s[0]] = np.nan
    return tw


def highpass_spatial(s, y, cutoff_wavelength):
    """Zero-phase 2nd-order Butterworth high-pass over arc length.

    cutoff_wavelength <= 0 disables the filter. The series is resampled
    to a uniform grid for filtering and sampled back afterwards.
    """
    if cutoff_wavelength <= 0.0:
        return np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    ds = float(np.median(np.diff(s)))
    grid = np.arange(s[0], s[-1] + 0.5 * ds, ds)
    yg = np.interp(grid, s, y)
    wn = 2.0 * ds / cutoff_wavelength
    if wn >= 1.0:
        raise ValueError("cutoff wavelength below the sampling resolution")
    b, a = scipy.signal.butter(2, wn, btype="highpass")
    filtered = scipy.signal.filtfilt(b, a, yg)
    return np.interp(s, grid, filtered)


# -- input containers -----------------------------------------------------


@dataclass
class ImuData:
    t: np.ndarray
    accel: np.ndarray  # (n, 3)
    gyro: np.ndarray  # (n, 3)

    def check_gaps(self, max_intervals=3):
        dt = np.diff(self.t)
        if len(dt) and np.max(dt) > max_intervals * np.median(dt):
            raise StreamGapError(
                f"IMU gap {np.max(dt):.4f} s exceeds {max_intervals} sample intervals"
            )


@dataclass
class EncoderData:
    t: np.ndarray
    s_app: np.ndarray


@dataclass
class RunParams:
    camera_rate: float = 40.0
    odometry_enabled: bool = True
    odometry_tau: float = 0.2
    odometry_hysteresis: float = 0.05
    odometry_stride: float = 0.5
    odometry_v_min: float = 0.5
    odometry_seed_anchor: tuple | None = (0.0, 0.0)
    fusion_beta: float = 0.05
    gyro_bias_window: float = 0.0
    highpass_wavelength: float = 0.0
    twist_base: float = 3.0
    speed_window: float = 1.0  # s, local quadratic differentiation window
    max_gap_intervals: int = 3


@dataclass
class RunInputs:
    layout: object
    template: object
    cam_left: object
    plane_left: object
    cam_right: object
    plane_right: object
    imu: ImuData
    encoder: EncoderData
    frames: dict  # frame_id -> {"left": (m,2) pixels, "right": (m,2) pixels}


@dataclass
class RunResult:
    s: np.ndarray
    al: np.ndarray
    vp: np.ndarray
    gv: np.ndarray
    cl: np.ndarray
    tw: np.ndarray
    quality: list
    frame_ids: np.ndarray
    t_frames: np.ndarray
    attitude_t: np.ndarray
    attitude_euler: np.ndarray
    r_t: np.ndarray
    r: np.ndarray
    anchors: np.ndarray
    fit_rows: list  # (frame_id, side, y, z, roll, rms, converged)
    skipped: dict = field(default_factory=dict)
    anchor_records: list = field(default_factory=list)

    def records(self):
        return np.column_stack([self.s, self.al, self.vp, self.gv, self.cl, self.tw])


def _savgol_speed(t, s_ref, window_s):
    """Speed and acceleration by local quadratic differentiation."""
    dt = float(np.median(np.diff(t)))
    win = max(5, int(round(window_s / dt)) | 1)
    win = min(win, len(s_ref) if len(s_ref) % 2 else len(s_ref) - 1)
    v = scipy.signal.savgol_filter(s_ref, win, 2, deriv=1, delta=dt)
    vdot = scipy.signal.savgol_filter(s_ref, win, 2, deriv=2, delta=dt)
    return v, vdot


def _fit_side(args):
    cloud, template, x0 = args
    try:
        return fit_profile(cloud, template, x0=x0)
    except (EmptyCloudError, DegenerateCloudError):
        return None


def run(inputs, params=None):
    """Execute the full measurement chain on in-memory inputs."""
    params = params if params is not None else RunParams()
    layout = inputs.layout
    imu = inputs.imu
    imu.check_gaps(params.max_gap_intervals)
    t = imu.t

    # encoder -> refined arc length
    s_app_imu = np.interp(t, inputs.encoder.t, inputs.encoder.s_app)
    anchors = np.zeros((0, 2))
    anchor_records = []
    if params.odometry_enabled:
        tracker = OdometryTracker(
            extract_curvature_functions(layout, params.odometry_stride),
            tau=params.odometry_tau,
            hysteresis=params.odometry_hysteresis,
            stride=params.odometry_stride,
            v_min=params.odometry_v_min,
            seed_anchor=params.odometry_seed_anchor,
        )
        v_enc = np.gradient(inputs.encoder.s_app, inputs.encoder.t)
        w_z = np.interp(inputs.encoder.t, t, imu.gyro[:, 2])
        for sa, wz, ve in zip(inputs.encoder.s_app, w_z, v_enc):
            tracker.add_sample(sa, wz, ve)
        anchors = tracker.anchor_pairs()
        anchor_records = tracker.anchors
        s_ref_imu = correct_s(anchors, s_app_imu) if len(anchors) else s_app_imu
    else:
        s_ref_imu = s_app_imu
    s_ref_imu = np.clip(s_ref_imu, 0.0, layout.total_length)

    v, vdot = _savgol_speed(t, s_ref_imu, params.speed_window)

    # track geometry along the ride, at samples and interval midpoints
    def track_arrays(s_query):
        rho_h, _, rho_tw, cant, _ = layout.horizontal_at(s_query)
        _, rho_v = layout.vertical_at(s_query)
        return rho_h, rho_v, rho_tw, cant

    rho_h, rho_v, rho_tw, cant = track_arrays(s_ref_imu)
    a_track = layout.rotation_at(s_ref_imu)

    # attitude relative to the track frame
    bias = estimate_gyro_bias(t, imu.gyro, params.gyro_bias_window)
    predicted = np.column_stack([vdot, rho_h * v * v, -rho_v * v * v])
    q0 = quat_from_matrix(a_track[0])
    euler, _ = run_attitude_filter(
        t, imu.gyro, imu.accel, a_track, predicted, q0, beta=params.fusion_beta, gyro_bias=bias
    )

    # TGMS-to-track deviation by integrating the relative-motion ODE
    t_mid = 0.5 * (t[:-1] + t[1:])
    s_mid = np.clip(np.interp(t_mid, t, s_ref_imu), 0.0, layout.total_length)
    rho_h_m, rho_v_m, rho_tw_m, cant_m = track_arrays(s_mid)
    a_mid = 0.5 * (imu.accel[:-1] + imu.accel[1:])
    e_mid = 0.5 * (euler[:-1] + euler[1:])
    v_m = np.interp(t_mid, t, v)
    vdot_m = np.interp(t_mid, t, vdot)
    cn, kn, fn = relative_motion_coefficients(imu.accel, euler, rho_h, rho_v, rho_tw, cant, v, vdot)
    cm, km, fm = relative_motion_coefficients(a_mid, e_mid, rho_h_m, rho_v_m, rho_tw_m, cant_m, v_m, vdot_m)
    r, _ = rk4_ltv(cn, kn, fn, cm, km, fm, np.diff(t), np.zeros(2), np.zeros(2))
    if params.highpass_wavelength > 0.0:
        r = np.column_stack(
            [highpass_spatial(s_ref_imu, r[:, 0], params.highpass_wavelength),
             highpass_spatial(s_ref_imu, r[:, 1], params.highpass_wavelength)]
        )

    # per-frame vision measurements
    half_gauge = layout.half_gauge
    skipped = {}

    def skip(reason):
        skipped[reason] = skipped.get(reason, 0) + 1

    frame_jobs = []
    for fid in sorted(inputs.frames):
        t_f = fid / params.camera_rate
        if t_f < t[0] or t_f > t[-1]:
            skip("time_range")
            continue
        sides = inputs.frames[fid]
        if "left" not in sides or "right" not in sides:
            skip("missing_side")
            continue
        clouds = {}
        ok = True
        for side, cam, plane in (
            ("left", inputs.cam_left, inputs.plane_left),
            ("right", inputs.cam_right, inputs.plane_right),
        ):
            try:
                pts, _ = triangulate_cloud_fast(cam, plane, sides[side])
            except EmptyCloudError:
                ok = False
                break
            if len(pts) < 5:
                ok = False
                break
            clouds[side] = pts[:, 1:3]
        if not ok:
            skip("triangulation")
            continue
        frame_jobs.append((fid, t_f, clouds))

    n_threads = int(os.environ.get("RAILGAUGE_THREADS", "1") or "1")
    fits = {}
    if n_threads > 1:
        jobs = [
            (fid, side, (clouds[side], inputs.template, None))
            for fid, _, clouds in frame_jobs
            for side in ("left", "right")
        ]
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for (fid, side, _), res in zip(jobs, pool.map(_fit_side, [j[2] for j in jobs])):
                fits[(fid, side)] = res
    else:
        warm = {"left": None, "right": None}
        for fid, _, clouds in frame_jobs:
            for side in ("left", "right"):
                res = _fit_side((clouds[side], inputs.template, warm[side]))
                if res is not None and not res.converged:
                    res = _fit_side((clouds[side], inputs.template, None))
                fits[(fid, side)] = res
                if res is not None and res.converged:
                    warm[side] = res.x.copy()

    out = {k: [] for k in ("s", "al", "vp", "gv", "cl", "fid", "tf")}
    quality = []
    fit_rows = []
    for fid, t_f, clouds in frame_jobs:
        pair_ok = True
        for side in ("left", "right"):
            res = fits[(fid, side)]
            if res is None or not res.converged:
                pair_ok = False
            else:
                fit_rows.append(
                    (fid, side, res.u_origin[0], res.u_origin[1], res.roll, res.rms_residual, True)
                )
        if not pair_ok:
            skip("fit")
            continue
        u_l = fits[(fid, "left")].u_origin
        u_r = fits[(fid, "right")].u_origin
        if not u_l[0] > u_r[0]:
            skip("side_swap")
            continue
        roll = float(np.interp(t_f, t, euler[:, 0]))
        r_y = float(np.interp(t_f, t, r[:, 0]))
        r_z = float(np.interp(t_f, t, r[:, 1]))
        gv, cl = relative_irregularities(u_l, u_r, roll, half_gauge)
        al, vp = absolute_irregularities(u_l, u_r, roll, r_y, r_z)
        out["s"].append(float(np.interp(t_f, t, s_ref_imu)))
        out["al"].append(al)
        out["vp"].append(vp)
        out["gv"].append(gv)
        out["cl"].append(cl)
        out["fid"].append(fid)
        out["tf"].append(t_f)
        quality.append("ok")

    s_out = np.array(out["s"])
    cl_out = np.array(out["cl"])
    span_ok = len(s_out) >= 2 and s_out[-1] - s_out[0] > params.twist_base
    tw = twist(s_out, cl_out, params.twist_base) if span_ok else np.full(len(s_out), np.nan)
    return RunResult(
        s=s_out,
        al=np.array(out["al"]),
        vp=np.array(out["vp"]),
        gv=np.array(out["gv"]),
        cl=cl_out,
        tw=tw,
        quality=quality,
        frame_ids=np.array(out["fid"], dtype=int),
        t_frames=np.array(out["tf"]),
        attitude_t=t,
        attitude_euler=euler,
        r_t=t,
        r=r,
        anchors=anchors,
        fit_rows=fit_rows,
        skipped=skipped,
        anchor_records=anchor_records,
    )


def compare_records(truth, estimate, highpass_wavelength=0.0):
    """Per-channel RMS and max error between two record sets.

    truth/estimate: dicts with arrays s, al, vp, gv, cl, tw. The estimate
    is resampled onto the overlapping part of the truth grid; al and vp
    are compared after applying the same high-pass to both sides when a
    cutoff is given. Returns (metrics dict, overlay dict).
    """
    s_t = np.asarray(truth["s"], dtype=float)
    s_e = np.asarray(estimate["s"], dtype=float)
    lo, hi = max(s_t[0], s_e[0]), min(s_t[-1], s_e[-1])
    sel = (s_t >= lo) & (s_t <= hi)
    s = s_t[sel]
    overlay = {"s": s}
    metrics = {}
    for ch in ("al", "vp", "gv", "cl", "tw"):
        yt = np.asarray(truth[ch], dtype=float)[sel]
        ye = np.interp(s, s_e, np.asarray(estimate[ch], dtype=float))
        if ch in ("al", "vp") and highpass_wavelength > 0.0:
            yt = highpass_spatial(s, yt, highpass_wavelength)
            ye = highpass_spatial(s, ye, highpass_wavelength)
        valid = ~(np.isnan(yt) | np.isnan(ye))
        err = ye[valid] - yt[valid]
        metrics[ch] = {
            "rms": float(np.sqrt(np.mean(err**2))) if len(err) else np.nan,
            "max": float(np.max(np.abs(err))) if len(err) else np.nan,
        }
        overlay[f"{ch}_truth"] = yt
        overlay[f"{ch}_est"] = ye
    return metrics, overlay
