"""File formats: layouts, rig parameters, templates, CSV streams, configs.

All text formats are line-oriented with '#' comments. Floats are written
with 17 significant digits so files round-trip bit-exactly.
"""

import csv
import hashlib
from pathlib import Path

import numpy as np
import yaml

from .calibration import CalibrationSet
from .errors import LayoutError
from .pipeline import EncoderData, ImuData, RunInputs, RunParams
from .railhead import RailProfileTemplate
from .simulator import (
    PrescribedMotion,
    Scenario,
    SpeedProfile,
    make_irregularity_field,
)
from .track import (
    CIRCULAR,
    STRAIGHT,
    TRANSITION,
    HorizontalSection,
    IrregularityField,
    TrackLayout,
    VerticalSection,
    curvature_from_radius,
)
from .vision import CameraModel, LaserPlane

_F = "%.17g"


def _fmt(values):
    return " ".join(_F % v for v in np.atleast_1d(values))


def _content_lines(path):
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


# -- track layout -----------------------------------------------------------

_H_KIND_TO_NAME = {STRAIGHT: "straight", CIRCULAR: "circular", TRANSITION: "transition"}
_V_KIND_TO_NAME = {STRAIGHT: "constant", TRANSITION: "transition"}


def save_layout(path, layout):
    lines = [
        "# railgauge track layout",
        "# units: meters, radians",
        "# horizontal: kind length radius_start radius_end cant_start cant_end",
        "#   radius 0 encodes a straight (infinite radius); positive radius curves left",
        "# vertical: kind length slope_start slope_end",
        "#   slope positive descending; cant positive raises the left rail",
        f"half_gauge: {_F % layout.half_gauge}",
        f"rail_inclination: {_F % layout.rail_inclination}",
        "[horizontal]",
    ]
    for sec in layout.horizontal:
        r1 = 0.0 if sec.curv_start == 0.0 else 1.0 / sec.curv_start
        r2 = 0.0 if sec.curv_end == 0.0 else 1.0 / sec.curv_end
        lines.append(
            f"{_H_KIND_TO_NAME[sec.kind]} "
            + _fmt([sec.length, r1, r2, sec.cant_start, sec.cant_end])
        )
    lines.append("[vertical]")
    for sec in layout.vertical:
        lines.append(f"{_V_KIND_TO_NAME[sec.kind]} " + _fmt([sec.length, sec.slope_start, sec.slope_end]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_layout(path):
    half_gauge, inclination = 0.7175, 0.0
    horizontal, vertical = [], []
    section = None
    name_to_h = {v: k for k, v in _H_KIND_TO_NAME.items()}
    name_to_v = {v: k for k, v in _V_KIND_TO_NAME.items()}
    for line in _content_lines(path):
        if line.startswith("["):
            section = line.strip("[]").lower()
            continue
        if section is None:
            key, _, value = line.partition(":")
            key = key.strip().lower()
            if key == "half_gauge":
                half_gauge = float(value)
            elif key == "rail_inclination":
                inclination = float(value)
            else:
                raise LayoutError(f"unknown layout key {key!r}")
            continue
        parts = line.split()
        kind, values = parts[0].lower(), [float(p) for p in parts[1:]]
        if section == "horizontal":
            if kind not in name_to_h or len(values) != 5:
                raise LayoutError(f"bad horizontal section line: {line!r}")
            length, r1, r2, c1, c2 = values
            horizontal.append(
                HorizontalSection(
                    name_to_h[kind],
                    length,
                    curvature_from_radius(r1),
                    curvature_from_radius(r2),
                    c1,
                    c2,
                )
            )
        elif section == "vertical":
            if kind not in name_to_v or len(values) != 3:
                raise LayoutError(f"bad vertical section line: {line!r}")
            vertical.append(VerticalSection(name_to_v[kind], *values))
        else:
            raise LayoutError(f"line outside a known section: {line!r}")
    return TrackLayout(horizontal, vertical, half_gauge=half_gauge, rail_inclination=inclination)


# -- rail-head template -------------------------------------------------------


def save_template(path, template, h_table_points=81):
    y_lo, y_hi = template.lateral_span()
    s2 = np.linspace(y_lo, y_hi, h_table_points)
    lines = [
        "# railgauge rail-head profile template",
        "# two tangent arcs; centers in the profile frame (origin at the crown apex)",
        f"r1: {_F % template.r1}",
        f"r2: {_F % template.r2}",
        f"c1: {_fmt(template.c1)}",
        f"c2: {_fmt(template.c2)}",
        f"alpha_range: {_fmt([template.alpha_min, template.alpha_max])}",
        "[h_r]  # lateral_offset height (informative table of the head shape)",
    ]
    for y, h in zip(s2, template.height(s2)):
        lines.append(_fmt([y, h]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_template(path):
    kv = {}
    for line in _content_lines(path):
        if line.startswith("["):
            break
        key, _, value = line.partition(":")
        kv[key.strip().lower()] = value.split()
    alpha = [float(x) for x in kv["alpha_range"]]
    return RailProfileTemplate(
        r1=float(kv["r1"][0]),
        r2=float(kv["r2"][0]),
        c1=[float(x) for x in kv["c1"]],
        c2=[float(x) for x in kv["c2"]],
        alpha_min=alpha[0],
        alpha_max=alpha[1],
    )


# -- camera/laser rig ----------------------------------------------------------


def save_rig(path, camera, plane, side="left"):
    lines = [
        "# railgauge camera/laser rig parameters",
        "# euler_cam: roll pitch yaw (Rz(yaw) Ry(pitch) Rx(roll)) of the camera in the TGMS frame",
        "# plane: A B C D with A x + B y + C z + D = 0 in the TGMS frame, |n| = 1",
        f"side: {side}",
        "m_int: " + _fmt(camera.m_int.ravel()),
        "u_cam: " + _fmt(camera.u_cam),
        "euler_cam: " + _fmt(camera.euler_cam),
    ]
    if camera.pixel_bounds is not None:
        lines.append("pixel_bounds: " + _fmt(camera.pixel_bounds))
    lines.append("plane: " + _fmt([plane.a, plane.b, plane.c, plane.d]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_rig(path):
    kv = {}
    for line in _content_lines(path):
        key, _, value = line.partition(":")
        kv[key.strip().lower()] = value.split()
    bounds = tuple(float(x) for x in kv["pixel_bounds"]) if "pixel_bounds" in kv else None
    camera = CameraModel(
        m_int=np.array([float(x) for x in kv["m_int"]]).reshape(3, 3),
        u_cam=[float(x) for x in kv["u_cam"]],
        euler_cam=[float(x) for x in kv["euler_cam"]],
        pixel_bounds=bounds,
    )
    plane = LaserPlane(*(float(x) for x in kv["plane"]))
    side = kv.get("side", ["left"])[0]
    return camera, plane, side


# -- CSV streams ----------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_imu_csv(path, imu):
    rows = (
        (_F % t, *(_F % v for v in a), *(_F % v for v in w))
        for t, a, w in zip(imu.t, imu.accel, imu.gyro)
    )
    _write_csv(path, ["t", "ax", "ay", "az", "wx", "wy", "wz"], rows)


def read_imu_csv(path):
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return ImuData(t=data[:, 0], accel=data[:, 1:4], gyro=data[:, 4:7])


def write_encoder_csv(path, encoder):
    _write_csv(
        path, ["t", "s_app"], ((_F % t, _F % s) for t, s in zip(encoder.t, encoder.s_app))
    )


def read_encoder_csv(path):
    data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
    return EncoderData(t=data[:, 0], s_app=data[:, 1])


def write_pixels_csv(path, frames):
    def rows():
        for fid in sorted(frames):
            for side in ("left", "right"):
                if side not in frames[fid]:
                    continue
                for px, py in frames[fid][side]:
                    yield (fid, side, _F % px, _F % py)

    _write_csv(path, ["frame_id", "side", "px", "py"], rows())


def read_pixels_csv(path):
    frames = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for fid_s, side, px, py in reader:
            frames.setdefault(int(fid_s), {}).setdefault(side, []).append(
                (float(px), float(py))
            )
    return {
        fid: {side: np.array(pts) for side, pts in sides.items()}
        for fid, sides in frames.items()
    }


def write_attitude_csv(path, t, euler):
    rows = ((_F % ti, *(_F % v for v in e)) for ti, e in zip(t, euler))
    _write_csv(path, ["t", "phi", "theta", "psi"], rows)


def write_anchors_csv(path, anchors):
    rows = ((_F % a.s_app, _F % a.s_ideal, _F % a.ne2_min) for a in anchors)
    _write_csv(path, ["s_app", "s_ideal", "ne2_min"], rows)


def write_records_csv(path, records, quality=None):
    n = len(records["s"])
    quality = quality if quality is not None else ["ok"] * n
    rows = (
        (
            _F % records["s"][i],
            _F % records["al"][i],
            _F % records["vp"][i],
            _F % records["gv"][i],
            _F % records["cl"][i],
            _F % records["tw"][i],
            quality[i],
        )
        for i in range(n)
    )
    _write_csv(path, ["s", "al", "vp", "gv", "cl", "tw", "quality"], rows)


def read_records_csv(path):
    records = {k: [] for k in ("s", "al", "vp", "gv", "cl", "tw")}
    quality = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            for key, val in zip(("s", "al", "vp", "gv", "cl", "tw"), row):
                records[key].append(float(val))
            quality.append(row[6] if len(row) > 6 else "ok")
    return {k: np.array(v) for k, v in records.items()}, quality


def write_fit_rows_csv(path, fit_rows):
    rows = (
        (fid, side, _F % y, _F % z, _F % roll, _F % rms, int(conv))
        for fid, side, y, z, roll, rms, conv in fit_rows
    )
    _write_csv(path, ["frame_id", "side", "y_Orp", "z_Orp", "phi_rp", "rms", "converged"], rows)


def write_irregularity_csv(path, irr):
    s = irr.s_grid
    rows = (
        (_F % s[i], *(_F % v for v in irr.table[i]))
        for i in range(len(s))
    )
    _write_csv(path, ["s", "y_lir", "z_lir", "y_rir", "z_rir"], rows)


def read_irregularity_csv(path):
    data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
    s = data[:, 0]
    ds = np.diff(s)
    if len(ds) and (np.max(ds) - np.min(ds)) > 1e-9:
        raise ValueError("irregularity grid must be uniform")
    return IrregularityField(float(s[0]), float(ds[0]) if len(ds) else 1.0, data[:, 1:5])


def write_cloud_csv(path, points):
    _write_csv(path, ["y", "z"], ((_F % y, _F % z) for y, z in points))


def read_cloud_csv(path):
    return np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))


def read_correspondences_csv(path):
    """tag{P|Q},X,Y,Z,px,py rows; px/py empty for Q points."""
    p_points, p_pixels, q_points = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            tag = row[0].strip().upper()
            xyz = [float(v) for v in row[1:4]]
            if tag == "P":
                p_points.append(xyz)
                p_pixels.append([float(row[4]), float(row[5])])
            elif tag == "Q":
                q_points.append(xyz)
            else:
                raise ValueError(f"unknown correspondence tag {tag!r}")
    return CalibrationSet(
        pattern_points=np.array(p_points).reshape(-1, 3),
        pattern_pixels=np.array(p_pixels).reshape(-1, 2),
        laser_points=np.array(q_points).reshape(-1, 3),
    )


def write_correspondences_csv(path, cal_set):
    def rows():
        for u, n in zip(cal_set.pattern_points, cal_set.pattern_pixels):
            yield ("P", *(_F % v for v in u), _F % n[0], _F % n[1])
        for u in cal_set.laser_points:
            yield ("Q", *(_F % v for v in u), "", "")

    _write_csv(path, ["tag", "X", "Y", "Z", "px", "py"], rows())


def write_sim_output(out_dir, sim):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_imu_csv(out / "imu.csv", sim.imu)
    write_encoder_csv(out / "encoder.csv", sim.encoder)
    if sim.frames:
        write_pixels_csv(out / "pixels.csv", sim.frames)
    write_records_csv(out / "truth.csv", sim.truth)


# -- configs ---------------------------------------------------------------------


def _resolve(base_dir, value):
    p = Path(value)
    return p if p.is_absolute() else Path(base_dir) / p


def load_scenario_config(path):
    """Scenario from a YAML file; referenced files resolve relative to it."""
    path = Path(path)
    cfg = yaml.safe_load(path.read_text())
    base = path.parent
    layout = load_layout(_resolve(base, cfg["layout"]))
    template = load_template(_resolve(base, cfg["template"])) if "template" in cfg else None
    irr_cfg = cfg.get("irregularity")
    if isinstance(irr_cfg, str):
        irr = read_irregularity_csv(_resolve(base, irr_cfg))
    elif isinstance(irr_cfg, dict):
        irr = make_irregularity_field(
            layout.total_length, irr_cfg.get("components", []), ds=irr_cfg.get("ds", 0.25)
        )
    else:
        irr = IrregularityField.zeros(layout.total_length)
    cams = {}
    planes = {}
    for side in ("left", "right"):
        key = f"rig_{side}"
        if key in cfg:
            cam, plane, _ = load_rig(_resolve(base, cfg[key]))
            cams[side], planes[side] = cam, plane
    speed_cfg = cfg.get("speed", {"constant": 20.0})
    if "constant" in speed_cfg:
        speed = SpeedProfile.constant(float(speed_cfg["constant"]))
    else:
        knots = np.asarray(speed_cfg["knots"], dtype=float)
        speed = SpeedProfile(knots[:, 0], knots[:, 1])
    motion = PrescribedMotion(
        {k: [tuple(h) for h in v] for k, v in cfg.get("motion", {}).items()}
    )
    noise = cfg.get("noise", {})
    return Scenario(
        layout=layout,
        irregularity=irr,
        template=template,
        cam_left=cams.get("left"),
        plane_left=planes.get("left"),
        cam_right=cams.get("right"),
        plane_right=planes.get("right"),
        speed=speed,
        motion=motion,
        imu_rate=float(cfg.get("imu_rate", 200.0)),
        camera_rate=float(cfg.get("camera_rate", 40.0)),
        encoder_rate=float(cfg.get("encoder_rate", 200.0)),
        duration=cfg.get("duration"),
        points_per_frame=int(cfg.get("points_per_frame", 120)),
        sigma_accel=float(noise.get("sigma_accel", 0.0)),
        sigma_gyro=float(noise.get("sigma_gyro", 0.0)),
        sigma_pixel=float(noise.get("sigma_pixel", 0.0)),
        encoder_drift=float(noise.get("encoder_drift", 1.0)),
        sigma_encoder=float(noise.get("sigma_encoder", 0.0)),
        seed=int(cfg.get("seed", 0)),
    )


def load_run_config(path, overrides=None):
    """(RunInputs, RunParams, out_dir) from an estimate-run YAML file."""
    path = Path(path)
    cfg = yaml.safe_load(path.read_text())
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    base = path.parent
    for key in ("layout", "template", "rig_left", "rig_right", "imu", "encoder", "pixels"):
        if key not in cfg:
            raise FileNotFoundError(f"run config is missing the {key!r} entry")
        target = _resolve(base, cfg[key])
        if not Path(target).exists():
            raise FileNotFoundError(f"{key} file not found: {target}")
    layout = load_layout(_resolve(base, cfg["layout"]))
    template = load_template(_resolve(base, cfg["template"]))
    cam_l, plane_l, _ = load_rig(_resolve(base, cfg["rig_left"]))
    cam_r, plane_r, _ = load_rig(_resolve(base, cfg["rig_right"]))
    inputs = RunInputs(
        layout=layout,
        template=template,
        cam_left=cam_l,
        plane_left=plane_l,
        cam_right=cam_r,
        plane_right=plane_r,
        imu=read_imu_csv(_resolve(base, cfg["imu"])),
        encoder=read_encoder_csv(_resolve(base, cfg["encoder"])),
        frames=read_pixels_csv(_resolve(base, cfg["pixels"])),
    )
    odo = cfg.get("odometry", {})
    fus = cfg.get("fusion", {})
    seed_anchor = odo.get("seed_anchor", (0.0, 0.0))
    params = RunParams(
        camera_rate=float(cfg.get("camera_rate", 40.0)),
        odometry_enabled=bool(odo.get("enabled", True)),
        odometry_tau=float(odo.get("tau", 0.2)),
        odometry_hysteresis=float(odo.get("hysteresis", 0.05)),
        odometry_stride=float(odo.get("stride", 0.5)),
        odometry_v_min=float(odo.get("v_min", 0.5)),
        odometry_seed_anchor=tuple(seed_anchor) if seed_anchor is not None else None,
        fusion_beta=float(fus.get("beta", 0.05)),
        gyro_bias_window=float(fus.get("gyro_bias_window", 0.0)),
        highpass_wavelength=float(cfg.get("highpass_wavelength", 70.0)),
        twist_base=float(cfg.get("twist_base", 3.0)),
        speed_window=float(cfg.get("speed_window", 1.0)),
    )
    files = {k: str(_resolve(base, cfg[k])) for k in
             ("layout", "template", "rig_left", "rig_right", "imu", "encoder", "pixels")}
    return inputs, params, cfg.get("out", "."), files


def sha256_file(path):
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(path, config, input_files, extra=None):
    """Reproducibility manifest: config echo plus input hashes."""
    from . import __version__

    manifest = {
        "railgauge_version": __version__,
        "config": config,
        "input_hashes": {k: sha256_file(v) for k, v in input_files.items()},
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(yaml.safe_dump(manifest, sort_keys=True))
