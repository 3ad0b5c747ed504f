"""Command-line entry point.

Subcommands: simulate, calibrate, fit-profile, odometry, estimate,
compare. Exit codes: 0 success, 1 input error, 2 numerical failure.
Plot output is CSV data, not images.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import fileio
from .calibration import calibrate_camera, fit_laser_plane
from .errors import LayoutError, RailgaugeError
from .odometry import OdometryTracker, extract_curvature_functions
from .pipeline import compare_records, run
from .railhead import RailProfileTemplate, fit_profile
from .simulator import simulate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser():
    parser = _Parser(prog="railgauge", description="Track geometry measurement toolkit")
    parser.add_argument("--verbose", action="store_true", help="progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="generate synthetic sensor streams")
    p.add_argument("scenario", nargs="?", help="scenario YAML")
    p.add_argument("--config", help="scenario YAML (alternative to the positional)")
    p.add_argument("--out", default="sim_out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--dt", type=float, default=None, help="override the IMU sample interval [s]")

    p = sub.add_parser("calibrate", help="camera + laser-plane calibration")
    p.add_argument("correspondences", help="CSV tag{P|Q},X,Y,Z,px,py")
    p.add_argument("--out", default="rig.txt", help="rig parameter file to write")
    p.add_argument("--side", default="left", choices=("left", "right"))
    p.add_argument("--refine", action="store_true", help="Gauss-Newton reprojection polish")

    p = sub.add_parser("fit-profile", help="fit the rail-head template to a 2D cloud")
    p.add_argument("cloud", help="CSV with y,z columns [m]")
    p.add_argument("--template", help="template file (default: built-in)")
    p.add_argument("--out", help="append the fit to this CSV")
    p.add_argument("--side", default="left", choices=("left", "right"))
    p.add_argument("--frame-id", type=int, default=0)

    p = sub.add_parser("odometry", help="curve-exit detection diagnostics")
    p.add_argument("runconfig", nargs="?", help="run YAML (layout, imu, encoder)")
    p.add_argument("--config", help="run YAML (alternative to the positional)")
    p.add_argument("--out", default="odometry_out", help="output directory")

    p = sub.add_parser("estimate", help="full irregularity measurement")
    p.add_argument("runconfig", nargs="?", help="run YAML")
    p.add_argument("--config", help="run YAML (alternative to the positional)")
    p.add_argument("--out", default=None, help="output directory (overrides config)")

    p = sub.add_parser("compare", help="per-channel error report of two record CSVs")
    p.add_argument("estimate", help="estimated records CSV")
    p.add_argument("truth", help="ground-truth records CSV")
    p.add_argument("--out", default=None, help="directory for overlay CSVs")
    p.add_argument(
        "--highpass-wavelength",
        type=float,
        default=0.0,
        help="apply the same high-pass to truth and estimate al/vp [m]",
    )
    return parser


def _positional_or_config(args, attr):
    path = getattr(args, attr) or args.config
    if not path:
        raise FileNotFoundError(f"no {attr} file given (positional or --config)")
    if not Path(path).exists():
        raise FileNotFoundError(f"{attr} file not found: {path}")
    return path


def _cmd_simulate(args, verbose):
    path = _positional_or_config(args, "scenario")
    scenario = fileio.load_scenario_config(path)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.dt is not None:
        scenario.imu_rate = 1.0 / args.dt
    sim = simulate(scenario)
    fileio.write_sim_output(args.out, sim)
    fileio.write_manifest(
        Path(args.out) / "manifest.yaml",
        yaml.safe_load(Path(path).read_text()),
        {"scenario": path},
        extra={"seed": scenario.seed, "camera_rate": sim.camera_rate},
    )
    if verbose:
        print(f"samples: imu={len(sim.imu.t)} encoder={len(sim.encoder.t)} frames={len(sim.frames)}")
    print(f"simulation written to {args.out}")
    return 0


def _cmd_calibrate(args, verbose):
    if not Path(args.correspondences).exists():
        raise FileNotFoundError(f"correspondences file not found: {args.correspondences}")
    cal_set = fileio.read_correspondences_csv(args.correspondences)
    result = calibrate_camera(cal_set, refine=args.refine)
    plane, plane_rms = fit_laser_plane(cal_set.laser_points)
    fileio.save_rig(args.out, result.camera, plane, side=args.side)
    print(
        f"reprojection RMS {result.reprojection_rms:.4g} px"
        f" ({'ok' if result.quality_ok else 'POOR'}), plane RMS {plane_rms:.4g} m"
    )
    print(f"rig written to {args.out}")
    return 0


def _cmd_fit_profile(args, verbose):
    if not Path(args.cloud).exists():
        raise FileNotFoundError(f"cloud file not found: {args.cloud}")
    template = (
        fileio.load_template(args.template) if args.template else RailProfileTemplate.default()
    )
    cloud = fileio.read_cloud_csv(args.cloud)
    fit = fit_profile(cloud, template)
    print(
        f"origin y={fit.u_origin[0]:.6g} m z={fit.u_origin[1]:.6g} m roll={fit.roll:.6g} rad "
        f"rms={fit.rms_residual:.3g} m converged={fit.converged} iters={fit.iterations}"
    )
    if args.out:
        row = [
            (args.frame_id, args.side, fit.u_origin[0], fit.u_origin[1], fit.roll,
             fit.rms_residual, fit.converged)
        ]
        new = not Path(args.out).exists()
        if new:
            fileio.write_fit_rows_csv(args.out, row)
        else:
            with open(args.out, "a", newline="") as fh:
                fh.write(
                    f"{args.frame_id},{args.side},{fit.u_origin[0]!r},{fit.u_origin[1]!r},"
                    f"{fit.roll!r},{fit.rms_residual!r},{int(fit.converged)}\n"
                )
    return 0 if fit.converged else 2


def _cmd_odometry(args, verbose):
    path = _positional_or_config(args, "runconfig")
    cfg = yaml.safe_load(Path(path).read_text())
    base = Path(path).parent
    for key in ("layout", "imu", "encoder"):
        if key not in cfg:
            raise FileNotFoundError(f"run config is missing the {key!r} entry")
        target = base / cfg[key] if not Path(cfg[key]).is_absolute() else Path(cfg[key])
        if not target.exists():
            raise FileNotFoundError(f"{key} file not found: {target}")
    layout = fileio.load_layout(base / cfg["layout"])
    imu = fileio.read_imu_csv(base / cfg["imu"])
    enc = fileio.read_encoder_csv(base / cfg["encoder"])
    odo = cfg.get("odometry", {})
    tracker = OdometryTracker(
        extract_curvature_functions(layout, odo.get("stride", 0.5)),
        tau=odo.get("tau", 0.2),
        hysteresis=odo.get("hysteresis", 0.05),
        stride=odo.get("stride", 0.5),
        v_min=odo.get("v_min", 0.5),
        seed_anchor=tuple(odo["seed_anchor"]) if odo.get("seed_anchor") else (0.0, 0.0),
    )
    w_z = np.interp(enc.t, imu.t, imu.gyro[:, 2])
    v_enc = np.gradient(enc.s_app, enc.t)
    for sa, wz, ve in zip(enc.s_app, w_z, v_enc):
        tracker.add_sample(sa, wz, ve)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_anchors_csv(out / "anchors.csv", tracker.anchors)
    with open(out / "ne2_trace.csv", "w") as fh:
        fh.write("s_app,ne2,function_index\n")
        for s, ne2, idx in tracker.trace:
            fh.write(f"{s!r},{ne2!r},{idx}\n")
    n_detected = len(tracker.anchors) - 1  # minus the seed anchor
    print(f"functions: {len(tracker.functions)}, exits detected: {n_detected}, "
          f"skipped: {len(tracker.skipped_functions)}")
    print(f"diagnostics written to {out}")
    return 0


def _cmd_estimate(args, verbose):
    path = _positional_or_config(args, "runconfig")
    inputs, params, out_dir, files = fileio.load_run_config(path)
    if args.out:
        out_dir = args.out
    result = run(inputs, params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = {
        "s": result.s, "al": result.al, "vp": result.vp,
        "gv": result.gv, "cl": result.cl, "tw": result.tw,
    }
    fileio.write_records_csv(out / "records.csv", records, result.quality)
    fileio.write_attitude_csv(out / "attitude.csv", result.attitude_t, result.attitude_euler)
    fileio.write_fit_rows_csv(out / "fits.csv", result.fit_rows)
    if result.anchor_records:
        fileio.write_anchors_csv(out / "anchors.csv", result.anchor_records)
    fileio.write_manifest(
        out / "manifest.yaml",
        yaml.safe_load(Path(path).read_text()),
        files,
        extra={"frames_used": int(len(result.s)), "frames_skipped": result.skipped},
    )
    if verbose and result.skipped:
        print(f"skipped frames: {result.skipped}")
    print(f"{len(result.s)} records written to {out / 'records.csv'}")
    return 0


def _cmd_compare(args, verbose):
    for path in (args.estimate, args.truth):
        if not Path(path).exists():
            raise FileNotFoundError(f"records file not found: {path}")
    est, _ = fileio.read_records_csv(args.estimate)
    tru, _ = fileio.read_records_csv(args.truth)
    metrics, overlay = compare_records(tru, est, highpass_wavelength=args.highpass_wavelength)
    for ch in ("al", "vp", "gv", "cl", "tw"):
        m = metrics[ch]
        print(f"{ch}: rms={m['rms']:.6g} m  max={m['max']:.6g} m")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        header = ["s"] + [f"{ch}_{kind}" for ch in ("al", "vp", "gv", "cl", "tw")
                          for kind in ("truth", "est")]
        cols = [overlay["s"]] + [overlay[h] for h in header[1:]]
        with open(out / "overlay.csv", "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*cols):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        print(f"overlay written to {out / 'overlay.csv'}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "fit-profile": _cmd_fit_profile,
    "odometry": _cmd_odometry,
    "estimate": _cmd_estimate,
    "compare": _cmd_compare,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args, args.verbose)
    except (FileNotFoundError, LayoutError, KeyError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RailgaugeError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
