"""End-to-end round trip: simulate sensor streams, estimate, compare.

A 2 km flat line with a 300 m curve carries sinusoidal irregularities
(10-50 m wavelengths, millimetric amplitudes) and a 3 mm gauge step. The
simulator produces IMU, encoder and pixel-cloud streams; the estimator
recovers the four irregularity channels plus twist. With noiseless
sensors the relative channels come back at micrometer level or better.

Run with --noise for a noisy variant: pixel/IMU noise plus 0.5% encoder
drift with odometry correction enabled. Residual arc-length error at
curve transitions shows up as a roll transient in the fusion output and
hence in cross level; it scales with drift * curve-window-length and
with the centripetal acceleration, which is why service layouts with
long curves want a well-calibrated wheel diameter.
"""

import sys
import time
from pathlib import Path

import numpy as np

import railgauge as rg
from railgauge.pipeline import RunInputs, RunParams, compare_records, run

noisy = "--noise" in sys.argv
out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

layout = rg.TrackLayout(
    horizontal=[
        rg.HorizontalSection.straight(500.0),
        rg.HorizontalSection.transition(80.0, 0.0, 300.0),
        rg.HorizontalSection.circular(600.0, 300.0),
        rg.HorizontalSection.transition(80.0, 300.0, 0.0),
        rg.HorizontalSection.straight(740.0),
    ],
    vertical=[rg.VerticalSection.constant(2000.0)],
    rail_inclination=0.025,
)
irregularity = rg.make_irregularity_field(
    layout.total_length,
    [
        dict(channel="al", kind="sine", amplitude=4e-3, wavelength=32.0),
        dict(channel="vp", kind="sine", amplitude=3e-3, wavelength=24.0, phase=0.9),
        dict(channel="gv", kind="sine", amplitude=2e-3, wavelength=17.0, phase=1.3),
        dict(channel="cl", kind="sine", amplitude=2.5e-3, wavelength=41.0, phase=2.8),
        dict(channel="gv", kind="step", amplitude=3e-3, position=1100.0),
    ],
)

m_int = np.array([[2000.0, 0.0, 0.0], [0.0, 2000.0, 0.0], [0.0, 0.0, 1.0]])
bounds = (1500.0, 1500.0)
cam_l = rg.camera_looking_at(m_int, [-0.35, 0.35, 0.55], [0.0, 0.7175, 0.0], bounds)
cam_r = rg.camera_looking_at(m_int, [-0.35, -0.35, 0.55], [0.0, -0.7175, 0.0], bounds)
plane = rg.LaserPlane(1.0, 0.0, 0.0, 0.0)

scenario = rg.Scenario(
    layout=layout,
    irregularity=irregularity,
    template=rg.RailProfileTemplate.default(),
    cam_left=cam_l, plane_left=plane, cam_right=cam_r, plane_right=plane,
    speed=rg.SpeedProfile.constant(20.0),
    imu_rate=200.0, camera_rate=40.0, encoder_rate=200.0,
    points_per_frame=120,
    sigma_pixel=0.3 if noisy else 0.0,
    sigma_accel=5e-3 if noisy else 0.0,
    sigma_gyro=2e-4 if noisy else 0.0,
    encoder_drift=1.005 if noisy else 1.0,
    seed=42,
)

t0 = time.perf_counter()
sim = rg.simulate(scenario)
print(f"simulated {len(sim.frames)} frames, {len(sim.imu.t)} IMU samples "
      f"in {time.perf_counter() - t0:.1f} s")

inputs = RunInputs(
    layout=layout, template=scenario.template,
    cam_left=cam_l, plane_left=plane, cam_right=cam_r, plane_right=plane,
    imu=sim.imu, encoder=sim.encoder, frames=sim.frames,
)
params = RunParams(
    camera_rate=scenario.camera_rate,
    odometry_enabled=noisy,  # needed only when the encoder drifts
    highpass_wavelength=70.0 if noisy else 0.0,
)
t1 = time.perf_counter()
result = run(inputs, params)
print(f"estimated {len(result.s)} records in {time.perf_counter() - t1:.1f} s; "
      f"skipped: {result.skipped or 'none'}")
if len(result.anchors):
    print(f"odometry anchors: {len(result.anchors)}")

estimate = {"s": result.s, "al": result.al, "vp": result.vp,
            "gv": result.gv, "cl": result.cl, "tw": result.tw}
metrics, overlay = compare_records(sim.truth, estimate,
                                   highpass_wavelength=70.0 if noisy else 0.0)
print(f"{'channel':>8} {'rms':>12} {'max':>12}")
for ch in ("al", "vp", "gv", "cl", "tw"):
    print(f"{ch:>8} {metrics[ch]['rms']:12.3e} {metrics[ch]['max']:12.3e}")

from railgauge import fileio

fileio.write_records_csv(out / "estimate.csv", estimate, result.quality)
fileio.write_records_csv(out / "truth.csv", sim.truth)
print(f"records written to {out / 'estimate.csv'} and {out / 'truth.csv'}")
