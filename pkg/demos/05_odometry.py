"""Encoder drift correction by matching the measured curvature signal.

A 10 km line with five curves is ridden with a 2% encoder drift. The
yaw-rate/speed curvature estimate is matched against each upcoming
curvature function; the normalized squared error dips to ~0 when the
window aligns with the curve exit, anchoring the encoder coordinate to
the known track. Writes the ne2 trace and anchors to CSV.
"""

from pathlib import Path

import numpy as np

import railgauge as rg
from railgauge.odometry import OdometryTracker

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

sections = []
for radius, gap in zip([400.0, -500.0, 600.0, 450.0, -550.0],
                       [1400.0, 1500.0, 1600.0, 1550.0, 1450.0]):
    sections += [
        rg.HorizontalSection.straight(gap),
        rg.HorizontalSection.transition(40.0, 0.0, radius),
        rg.HorizontalSection.circular(80.0, radius),
        rg.HorizontalSection.transition(40.0, radius, 0.0),
    ]
sections.append(rg.HorizontalSection.straight(10000.0 - sum(s.length for s in sections)))
layout = rg.TrackLayout(sections, [rg.VerticalSection.constant(10000.0)])

functions = rg.extract_curvature_functions(layout)
print(f"{len(functions)} curvature functions, exits at "
      + ", ".join(f"{fn.s_exit:.0f}" for fn in functions) + " m")

# ride at 25 m/s with a 2% encoder drift and 10% curvature noise
drift, v = 1.02, 25.0
rng = np.random.default_rng(3)
s_true = np.arange(0.0, layout.total_length - 10.0, 0.5)
rho = layout.horizontal_at(s_true)[0]
omega_z = rho * v + rng.normal(0.0, 0.1 * np.abs(rho).max() * v, len(s_true))

tracker = OdometryTracker(functions)
for s_app, wz in zip(drift * s_true, omega_z):
    tracker.add_sample(s_app, wz, v)

print("anchors (encoder -> track):")
for a in tracker.anchors:
    err = a.s_app / drift - a.s_ideal
    print(f"  {a.s_app:9.1f} -> {a.s_ideal:7.1f} m   ne2_min={a.ne2_min:.4f}   "
          f"exit error {err:+.2f} m")

s_ref = rg.correct_s(tracker.anchor_pairs(), drift * s_true)
print(f"corrected coordinate error: max {np.abs(s_ref - s_true).max():.2f} m "
      f"(raw drift reaches {np.abs(drift * s_true - s_true).max():.0f} m)")

with open(out / "ne2_trace.csv", "w") as fh:
    fh.write("s_app,ne2,function_index\n")
    for s, ne2, idx in tracker.trace:
        fh.write(f"{s:.2f},{ne2:.6f},{idx}\n")
print(f"ne2 trace written to {out / 'ne2_trace.csv'}")
