"""Track-aided attitude estimation versus the gravity-only baseline.

On a 300 m curve at 20 m/s the centripetal acceleration tilts the
apparent gravity by ~7.7 degrees; a gravity-only orientation filter
converges to that tilt as a roll error. Subtracting the track-predicted
acceleration before the gravity alignment step removes the error almost
entirely. Writes both roll traces to CSV.
"""

from pathlib import Path

import numpy as np

import railgauge as rg
from railgauge.fusion import quat_from_matrix, run_attitude_filter

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

layout = rg.TrackLayout(
    [
        rg.HorizontalSection.transition(60.0, 0.0, 300.0),
        rg.HorizontalSection.circular(2000.0, 300.0),
    ],
    [rg.VerticalSection.constant(2060.0)],
)

scenario = rg.Scenario(
    layout=layout,
    irregularity=rg.IrregularityField.zeros(layout.total_length),
    speed=rg.SpeedProfile.constant(20.0),
    camera_rate=0.0,
    duration=60.0,
    sigma_gyro=2e-4,  # mild sensor noise
    sigma_accel=5e-3,
    seed=11,
)
sim = rg.simulate(scenario)

t = sim.imu.t
s = scenario.speed.s_at(t)
rho_h = layout.horizontal_at(s)[0]
a_track = layout.rotation_at(s)
v = scenario.speed.v_at(t)
predicted = np.column_stack([np.zeros_like(s), rho_h * v * v, np.zeros_like(s)])
q0 = quat_from_matrix(a_track[0])

corrected, _ = run_attitude_filter(t, sim.imu.gyro, sim.imu.accel, a_track,
                                   predicted, q0, beta=0.05)
baseline, _ = run_attitude_filter(t, sim.imu.gyro, sim.imu.accel, a_track,
                                  np.zeros_like(predicted), q0, beta=0.05)

steady = t > 40.0
tilt = np.degrees(np.arctan((20.0**2 / 300.0) / rg.G_ACCEL))
print(f"centripetal tilt of apparent gravity: {tilt:.2f} deg")
print(f"steady-state roll error, corrected filter: "
      f"{np.degrees(np.abs(corrected[steady, 0]).mean()):.4f} deg")
print(f"steady-state roll error, gravity-only baseline: "
      f"{np.degrees(np.abs(baseline[steady, 0]).mean()):.2f} deg")

with open(out / "fusion_roll.csv", "w") as fh:
    fh.write("t,roll_corrected,roll_baseline\n")
    for row in zip(t[::20], corrected[::20, 0], baseline[::20, 0]):
        fh.write(",".join(f"{x:.8g}" for x in row) + "\n")
print(f"roll traces written to {out / 'fusion_roll.csv'}")
