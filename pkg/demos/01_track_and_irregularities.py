"""Build an ideal track layout, query its geometry, inject irregularities.

Walks through the track preprocessor: section tables, closed-form
heading/cant/slope, cached centerline positions, and the four industry
irregularity channels defined on top of the rail centerline offsets.
Writes the sampled centerline and irregularity records to CSV.
"""

from pathlib import Path

import numpy as np

import railgauge as rg

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# A 2 km line: straight approach, clothoid, canted 300 m curve, clothoid out.
cant = -0.06  # balanced-ish for 20 m/s on R=300 (left curve banks left-side down)
layout = rg.TrackLayout(
    horizontal=[
        rg.HorizontalSection.straight(500.0),
        rg.HorizontalSection.transition(80.0, 0.0, 300.0, 0.0, cant),
        rg.HorizontalSection.circular(600.0, 300.0, cant),
        rg.HorizontalSection.transition(80.0, 300.0, 0.0, cant, 0.0),
        rg.HorizontalSection.straight(740.0),
    ],
    vertical=[
        rg.VerticalSection.constant(900.0, 0.0),
        rg.VerticalSection.transition(200.0, 0.0, -0.008),  # start climbing
        rg.VerticalSection.constant(900.0, -0.008),
    ],
    half_gauge=0.7175,
    rail_inclination=0.025,
)
print(f"layout: {layout.total_length:.0f} m, half gauge {layout.half_gauge} m")

# frame queries are closed-form except the position, which is cached
st = layout.frame_at(900.0)  # mid-curve
print(f"at s=900: heading {st.psi:.4f} rad, cant {st.phi:.3f} rad, "
      f"curvature {st.rho_h * 1e3:.3f} 1/km")

s = np.linspace(0.0, layout.total_length, 2001)
pos = layout.position_at(s)
rho_h, _, rho_tw, cant_s, psi = layout.horizontal_at(s)
with open(out / "centerline.csv", "w") as fh:
    fh.write("s,x,y,z,rho_h,cant,psi\n")
    for row in zip(s, pos[:, 0], pos[:, 1], pos[:, 2], rho_h, cant_s, psi):
        fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
print(f"centerline written to {out / 'centerline.csv'}")

# irregularities: sinusoids on each channel plus a gauge step
irr = rg.make_irregularity_field(
    layout.total_length,
    [
        dict(channel="al", kind="sine", amplitude=4e-3, wavelength=32.0),
        dict(channel="vp", kind="sine", amplitude=3e-3, wavelength=24.0, phase=0.9),
        dict(channel="gv", kind="sine", amplitude=2e-3, wavelength=17.0, phase=1.3),
        dict(channel="cl", kind="sine", amplitude=2.5e-3, wavelength=41.0, phase=2.8),
        dict(channel="gv", kind="step", amplitude=3e-3, position=1100.0),
    ],
)
rec = irr.records(s)
print(f"irregularity extremes: al {rec[:, 0].max() * 1e3:+.2f} mm, "
      f"gv step visible at s=1100: {rec[s > 1100][:5, 2].mean() * 1e3:.2f} mm")

# the channel definitions invert exactly
al, vp, gv, cl = rec[:, 0], rec[:, 1], rec[:, 2], rec[:, 3]
rails = rg.rails_from_irregularities(al, vp, gv, cl)
back = rg.irregularities_from_rails(*rails)
print(f"rails <-> irregularities round trip error: {np.abs(back[0] - al).max():.2e} m")

# a rail-head point in global coordinates, irregularity included
p = rg.rail_point_global(layout, 900.0, "left", irr, (0.0, 0.0))
print(f"left rail origin at s=900 in global coordinates: {np.round(p, 4)}")
