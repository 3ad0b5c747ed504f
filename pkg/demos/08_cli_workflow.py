"""The same round trip as demo 07, driven through the file-based CLI.

Writes every asset a field deployment would carry (layout, template,
rig parameter files, scenario and run configs), then runs

    railgauge simulate scenario.yaml --out sim_out
    railgauge estimate run.yaml
    railgauge compare est_out/records.csv sim_out/truth.csv

through the command-line entry point.
"""

from pathlib import Path

import numpy as np
import yaml

import railgauge as rg
from railgauge import fileio
from railgauge.cli import main

base = Path(__file__).parent / "output" / "cli_workflow"
base.mkdir(parents=True, exist_ok=True)

# assets
layout = rg.TrackLayout(
    horizontal=[
        rg.HorizontalSection.straight(150.0),
        rg.HorizontalSection.transition(40.0, 0.0, 300.0),
        rg.HorizontalSection.circular(120.0, 300.0),
        rg.HorizontalSection.transition(40.0, 300.0, 0.0),
        rg.HorizontalSection.straight(150.0),
    ],
    vertical=[rg.VerticalSection.constant(500.0)],
    rail_inclination=0.025,
)
fileio.save_layout(base / "layout.txt", layout)
fileio.save_template(base / "template.txt", rg.RailProfileTemplate.default())

m_int = np.array([[2000.0, 0.0, 0.0], [0.0, 2000.0, 0.0], [0.0, 0.0, 1.0]])
bounds = (1500.0, 1500.0)
plane = rg.LaserPlane(1.0, 0.0, 0.0, 0.0)
cam_l = rg.camera_looking_at(m_int, [-0.35, 0.35, 0.55], [0.0, 0.7175, 0.0], bounds)
cam_r = rg.camera_looking_at(m_int, [-0.35, -0.35, 0.55], [0.0, -0.7175, 0.0], bounds)
fileio.save_rig(base / "rig_left.txt", cam_l, plane, side="left")
fileio.save_rig(base / "rig_right.txt", cam_r, plane, side="right")

(base / "scenario.yaml").write_text(yaml.safe_dump({
    "layout": "layout.txt",
    "template": "template.txt",
    "rig_left": "rig_left.txt",
    "rig_right": "rig_right.txt",
    "irregularity": {
        "components": [
            {"channel": "al", "kind": "sine", "amplitude": 3e-3, "wavelength": 28.0},
            {"channel": "cl", "kind": "sine", "amplitude": 2e-3, "wavelength": 35.0},
            {"channel": "gv", "kind": "step", "amplitude": 3e-3, "position": 250.0},
        ]
    },
    "speed": {"constant": 20.0},
    "camera_rate": 40.0,
    "points_per_frame": 100,
    "seed": 1,
}))

(base / "run.yaml").write_text(yaml.safe_dump({
    "layout": "layout.txt",
    "template": "template.txt",
    "rig_left": "rig_left.txt",
    "rig_right": "rig_right.txt",
    "imu": "sim_out/imu.csv",
    "encoder": "sim_out/encoder.csv",
    "pixels": "sim_out/pixels.csv",
    "camera_rate": 40.0,
    "odometry": {"enabled": False},
    "highpass_wavelength": 0.0,
    "out": str(base / "est_out"),
}))

for argv in (
    ["simulate", str(base / "scenario.yaml"), "--out", str(base / "sim_out")],
    ["estimate", str(base / "run.yaml")],
    ["compare", str(base / "est_out" / "records.csv"),
     str(base / "sim_out" / "truth.csv"), "--out", str(base / "cmp_out")],
):
    print(f"$ railgauge {' '.join(argv)}")
    rc = main(argv)
    assert rc == 0, f"command failed with exit code {rc}"
print(f"all artifacts under {base}")
