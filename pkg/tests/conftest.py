"""Shared scenario builders for the simulator-driven tests."""

import numpy as np
import pytest

from railgauge.railhead import RailProfileTemplate
from railgauge.simulator import PrescribedMotion, Scenario, SpeedProfile, make_irregularity_field
from railgauge.track import HorizontalSection, IrregularityField, TrackLayout, VerticalSection
from railgauge.vision import LaserPlane, camera_looking_at

HALF_GAUGE = 0.7175


def flat_curved_layout(straight=400.0, trans=80.0, circ=500.0, radius=300.0, tail=400.0):
    """Straight - clothoid - flat (uncanted) circular curve - clothoid - straight."""
    h = [
        HorizontalSection.straight(straight),
        HorizontalSection.transition(trans, 0.0, radius),
        HorizontalSection.circular(circ, radius),
        HorizontalSection.transition(trans, radius, 0.0),
        HorizontalSection.straight(tail),
    ]
    total = straight + 2 * trans + circ + tail
    return TrackLayout(
        h, [VerticalSection.constant(total)], half_gauge=HALF_GAUGE, rail_inclination=0.025
    )


def default_rigs(template=None):
    """Left/right camera + laser pairs watching the rail heads."""
    m_int = np.array([[2000.0, 0.0, 0.0], [0.0, 2000.0, 0.0], [0.0, 0.0, 1.0]])
    bounds = (1500.0, 1500.0)
    cam_l = camera_looking_at(m_int, [-0.35, 0.35, 0.55], [0.0, HALF_GAUGE, 0.0], bounds)
    cam_r = camera_looking_at(m_int, [-0.35, -0.35, 0.55], [0.0, -HALF_GAUGE, 0.0], bounds)
    plane = LaserPlane(1.0, 0.0, 0.0, 0.0)
    return cam_l, plane, cam_r, plane


def acceptance_irregularity(length):
    """Sinusoids in the 10-50 m band (<= 5 mm) plus a 3 mm gauge step."""
    return make_irregularity_field(
        length,
        [
            dict(channel="al", kind="sine", amplitude=4e-3, wavelength=32.0),
            dict(channel="al", kind="sine", amplitude=1.5e-3, wavelength=11.0, phase=0.4),
            dict(channel="vp", kind="sine", amplitude=3e-3, wavelength=24.0, phase=0.9),
            dict(channel="vp", kind="sine", amplitude=1e-3, wavelength=50.0, phase=2.2),
            dict(channel="gv", kind="sine", amplitude=2e-3, wavelength=17.0, phase=1.3),
            dict(channel="cl", kind="sine", amplitude=2.5e-3, wavelength=41.0, phase=2.8),
            dict(channel="cl", kind="sine", amplitude=1e-3, wavelength=13.0, phase=0.1),
            dict(channel="gv", kind="step", amplitude=3e-3, position=0.55 * length),
        ],
    )


def build_scenario(layout=None, irregularity=None, motion=None, seed=0, **kw):
    layout = layout if layout is not None else flat_curved_layout()
    if irregularity is None:
        irregularity = IrregularityField.zeros(layout.total_length)
    template = kw.pop("template", RailProfileTemplate.default())
    cam_l, plane_l, cam_r, plane_r = default_rigs()
    defaults = dict(
        layout=layout,
        irregularity=irregularity,
        template=template,
        cam_left=cam_l,
        plane_left=plane_l,
        cam_right=cam_r,
        plane_right=plane_r,
        speed=SpeedProfile.constant(20.0),
        motion=motion if motion is not None else PrescribedMotion.zero(),
        imu_rate=200.0,
        camera_rate=40.0,
        encoder_rate=200.0,
        points_per_frame=120,
        seed=seed,
    )
    defaults.update(kw)
    return Scenario(**defaults)


@pytest.fixture(scope="session")
def small_flat_scenario():
    layout = flat_curved_layout(straight=120.0, trans=40.0, circ=100.0, tail=100.0)
    return build_scenario(
        layout=layout, irregularity=acceptance_irregularity(layout.total_length)
    )
