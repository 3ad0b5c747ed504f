"""railgauge: track geometry measurement from cameras, IMU and encoder.

Library layout:

    track        ideal-track preprocessor, irregularity fields, body kinematics
    vision       pin-hole projection and laser-plane triangulation
    railhead     two-arc rail-head template and constrained profile fit
    calibration  DLT camera calibration, total-least-squares laser plane
    odometry     encoder correction by curvature matching
    fusion       track-aided gyro/accelerometer attitude filter
    pipeline     measurement equations, relative-motion ODE, full run
    simulator    synthetic sensor streams (the ground-truth oracle)
    fileio       file formats (layouts, rigs, templates, CSV streams, configs)
    cli          command-line interface
"""

__version__ = "0.1.0"

from .frames import G_ACCEL
from .track import (
    HorizontalSection,
    IrregularityField,
    TrackLayout,
    VerticalSection,
    body_kinematics,
    frame_velocity,
    irregularities_from_rails,
    rail_point_global,
    rail_profile_frames,
    rails_from_irregularities,
)
from .vision import CameraModel, LaserPlane, camera_looking_at, project, triangulate_on_plane
from .railhead import FitResult, RailProfileTemplate, fit_profile, wear_report
from .calibration import CalibrationSet, calibrate_camera, fit_laser_plane
from .odometry import OdometryTracker, correct_s, estimate_curvature, extract_curvature_functions
from .fusion import AttitudeFilter, predicted_body_acceleration, relative_euler
from .pipeline import (
    ImuData,
    EncoderData,
    RunInputs,
    RunParams,
    absolute_irregularities,
    compare_records,
    integrate_relative_motion,
    relative_irregularities,
    run,
    twist,
)
from .simulator import PrescribedMotion, Scenario, SpeedProfile, make_irregularity_field, simulate
