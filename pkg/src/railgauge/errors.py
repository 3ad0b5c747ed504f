"""Exception types raised across the package."""


class RailgaugeError(Exception):
    """Base class for all package errors."""


class LayoutError(RailgaugeError):
    """Track layout file is inconsistent (discontinuity, bad section, length mismatch)."""


class RangeError(RailgaugeError):
    """Arc-length query outside the layout."""


class BehindCameraError(RailgaugeError):
    """Point has non-positive depth along the optical axis."""


class SingularGeometryError(RailgaugeError):
    """Back-projected ray is (numerically) parallel to the laser plane."""


class EmptyCloudError(RailgaugeError):
    """No usable points left in a point cloud."""


class DegenerateCloudError(RailgaugeError):
    """Point cloud does not constrain the fit (e.g. collinear points)."""


class DegenerateConfigurationError(RailgaugeError):
    """Calibration input does not determine the model (rank deficient)."""


class BelowSpeedError(RailgaugeError):
    """Forward speed too low for a curvature estimate."""


class AnchorConflictError(RailgaugeError):
    """New odometry anchor would break monotonicity."""


class StreamGapError(RailgaugeError):
    """Gap in an input sample stream larger than the allowed number of intervals."""


class VisibilityError(RailgaugeError):
    """Camera cannot see the rail head for a given frame."""


class OutOfEnvelopeError(RailgaugeError):
    """Attitude outside the small-angle service envelope."""


class CalibrationQualityWarning(UserWarning):
    """Reprojection residual above the configured threshold."""
