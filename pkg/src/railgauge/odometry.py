"""Encoder arc-length correction by curvature-signal matching.

The encoder coordinate s_app drifts (unknown wheel radius, micro-slip).
The ideal horizontal curvature of the track is a known function of the
true arc length: a sequence of trapezoids (transition-curve-transition)
and double-trapezoids (S-curves) separated by zero-curvature straights.
The measured curvature rho_exp = omega_z / V, logged against s_app, is
matched against each upcoming curvature function over a sliding window
ending at the candidate exit location:

    e2(s)  = integral over the window of (rho_exp - rho_ideal)^2
    ne2(s) = e2(s) / integral of rho_ideal^2

ne2 sits near 1 on straight track and dips toward 0 when the window
aligns with the curve; the dip minimum anchors (s_app, s_exit_ideal).
Anchors feed a piecewise-linear monotone map from encoder to track arc
length. All window integrals are trapezoidal on the curvature function's
own uniform grid, so a window of zeros scores exactly 1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AnchorConflictError, BelowSpeedError

DEFAULT_GRID = 0.5  # m, curvature-function sampling and window stride
DEFAULT_TAU = 0.2  # detection threshold on ne2
DEFAULT_HYSTERESIS = 0.05  # required rise above the running minimum
DEFAULT_V_MIN = 0.5  # m/s


def estimate_curvature(omega_z, v, v_min=DEFAULT_V_MIN):
    """Trajectory curvature from yaw rate and forward speed."""
    if v <= v_min:
        raise BelowSpeedError(f"speed {v} m/s <= {v_min} m/s")
    return omega_z / v


@dataclass(frozen=True)
class CurvatureFunction:
    """One curved stretch of the ideal horizontal profile."""

    s_start: float
    s_exit: float
    offsets: np.ndarray  # (k,) uniform, 0 .. delta_s
    rho: np.ndarray  # (k,) ideal curvature at s_start + offsets
    i2: float  # normalization integral of rho^2

    @property
    def delta_s(self):
        return self.s_exit - self.s_start


def extract_curvature_functions(layout, grid=DEFAULT_GRID):
    """Curvature functions of a layout, in track order.

    Consecutive non-straight horizontal sections merge into one function
    (an S-curve is a single double-trapezoid with one exit).
    """
    starts, _ = layout.section_boundaries()
    kinds = [sec.kind for sec in layout.horizontal]
    functions = []
    i = 0
    while i < len(kinds):
        if kinds[i] == 0:  # straight
            i += 1
            continue
        j = i
        while j + 1 < len(kinds) and kinds[j + 1] != 0:
            j += 1
        s_start, s_exit = float(starts[i]), float(starts[j + 1])
        k = max(2, int(round((s_exit - s_start) / grid)))
        offsets = (s_exit - s_start) * np.arange(k + 1) / k
        rho = layout.horizontal_at(s_start + offsets)[0]
        i2 = float(np.trapezoid(rho * rho, offsets))
        if i2 <= 0.0:
            raise ValueError("curvature function with zero energy")
        functions.append(CurvatureFunction(s_start, s_exit, offsets, rho, i2))
        i = j + 1
    return functions


def normalized_squared_error(s_buf, rho_buf, fn, s):
    """ne2 for the window [s - delta_s, s] of the measured-curvature log.

    Returns None when the buffer does not cover the window ("not ready").
    """
    lo = s - fn.delta_s
    if len(s_buf) < 2 or s_buf[0] > lo or s_buf[-1] < s:
        return None
    rho_exp = np.interp(lo + fn.offsets, s_buf, rho_buf)
    diff = rho_exp - fn.rho
    return float(np.trapezoid(diff * diff, fn.offsets) / fn.i2)


def _refine_minimum(s_vals, ne2_vals, idx, stride):
    """Sub-grid quadratic interpolation of the ne2 minimum."""
    if idx <= 0 or idx >= len(ne2_vals) - 1:
        return s_vals[idx]
    y0, y1, y2 = ne2_vals[idx - 1], ne2_vals[idx], ne2_vals[idx + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom <= 0.0:
        return s_vals[idx]
    delta = 0.5 * (y0 - y2) / denom
    return s_vals[idx] + np.clip(delta, -1.0, 1.0) * stride


@dataclass
class Anchor:
    s_app: float
    s_ideal: float
    ne2_min: float


class OdometryTracker:
    """Streaming exit detector and encoder-coordinate corrector.

    Feed (s_app, omega_z, v) samples in ride order; anchors accumulate as
    curve exits are detected. Single-writer state machine; queries are
    read-only.
    """

    def __init__(
        self,
        functions,
        tau=DEFAULT_TAU,
        hysteresis=DEFAULT_HYSTERESIS,
        stride=DEFAULT_GRID,
        v_min=DEFAULT_V_MIN,
        seed_anchor=(0.0, 0.0),
        max_drift=0.1,
        giveup_margin=500.0,
    ):
        self.functions = list(functions)
        self.tau = tau
        self.hysteresis = hysteresis
        self.stride = stride
        self.v_min = v_min
        self.max_drift = max_drift
        self.giveup_margin = giveup_margin
        self.anchors = []
        if seed_anchor is not None:
            self.anchors.append(Anchor(seed_anchor[0], seed_anchor[1], 0.0))
        self._s_buf = []
        self._rho_buf = []
        self._fn_idx = 0
        self._next_eval = None
        self._window = []  # (s, ne2) history for the current function
        self._min_val = np.inf
        self._min_idx = -1
        self.trace = []  # (s_app, ne2, fn_idx) diagnostics
        self.skipped_functions = []

    def _current(self):
        return self.functions[self._fn_idx] if self._fn_idx < len(self.functions) else None

    def add_sample(self, s_app, omega_z, v):
        """Ingest one sample; returns a newly detected Anchor or None."""
        if self._s_buf and s_app <= self._s_buf[-1]:
            return None  # stalled or reversing; keep the buffer monotone
        try:
            rho = estimate_curvature(omega_z, v, self.v_min)
        except BelowSpeedError:
            return None
        self._s_buf.append(float(s_app))
        self._rho_buf.append(float(rho))
        fn = self._current()
        if fn is None:
            return None
        if self._next_eval is None:
            self._next_eval = s_app
        anchor = None
        while self._next_eval <= s_app:
            anchor = self._evaluate(self._next_eval) or anchor
            self._next_eval += self.stride
        self._trim()
        return anchor

    def _evaluate(self, s):
        fn = self._current()
        if fn is None:
            return None
        s_buf = np.asarray(self._s_buf)
        rho_buf = np.asarray(self._rho_buf)
        ne2 = normalized_squared_error(s_buf, rho_buf, fn, s)
        if ne2 is None:
            if s > fn.s_exit * (1.0 + self.max_drift) + self.giveup_margin:
                self._advance(skipped=True)
            return None
        self.trace.append((s, ne2, self._fn_idx))
        self._window.append((s, ne2))
        if ne2 < self._min_val:
            self._min_val = ne2
            self._min_idx = len(self._window) - 1
        detected = (
            self._min_val < self.tau
            and ne2 > self._min_val + self.hysteresis
        )
        if not detected:
            if s > fn.s_exit * (1.0 + self.max_drift) + self.giveup_margin:
                self._advance(skipped=True)
            return None
        s_vals = [w[0] for w in self._window]
        ne2_vals = [w[1] for w in self._window]
        s_anchor = _refine_minimum(s_vals, ne2_vals, self._min_idx, self.stride)
        anchor = Anchor(float(s_anchor), fn.s_exit, float(self._min_val))
        if self.anchors and (
            anchor.s_app <= self.anchors[-1].s_app or anchor.s_ideal <= self.anchors[-1].s_ideal
        ):
            raise AnchorConflictError(
                f"anchor ({anchor.s_app:.2f}, {anchor.s_ideal:.2f}) not monotone"
            )
        self.anchors.append(anchor)
        self._advance(skipped=False, past_exit=anchor.s_app)
        return anchor

    def _advance(self, skipped, past_exit=None):
        if skipped:
            self.skipped_functions.append(self._fn_idx)
        self._fn_idx += 1
        self._window = []
        self._min_val = np.inf
        self._min_idx = -1
        fn = self._current()
        if fn is not None and past_exit is not None:
            # the next curve lies ahead: never match its window against
            # data from before the exit just detected
            self._next_eval = max(self._next_eval, past_exit + fn.delta_s)

    def _trim(self):
        fn = self._current()
        keep_from = self._s_buf[-1] - (fn.delta_s if fn else 0.0) - 10.0 * self.stride
        while len(self._s_buf) > 2 and self._s_buf[0] < keep_from:
            self._s_buf.pop(0)
            self._rho_buf.pop(0)

    def anchor_pairs(self):
        return np.array([(a.s_app, a.s_ideal) for a in self.anchors]).reshape(-1, 2)


def correct_s(anchors, s_app):
    """Map encoder coordinates to track coordinates through the anchors.

    Piecewise linear and exact at anchors; before the first anchor the
    map is a pure offset, past the last it extrapolates with the last
    inter-anchor slope (single anchor: offset on both sides).
    """
    pairs = anchors.anchor_pairs() if hasattr(anchors, "anchor_pairs") else np.asarray(anchors, dtype=float).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("need at least one anchor")
    if np.any(np.diff(pairs[:, 0]) <= 0) or np.any(np.diff(pairs[:, 1]) <= 0):
        raise AnchorConflictError("anchors must be strictly increasing in both coordinates")
    s_app = np.asarray(s_app, dtype=float)
    out = np.interp(s_app, pairs[:, 0], pairs[:, 1])
    before = s_app < pairs[0, 0]
    out = np.where(before, pairs[0, 1] + (s_app - pairs[0, 0]), out)
    after = s_app > pairs[-1, 0]
    if np.any(after):
        if len(pairs) >= 2:
            slope = (pairs[-1, 1] - pairs[-2, 1]) / (pairs[-1, 0] - pairs[-2, 0])
        else:
            slope = 1.0
        out = np.where(after, pairs[-1, 1] + slope * (s_app - pairs[-1, 0]), out)
    return out if out.ndim else float(out)
