"""Ideal track preprocessor and irregular-rail kinematics.

The ideal centerline is described by a horizontal profile (straight,
circular and clothoid-transition sections) and a vertical profile
(constant-slope and linear-slope-transition sections). Both partitions
cover the same total length but their vertices need not coincide.

Per-section geometry, with u the local coordinate and x = u/L:

    straight     rho_h = 0,        rho_tw = 0,                 rho_h' = 0
    circular     rho_h = 1/R,      rho_tw = 0,                 rho_h' = 0
    transition   rho_h linear,     rho_tw = (cant2-cant1)/L,   rho_h' = (k2-k1)/L

    constant     alpha_v const,    rho_v = 0
    transition   alpha_v linear,   rho_v = (alpha2-alpha1)/L

Heading integrates the horizontal curvature (psi' = rho_h), the pitch
angle equals the vertical slope (theta = alpha_v, positive descending)
and the roll angle equals the cant. Positions have no closed form on
clothoids; they are integrated once at load time with composite Simpson
quadrature on per-section grids (step <= 0.1 m, section boundaries are
always nodes) and queried through cubic Hermite interpolation, which
keeps the interpolation error well below a micrometer.

Sign conventions: positive curvature / radius curves left (+Y), positive
slope descends, positive cant raises the left rail. Rail irregularities
are lateral/vertical offsets of each rail centerline in the track frame;
the four industry quantities are

    alignment         al = (y_lir + y_rir) / 2
    vertical profile  vp = (z_lir + z_rir) / 2
    gauge variation   gv = y_lir - y_rir
    cross level       cl = z_lir - z_rir
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutError, RangeError
from .frames import (
    rot_x,
    rotation_zyx,
    rotation_zyx_batch,
    skew,
    small_rotation,
    small_rotation_rate,
)

STRAIGHT, CIRCULAR, TRANSITION = 0, 1, 2

_CONTINUITY_TOL = 1e-12
_RANGE_TOL = 1e-9
_CACHE_STEP = 0.1


def curvature_from_radius(radius):
    """Signed curvature; radius 0 encodes a straight (infinite radius)."""
    return 0.0 if radius == 0 else 1.0 / radius


@dataclass(frozen=True)
class HorizontalSection:
    kind: int
    length: float
    curv_start: float
    curv_end: float
    cant_start: float
    cant_end: float

    @staticmethod
    def straight(length, cant=0.0):
        return HorizontalSection(STRAIGHT, length, 0.0, 0.0, cant, cant)

    @staticmethod
    def circular(length, radius, cant=0.0):
        k = curvature_from_radius(radius)
        return HorizontalSection(CIRCULAR, length, k, k, cant, cant)

    @staticmethod
    def transition(length, radius_start, radius_end, cant_start=0.0, cant_end=0.0):
        return HorizontalSection(
            TRANSITION,
            length,
            curvature_from_radius(radius_start),
            curvature_from_radius(radius_end),
            cant_start,
            cant_end,
        )

    def validate(self, index):
        if not self.length > 0.0:
            raise LayoutError(f"horizontal section {index}: length must be > 0")
        if self.kind == STRAIGHT:
            if self.curv_start != 0.0 or self.curv_end != 0.0:
                raise LayoutError(f"horizontal section {index}: straight needs zero curvature")
            if self.cant_start != self.cant_end:
                raise LayoutError(f"horizontal section {index}: straight needs constant cant")
        elif self.kind == CIRCULAR:
            if self.curv_start == 0.0 or self.curv_start != self.curv_end:
                raise LayoutError(
                    f"horizontal section {index}: circular needs equal nonzero end curvatures"
                )
            if self.cant_start != self.cant_end:
                raise LayoutError(f"horizontal section {index}: circular needs constant cant")


@dataclass(frozen=True)
class VerticalSection:
    kind: int
    length: float
    slope_start: float
    slope_end: float

    @staticmethod
    def constant(length, slope=0.0):
        return VerticalSection(STRAIGHT, length, slope, slope)

    @staticmethod
    def transition(length, slope_start, slope_end):
        return VerticalSection(TRANSITION, length, slope_start, slope_end)

    def validate(self, index):
        if not self.length > 0.0:
            raise LayoutError(f"vertical section {index}: length must be > 0")
        if self.kind == STRAIGHT and self.slope_start != self.slope_end:
            raise LayoutError(f"vertical section {index}: constant-slope needs equal slopes")


@dataclass(frozen=True)
class TrackFrameState:
    """Centerline frame and curvatures at one arc length."""

    s: float
    position: np.ndarray  # (3,) global
    rotation: np.ndarray  # (3, 3) track-to-global
    psi: float
    theta: float
    phi: float
    rho_h: float
    rho_v: float
    rho_tw: float
    rho_h_prime: float
    alpha_v: float


class TrackLayout:
    """Immutable ideal-track description with cached centerline positions.

    Safe for concurrent reads; every query is pure.
    """

    def __init__(self, horizontal, vertical, half_gauge=0.7175, rail_inclination=0.0):
        if not horizontal or not vertical:
            raise LayoutError("layout needs at least one horizontal and one vertical section")
        if half_gauge <= 0.0:
            raise LayoutError("half_gauge must be > 0")
        self.horizontal = tuple(horizontal)
        self.vertical = tuple(vertical)
        self.half_gauge = float(half_gauge)
        self.rail_inclination = float(rail_inclination)
        self._validate()
        self._build_tables()
        self._build_position_cache()

    # -- construction -------------------------------------------------

    def _validate(self):
        for i, sec in enumerate(self.horizontal):
            sec.validate(i)
        for i, sec in enumerate(self.vertical):
            sec.validate(i)
        for i in range(len(self.horizontal) - 1):
            a, b = self.horizontal[i], self.horizontal[i + 1]
            if abs(a.curv_end - b.curv_start) > _CONTINUITY_TOL:
                raise LayoutError(f"horizontal curvature discontinuity at section {i}->{i + 1}")
            if abs(a.cant_end - b.cant_start) > _CONTINUITY_TOL:
                raise LayoutError(f"cant discontinuity at section {i}->{i + 1}")
        for i in range(len(self.vertical) - 1):
            a, b = self.vertical[i], self.vertical[i + 1]
            if abs(a.slope_end - b.slope_start) > _CONTINUITY_TOL:
                raise LayoutError(f"slope discontinuity at vertical section {i}->{i + 1}")
        h_total = sum(sec.length for sec in self.horizontal)
        v_total = sum(sec.length for sec in self.vertical)
        if abs(h_total - v_total) > 1e-9:
            raise LayoutError(
                f"horizontal ({h_total} m) and vertical ({v_total} m) profile lengths differ"
            )
        self.total_length = h_total

    def _build_tables(self):
        h = self.horizontal
        self._h_start = np.concatenate([[0.0], np.cumsum([sec.length for sec in h])])
        self._h_len = np.array([sec.length for sec in h])
        self._h_k1 = np.array([sec.curv_start for sec in h])
        self._h_k2 = np.array([sec.curv_end for sec in h])
        self._h_c1 = np.array([sec.cant_start for sec in h])
        self._h_c2 = np.array([sec.cant_end for sec in h])
        self._h_kind = np.array([sec.kind for sec in h])
        # heading at each section start: psi' = rho_h integrates in closed form
        dpsi = 0.5 * (self._h_k1 + self._h_k2) * self._h_len
        self._h_psi0 = np.concatenate([[0.0], np.cumsum(dpsi)])[:-1]

        v = self.vertical
        self._v_start = np.concatenate([[0.0], np.cumsum([sec.length for sec in v])])
        self._v_len = np.array([sec.length for sec in v])
        self._v_a1 = np.array([sec.slope_start for sec in v])
        self._v_a2 = np.array([sec.slope_end for sec in v])
        self._v_kind = np.array([sec.kind for sec in v])

    def _build_position_cache(self):
        breaks = np.unique(np.concatenate([self._h_start, self._v_start]))
        nodes = [np.array([0.0])]
        for b0, b1 in zip(breaks[:-1], breaks[1:]):
            n = max(1, int(np.ceil((b1 - b0) / _CACHE_STEP)))
            nodes.append(b0 + (b1 - b0) * np.arange(1, n + 1) / n)
        s_nodes = np.concatenate(nodes)
        tan_nodes = self._tangent(s_nodes)
        s_mid = 0.5 * (s_nodes[:-1] + s_nodes[1:])
        tan_mid = self._tangent(s_mid)
        h = np.diff(s_nodes)[:, None]
        increments = h / 6.0 * (tan_nodes[:-1] + 4.0 * tan_mid + tan_nodes[1:])
        pos = np.vstack([np.zeros(3), np.cumsum(increments, axis=0)])
        self._s_nodes = s_nodes
        self._pos_nodes = pos
        self._tan_nodes = tan_nodes

    # -- scalar/vector geometry queries --------------------------------

    def _check_range(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -_RANGE_TOL) or np.any(s > self.total_length + _RANGE_TOL):
            raise RangeError(f"arc length outside [0, {self.total_length}]")
        return np.clip(s, 0.0, self.total_length)

    def _h_index(self, s):
        return np.clip(np.searchsorted(self._h_start, s, side="right") - 1, 0, len(self._h_len) - 1)

    def _v_index(self, s):
        return np.clip(np.searchsorted(self._v_start, s, side="right") - 1, 0, len(self._v_len) - 1)

    def horizontal_at(self, s):
        """(rho_h, rho_h_prime, rho_tw, cant, psi) at s, vectorized."""
        s = self._check_range(s)
        i = self._h_index(s)
        u = s - self._h_start[i]
        length = self._h_len[i]
        k1, k2 = self._h_k1[i], self._h_k2[i]
        x = u / length
        rho_h = k1 + x * (k2 - k1)
        is_trans = self._h_kind[i] == TRANSITION
        rho_h_prime = np.where(is_trans, (k2 - k1) / length, 0.0)
        rho_tw = np.where(is_trans, (self._h_c2[i] - self._h_c1[i]) / length, 0.0)
        cant = self._h_c1[i] + x * (self._h_c2[i] - self._h_c1[i])
        psi = self._h_psi0[i] + k1 * u + 0.5 * (k2 - k1) * u * u / length
        return rho_h, rho_h_prime, rho_tw, cant, psi

    def vertical_at(self, s):
        """(alpha_v, rho_v) at s, vectorized. alpha_v is the pitch angle."""
        s = self._check_range(s)
        i = self._v_index(s)
        u = s - self._v_start[i]
        length = self._v_len[i]
        a1, a2 = self._v_a1[i], self._v_a2[i]
        alpha = a1 + (u / length) * (a2 - a1)
        rho_v = np.where(self._v_kind[i] == TRANSITION, (a2 - a1) / length, 0.0)
        return alpha, rho_v

    def _tangent(self, s):
        _, _, _, _, psi = self.horizontal_at(s)
        theta, _ = self.vertical_at(s)
        ct = np.cos(theta)
        return np.stack([ct * np.cos(psi), ct * np.sin(psi), -np.sin(theta)], axis=-1)

    def position_at(self, s):
        """Centerline position, cubic Hermite on the cached quadrature nodes."""
        s = self._check_range(np.atleast_1d(s))
        i = np.clip(np.searchsorted(self._s_nodes, s, side="right") - 1, 0, len(self._s_nodes) - 2)
        h = (self._s_nodes[i + 1] - self._s_nodes[i])[:, None]
        u = ((s - self._s_nodes[i])[:, None]) / h
        p0, p1 = self._pos_nodes[i], self._pos_nodes[i + 1]
        m0, m1 = self._tan_nodes[i] * h, self._tan_nodes[i + 1] * h
        u2, u3 = u * u, u * u * u
        return (
            (2 * u3 - 3 * u2 + 1) * p0
            + (u3 - 2 * u2 + u) * m0
            + (-2 * u3 + 3 * u2) * p1
            + (u3 - u2) * m1
        )

    def angles_at(self, s):
        """(phi, theta, psi) of the track frame, vectorized."""
        _, _, _, cant, psi = self.horizontal_at(s)
        theta, _ = self.vertical_at(s)
        return cant, theta, psi

    def rotation_at(self, s):
        phi, theta, psi = self.angles_at(s)
        return rotation_zyx_batch(phi, theta, psi)

    def frame_at(self, s):
        """Full track-frame state at one arc length."""
        s = float(s)
        rho_h, rho_hp, rho_tw, cant, psi = (float(x) for x in self.horizontal_at(s))
        alpha_v, rho_v = (float(x) for x in self.vertical_at(s))
        position = self.position_at(s)[0]
        rotation = rotation_zyx(cant, alpha_v, psi)
        return TrackFrameState(
            s=s,
            position=position,
            rotation=rotation,
            psi=psi,
            theta=alpha_v,
            phi=cant,
            rho_h=rho_h,
            rho_v=rho_v,
            rho_tw=rho_tw,
            rho_h_prime=rho_hp,
            alpha_v=alpha_v,
        )

    def section_boundaries(self):
        return np.array(self._h_start), np.array(self._v_start)


def frame_velocity(state, v, vdot):
    """Velocity/acceleration and angular velocity/acceleration of an ideal
    body riding the track frame at speed v, in track-frame components.

    Returns (rdot, rddot, omega, alpha).
    """
    rdot = np.array([v, 0.0, 0.0])
    rddot = np.array([vdot, state.rho_h * v * v, -state.rho_v * v * v])
    omega = np.array([state.rho_tw * v, state.rho_v * v, state.rho_h * v])
    alpha = np.array(
        [
            state.rho_tw * vdot,
            state.rho_v * vdot,
            state.rho_h * vdot + state.rho_h_prime * v * v,
        ]
    )
    return rdot, rddot, omega, alpha


def rail_profile_frames(beta, cl, half_gauge):
    """Rail-profile orientations in the track frame.

    beta is the rail inclination (both rails lean toward the centerline),
    cl the cross level; the cross-level roll delta = cl / (2 L_r) applies
    to both rails. Returns (A_left, A_right).
    """
    delta = cl / (2.0 * half_gauge)
    return rot_x(beta + delta), rot_x(-beta + delta)


def rail_point_global(layout, s, side, irr, u_hat):
    """Global position of a rail-head point.

    u_hat is the 2-vector (lateral, height) of the point in the rail
    profile frame. The rail frame is displaced by the irregularity field
    and rolled by its cross level.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    state = layout.frame_at(s)
    y_l, z_l, y_r, z_r = irr.at(s)
    a_left, a_right = rail_profile_frames(layout.rail_inclination, z_l - z_r, layout.half_gauge)
    if side == "left":
        r_rp = np.array([0.0, layout.half_gauge, 0.0])
        r_ir = np.array([0.0, y_l, z_l])
        a_rp = a_left
    else:
        r_rp = np.array([0.0, -layout.half_gauge, 0.0])
        r_ir = np.array([0.0, y_r, z_r])
        a_rp = a_right
    u3 = np.array([0.0, u_hat[0], u_hat[1]])
    return state.position + state.rotation @ (r_rp + r_ir + a_rp @ u3)


def body_kinematics(q, qdot, qddot, state, v, vdot, u_hat_p):
    """Absolute velocity and acceleration of a body-fixed point, projected
    on the track frame.

    q = (s, r_y, r_z, phi, theta, psi) with the small relative Euler
    angles of the body w.r.t. the track frame; qdot/qddot are its time
    derivatives. u_hat_p is the point position in the body frame.
    """
    r = np.array([0.0, q[1], q[2]])
    rdot = np.array([0.0, qdot[1], qdot[2]])
    rddot = np.array([0.0, qddot[1], qddot[2]])
    angles, rates, accels = q[3:6], qdot[3:6], qddot[3:6]

    rdot_t, rddot_t, w_t, al_t = frame_velocity(state, v, vdot)
    a_ti = small_rotation(*angles)
    a_ti_dot = small_rotation_rate(*rates)

    w_rel = np.asarray(rates, dtype=float)
    w_body = a_ti.T @ w_t + w_rel
    al_body = a_ti_dot.T @ w_t + a_ti.T @ al_t + np.asarray(accels, dtype=float)

    u = np.asarray(u_hat_p, dtype=float)
    w_t_sk = skew(w_t)
    velocity = rdot_t + rdot + w_t_sk @ r + a_ti @ (skew(w_body) @ u)
    acceleration = (
        rddot_t
        + rddot
        + (skew(al_t) + w_t_sk @ w_t_sk) @ r
        + 2.0 * (w_t_sk @ rdot)
        + a_ti @ ((skew(al_body) + skew(w_body) @ skew(w_body)) @ u)
    )
    return velocity, acceleration


# -- irregularities ----------------------------------------------------


def rails_from_irregularities(al, vp, gv, cl):
    """(y_lir, z_lir, y_rir, z_rir) from the four industry quantities."""
    return al + 0.5 * gv, vp + 0.5 * cl, al - 0.5 * gv, vp - 0.5 * cl


def irregularities_from_rails(y_lir, z_lir, y_rir, z_rir):
    """(al, vp, gv, cl) from the rail centerline offsets."""
    return (
        0.5 * (y_lir + y_rir),
        0.5 * (z_lir + z_rir),
        y_lir - y_rir,
        z_lir - z_rir,
    )


@dataclass
class IrregularityField:
    """Rail centerline offsets sampled on a uniform arc-length grid.

    Linear interpolation between nodes; queries outside the grid clamp to
    the end values. Columns: y_lir, z_lir, y_rir, z_rir (meters).
    """

    s0: float
    ds: float
    table: np.ndarray  # (n, 4)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 2 or self.table.shape[1] != 4:
            raise ValueError("irregularity table must be (n, 4)")
        if self.ds <= 0.0:
            raise ValueError("grid spacing must be > 0")

    @classmethod
    def zeros(cls, length, ds=0.25):
        n = int(np.ceil(length / ds)) + 1
        return cls(0.0, ds, np.zeros((n, 4)))

    @property
    def s_grid(self):
        return self.s0 + self.ds * np.arange(len(self.table))

    def at(self, s):
        """Interpolated (y_lir, z_lir, y_rir, z_rir) at s (scalar or array)."""
        s = np.asarray(s, dtype=float)
        grid = self.s_grid
        return np.stack([np.interp(s, grid, self.table[:, k]) for k in range(4)], axis=0)

    def records(self, s):
        """(al, vp, gv, cl) rows evaluated at the given arc lengths."""
        y_l, z_l, y_r, z_r = self.at(s)
        al, vp, gv, cl = irregularities_from_rails(y_l, z_l, y_r, z_r)
        return np.stack([al, vp, gv, cl], axis=-1)
