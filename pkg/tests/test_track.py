import math

import numpy as np
import pytest

from railgauge.errors import LayoutError, RangeError
from railgauge.frames import rotation_small_pitch_roll, rotation_zyx
from railgauge.track import (
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


def straight_flat(length=1000.0):
    return TrackLayout(
        [HorizontalSection.straight(length)], [VerticalSection.constant(length)]
    )


def mixed_layout():
    """Straight, clothoid, canted curve, clothoid, straight; sloped verticals."""
    cant = -0.05
    horizontal = [
        HorizontalSection.straight(200.0),
        HorizontalSection.transition(80.0, 0.0, 500.0, 0.0, cant),
        HorizontalSection.circular(400.0, 500.0, cant),
        HorizontalSection.transition(80.0, 500.0, 0.0, cant, 0.0),
        HorizontalSection.straight(240.0),
    ]
    vertical = [
        VerticalSection.constant(300.0, 0.0),
        VerticalSection.transition(100.0, 0.0, 0.01),
        VerticalSection.constant(600.0, 0.01),
    ]
    return TrackLayout(horizontal, vertical, rail_inclination=0.025)


class TestFrameAt:
    def test_straight_flat_is_identity(self):
        layout = straight_flat()
        for s in (0.0, 123.456, 1000.0):
            st = layout.frame_at(s)
            assert np.allclose(st.rotation, np.eye(3), atol=1e-15)
            assert st.rho_h == st.rho_v == st.rho_tw == st.rho_h_prime == 0.0
            assert np.allclose(st.position, [s, 0.0, 0.0], atol=1e-9)

    def test_circular_heading_integrates_curvature(self):
        layout = TrackLayout(
            [HorizontalSection.circular(300.0, 500.0)],
            [VerticalSection.constant(300.0)],
        )
        st = layout.frame_at(100.0)
        assert st.psi == pytest.approx(0.2, abs=1e-15)
        assert st.rho_h == pytest.approx(0.002, abs=1e-18)

    def test_transition_midpoint(self):
        layout = TrackLayout(
            [
                HorizontalSection.straight(100.0),
                HorizontalSection.transition(80.0, 0.0, 500.0),
                HorizontalSection.circular(100.0, 500.0),
            ],
            [VerticalSection.constant(280.0)],
        )
        st = layout.frame_at(140.0)
        assert st.rho_h == pytest.approx(0.001, abs=1e-15)
        assert st.rho_h_prime == pytest.approx(2.5e-5, abs=1e-18)

    def test_vertical_transition(self):
        layout = TrackLayout(
            [HorizontalSection.straight(300.0)],
            [
                VerticalSection.constant(100.0, 0.0),
                VerticalSection.transition(100.0, 0.0, 0.02),
                VerticalSection.constant(100.0, 0.02),
            ],
        )
        st = layout.frame_at(150.0)
        assert st.alpha_v == pytest.approx(0.01, abs=1e-15)
        assert st.rho_v == pytest.approx(2e-4, abs=1e-18)
        # slope positive descending: the tangent's vertical component drops
        tangent = st.rotation[:, 0]
        assert tangent[2] == pytest.approx(-math.sin(0.01), abs=1e-12)

    def test_out_of_range(self):
        layout = straight_flat()
        with pytest.raises(RangeError):
            layout.frame_at(-1.0)
        with pytest.raises(RangeError):
            layout.frame_at(1001.0)

    def test_pure_and_deterministic(self):
        layout = mixed_layout()
        a = layout.frame_at(412.3)
        b = layout.frame_at(412.3)
        assert np.array_equal(a.position, b.position)
        assert np.array_equal(a.rotation, b.rotation)
        assert a.rho_h == b.rho_h and a.psi == b.psi

    def test_orthonormal_everywhere(self):
        layout = mixed_layout()
        s = np.linspace(0.0, layout.total_length, 2000)
        rots = layout.rotation_at(s)
        err = np.abs(np.einsum("nij,nik->njk", rots, rots) - np.eye(3))
        assert err.max() < 1e-12

    def test_small_angle_rotation_close(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            phi, theta = rng.uniform(-0.05, 0.05, 2)
            psi = rng.uniform(-np.pi, np.pi)
            exact = rotation_zyx(phi, theta, psi)
            approx = rotation_small_pitch_roll(phi, theta, psi)
            assert np.abs(exact - approx).max() < 5e-3

    def test_curvature_and_cant_continuity(self):
        layout = mixed_layout()
        for a, b in zip(layout.horizontal[:-1], layout.horizontal[1:]):
            assert abs(a.curv_end - b.curv_start) < 1e-12
            assert abs(a.cant_end - b.cant_start) < 1e-12
        starts, _ = layout.section_boundaries()
        for s_b in starts[1:-1]:
            lo = layout.frame_at(s_b - 1e-9)
            hi = layout.frame_at(s_b + 1e-9)
            assert abs(lo.rho_h - hi.rho_h) < 1e-10
            assert abs(lo.phi - hi.phi) < 1e-10

    def test_position_cache_against_fine_quadrature(self):
        layout = mixed_layout()
        rng = np.random.default_rng(1)
        for s_end in rng.uniform(10.0, layout.total_length, 8):
            # independent route: dense midpoint-Simpson on a 1 mm grid
            n = int(s_end / 0.001)
            grid = np.linspace(0.0, s_end, n + 1)
            tan = layout._tangent(grid)
            mid = layout._tangent(0.5 * (grid[:-1] + grid[1:]))
            h = np.diff(grid)[:, None]
            ref = np.sum(h / 6.0 * (tan[:-1] + 4.0 * mid + tan[1:]), axis=0)
            pos = layout.position_at(s_end)[0]
            assert np.abs(pos - ref).max() < 1e-7


class TestLayoutValidation:
    def test_zero_length_section_rejected(self):
        with pytest.raises(LayoutError):
            TrackLayout([HorizontalSection.straight(0.0)], [VerticalSection.constant(0.0)])

    def test_curvature_discontinuity_rejected(self):
        with pytest.raises(LayoutError):
            TrackLayout(
                [HorizontalSection.straight(100.0), HorizontalSection.circular(100.0, 500.0)],
                [VerticalSection.constant(200.0)],
            )

    def test_slope_discontinuity_rejected(self):
        with pytest.raises(LayoutError):
            TrackLayout(
                [HorizontalSection.straight(200.0)],
                [VerticalSection.constant(100.0, 0.0), VerticalSection.constant(100.0, 0.01)],
            )

    def test_length_mismatch_rejected(self):
        with pytest.raises(LayoutError):
            TrackLayout(
                [HorizontalSection.straight(200.0)], [VerticalSection.constant(100.0)]
            )


class TestFrameVelocity:
    def test_straight_constant_speed(self):
        st = straight_flat().frame_at(10.0)
        rdot, rddot, omega, alpha = frame_velocity(st, 10.0, 0.0)
        assert np.array_equal(rdot, [10.0, 0.0, 0.0])
        assert np.array_equal(rddot, [0.0, 0.0, 0.0])
        assert np.array_equal(omega, [0.0, 0.0, 0.0])
        assert np.array_equal(alpha, [0.0, 0.0, 0.0])

    def test_curve_centripetal_and_yaw_rate(self):
        layout = TrackLayout(
            [HorizontalSection.circular(300.0, 500.0)], [VerticalSection.constant(300.0)]
        )
        st = layout.frame_at(50.0)
        _, rddot, omega, _ = frame_velocity(st, 20.0, 0.0)
        assert rddot == pytest.approx([0.0, 0.8, 0.0], abs=1e-12)
        assert omega == pytest.approx([0.0, 0.0, 0.04], abs=1e-15)

    def test_twist_angular_acceleration(self):
        layout = TrackLayout(
            [
                HorizontalSection.straight(50.0),
                HorizontalSection.transition(100.0, 0.0, 500.0, 0.0, 0.1),
                HorizontalSection.circular(50.0, 500.0, 0.1),
            ],
            [VerticalSection.constant(200.0)],
        )
        st = layout.frame_at(100.0)  # inside the transition: rho_tw = 0.1 / 100
        assert st.rho_tw == pytest.approx(0.001, abs=1e-15)
        _, _, _, alpha = frame_velocity(st, 10.0, 2.0)
        assert alpha[0] == pytest.approx(0.002, abs=1e-15)


class TestRailGeometry:
    def test_profile_frames_identity(self):
        a_l, a_r = rail_profile_frames(0.0, 0.0, 0.75)
        assert np.allclose(a_l, np.eye(3), atol=1e-15)
        assert np.allclose(a_r, np.eye(3), atol=1e-15)

    def test_profile_frames_inclination(self):
        a_l, a_r = rail_profile_frames(0.025, 0.0, 0.75)
        assert a_l[1, 1] == pytest.approx(math.cos(0.025), abs=1e-15)
        assert a_l[2, 1] == pytest.approx(math.sin(0.025), abs=1e-15)
        assert a_r[2, 1] == pytest.approx(-math.sin(0.025), abs=1e-15)

    def test_profile_frames_cross_level_roll(self):
        a_l, a_r = rail_profile_frames(0.0, 0.004, 0.75)
        delta = 0.004 / (2 * 0.75)
        assert delta == pytest.approx(0.0026667, abs=1e-7)
        assert a_l[2, 1] == pytest.approx(math.sin(delta), abs=1e-15)
        assert np.allclose(a_l, a_r, atol=1e-15)

    def test_rail_point_trivial(self):
        layout = straight_flat()
        irr = IrregularityField.zeros(layout.total_length)
        p_l = rail_point_global(layout, 250.0, "left", irr, [0.0, 0.0])
        p_r = rail_point_global(layout, 250.0, "right", irr, [0.0, 0.0])
        assert np.allclose(p_l, [250.0, layout.half_gauge, 0.0], atol=1e-9)
        assert np.allclose(p_r, [250.0, -layout.half_gauge, 0.0], atol=1e-9)

    def test_rail_point_lateral_irregularity_shift(self):
        layout = straight_flat()
        irr = IrregularityField.zeros(layout.total_length)
        irr.table[:, 0] = 0.002  # y_lir
        p = rail_point_global(layout, 100.0, "left", irr, [0.0, 0.0])
        assert p[1] == pytest.approx(layout.half_gauge + 0.002, abs=1e-12)

    def test_rail_point_curved_track_independent_construction(self):
        """Independent evaluation with math-module trig on a canted curve."""
        r_curve, cant, slope, beta, gauge2 = 500.0, 0.03, 0.01, 0.025, 0.7175
        layout = TrackLayout(
            [HorizontalSection.circular(400.0, r_curve, cant)],
            [VerticalSection.constant(400.0, slope)],
            half_gauge=gauge2,
            rail_inclination=beta,
        )
        irr = IrregularityField.zeros(layout.total_length)
        irr.table[:, :] = [0.003, -0.001, -0.002, 0.0015]  # y_lir z_lir y_rir z_rir
        s, u_hat = 123.4, (0.012, -0.0007)

        # oracle: assemble every matrix from scratch
        psi, theta, phi = s / r_curve, slope, cant
        ct, st_, cp, sp = math.cos(theta), math.sin(theta), math.cos(psi), math.sin(psi)
        cf, sf = math.cos(phi), math.sin(phi)
        a_t = np.array(
            [
                [ct * cp, sf * st_ * cp - cf * sp, sf * sp + cf * st_ * cp],
                [ct * sp, cf * cp + sf * st_ * sp, cf * st_ * sp - sf * cp],
                [-st_, sf * ct, cf * ct],
            ]
        )
        # constant-curvature, constant-slope centerline has a closed form
        r_t = np.array(
            [ct * r_curve * math.sin(psi), ct * r_curve * (1 - math.cos(psi)), -st_ * s]
        )
        delta = (irr.table[0, 1] - irr.table[0, 3]) / (2 * gauge2)
        ang = beta + delta
        a_rp = np.array(
            [
                [1.0, 0.0, 0.0],
                [0.0, math.cos(ang), -math.sin(ang)],
                [0.0, math.sin(ang), math.cos(ang)],
            ]
        )
        local = (
            np.array([0.0, gauge2, 0.0])
            + np.array([0.0, irr.table[0, 0], irr.table[0, 1]])
            + a_rp @ np.array([0.0, u_hat[0], u_hat[1]])
        )
        expected = r_t + a_t @ local

        result = rail_point_global(layout, s, "left", irr, u_hat)
        assert np.abs(result - expected).max() < 1e-9


class TestBodyKinematics:
    def test_rest_on_straight_track(self):
        st = straight_flat().frame_at(5.0)
        q = np.zeros(6)
        vel, acc = body_kinematics(q, np.zeros(6), np.zeros(6), st, 12.0, 0.5, np.zeros(3))
        assert np.allclose(vel, [12.0, 0.0, 0.0], atol=1e-15)
        assert np.allclose(acc, [0.5, 0.0, 0.0], atol=1e-15)

    def test_pure_lateral_acceleration(self):
        st = straight_flat().frame_at(5.0)
        qddot = np.array([0.0, 0.7, 0.0, 0.0, 0.0, 0.0])
        _, acc = body_kinematics(np.zeros(6), np.zeros(6), qddot, st, 10.0, 0.3, np.zeros(3))
        assert np.allclose(acc, [0.3, 0.7, 0.0], atol=1e-15)

    @staticmethod
    def _fd_case(layout, scale, rng):
        """Finite-difference oracle on the reconstructed global position."""
        from railgauge.frames import small_rotation

        s0 = rng.uniform(300.0, 700.0)
        v, vdot = rng.uniform(10.0, 25.0), rng.uniform(-0.5, 0.5)
        q0 = np.concatenate([[s0], scale * rng.uniform(-1.0, 1.0, 2) * 5e-3,
                             scale * rng.uniform(-1.0, 1.0, 3) * 0.02])
        qd = np.concatenate([[v], scale * rng.uniform(-1.0, 1.0, 2) * 0.05,
                             scale * rng.uniform(-1.0, 1.0, 3) * 0.05])
        qdd = np.concatenate([[vdot], scale * rng.uniform(-1.0, 1.0, 2) * 0.5,
                              scale * rng.uniform(-1.0, 1.0, 3) * 0.5])
        u_p = rng.uniform(-0.3, 0.3, 3)

        def q_at(dt):
            return q0 + qd * dt + 0.5 * qdd * dt * dt

        def qd_at(dt):
            return qd + qdd * dt

        def pos_global(dt):
            q = q_at(dt)
            st = layout.frame_at(q[0])
            r3 = np.array([0.0, q[1], q[2]])
            return st.position + st.rotation @ (r3 + small_rotation(*q[3:6]) @ u_p)

        dt = 1e-5
        acc_fd = (pos_global(dt) - 2.0 * pos_global(0.0) + pos_global(-dt)) / dt**2
        vel_fd = (pos_global(dt) - pos_global(-dt)) / (2.0 * dt)
        st0 = layout.frame_at(s0)
        # speed of the track-frame integration variable: q[0] is arc length,
        # so the forward speed/acceleration are qd[0], qdd[0]
        vel, acc = body_kinematics(q_at(0.0), qd_at(0.0), qdd, st0, qd[0], qdd[0], u_p)
        return (
            np.abs(st0.rotation.T @ vel_fd - vel).max(),
            np.abs(st0.rotation.T @ acc_fd - acc).max(),
        )

    @staticmethod
    def _flat_curved_layout():
        # zero cant/slope: the track-frame rate model is exact, so the
        # finite-difference residual is the body-angle linearization alone
        return TrackLayout(
            [
                HorizontalSection.straight(300.0),
                HorizontalSection.transition(100.0, 0.0, 500.0),
                HorizontalSection.circular(400.0, 500.0),
                HorizontalSection.transition(100.0, 500.0, 0.0),
                HorizontalSection.straight(100.0),
            ],
            [VerticalSection.constant(1000.0)],
        )

    def test_against_finite_differences_flat(self):
        # residual = first-order linearization of the body kinematics:
        # O(angle x rate x lever) terms, well separated from the O(1 m/s^2)
        # mismatch any dropped/flipped term would produce
        layout = self._flat_curved_layout()
        rng = np.random.default_rng(42)
        errs = np.array([self._fd_case(layout, 1.0, rng) for _ in range(100)])
        assert errs[:, 0].max() < 1.5e-3  # velocity [m/s]
        assert errs[:, 1].max() < 2e-2  # acceleration [m/s^2]

    def test_against_finite_differences_canted(self):
        # the track-rate model also drops cant x yaw-rate cross terms,
        # so on canted track the residual grows to O(cant rho_h V lever)
        layout = mixed_layout()
        rng = np.random.default_rng(42)
        errs = np.array([self._fd_case(layout, 1.0, rng) for _ in range(100)])
        assert errs[:, 0].max() < 2e-3
        assert errs[:, 1].max() < 0.15

    def test_error_shrinks_with_angle_scale(self):
        # halving angles/rates must shrink the residual at least linearly;
        # a structural error in any term would leave the ratio near 1
        layout = self._flat_curved_layout()
        e_full = np.array(
            [self._fd_case(layout, 1.0, np.random.default_rng(seed))[1] for seed in range(40)]
        )
        e_half = np.array(
            [self._fd_case(layout, 0.5, np.random.default_rng(seed))[1] for seed in range(40)]
        )
        assert np.median(e_full / np.maximum(e_half, 1e-15)) > 1.7


class TestIrregularities:
    def test_zero_maps_to_zero(self):
        assert rails_from_irregularities(0.0, 0.0, 0.0, 0.0) == (0.0, 0.0, 0.0, 0.0)
        assert irregularities_from_rails(0.0, 0.0, 0.0, 0.0) == (0.0, 0.0, 0.0, 0.0)

    def test_alignment_plus_gauge(self):
        y_l, z_l, y_r, z_r = rails_from_irregularities(1e-3, 0.0, 2e-3, 0.0)
        assert y_l == pytest.approx(2e-3, abs=1e-18)
        assert y_r == pytest.approx(0.0, abs=1e-18)
        assert z_l == z_r == 0.0

    def test_random_round_trip(self):
        rng = np.random.default_rng(3)
        rec = rng.uniform(-5e-3, 5e-3, (500, 4))
        rails = rails_from_irregularities(*rec.T)
        back = np.stack(irregularities_from_rails(*rails), axis=1)
        assert np.abs(back - rec).max() < 1e-17

    def test_field_records_match_table(self):
        field = IrregularityField.zeros(100.0)
        field.table[:, 0] = 2e-3  # y_lir only
        rec = field.records(np.array([10.0, 50.0]))
        assert np.allclose(rec[:, 0], 1e-3)  # al
        assert np.allclose(rec[:, 2], 2e-3)  # gv
