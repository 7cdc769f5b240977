"""Tests for piecewise cubic trajectories and their Bezier control points."""

import io

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import linprog

from safeflight.trajectory import (
    ContinuityError,
    CubicInterval,
    FullState,
    OutOfDomainError,
    Trajectory,
    from_jerk_sequence,
    rest_trajectory,
)


def random_interval(rng, dt_range=(0.05, 2.0)):
    coeffs = rng.uniform(-3.0, 3.0, size=(3, 4))
    dt = rng.uniform(*dt_range)
    return CubicInterval(coeffs=coeffs, dt=dt)


def decasteljau(cps, s):
    # classic corner-cutting evaluation, independent of the Horner path
    pts = cps.astype(float).copy()
    m = pts.shape[0]
    for r in range(1, m):
        pts[: m - r] = (1.0 - s) * pts[: m - r] + s * pts[1 : m - r + 1]
    return pts[0]


def hull_gap(cps, p):
    """Infinity-norm distance from p to the convex hull of cps, via LP."""
    # vars: lam (4), t;  min t  s.t. |cps^T lam - p| <= t, sum lam = 1
    nv = cps.shape[0]
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    A_ub = np.zeros((6, nv + 1))
    b_ub = np.zeros(6)
    A_ub[:3, :nv] = cps.T
    A_ub[:3, -1] = -1.0
    b_ub[:3] = p
    A_ub[3:, :nv] = -cps.T
    A_ub[3:, -1] = -1.0
    b_ub[3:] = -p
    A_eq = np.zeros((1, nv + 1))
    A_eq[0, :nv] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * nv + [(0, None)], method="highs")
    assert res.status == 0
    return res.fun


class TestCubicInterval:
    def test_eval_against_decasteljau(self):
        """Horner evaluation and the Bezier form must be the same curve."""
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(300):
            iv = random_interval(rng)
            cps = iv.control_points()
            for s in rng.uniform(0.0, 1.0, size=8):
                p_poly = iv.position(s * iv.dt)
                p_bez = decasteljau(cps, s)
                worst = max(worst, float(np.max(np.abs(p_poly - p_bez))))
        scale = 1.0  # coefficients are O(1) by construction
        assert worst < 1e-12 * max(scale, 1.0), worst

    def test_control_point_endpoints(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            iv = random_interval(rng)
            cps = iv.control_points()
            assert_allclose(cps[0], iv.position(0.0), atol=1e-12)
            assert_allclose(cps[3], iv.position(iv.dt), rtol=1e-12, atol=1e-12)
            # endpoint tangents
            assert_allclose(3.0 * (cps[1] - cps[0]) / iv.dt, iv.velocity(0.0),
                            rtol=1e-9, atol=1e-9)
            assert_allclose(3.0 * (cps[3] - cps[2]) / iv.dt, iv.velocity(iv.dt),
                            rtol=1e-9, atol=1e-9)

    def test_control_points_known_case(self):
        # x(t) = t^3 on [0,1]: control points 0, 0, 0, 1 on that axis
        coeffs = np.zeros((3, 4))
        coeffs[0] = [1.0, 0.0, 0.0, 0.0]
        iv = CubicInterval(coeffs=coeffs, dt=1.0)
        assert_allclose(iv.control_points()[:, 0], [0.0, 0.0, 0.0, 1.0], atol=1e-15)
        # x(t) = 1 + 2t on [0,2]: linear, equally spaced control points
        coeffs = np.zeros((3, 4))
        coeffs[1] = [0.0, 0.0, 2.0, 1.0]
        iv = CubicInterval(coeffs=coeffs, dt=2.0)
        assert_allclose(iv.control_points()[:, 1], [1.0, 7.0 / 3.0, 11.0 / 3.0, 5.0],
                        rtol=1e-14)

    def test_curve_inside_control_hull(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            iv = random_interval(rng)
            cps = iv.control_points()
            for s in np.linspace(0.0, 1.0, 9):
                assert hull_gap(cps, iv.position(s * iv.dt)) < 1e-7

    def test_derivatives_by_finite_difference(self):
        rng = np.random.default_rng(10)
        h = 1e-6
        for _ in range(30):
            iv = random_interval(rng, dt_range=(0.5, 2.0))
            for tau in rng.uniform(2 * h, iv.dt - 2 * h, size=4):
                v_fd = (iv.position(tau + h) - iv.position(tau - h)) / (2 * h)
                a_fd = (iv.velocity(tau + h) - iv.velocity(tau - h)) / (2 * h)
                assert_allclose(iv.velocity(tau), v_fd, rtol=1e-6, atol=1e-6)
                assert_allclose(iv.acceleration(tau), a_fd, rtol=1e-5, atol=1e-5)
                assert_allclose(iv.jerk(), 6.0 * iv.coeffs[:, 0], atol=1e-15)

    def test_truncated(self):
        rng = np.random.default_rng(11)
        iv = random_interval(rng)
        short = iv.truncated(iv.dt * 0.4)
        assert short.dt == pytest.approx(iv.dt * 0.4)
        for tau in np.linspace(0.0, short.dt, 5):
            assert_allclose(short.position(tau), iv.position(tau), atol=1e-14)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            CubicInterval(coeffs=np.zeros((3, 4)), dt=0.0)
        with pytest.raises(ValueError):
            CubicInterval(coeffs=np.zeros((4, 3)), dt=1.0)


def rk4_triple_integrator(x0, v0, a0, jerks, dt, substeps=16):
    """Independent integration of the chain x' = v, v' = a, a' = j."""
    x, v, a = x0.copy(), v0.copy(), a0.copy()
    h = dt / substeps
    for j in jerks:
        for _ in range(substeps):

            def deriv(state):
                xs, vs, as_ = state
                return np.stack([vs, as_, j])

            s0 = np.stack([x, v, a])
            k1 = deriv(s0)
            k2 = deriv(s0 + 0.5 * h * k1)
            k3 = deriv(s0 + 0.5 * h * k2)
            k4 = deriv(s0 + h * k3)
            s0 = s0 + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            x, v, a = s0[0], s0[1], s0[2]
    return x, v, a


class TestFromJerkSequence:
    def test_matches_rk4(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            x0 = FullState(x=rng.normal(size=3), v=rng.normal(size=3),
                           a=rng.normal(size=3))
            jerks = rng.uniform(-4.0, 4.0, size=(5, 3))
            dt = rng.uniform(0.1, 0.8)
            traj = from_jerk_sequence(x0, jerks, dt, t0=0.0)
            xr, vr, ar = rk4_triple_integrator(x0.x, x0.v, x0.a, jerks, dt)
            end = traj.terminal_state()
            assert_allclose(end.x, xr, rtol=1e-9, atol=1e-9)
            assert_allclose(end.v, vr, rtol=1e-9, atol=1e-9)
            assert_allclose(end.a, ar, rtol=1e-9, atol=1e-9)

    def test_knot_continuity_and_jerk(self):
        rng = np.random.default_rng(13)
        x0 = FullState.rest((1.0, -2.0, 0.5))
        jerks = rng.uniform(-2.0, 2.0, size=(6, 3))
        traj = from_jerk_sequence(x0, jerks, 0.3, t0=1.0)
        assert traj.t0 == 1.0
        assert traj.duration == pytest.approx(1.8)
        for n, iv in enumerate(traj.intervals):
            assert_allclose(iv.jerk(), jerks[n], atol=1e-12)
        for n in range(1, 6):
            t = 1.0 + 0.3 * n
            left = traj.intervals[n - 1].state_at(traj.intervals[n - 1].dt)
            right = traj.intervals[n].state_at(0.0)
            assert left.distance_to(right) < 1e-10, (n, t)

    def test_constant_jerk_closed_form(self):
        x0 = FullState.rest((0.0, 0.0, 0.0))
        j = np.array([[2.0, 0.0, -1.0]] * 3)
        traj = from_jerk_sequence(x0, j, 0.5, t0=0.0)
        t = 1.5
        st, jerk = traj.eval(t)
        assert_allclose(st.x, j[0] * t**3 / 6.0, rtol=1e-12, atol=1e-15)
        assert_allclose(st.v, j[0] * t**2 / 2.0, rtol=1e-12, atol=1e-15)
        assert_allclose(st.a, j[0] * t, rtol=1e-12, atol=1e-15)
        assert_allclose(jerk, j[0], atol=1e-15)


class TestTrajectory:
    def build(self, rng, n=4, t0=0.0):
        x0 = FullState(x=rng.normal(size=3), v=rng.normal(size=3),
                       a=rng.normal(size=3))
        jerks = rng.uniform(-3.0, 3.0, size=(n, 3))
        return from_jerk_sequence(x0, jerks, rng.uniform(0.2, 0.7), t0=t0)

    def test_eval_domain(self):
        rng = np.random.default_rng(14)
        traj = self.build(rng, t0=2.0)
        with pytest.raises(OutOfDomainError):
            traj.eval(2.0 - 1e-3)
        with pytest.raises(OutOfDomainError):
            traj.eval(traj.end_time + 1e-3)
        # knot tolerance admits the exact endpoints
        traj.eval(2.0)
        traj.eval(traj.end_time)

    def test_state_at_clamps(self):
        rng = np.random.default_rng(15)
        traj = self.build(rng)
        lo = traj.state_at(traj.t0 - 5.0)
        hi = traj.state_at(traj.end_time + 5.0)
        assert lo.distance_to(traj.initial_state()) < 1e-12
        assert hi.distance_to(traj.terminal_state()) < 1e-12

    def test_splice_at_knot_and_mid_interval(self):
        rng = np.random.default_rng(16)
        for cut_kind in ("knot", "mid"):
            head = self.build(rng, n=5)
            knots = np.cumsum([iv.dt for iv in head.intervals]) + head.t0
            if cut_kind == "knot":
                t_cut = float(knots[2])
            else:
                t_cut = float(knots[1] + 0.37 * head.intervals[2].dt)
            st, _ = head.eval(t_cut)
            tail = from_jerk_sequence(st, rng.uniform(-2, 2, size=(3, 3)),
                                      0.4, t0=t_cut)
            merged = head.splice(t_cut, tail)
            assert merged.t0 == head.t0
            assert merged.end_time == pytest.approx(t_cut + 1.2)
            for t in np.linspace(head.t0, t_cut, 7):
                a, _ = merged.eval(float(t))
                b, _ = head.eval(float(t))
                assert a.distance_to(b) < 1e-9
            for t in np.linspace(t_cut, merged.end_time, 7):
                a, _ = merged.eval(float(t))
                b, _ = tail.eval(float(t))
                assert a.distance_to(b) < 1e-9

    def test_splice_rejects_gap(self):
        rng = np.random.default_rng(17)
        head = self.build(rng, n=3)
        t_cut = head.t0 + 0.5 * head.duration
        st, _ = head.eval(t_cut)
        bad = FullState(x=st.x + 1e-3, v=st.v, a=st.a)
        tail = from_jerk_sequence(bad, np.zeros((2, 3)), 0.3, t0=t_cut)
        with pytest.raises(ContinuityError):
            head.splice(t_cut, tail)

    def test_splice_rejects_misaligned_tail(self):
        rng = np.random.default_rng(18)
        head = self.build(rng, n=3)
        t_cut = head.t0 + 0.4 * head.duration
        st, _ = head.eval(t_cut)
        tail = from_jerk_sequence(st, np.zeros((2, 3)), 0.3, t0=t_cut + 0.05)
        with pytest.raises(ContinuityError):
            head.splice(t_cut, tail)

    def test_rest_trajectory(self):
        traj = rest_trajectory((1.0, 2.0, 3.0), t0=4.0)
        st, jerk = traj.eval(4.5)
        assert_allclose(st.x, [1.0, 2.0, 3.0], atol=1e-15)
        assert_allclose(st.v, 0.0, atol=1e-15)
        assert_allclose(st.a, 0.0, atol=1e-15)
        assert_allclose(jerk, 0.0, atol=1e-15)

    def test_csv_roundtrip(self):
        rng = np.random.default_rng(19)
        traj = self.build(rng)
        buf = io.StringIO()
        traj.write_csv(buf, step=0.1)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == "t,x,y,z,vx,vy,vz,ax,ay,az,jx,jy,jz"
        for line in lines[1:]:
            vals = [float(s) for s in line.split(",")]
            st, jerk = traj.eval(vals[0])
            assert_allclose(vals[1:4], st.x, rtol=1e-15)
            assert_allclose(vals[4:7], st.v, rtol=1e-15)
            assert_allclose(vals[7:10], st.a, rtol=1e-15)
            assert_allclose(vals[10:13], jerk, rtol=1e-15)
        # final sample is the exact end time
        assert float(lines[-1].split(",")[0]) == pytest.approx(traj.end_time)
