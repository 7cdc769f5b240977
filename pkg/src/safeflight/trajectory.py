"""Piecewise-cubic trajectories of a jerk-controlled triple integrator.

Each interval n holds a cubic per axis, x(tau) = a*tau^3 + b*tau^2 + c*tau + d
on tau in [0, dt], which is exactly the motion produced by a constant jerk
over that interval.  The four Bezier control points of an interval span its
convex hull, which is what the corridor constraints act on.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

KNOT_TOL = 1e-9
SPLICE_TOL = 1e-7


class TrajectoryError(Exception):
    pass


class OutOfDomainError(TrajectoryError):
    """Evaluation time outside [t0, t0 + duration]."""


class ContinuityError(TrajectoryError):
    """Splice endpoints disagree beyond tolerance."""


def _vec3(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(3)
    return a.copy()


@dataclass
class FullState:
    """Position, velocity and acceleration of the vehicle."""

    x: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.x = _vec3(self.x)
        self.v = _vec3(self.v)
        self.a = _vec3(self.a)

    @classmethod
    def rest(cls, x) -> "FullState":
        return cls(_vec3(x), np.zeros(3), np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.v, self.a])

    def distance_to(self, other: "FullState") -> float:
        return float(np.max(np.abs(self.as_array() - other.as_array())))

    def copy(self) -> "FullState":
        return FullState(self.x, self.v, self.a)


@dataclass
class CubicInterval:
    """One cubic piece: coeffs[axis] = (a, b, c, d), valid on tau in [0, dt]."""

    coeffs: np.ndarray
    dt: float

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (3, 4):
            raise ValueError("coeffs must have shape (3, 4)")
        self.coeffs = self.coeffs.copy()
        self.dt = float(self.dt)
        if self.dt <= 0:
            raise ValueError("interval duration must be positive")

    def position(self, tau: float) -> np.ndarray:
        a, b, c, d = self.coeffs.T
        return ((a * tau + b) * tau + c) * tau + d

    def velocity(self, tau: float) -> np.ndarray:
        a, b, c, _ = self.coeffs.T
        return (3.0 * a * tau + 2.0 * b) * tau + c

    def acceleration(self, tau: float) -> np.ndarray:
        a, b, _, _ = self.coeffs.T
        return 6.0 * a * tau + 2.0 * b

    def jerk(self) -> np.ndarray:
        return 6.0 * self.coeffs[:, 0]

    def state_at(self, tau: float) -> FullState:
        return FullState(self.position(tau), self.velocity(tau), self.acceleration(tau))

    def control_points(self) -> np.ndarray:
        """Bezier control points, shape (4, 3): rows r0..r3 as 3D points.

        r0 = d
        r1 = (c*dt + 3d) / 3
        r2 = (b*dt^2 + 2c*dt + 3d) / 3
        r3 = a*dt^3 + b*dt^2 + c*dt + d
        """
        a, b, c, d = self.coeffs.T
        dt = self.dt
        r0 = d
        r1 = (c * dt + 3.0 * d) / 3.0
        r2 = (b * dt * dt + 2.0 * c * dt + 3.0 * d) / 3.0
        r3 = ((a * dt + b) * dt + c) * dt + d
        return np.stack([r0, r1, r2, r3])

    def truncated(self, new_dt: float) -> "CubicInterval":
        # same polynomial, shorter domain
        return CubicInterval(self.coeffs, new_dt)


@dataclass
class Trajectory:
    """Ordered cubic intervals anchored at absolute time t0."""

    intervals: list
    t0: float = 0.0
    _knots: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("trajectory needs at least one interval")
        self.t0 = float(self.t0)
        self._rebuild_knots()

    def _rebuild_knots(self):
        dts = np.array([iv.dt for iv in self.intervals])
        self._knots = self.t0 + np.concatenate([[0.0], np.cumsum(dts)])

    @property
    def duration(self) -> float:
        return float(self._knots[-1] - self.t0)

    @property
    def end_time(self) -> float:
        return float(self._knots[-1])

    def _locate(self, t: float):
        idx = int(np.searchsorted(self._knots, t, side="right") - 1)
        idx = min(max(idx, 0), len(self.intervals) - 1)
        return idx, t - self._knots[idx]

    def eval(self, t: float):
        """State and jerk at absolute time t; raises outside the time span."""
        if t < self.t0 - KNOT_TOL or t > self.end_time + KNOT_TOL:
            raise OutOfDomainError(f"t={t} outside [{self.t0}, {self.end_time}]")
        idx, tau = self._locate(t)
        tau = min(max(tau, 0.0), self.intervals[idx].dt)
        return self.intervals[idx].state_at(tau), self.intervals[idx].jerk()

    def state_at(self, t: float) -> FullState:
        """Like eval but clamped to the trajectory's time span."""
        t = min(max(t, self.t0), self.end_time)
        return self.eval(t)[0]

    def terminal_state(self) -> FullState:
        last = self.intervals[-1]
        return last.state_at(last.dt)

    def initial_state(self) -> FullState:
        return self.intervals[0].state_at(0.0)

    def splice(self, t_cut: float, tail: "Trajectory") -> "Trajectory":
        """Keep self on [t0, t_cut], then continue with tail.

        tail.t0 must equal t_cut and the states must agree there.
        """
        if abs(tail.t0 - t_cut) > KNOT_TOL:
            raise ContinuityError(f"tail starts at {tail.t0}, cut at {t_cut}")
        if t_cut < self.t0 - KNOT_TOL or t_cut > self.end_time + KNOT_TOL:
            raise OutOfDomainError(f"cut time {t_cut} outside trajectory span")
        own = self.state_at(t_cut)
        other = tail.initial_state()
        gap = own.distance_to(other)
        if gap > SPLICE_TOL:
            raise ContinuityError(f"state mismatch {gap:.3e} at splice time")

        kept = []
        for i, iv in enumerate(self.intervals):
            start = self._knots[i] - 0.0
            if start >= t_cut - KNOT_TOL:
                break
            tau_cut = t_cut - start
            if tau_cut >= iv.dt - KNOT_TOL:
                kept.append(iv)
            else:
                if tau_cut > KNOT_TOL:
                    kept.append(iv.truncated(tau_cut))
                break
        return Trajectory(kept + list(tail.intervals), self.t0)

    def sample_times(self, step: float) -> np.ndarray:
        n = max(int(np.ceil(self.duration / step)), 1)
        return self.t0 + np.linspace(0.0, self.duration, n + 1)

    def write_csv(self, fileobj, step: float = 0.01):
        """Sampled log: t, position, velocity, acceleration, jerk per row."""
        close = False
        if isinstance(fileobj, (str, bytes)):
            fileobj = open(fileobj, "w")
            close = True
        try:
            fileobj.write("t,x,y,z,vx,vy,vz,ax,ay,az,jx,jy,jz\n")
            for t in self.sample_times(step):
                st, j = self.eval(min(t, self.end_time))
                row = np.concatenate([[t], st.x, st.v, st.a, j])
                fileobj.write(",".join(repr(float(v)) for v in row) + "\n")
        finally:
            if close:
                fileobj.close()

    def to_csv_string(self, step: float = 0.01) -> str:
        buf = io.StringIO()
        self.write_csv(buf, step)
        return buf.getvalue()


def rest_trajectory(x, t0: float = 0.0, dt: float = 1.0) -> Trajectory:
    """A parked trajectory: holds position x with zero velocity and accel."""
    coeffs = np.zeros((3, 4))
    coeffs[:, 3] = _vec3(x)
    return Trajectory([CubicInterval(coeffs, dt)], t0)


def from_jerk_sequence(x0: FullState, jerks, dt: float, t0: float = 0.0) -> Trajectory:
    """Integrate N constant-jerk intervals of duration dt from state x0."""
    jerks = np.asarray(jerks, dtype=float)
    if jerks.ndim != 2 or jerks.shape[1] != 3:
        raise ValueError("jerks must have shape (N, 3)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, v, a = x0.x.copy(), x0.v.copy(), x0.a.copy()
    intervals = []
    for j in jerks:
        coeffs = np.stack([j / 6.0, a / 2.0, v, x], axis=1)
        intervals.append(CubicInterval(coeffs, dt))
        x = x + v * dt + a * dt * dt / 2.0 + j * dt**3 / 6.0
        v = v + a * dt + j * dt * dt / 2.0
        a = a + j * dt
    return Trajectory(intervals, t0)
