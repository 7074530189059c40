"""Trajectory representations.

Two kinds: uniform B-splines for local replanning (cheap local control, the
optimizer moves control points) and piecewise order-7 polynomials for the
global reference fit through the tour waypoints by minimizing the integral
of squared snap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

POLY_COEFFS = 8  # order-7 polynomial per segment


# ---------------------------------------------------------------------------
# Uniform B-splines
# ---------------------------------------------------------------------------


def _basis_row(knots: np.ndarray, span: int, t: float, degree: int, order: int) -> np.ndarray:
    """Values of the ``degree+1`` active basis functions (or a derivative) at t.

    Standard triangular Cox-de Boor scheme followed by the derivative
    recurrence; returns the weights for control points span-degree .. span.
    """
    p = degree
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    ndu = np.zeros((p + 1, p + 1))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = t - knots[span + 1 - j]
        right[j] = knots[span + j] - t
        saved = 0.0
        for r in range(j):
            tmp = ndu[r, j - 1] / (right[r + 1] + left[j - r])
            ndu[r, j] = saved + right[r + 1] * tmp
            saved = left[j - r] * tmp
        ndu[j, j] = saved
    if order == 0:
        return ndu[:, p].copy()
    # Derivative of order k: difference the control weights k times.
    w = ndu[: p - order + 1, p - order].copy()
    for k in range(order):
        q = p - order + k + 1  # current degree while differencing up
        dw = np.zeros(len(w) + 1)
        for i in range(len(w)):
            denom = knots[span - q + 1 + i + q] - knots[span - q + 1 + i]
            c = q / denom
            dw[i] -= c * w[i]
            dw[i + 1] += c * w[i]
        w = dw
    return w


@dataclass
class BsplineTrajectory:
    """Uniform B-spline with K control points and knot spacing T.

    The curve is defined on [t_start, t_start + (K - degree) * T]. Changing
    one control point changes the curve only on degree+1 adjacent spans.
    """

    control_points: np.ndarray
    segment_time: float
    degree: int = 3
    t_start: float = 0.0

    def __post_init__(self) -> None:
        self.control_points = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        if self.segment_time <= 0:
            raise ValueError("segment_time must be > 0")
        if self.num_points < self.degree + 1:
            raise ValueError(
                f"need at least degree+1={self.degree + 1} control points, got {self.num_points}"
            )

    @property
    def num_points(self) -> int:
        return self.control_points.shape[0]

    @property
    def domain(self) -> tuple[float, float]:
        return self.t_start, self.t_start + (self.num_points - self.degree) * self.segment_time

    def knots(self) -> np.ndarray:
        k = np.arange(self.num_points + self.degree + 1, dtype=float)
        return self.t_start + (k - self.degree) * self.segment_time

    def basis(self, ts, order: int = 0) -> np.ndarray:
        """Dense (n, K) matrix B with evaluated curve = B @ control_points."""
        if order > self.degree:
            raise ValueError(f"order {order} exceeds degree {self.degree}")
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t0, t1 = self.domain
        eps = 1e-9 * max(1.0, abs(t1))
        if np.any(ts < t0 - eps) or np.any(ts > t1 + eps):
            raise ValueError(f"time outside domain [{t0}, {t1}]")
        knots = self.knots()
        out = np.zeros((len(ts), self.num_points))
        last_span = self.num_points - 1
        for row, t in enumerate(ts):
            span = int(np.floor((t - t0) / self.segment_time)) + self.degree
            span = min(max(span, self.degree), last_span)
            w = _basis_row(knots, span, float(t), self.degree, order)
            out[row, span - self.degree : span + 1] = w
        return out

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """Curve position (order 0) or derivative at time t."""
        return (self.basis([t], order) @ self.control_points)[0]

    def eval_many(self, ts, order: int = 0) -> np.ndarray:
        return self.basis(ts, order) @ self.control_points


# ---------------------------------------------------------------------------
# Minimum-snap global polynomial
# ---------------------------------------------------------------------------


def _deriv_row(t: float, order: int) -> np.ndarray:
    """Row r with p^(order)(t) = r . coeffs for an order-7 polynomial."""
    row = np.zeros(POLY_COEFFS)
    for i in range(order, POLY_COEFFS):
        row[i] = math.factorial(i) / math.factorial(i - order) * t ** (i - order)
    return row


def _snap_cost_matrix(T: float) -> np.ndarray:
    """Gram matrix of the 4th-derivative inner product over [0, T]."""
    Q = np.zeros((POLY_COEFFS, POLY_COEFFS))
    for i in range(4, POLY_COEFFS):
        for j in range(4, POLY_COEFFS):
            ci = math.factorial(i) / math.factorial(i - 4)
            cj = math.factorial(j) / math.factorial(j - 4)
            Q[i, j] = ci * cj * T ** (i + j - 7) / (i + j - 7)
    return Q


@dataclass
class PolyTrajectory:
    """Piecewise order-7 polynomial through ordered waypoints, rest to rest.

    ``coeffs[k, :, d]`` are the 8 coefficients of segment k, axis d, in the
    segment-local time. Position is C4 at the joints. Evaluation clamps to
    the domain, so querying past the end holds the final waypoint at rest.
    """

    durations: np.ndarray
    coeffs: np.ndarray  # (M, 8, 3)
    waypoints: np.ndarray  # (M+1, 3)
    t_start: float = 0.0
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.durations = np.asarray(self.durations, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        self._offsets = self.t_start + np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def total_time(self) -> float:
        return float(self._offsets[-1])

    @property
    def domain(self) -> tuple[float, float]:
        return self.t_start, self.total_time

    def _locate(self, t: float) -> tuple[int, float]:
        t = min(max(t, self.t_start), self.total_time)
        k = int(np.searchsorted(self._offsets, t, side="right")) - 1
        k = min(max(k, 0), len(self.durations) - 1)
        return k, t - self._offsets[k]

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        k, tau = self._locate(float(t))
        return _deriv_row(tau, order) @ self.coeffs[k]

    def eval_many(self, ts, order: int = 0) -> np.ndarray:
        return np.array([self.eval(t, order) for t in np.atleast_1d(ts)])

    def snap_cost(self) -> float:
        """Closed-form integral of squared snap over the whole trajectory."""
        total = 0.0
        for k, T in enumerate(self.durations):
            Q = _snap_cost_matrix(float(T))
            for d in range(self.coeffs.shape[2]):
                c = self.coeffs[k, :, d]
                total += float(c @ Q @ c)
        return total


def _solve_min_snap_axis(positions: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Equality-constrained QP for one axis via the KKT system."""
    m = len(times)
    nvar = POLY_COEFFS * m
    Q = np.zeros((nvar, nvar))
    for k in range(m):
        s = k * POLY_COEFFS
        Q[s : s + POLY_COEFFS, s : s + POLY_COEFFS] = _snap_cost_matrix(float(times[k]))

    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def add(row: np.ndarray, b: float) -> None:
        rows.append(row)
        rhs.append(b)

    for k in range(m):
        # Waypoint interpolation at both segment ends.
        row = np.zeros(nvar)
        row[k * POLY_COEFFS : (k + 1) * POLY_COEFFS] = _deriv_row(0.0, 0)
        add(row, positions[k])
        row = np.zeros(nvar)
        row[k * POLY_COEFFS : (k + 1) * POLY_COEFFS] = _deriv_row(float(times[k]), 0)
        add(row, positions[k + 1])

    for order in (1, 2, 3):
        # Rest at both ends.
        row = np.zeros(nvar)
        row[0:POLY_COEFFS] = _deriv_row(0.0, order)
        add(row, 0.0)
        row = np.zeros(nvar)
        row[(m - 1) * POLY_COEFFS : m * POLY_COEFFS] = _deriv_row(float(times[-1]), order)
        add(row, 0.0)

    for k in range(m - 1):
        # Continuity of derivatives 1..4 at interior joints.
        for order in (1, 2, 3, 4):
            row = np.zeros(nvar)
            row[k * POLY_COEFFS : (k + 1) * POLY_COEFFS] = _deriv_row(float(times[k]), order)
            row[(k + 1) * POLY_COEFFS : (k + 2) * POLY_COEFFS] = -_deriv_row(0.0, order)
            add(row, 0.0)

    A = np.vstack(rows)
    b = np.asarray(rhs)
    neq = A.shape[0]
    kkt = np.zeros((nvar + neq, nvar + neq))
    kkt[:nvar, :nvar] = Q + np.eye(nvar) * 1e-10
    kkt[:nvar, nvar:] = A.T
    kkt[nvar:, :nvar] = A
    full_rhs = np.concatenate([np.zeros(nvar), b])
    sol = np.linalg.solve(kkt, full_rhs)
    return sol[:nvar].reshape(m, POLY_COEFFS)


def fit_global(
    waypoints,
    v_max: float,
    a_max: float,
    min_leg_durations=None,
    t_start: float = 0.0,
) -> PolyTrajectory:
    """Minimum-snap trajectory through the waypoints, scaled to the limits.

    Leg durations start from distance / (0.7 * v_max) with a 0.5 s floor
    (optionally raised per leg by ``min_leg_durations``), then all durations
    are scaled uniformly until the sampled maximum velocity and acceleration
    respect v_max and a_max.
    """
    wps = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if wps.shape[0] < 2:
        raise ValueError("need at least 2 waypoints")
    if v_max <= 0 or a_max <= 0:
        raise ValueError("v_max and a_max must be > 0")

    legs = np.linalg.norm(np.diff(wps, axis=0), axis=1)
    durations = np.maximum(legs / (0.7 * v_max), 0.5)
    if min_leg_durations is not None:
        durations = np.maximum(durations, np.asarray(min_leg_durations, dtype=float))

    for _ in range(12):
        coeffs = np.stack(
            [_solve_min_snap_axis(wps[:, d], durations) for d in range(wps.shape[1])],
            axis=2,
        )
        traj = PolyTrajectory(durations=durations, coeffs=coeffs, waypoints=wps, t_start=t_start)
        ts = np.linspace(0.0, traj.total_time - t_start, max(40 * len(durations), 80)) + t_start
        vel = np.array([traj.eval(t, 1) for t in ts])
        acc = np.array([traj.eval(t, 2) for t in ts])
        v_peak = float(np.linalg.norm(vel, axis=1).max())
        a_peak = float(np.linalg.norm(acc, axis=1).max())
        scale = max(v_peak / v_max, math.sqrt(a_peak / a_max))
        if scale <= 1.0 + 1e-6:
            return traj
        durations = durations * (scale * 1.01)
    return traj


def sample_window(traj: PolyTrajectory, t0: float, horizon: float, n: int):
    """n uniform (t, position, velocity) samples over [t0, t0+horizon].

    Sampling past the trajectory end holds the final waypoint with zero
    velocity, so the final sample always provides a valid endpoint target.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    ts = np.linspace(t0, t0 + horizon, n)
    pos = np.empty((n, traj.coeffs.shape[2]))
    vel = np.empty_like(pos)
    end = traj.total_time
    for i, t in enumerate(ts):
        pos[i] = traj.eval(t, 0)
        vel[i] = traj.eval(t, 1) if t <= end else 0.0
    return ts, pos, vel
