"""Magnetic and warped geodesic flows, rotation vectors through maps, semi-conjugacy.

The magnetic equation D/dt a' = i a' in the half-plane reads, for the
Euclidean direction angle theta of a curve with hyperbolic speed v,

    x' = v y cos(theta),  y' = v y sin(theta),  theta' = 1 - v cos(theta).

We integrate it in the scale-free state (u, eta, theta) with u = x/y and
eta = log y, inside a frame where the start sits at a canonical position:
the axis of a supercritical orbit becomes the imaginary axis, the center of
a horocycle becomes infinity, the center of a circle becomes i. Points far
out along the orbit then stay representable with full relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from . import _warped
from . import boundary as B
from . import models as M
from .errors import CheckFailure, DomainError, DomainExitError, NumericError, UnsupportedModelError
from .escort import PointSequence, alignment_statistic, fit_escort
from .models import ModelId, ModelPoint, ModelVector
from .rotation import RotationEstimate, _estimate


@dataclass(frozen=True)
class FlowState:
    position: ModelPoint
    velocity: ModelVector

    def __post_init__(self):
        if self.velocity.base != self.position:
            raise DomainError("velocity must be based at the position")

    @property
    def speed(self) -> float:
        return self.velocity.norm

    @classmethod
    def at(cls, model, coords, velocity) -> "FlowState":
        p = ModelPoint(M._as_model(model), tuple(float(c) for c in coords))
        return cls(p, ModelVector(p, tuple(float(c) for c in velocity)))


# ---------------------------------------------------------------------------
# magnetic flow

@dataclass(frozen=True)
class MagneticClass:
    regime: str
    radius_or_distance: float
    escape_rate: float
    period: float = math.inf


def classify_magnetic(v: float, tol: float = 1e-12) -> MagneticClass:
    if not v > 0:
        raise DomainError("speed must be positive")
    if abs(v - 1.0) <= tol:
        return MagneticClass("horocyclic", math.inf, 0.0)
    if v < 1:
        return MagneticClass("subcritical", math.atanh(v), 0.0, 2 * math.pi / math.sqrt(1 - v * v))
    return MagneticClass("supercritical", math.atanh(1.0 / v), math.sqrt(v * v - 1.0))


def _sl2_frame(z: complex, phi: float) -> np.ndarray:
    """Isometry sending (i, upward) to (z, Euclidean direction angle phi)."""
    psi = phi - 0.5 * math.pi
    c, s = math.cos(psi / 2), math.sin(psi / 2)
    rot = np.array([[c, s], [-s, c]])
    ry = math.sqrt(z.imag)
    aff = np.array([[ry, z.real / ry], [0.0, 1.0 / ry]])
    return aff @ rot


def _inv(m: np.ndarray) -> np.ndarray:
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def _mob(m, z):
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])
    return np.where(np.isinf(z), m[0, 0] / m[1, 0] if m[1, 0] != 0 else np.inf, out)


def _mob_hp(m, w):
    """Moebius image with the imaginary part from Im w / |cw + d|^2, free of cancellation."""
    w = np.asarray(w, dtype=complex)
    den = m[1, 0] * w + m[1, 1]
    z = (m[0, 0] * w + m[0, 1]) / den
    return z.real + 1j * (w.imag / np.abs(den) ** 2)


def _mob_deriv(m, z):
    return 1.0 / (m[1, 0] * np.asarray(z, dtype=complex) + m[1, 1]) ** 2


def canonical_state(v: float):
    """(u, eta, theta) of the canonical start for speed v."""
    cls = classify_magnetic(v)
    if cls.regime == "supercritical":
        u0 = 1.0 / math.sqrt(v * v - 1.0)
        return np.array([u0, 0.0, math.atan2(1.0, u0)])
    if cls.regime == "horocyclic":
        return np.array([0.0, 0.0, 0.0])
    return np.array([0.0, -cls.radius_or_distance, 0.0])


def _rhs(v):
    def f(t, s):
        u, eta, th = s
        c, sn = math.cos(th), math.sin(th)
        return [v * c - u * v * sn, v * sn, 1.0 - v * c]
    return f


@dataclass
class MagneticTrajectory:
    """Samples of a magnetic trajectory.

    ``frame`` is the SL2 matrix taking the half-plane image of the user's
    chart to the canonical frame; ``state`` holds (u, eta, theta) there.
    """
    model: ModelId
    speed: float
    times: np.ndarray
    state: np.ndarray
    frame: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    classification: MagneticClass
    _dense: Any = field(default=None, repr=False)
    # largest drift off the axis level set before each reprojection
    projection_residual: float = 0.0

    @property
    def frame_z(self) -> np.ndarray:
        u, eta = self.state[:, 0], self.state[:, 1]
        return np.exp(eta) * (u + 1j)

    @property
    def frame_points(self) -> np.ndarray:
        """Half-plane coordinates in the canonical frame."""
        u, eta = self.state[:, 0], self.state[:, 1]
        y = np.exp(eta)
        return np.stack([u * y, y], axis=1)

    @property
    def frame_velocities(self) -> np.ndarray:
        u, eta, th = self.state.T
        y = np.exp(eta)
        return np.stack([self.speed * y * np.cos(th), self.speed * y * np.sin(th)], axis=1)

    def axis_endpoints(self):
        """Backward and forward endpoints of the axis in the user's half-plane image."""
        if self.classification.regime != "supercritical":
            raise DomainError("only supercritical orbits have an axis")
        mi = _inv(self.frame)
        lo = complex(_mob(mi, 0.0))
        hi = complex(_mob(mi, np.inf))
        sign = 1.0 if self.times[-1] >= self.times[0] else -1.0
        xi_plus, xi_minus = (hi, lo) if sign > 0 else (lo, hi)
        return _real_or_inf(xi_minus), _real_or_inf(xi_plus)

    def center(self):
        """Center of the circle (as a point) or of the horocycle (as a boundary value)."""
        mi = _inv(self.frame)
        if self.classification.regime == "subcritical":
            return complex(_mob(mi, 1j))
        if self.classification.regime == "horocyclic":
            return _real_or_inf(complex(_mob(mi, np.inf)))
        raise DomainError("supercritical orbits have an axis, not a center")

    def first_return(self, tol: float = 1e-3) -> float:
        """Period from the first phase-space return within tol, refined on the dense solution."""
        if self._dense is None:
            raise DomainError("dense output unavailable")
        s0 = self.state[0]

        def gap(t):
            s = self._dense(t)
            dth = math.remainder(s[2] - s0[2], 2 * math.pi)
            return math.sqrt((s[0] - s0[0]) ** 2 + (s[1] - s0[1]) ** 2 + dth ** 2)

        dth = np.remainder(self.state[:, 2] - s0[2] + np.pi, 2 * np.pi) - np.pi
        d = np.sqrt((self.state[:, 0] - s0[0]) ** 2 + (self.state[:, 1] - s0[1]) ** 2 + dth ** 2)
        # first local minimum of the sampled gap after leaving the start, refined
        step = float(np.max(np.abs(np.diff(d)))) if len(d) > 1 else 0.0
        away = np.flatnonzero(d > 10 * tol + 2 * step)
        if away.size == 0:
            raise NumericError("trajectory never leaves the start")
        k0 = away[0]
        for k in range(k0 + 1, len(d) - 1):
            if d[k] <= d[k - 1] and d[k] <= d[k + 1] and d[k] < tol + 2 * step:
                res = minimize_scalar(gap, bounds=(self.times[k - 1], self.times[k + 1]), method="bounded",
                                      options={"xatol": 1e-13})
                if res.fun < tol:
                    return float(res.x)
        raise NumericError("no return within the horizon")

    def flow_states(self) -> list:
        return [FlowState.at(self.model, p, w) for p, w in zip(self.positions, self.velocities)]


def _real_or_inf(z: complex):
    if not np.isfinite(z) or abs(z) > 1e300:
        return math.inf
    return float(z.real)


def _supercritical_segments(v, s_c, times, rtol, atol, seg=1.0):
    """Integrate the stationary equidistant orbit in unit-time segments.

    In scale-free coordinates the orbit is a saddle point of (u, theta), so
    round-off grows like exp(sqrt(v^2 - 1) t). The axis is a first integral;
    after each segment (u, theta) is put back on its level set and eta kept.
    """
    rhs = _rhs(v)
    n = len(times)
    state = np.empty((n, 3))
    state[0] = s_c
    drift = 0.0
    # segment boundaries sit on sample times so t_eval never leaves the span
    step = abs(times[1] - times[0]) if n > 1 else seg
    k = max(1, int(round(seg / step)))
    cur = np.array(s_c, dtype=float)
    i = 0
    while i < n - 1:
        j = min(i + k, n - 1)
        sol = solve_ivp(rhs, (times[i], times[j]), cur, method="DOP853", t_eval=times[i + 1:j + 1],
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericError("magnetic integration failed: " + str(sol.message))
        state[i + 1:j + 1] = sol.y.T
        end = sol.y[:, -1]
        drift = max(drift, abs(end[0] - s_c[0]) + abs(end[2] - s_c[2]))
        cur = np.array([s_c[0], end[1], s_c[2]])
        i = j
    return state, drift


def magnetic_trajectory(start: FlowState, T: float, dt: float, backward: bool = False,
                        rtol: float = 1e-12, atol: float = 1e-12, frame_only: bool = False) -> MagneticTrajectory:
    """Integrate D/dt a' = i a' from ``start`` over [0, T] (or [0, -T] when backward).

    With ``frame_only`` the samples stay in the canonical frame and positions
    are left empty; long supercritical runs overflow any fixed chart.
    """
    model = start.position.model
    if not model.hyperbolic:
        raise UnsupportedModelError(f"the magnetic flow is implemented on hyperbolic charts, not {model}")
    v = start.speed
    cls = classify_magnetic(v)
    if dt <= 0 or dt > 0.01 / max(1.0, v) + 1e-15:
        raise DomainError(f"dt must lie in (0, {0.01 / max(1.0, v)}] for speed {v}")
    if T <= 0:
        raise DomainError("T must be positive")
    z0, vz0 = B.to_half_plane(model, start.position.array[None], start.velocity.array[None])
    z0, vz0 = complex(z0[0]), complex(vz0[0])
    s_c = canonical_state(v)
    w_c = math.exp(s_c[1]) * (s_c[0] + 1j)
    A = _sl2_frame(w_c, s_c[2]) @ _inv(_sl2_frame(z0, math.atan2(vz0.imag, vz0.real)))
    n = int(round(T / dt))
    sign = -1.0 if backward else 1.0
    times = sign * np.arange(n + 1) * dt
    if cls.regime == "supercritical":
        state, drift = _supercritical_segments(v, s_c, times, rtol, atol)
        dense = None
    else:
        sol = solve_ivp(_rhs(v), (0.0, times[-1]), s_c, method="DOP853", t_eval=times,
                        rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise NumericError("magnetic integration failed: " + str(sol.message))
        state, drift, dense = sol.y.T, 0.0, sol.sol
    traj = MagneticTrajectory(model, v, times, state, A, np.empty((0, 2)), np.empty((0, 2)), cls, dense,
                              projection_residual=drift)
    if frame_only:
        return traj
    # back to the user's chart
    mi = _inv(A)
    w = traj.frame_z
    dw = v * w.imag * np.exp(1j * state[:, 2])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # overflow marks the chart exit detected below
        z = _mob_hp(mi, w)
        dz = _mob_deriv(mi, w) * dw
    bad = ~np.isfinite(z) | ~(z.imag > 0)
    if np.any(bad):
        k = int(np.argmax(bad))
        last = None
        if k > 0:
            P, V = B.from_half_plane(model, z[k - 1:k], dz[k - 1:k])
            last = FlowState.at(model, P[0], V[0])
        raise DomainExitError(f"trajectory leaves the representable chart at t = {times[k]:.6g}", last_state=last)
    P, V = B.from_half_plane(model, z, dz)
    traj.positions, traj.velocities = P, V
    return traj


def magnetic_start(v: float, model=M.HALF_PLANE, z=1j, angle: float = 0.5 * math.pi) -> FlowState:
    """Start at half-plane point z with Euclidean direction angle and hyperbolic speed v."""
    vz = v * z.imag * complex(math.cos(angle), math.sin(angle))
    P, V = B.from_half_plane(M._as_model(model), np.array([z]), np.array([vz]))
    return FlowState.at(model, P[0], V[0])


# ---------------------------------------------------------------------------
# warped geodesics

def classify_warped(E: float, p1: float, tol: float = 1e-9) -> str:
    if E < 0:
        raise DomainError("E is a squared norm")
    gap = E - p1 * p1
    if abs(gap) <= tol:
        return "type-II"
    return "type-I" if gap > 0 else "type-III"


@dataclass
class WarpedTrajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    E: float
    p1: float
    kind: str
    E_drift: float
    p1_drift: float


def warped_geodesic(start: FlowState, T: float, dt: float) -> WarpedTrajectory:
    """Hamiltonian integration of a warped geodesic; p2 is kept on the energy shell."""
    if start.position.model != M.WARPED:
        raise DomainError("warped_geodesic needs a warped-xy start")
    v = start.speed
    if dt <= 0 or dt > 0.01 / max(1.0, v) + 1e-15:
        raise DomainError(f"dt must lie in (0, {0.01 / max(1.0, v)}]")
    S0 = _warped.hamiltonian_state(start.position.array[None], start.velocity.array[None])
    E0 = float(_warped.energy(S0)[0])
    n = int(round(T / dt))
    times = np.arange(n + 1) * dt
    Y = _warped.flow(S0, times)[:, 0, :]
    if not np.all(np.isfinite(Y)):
        raise NumericError("warped geodesic overflowed the chart")
    w = _warped.w_of(Y[:, 1])
    vel = np.stack([Y[:, 2] / (w * w), Y[:, 3]], axis=1)
    E = _warped.energy(Y)
    p1 = float(S0[0, 2])
    return WarpedTrajectory(times, Y[:, :2], vel, E0, p1, classify_warped(E0, p1),
                            float(np.max(np.abs(E - E0))), float(np.max(np.abs(Y[:, 2] - p1))))


# ---------------------------------------------------------------------------
# rotation vectors through a map

def rotation_vector_through_map(flow: Callable[[Any, np.ndarray], Any], h: Callable[[Any], np.ndarray],
                                x: Any, T: float, dt: float = 0.01, model=M.HALF_PLANE,
                                pullback: Callable[[ModelVector], ModelVector] | None = None) -> RotationEstimate:
    """Escort pipeline on t -> h(f^t x) sampled on [0, T].

    ``flow(x, times)`` returns states, ``h(states)`` their (N, d) images in
    ``model``; ``pullback`` transports the resulting vector to another chart.
    """
    times = np.arange(int(round(T / dt)) + 1) * dt
    P = np.asarray(h(flow(x, times)), dtype=float)
    est = _estimate(PointSequence(M._as_model(model), P, times), float(T))
    if pullback is not None and est.defined:
        vec = pullback(est.vector)
        est = RotationEstimate(vec.base, vec, est.norm, est.direction_gap, est.horizon, True,
                               est.report, est.fit, est.diagnostics)
    return est


def geodesic_flow_states(v: ModelVector, times) -> np.ndarray:
    P = np.repeat(v.base.array[None], len(times), 0)
    return M.exp_array(v.model, P, np.asarray(times)[:, None] * v.array[None])


def magnetic_flow_states(start: FlowState, times) -> MagneticTrajectory:
    dt = float(times[1] - times[0])
    return magnetic_trajectory(start, float(times[-1]), dt)


def magnetic_rotation_vector(start: FlowState, T: float, dt: float | None = None) -> RotationEstimate:
    """Rotation vector of a magnetic trajectory through the bundle projection.

    Works in the canonical frame and transports the vector back to the start.
    """
    dt = dt or 0.01 / max(1.0, start.speed)
    traj = magnetic_trajectory(start, T, dt)
    est = _estimate(PointSequence(M.HALF_PLANE, traj.frame_points, traj.times), float(T))
    if not est.defined or est.norm == 0:
        base = start.position
        zero = ModelVector(base, (0.0, 0.0))
        return RotationEstimate(base, zero, est.norm, est.direction_gap, T, est.defined,
                                est.report, est.fit, est.diagnostics)
    w0 = traj.frame_z[0]
    dw = complex(*est.vector.array)
    mi = _inv(traj.frame)
    z0 = complex(_mob(mi, w0))
    dz = complex(_mob_deriv(mi, w0) * dw)
    P, V = B.from_half_plane(start.position.model, np.array([z0]), np.array([dz]))
    vec = ModelVector(start.position, tuple(V[0]))
    return RotationEstimate(start.position, vec, est.norm, est.direction_gap, T, True,
                            est.report, est.fit, est.diagnostics)


# ---------------------------------------------------------------------------
# semi-conjugacy

@dataclass
class BundleOrbit:
    """Samples of t -> h(f^t x) and t -> h(f^{-t} x) on a common grid t >= 0."""
    model: ModelId
    times: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    speed_bound: float


def magnetic_bundle_orbit(v: float, T: float, dt: float | None = None) -> BundleOrbit:
    """Magnetic orbit through the canonical start, in the canonical frame."""
    dt = dt or 0.01 / max(1.0, v)
    start = magnetic_start(v)
    fwd = magnetic_trajectory(start, T, dt, frame_only=True)
    bwd = magnetic_trajectory(start, T, dt, backward=True, frame_only=True)
    # both runs share the frame since they share the start
    return BundleOrbit(M.HALF_PLANE, fwd.times, fwd.frame_points, bwd.frame_points, v)


def xshift_bundle_orbit(T: float, dt: float = 1.0, y0: float = 0.0) -> BundleOrbit:
    """The flow (x, y) -> (x + t, y) on the warped plane, projected to itself."""
    t = np.arange(int(round(T / dt)) + 1) * dt
    fwd = np.stack([t, np.full_like(t, y0)], axis=1)
    bwd = np.stack([-t, np.full_like(t, y0)], axis=1)
    return BundleOrbit(M.WARPED, t, fwd, bwd, float(_warped.w_of(y0)))


def geodesic_bundle_orbit(v: ModelVector, T: float, dt: float) -> BundleOrbit:
    t = np.arange(int(round(T / dt)) + 1) * dt
    return BundleOrbit(v.model, t, geodesic_flow_states(v, t), geodesic_flow_states(v.scaled(-1.0), t), v.norm)


@dataclass
class SemiConjugacyData:
    times: np.ndarray
    b_cocycle: np.ndarray
    a_cocycle: np.ndarray
    r_correction: np.ndarray
    phi_points: np.ndarray
    phi_vectors: np.ndarray
    model: ModelId
    phi1: ModelVector
    time_scale: float
    slope: float
    lipschitz: float

    def __post_init__(self):
        if np.any(np.diff(self.a_cocycle) <= 0):
            raise NumericError("a is not strictly increasing on the grid")

    @property
    def phi_samples(self) -> list:
        return [(float(t), ModelVector(ModelPoint(self.model, tuple(p)), tuple(w)))
                for t, p, w in zip(self.times, self.phi_points, self.phi_vectors)]

    def rows(self) -> list:
        return [{"t": float(t), "b": float(b), "r": float(r), "a": float(a)}
                for t, b, r, a in zip(self.times, self.b_cocycle, self.r_correction, self.a_cocycle)]


def build_semiconjugacy(orbit: BundleOrbit, T: float | None = None, min_slope: float = 1e-3,
                        slope_tol: float = 0.03) -> SemiConjugacyData:
    """phi_1 from horosphere projection, b from Busemann values, a by monotone envelope.

    Time is changed linearly to unit escape rate using the forward estimate;
    ``T`` (if given) is measured in the rescaled time.
    """
    model = orbit.model
    seq_f = PointSequence(model, orbit.forward, orbit.times)
    seq_b = PointSequence(model, orbit.backward, orbit.times)
    rep_f = alignment_statistic(seq_f)
    rep_b = alignment_statistic(seq_b)
    if rep_f.R_hat <= 0 or rep_b.R_hat <= 0:
        raise DomainError("semi-conjugacy needs nonzero forward and backward rotation vectors")
    fit_f = fit_escort(seq_f, rep_f)
    fit_b = fit_escort(seq_b, rep_b)
    R = rep_f.R_hat
    phi1 = B.horosphere_project(fit_f.direction, fit_b.direction)
    tau = orbit.times * R
    keep = slice(None) if T is None else tau <= T * (1 + 1e-12)
    tau = tau[keep]
    Pf = orbit.forward[keep]
    base = np.repeat(phi1.base.array[None], len(Pf), 0)
    b = B.busemann_array(phi1, base, Pf)
    b = b - b[0]
    lip = float(np.max(np.abs(b[1:]) / orbit.times[keep][1:])) if len(b) > 1 else 0.0
    if lip > orbit.speed_bound * (1 + 1e-9) + 1e-12:
        raise NumericError(f"|b(x,t)| exceeds C t: {lip} > {orbit.speed_bound}")
    # running monotone envelope: a_k = max(b_k, a_{k-1} + min_slope * dtau)
    a = np.empty_like(b)
    a[0] = 0.0
    for k in range(1, len(b)):
        a[k] = max(b[k], a[k - 1] + min_slope * (tau[k] - tau[k - 1]))
    r = a - b
    slope = float(a[-1] / tau[-1])
    if abs(slope - 1.0) > slope_tol:
        raise CheckFailure(f"a(x,T)/T = {slope:.6f} outside 1 +- {slope_tol}")
    # phi(f^t x) = g^{a} phi_1(x)
    ends = M.exp_array(model, base, a[:, None] * phi1.array[None])
    ahead = M.exp_array(model, base, (a + 1.0)[:, None] * phi1.array[None])
    vel = M.log_array(model, ends, ahead)
    vel = vel / M.norm_array(model, ends, vel)[:, None]
    return SemiConjugacyData(tau, b, a, r, ends, vel, model, phi1, R, slope, lip)


def cocycle_gap(data: SemiConjugacyData, orbit: BundleOrbit, pairs: int = 200, rng_seed: int = 0) -> float:
    """max |a(x,s+t) - a(x,s) - a(f^s x, t)| with b(f^s x, t) evaluated afresh."""
    rng = np.random.default_rng(rng_seed)
    n = len(data.times)
    s = rng.integers(0, n - 1, pairs)
    t = rng.integers(1, n, pairs)
    ok = s + t < n
    s, t = s[ok], t[ok]
    Pf = orbit.forward[: n]
    b_shift = B.busemann_array(data.phi1, Pf[s], Pf[s + t])
    a_shift = b_shift + data.r_correction[s + t] - data.r_correction[s]
    return float(np.max(np.abs(data.a_cocycle[s + t] - data.a_cocycle[s] - a_shift)))
