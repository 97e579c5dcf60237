"""Rotation vectors of covered systems, periodic norms and past/future comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.optimize import minimize

from . import boundary as B
from . import models as M
from .errors import DomainError, FitError, NumericError
from .escort import K_GRID, AlignmentReport, EscortFit, PointSequence, alignment_statistic, fit_escort
from .models import DeckTransformation, ModelPoint, ModelVector

RATE_FLOOR = 1e-12


@dataclass
class CoveredSystem:
    """A lift F on the cover together with deck generators it commutes with.

    ``lift_map`` and ``inverse`` act on (N, d) coordinate arrays.
    """
    model: M.ModelId
    deck: list
    lift_map: Callable[[np.ndarray], np.ndarray]
    base_step: str = ""
    inverse: Callable[[np.ndarray], np.ndarray] | None = None
    check_samples: int = 32

    def __post_init__(self):
        self.model = M._as_model(self.model)
        if self.check_samples:
            gap = self.commutation_gap(self.check_samples)
            if gap > 1e-9:
                raise DomainError(f"lift does not commute with the deck group (gap {gap:.3g})")

    def commutation_gap(self, samples: int = 32, rng_seed: int = 0) -> float:
        rng = np.random.default_rng(rng_seed)
        P = M.random_points(self.model, samples, rng, 1.0)
        worst = 0.0
        for g in self.deck:
            a = self.lift_map(g.apply_array(P))
            b = g.apply_array(self.lift_map(P))
            worst = max(worst, float(np.max(M.distance_array(self.model, a, b))))
        return worst

    def apply(self, p: ModelPoint) -> ModelPoint:
        return ModelPoint(self.model, tuple(self.lift_map(p.array[None])[0]))

    def orbit(self, x: ModelPoint, n: int) -> PointSequence:
        out = np.empty((n + 1, self.model.dim))
        out[0] = x.array
        cur = x.array[None]
        for k in range(1, n + 1):
            cur = self.lift_map(cur)
            out[k] = cur[0]
        return PointSequence.orbit(self.model, out)

    def inverted(self) -> "CoveredSystem":
        if self.inverse is None:
            raise DomainError("this system has no implemented inverse")
        return CoveredSystem(self.model, self.deck, self.inverse, "inverse of " + self.base_step,
                             self.lift_map, check_samples=0)


@dataclass
class CoveredFlow:
    """Lifted flow given by sampled trajectories: ``trajectory(state, times) -> (len(times), d)``."""
    model: M.ModelId
    deck: list
    trajectory: Callable[[Any, np.ndarray], np.ndarray]
    base_step: str = ""


@dataclass
class RotationEstimate:
    base: ModelPoint
    vector: ModelVector
    norm: float
    direction_gap: float
    horizon: float
    defined: bool = True
    report: AlignmentReport | None = None
    fit: EscortFit | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.norm < 0:
            raise DomainError("norm is nonnegative")
        if self.defined and abs(self.vector.norm - self.norm) > 1e-9 * max(1.0, self.norm):
            raise DomainError("vector norm and reported norm disagree")

    def record(self) -> dict:
        return {"model": str(self.base.model), "base": list(self.base.coords),
                "vector": list(self.vector.components), "norm": self.norm,
                "horizon": self.horizon, "direction_gap": self.direction_gap,
                "defined": self.defined, **self.diagnostics}


def _estimate(seq: PointSequence, horizon: float) -> RotationEstimate:
    base = seq.point(0)
    zero = ModelVector(base, (0.0,) * seq.model.dim)
    report = alignment_statistic(seq)
    diag = report.summary()
    if report.R_hat <= RATE_FLOOR:
        return RotationEstimate(base, zero, 0.0, 0.0, horizon, True, report, None, diag)
    try:
        fit = fit_escort(seq, report)
    except FitError as exc:
        # norm from the rate of escape, direction flagged as undefined
        diag["fit_error"] = str(exc)
        return RotationEstimate(base, zero, report.R_hat, math.inf, horizon, False, report, None, diag)
    vec = fit.direction.scaled(fit.speed)
    diag["far_residual"] = fit.far_residual
    return RotationEstimate(base, vec, vec.norm, fit.cauchy_gap, horizon, True, report, fit, diag)


def rotation_vector_sequence(seq: PointSequence, horizon: float | None = None) -> RotationEstimate:
    """Estimate for a recorded orbit, e.g. one read back from CSV."""
    return _estimate(seq, float(seq.times[-1] if horizon is None else horizon))


def rotation_vector_map(sys: CoveredSystem, x: ModelPoint, n: int) -> RotationEstimate:
    if x.model != sys.model:
        raise DomainError("base point must live on the cover")
    return _estimate(sys.orbit(x, n), float(n))


def rotation_vector_flow(sys: CoveredFlow, x, T: float, dt: float) -> RotationEstimate:
    """Estimate from the sampled trajectory; integer-time subsampling is reported alongside."""
    if not 0 < dt <= 1:
        raise DomainError("dt must lie in (0, 1]")
    steps = int(round(T / dt))
    times = np.arange(steps + 1) * dt
    P = np.asarray(sys.trajectory(x, times), dtype=float)
    seq = PointSequence(sys.model, P, times)
    est = _estimate(seq, float(T))
    per = int(round(1.0 / dt))
    if abs(per * dt - 1.0) < 1e-12 and per > 1:
        sub = seq.subsequence(np.arange(0, len(seq), per))
        if len(sub) > max(K_GRID) + 2:
            est_i = _estimate(sub, float(T))
            est.diagnostics["integer_norm"] = est_i.norm
            # largest displacement between consecutive integer times
            within = M.distance_array(sys.model, P[:-1], P[1:])
            est.diagnostics["sample_step"] = float(np.max(within)) if within.size else 0.0
    return est


# ---------------------------------------------------------------------------
# periodic orbits

def _hyperbolic_param(model):
    """Map (x, s) with z = x + i e^s to model coordinates."""
    def to_model(X):
        z = X[:, 0] + 1j * np.exp(X[:, 1])
        return B.from_half_plane(model, z)[0]
    return to_model


def translation_length(rho: DeckTransformation, radius: float = 20.0, grid: int = 41,
                       center=None) -> float:
    """inf_x d(x, rho x) by a coarse grid over a box followed by Nelder-Mead."""
    model = rho.model
    if model.hyperbolic:
        to_model = _hyperbolic_param(model)
    else:
        def to_model(X):
            return X
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    g = np.linspace(-radius, radius, grid)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2) + c

    def f_arr(X):
        P = to_model(X)
        return M.distance_array(model, P, rho.apply_array(P))

    vals = f_arr(X)
    order = np.argsort(vals)[:3]
    best_val, best_x = float(vals[order[0]]), X[order[0]]
    for j in order:
        res = minimize(lambda q: float(f_arr(np.clip(q, c - radius, c + radius)[None])[0]), X[j],
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        if res.fun < best_val:
            best_val, best_x = float(res.fun), np.clip(res.x, c - radius, c + radius)
    if not np.isfinite(best_val):
        raise NumericError("translation length search produced no finite value", residual=best_val)
    if rho.kind == "moebius" and best_val > 1e-6:
        P = to_model(best_x[None])
        R1 = float(M.distance_array(model, P, rho.apply_array(P))[0])
        R2 = float(M.distance_array(model, P, rho.power(2).apply_array(P))[0])
        if abs(R2 - 2 * R1) > 1e-6 * max(1.0, R1):
            raise NumericError(f"descent stopped off the axis: R2 = {R2}, 2 R1 = {2 * R1}", residual=best_val)
    return best_val


@dataclass
class PeriodicOrbitSpec:
    point: ModelPoint
    period: int
    rho: DeckTransformation
    system: CoveredSystem | None = None

    def __post_init__(self):
        if self.period < 1:
            raise DomainError("period must be a positive integer")
        if self.system is not None:
            img = self.system.orbit(self.point, self.period).array[-1]
            want = self.rho.apply_array(self.point.array[None])[0]
            gap = float(M.distance_array(self.point.model, img[None], want[None])[0])
            if gap > 1e-8:
                raise DomainError(f"rho(x) differs from F^p(x) by {gap:.3g}")


def periodic_norm(spec: PeriodicOrbitSpec, **search) -> float:
    return translation_length(spec.rho, **search) / spec.period


def busemann_increment(sys: CoveredSystem, x: ModelPoint, v: ModelVector) -> float:
    """B_v(x, F x)."""
    if v.base != x:
        raise DomainError("v must be based at x")
    return B.busemann(v, x, sys.apply(x))


@dataclass
class PastFuture:
    norm_fwd: float
    norm_bwd: float
    angle: float
    fwd: RotationEstimate
    bwd: RotationEstimate

    def __iter__(self):
        return iter((self.norm_fwd, self.norm_bwd, self.angle))


def angle_between(u: ModelVector, w: ModelVector) -> float:
    if u.norm == 0 or w.norm == 0:
        return math.nan
    c = u.inner(w) / (u.norm * w.norm)
    return math.acos(max(-1.0, min(1.0, c)))


def past_future_compare(sys: CoveredSystem, x: ModelPoint, n: int) -> PastFuture:
    fwd = rotation_vector_map(sys, x, n)
    bwd = rotation_vector_map(sys.inverted(), x, n)
    return PastFuture(fwd.norm, bwd.norm, angle_between(fwd.vector, bwd.vector.scaled(-1.0)), fwd, bwd)


# ---------------------------------------------------------------------------
# stock systems

def torus_translation(a, b) -> CoveredSystem:
    s = np.array([a, b], dtype=float)
    return CoveredSystem(M.TORUS2, [DeckTransformation.lattice(M.TORUS2, 1, 0),
                                    DeckTransformation.lattice(M.TORUS2, 0, 1)],
                         lambda P: P + s, f"translation by ({a}, {b})", lambda P: P - s)


def perturbed_torus(a, b, eps: float = 0.05) -> CoveredSystem:
    """F(x) = x + (a, b) + eps sin(2 pi x) coordinatewise."""
    s = np.array([a, b], dtype=float)

    def F(P):
        return P + s + eps * np.sin(2 * np.pi * P)

    def F_inv(P):
        # fixed-point iteration converges since 2 pi eps < 1
        Q = P - s
        for _ in range(200):
            Q_new = P - s - eps * np.sin(2 * np.pi * Q)
            if np.max(np.abs(Q_new - Q)) < 1e-15:
                return Q_new
            Q = Q_new
        return Q

    return CoveredSystem(M.TORUS2, [DeckTransformation.lattice(M.TORUS2, 1, 0),
                                    DeckTransformation.lattice(M.TORUS2, 0, 1)],
                         F, f"perturbed translation ({a}, {b}), eps {eps}", F_inv if 2 * np.pi * eps < 1 else None)


def moebius_system(matrix, model=M.HALF_PLANE, deck=None) -> CoveredSystem:
    g = DeckTransformation.moebius(matrix, model)
    gi = g.inverse()
    return CoveredSystem(model, [g] if deck is None else deck, g.apply_array,
                         f"moebius {np.asarray(matrix).tolist()}", gi.apply_array)


def warped_xshift(t: float = 1.0, deck_t: float = 1.0) -> CoveredSystem:
    g = DeckTransformation.xshift(t)
    gi = g.inverse()
    return CoveredSystem(M.WARPED, [DeckTransformation.xshift(deck_t)], g.apply_array,
                         f"x-shift by {t}", gi.apply_array)


def geodesic_flow(model=M.HALF_PLANE, deck=None) -> CoveredFlow:
    def traj(v: ModelVector, times):
        P = np.repeat(v.base.array[None], len(times), 0)
        return M.exp_array(v.model, P, np.asarray(times)[:, None] * v.array[None])
    return CoveredFlow(M._as_model(model), deck or [], traj, "geodesic flow")


def suspension_flow(a, b, return_time: float = 1.0) -> CoveredFlow:
    """Suspension of a torus translation with constant return time."""
    s = np.array([a, b], dtype=float) / return_time

    def traj(p: ModelPoint, times):
        return p.array[None] + np.asarray(times)[:, None] * s[None]
    return CoveredFlow(M.TORUS2, [DeckTransformation.lattice(M.TORUS2, 1, 0),
                                  DeckTransformation.lattice(M.TORUS2, 0, 1)], traj,
                       f"suspension of ({a}, {b}), return time {return_time}")
