"""Randomized property suites for the model geometry and Busemann functions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import boundary as B
from . import models as M
from .escort import cone_chord_gap_array

SUITE_MODELS = (M.EUCLIDEAN2, M.TORUS2, M.DISK, M.HALF_PLANE, M.FERMI, M.POLAR, M.WARPED)


@dataclass
class PropertyResult:
    name: str
    model: str
    instances: int
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)

    def row(self) -> dict:
        return {"name": self.name, "model": self.model, "instances": self.instances,
                "worst": self.worst, "tol": self.tol, "passed": self.passed}


def semi_parallelogram(model, n: int, rng: np.random.Generator, tol: float = 1e-7) -> PropertyResult:
    """max of d(x,y)^2 + 4 d(m,z)^2 - 2 d(x,z)^2 - 2 d(z,y)^2 over random triples."""
    X, Y, Z = (M.random_points(model, n, rng) for _ in range(3))
    mid = M.geodesic_points_array(model, X, Y, np.full(n, 0.5))
    gap = (M.distance_array(model, X, Y) ** 2 + 4 * M.distance_array(model, mid, Z) ** 2
           - 2 * M.distance_array(model, X, Z) ** 2 - 2 * M.distance_array(model, Z, Y) ** 2)
    return PropertyResult("semi-parallelogram", str(model), n, float(np.max(gap)), tol)


def convexity(model, n: int, rng: np.random.Generator, grid: int = 5, tol: float = 1e-7) -> PropertyResult:
    """Second differences of t -> d(alpha(t), beta(t)) along random geodesic segments."""
    A0, A1, B0, B1 = (M.random_points(model, n, rng) for _ in range(4))
    d = []
    for s in np.linspace(0.0, 1.0, grid):
        f = np.full(n, s)
        d.append(M.distance_array(model, M.geodesic_points_array(model, A0, A1, f),
                                  M.geodesic_points_array(model, B0, B1, f)))
    d = np.array(d)
    second = d[2:] - 2 * d[1:-1] + d[:-2]
    return PropertyResult("convexity", str(model), n, float(max(0.0, -np.min(second))), tol)


def exp_log_roundtrip(model, n: int, rng: np.random.Generator, tol: float = 1e-6) -> PropertyResult:
    X, Y = M.random_points(model, n, rng), M.random_points(model, n, rng)
    Z = M.exp_array(model, X, M.log_array(model, X, Y))
    # compare by distance; angular charts wrap
    return PropertyResult("exp-log", str(model), n, float(np.max(M.distance_array(model, Z, Y))), tol)


def cone_chord(model, n: int, rng: np.random.Generator, eps_max: float = 0.5,
               tol: float = 1e-9) -> PropertyResult:
    """Chord bound d(z,w)^2 <= 4(1 - e^{-2 eps}) d(x,z)^2 on admissible triples."""
    got, worst = 0, -math.inf
    while got < n:
        m = 4 * (n - got) + 16
        X, Y = M.random_points(model, m, rng), M.random_points(model, m, rng)
        W = M.geodesic_points_array(model, X, Y, rng.uniform(0.05, 0.95, m))
        # jitter a point of the chord; keep only those inside some cone with eps <= eps_max
        V = rng.normal(0, 0.05, (m, 2)) * M.distance_array(model, X, Y)[:, None]
        norms = M.norm_array(model, W, V)
        V = V / np.maximum(norms, 1e-300)[:, None] * (norms * rng.uniform(0, 1, m))[:, None]
        Z = M.exp_array(model, W, V)
        lhs, rhs, eps = cone_chord_gap_array(model, X, Y, Z)
        ok = np.isfinite(eps) & (eps > 0) & (eps <= eps_max)
        take = np.flatnonzero(ok)[: n - got]
        if len(take):
            worst = max(worst, float(np.max(lhs[take] - rhs[take])))
        got += len(take)
    return PropertyResult("cone-chord", str(model), n, max(worst, 0.0), tol)


def geometry_suite(n: int = 10_000, n_cone: int = 1000, rng_seed: int = 0,
                   models=SUITE_MODELS) -> list:
    rng = np.random.default_rng(rng_seed)
    out = []
    for model in models:
        out.append(semi_parallelogram(model, n, rng))
        out.append(convexity(model, n, rng))
        out.append(exp_log_roundtrip(model, n, rng))
        out.append(cone_chord(model, n_cone, rng))
    return out


# ---------------------------------------------------------------------------
# Busemann / boundary

def _unit_vectors(model, P, rng):
    V = rng.normal(size=P.shape)
    return V / M.norm_array(model, P, V)[:, None]


def busemann_suite(n: int = 1000, rng_seed: int = 0, models=(M.HALF_PLANE, M.DISK, M.EUCLIDEAN2)) -> list:
    """|B| <= d, cocycle additivity and equality for asymptotic pairs."""
    rng = np.random.default_rng(rng_seed)
    out = []
    for model in models:
        base = M.random_points(model, n, rng)
        V = _unit_vectors(model, base, rng)
        P, Q, R = (M.random_points(model, n, rng) for _ in range(3))
        bpq = np.empty(n)
        bqr = np.empty(n)
        bpr = np.empty(n)
        for k in range(n):
            v = M.vector(M.ModelPoint(model, tuple(base[k])), *V[k])
            b = B.busemann_array(v, np.stack([P[k], Q[k], P[k]]), np.stack([Q[k], R[k], R[k]]))
            bpq[k], bqr[k], bpr[k] = b
        d = M.distance_array(model, P, Q)
        out.append(PropertyResult("busemann-lipschitz", str(model), n, float(np.max(np.abs(bpq) - d)), 1e-7))
        out.append(PropertyResult("busemann-cocycle", str(model), n,
                                  float(np.max(np.abs(bpq + bqr - bpr))), 1e-7))
        if model.hyperbolic:
            # w: the unit vector at a second base point aimed at the same endpoint
            gap = 0.0
            for k in range(n):
                v = M.vector(M.ModelPoint(model, tuple(base[k])), *V[k])
                q = M.ModelPoint(model, tuple(M.random_points(model, 1, rng)[0]))
                w = _aim(q, v)
                b1 = B.busemann(v, M.ModelPoint(model, tuple(P[k])), M.ModelPoint(model, tuple(Q[k])))
                b2 = B.busemann(w, M.ModelPoint(model, tuple(P[k])), M.ModelPoint(model, tuple(Q[k])))
                gap = max(gap, abs(b1 - b2))
            out.append(PropertyResult("busemann-asymptotic", str(model), n, gap, 1e-6))
    return out


def _aim(q: M.ModelPoint, v: M.ModelVector) -> M.ModelVector:
    """Unit vector at q whose ray ends where the ray of v ends."""
    model = q.model
    xi = B._hp_endpoint_of(v)
    zq = complex(B.to_half_plane(model, q.array[None])[0][0])
    if math.isinf(xi):
        vz = 1j * zq.imag
    else:
        # geodesic through zq ending at xi: tangent of the circle through zq orthogonal to R
        c = (abs(zq) ** 2 - xi * xi) / (2 * (zq.real - xi)) if zq.real != xi else None
        if c is None:
            vz = -1j * zq.imag
        else:
            radial = zq - c
            tang = 1j * radial
            # orient toward xi
            if (tang * np.conj(xi - zq)).real < 0:
                tang = -tang
            vz = tang / abs(tang) * zq.imag
    P, Vv = B.from_half_plane(model, np.array([zq]), np.array([vz]))
    w = M.vector(M.ModelPoint(model, tuple(P[0])), *Vv[0])
    return w.unit()
