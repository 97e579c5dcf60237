"""Boundary at infinity: endpoints, Busemann functions, horosphere projection.

Hyperbolic charts are handled through the half-plane, where the Busemann
function of an endpoint xi is h(x) - h(y) with

    h(z) = -ln Im z + 2 ln |z - xi|     (xi real)
    h(z) = -ln Im z                      (xi = infinity).

Logs are kept separate so points extremely close to the boundary do not
underflow. Other charts fall back to the defining limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models as M
from .errors import DomainError, NumericError, UnsupportedModelError, VisibilityError
from .models import ModelId, ModelPoint, ModelVector

INF = math.inf


@dataclass(frozen=True)
class BoundaryPoint:
    model: ModelId
    repr: float

    def __post_init__(self):
        if self.model.tag == "poincare-disk":
            object.__setattr__(self, "repr", float(self.repr) % (2 * math.pi))
        elif self.model.tag == "upper-half-plane":
            r = float(self.repr)
            if math.isinf(r):
                r = INF
            object.__setattr__(self, "repr", r)
        else:
            raise UnsupportedModelError("boundary points are represented in the disk or the half-plane")

    @property
    def disk_angle(self) -> float:
        if self.model.tag == "poincare-disk":
            return self.repr
        return hp_boundary_to_angle(self.repr)

    def separation(self, other: "BoundaryPoint") -> float:
        d = abs(self.disk_angle - other.disk_angle) % (2 * math.pi)
        return min(d, 2 * math.pi - d)


@dataclass(frozen=True)
class BusemannQuery:
    v: ModelVector
    x: ModelPoint
    y: ModelPoint

    def __post_init__(self):
        if abs(self.v.norm - 1.0) > 1e-9:
            raise DomainError("Busemann queries need a unit vector")

    def evaluate(self) -> float:
        return busemann(self.v, self.x, self.y)


def hp_boundary_to_angle(xi: float) -> float:
    if math.isinf(xi):
        return 0.0
    return float(np.angle((xi - 1j) / (xi + 1j))) % (2 * math.pi)


def angle_to_hp_boundary(theta: float) -> float:
    u = complex(math.cos(theta), math.sin(theta))
    if abs(1 - u) < 1e-15:
        return INF
    return float((1j * (1 + u) / (1 - u)).real)


# ---------------------------------------------------------------------------
# conversion of hyperbolic charts to the half-plane

def to_half_plane(model: ModelId, P, V=None):
    """Complex half-plane positions (and velocities) for hyperbolic charts."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    tag = model.tag
    if tag == "upper-half-plane":
        z = P[:, 0] + 1j * P[:, 1]
        vz = None if V is None else np.atleast_2d(V)[:, 0] + 1j * np.atleast_2d(V)[:, 1]
    elif tag == "poincare-disk":
        a = P[:, 0] + 1j * P[:, 1]
        z = M.disk_to_hp(a)
        vz = None if V is None else M.disk_to_hp_vec(a, np.atleast_2d(V)[:, 0] + 1j * np.atleast_2d(V)[:, 1])
    elif tag == "fermi-strip":
        ch = M.chart(model)
        z = ch.to_hp(P)
        vz = None if V is None else ch._push(P, np.atleast_2d(V))
    elif tag == "hyperbolic-polar":
        ch = M.chart(model)
        a = ch.to_disk(P)
        z = M.disk_to_hp(a)
        vz = None if V is None else M.disk_to_hp_vec(a, ch._push(P, np.atleast_2d(V)))
    else:
        raise UnsupportedModelError(f"{model} is not a hyperbolic chart")
    return z, vz


def from_half_plane(model: ModelId, z, vz=None, ref=None):
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    tag = model.tag
    if tag == "upper-half-plane":
        P = np.stack([z.real, z.imag], axis=1)
        V = None if vz is None else np.stack([np.real(vz), np.imag(vz)], axis=1)
    elif tag == "poincare-disk":
        a = M.hp_to_disk(z)
        P = np.stack([a.real, a.imag], axis=1)
        V = None
        if vz is not None:
            va = M.hp_to_disk_vec(z, vz)
            V = np.stack([va.real, va.imag], axis=1)
    elif tag == "fermi-strip":
        ch = M.chart(model)
        P = ch.from_hp(z)
        V = None if vz is None else ch._pull(P, vz)
    elif tag == "hyperbolic-polar":
        ch = M.chart(model)
        a = M.hp_to_disk(z)
        P = ch.from_disk(a, np.zeros(len(a)) if ref is None else ref)
        V = None if vz is None else ch._pull(P, M.hp_to_disk_vec(z, vz))
    else:
        raise UnsupportedModelError(f"{model} is not a hyperbolic chart")
    return P, V


def hp_endpoint(z, vz):
    """Forward endpoint on the real line (or inf) of rays in the half-plane."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    vz = np.atleast_1d(np.asarray(vz, dtype=complex))
    psi = np.angle(vz)
    psi = np.where(psi > 0.5 * np.pi, psi - 2 * np.pi, psi)
    alpha = 0.5 * psi + 0.25 * np.pi
    vertical_up = (vz.real == 0) & (vz.imag > 0)
    out = z.real + z.imag * np.tan(alpha)
    return np.where(vertical_up | (np.abs(alpha - 0.5 * np.pi) < 1e-15), np.inf, out)


def h_value(z, xi):
    """Horofunction of the endpoint xi, normalized by h = -ln Im z + 2 ln|z - xi|."""
    z = np.asarray(z, dtype=complex)
    if np.isinf(xi):
        return -np.log(z.imag)
    return -np.log(z.imag) + 2.0 * np.log(np.hypot(z.real - xi, z.imag))


def ray_endpoint_hp(p: complex, q: complex) -> float:
    """Endpoint beyond q of the geodesic from p through q, accurate near the boundary.

    After moving p to i, the endpoints solve xi^2 - 2 c xi - 1 = 0; the small
    root is formed without cancellation and the forward root is the one for
    which q lies on the ray.
    """
    px, py = p.real, p.imag
    qp = complex((q.real - px) / py, q.imag / py)
    if qp.real == 0.0:
        return INF if qp.imag > 1.0 else px
    # c = (|q'|^2 - 1) / (2 q'x), with |q'|^2 kept finite
    mag = abs(qp)
    if mag > 1.0:
        c = (mag - 1.0 / mag) * mag / (2.0 * qp.real) if mag < 1e150 else mag * (mag / (2.0 * qp.real))
    else:
        c = (mag * mag - 1.0) / (2.0 * qp.real)
    root_big = c + math.copysign(math.hypot(c, 1.0), c)
    root_small = -1.0 / root_big
    cands = []
    for r in (root_small, root_big):
        if not math.isfinite(r):
            r = INF
        hp_i = float(h_value(np.array(1j), r))
        hq = float(h_value(np.array(qp), r))
        cands.append((hp_i - hq, r))
    xi = max(cands)[1]
    return xi if math.isinf(xi) else px + py * xi


# ---------------------------------------------------------------------------
# operations

def boundary_endpoint(v: ModelVector) -> BoundaryPoint:
    tag = v.model.tag
    if tag == "poincare-disk":
        a = v.base.z
        u = complex(*v.components)
        if u == 0:
            raise DomainError("zero vector has no endpoint")
        u = u / abs(u)
        e = (u + a) / (1 + a.conjugate() * u)
        return BoundaryPoint(v.model, math.atan2(e.imag, e.real))
    if tag == "upper-half-plane":
        return BoundaryPoint(v.model, float(hp_endpoint(v.base.z, complex(*v.components))[0]))
    raise UnsupportedModelError("boundary_endpoint needs the disk or the half-plane")


def _hp_endpoint_of(v: ModelVector) -> float:
    z, vz = to_half_plane(v.model, v.base.array, v.array)
    return float(hp_endpoint(z, vz)[0])


def _same_endpoint(a: float, b: float, tol: float = 1e-9) -> bool:
    return BoundaryPoint(M.HALF_PLANE, a).separation(BoundaryPoint(M.HALF_PLANE, b)) <= tol


@dataclass(frozen=True)
class AsymptoticResult:
    asymptotic: bool
    sup_distance: float
    exact: bool

    def __bool__(self):
        return self.asymptotic


def asymptotic_test(v: ModelVector, w: ModelVector, T: float = 20.0, samples: int = 64,
                    tol: float = 1e-6) -> AsymptoticResult:
    """Do the rays of v and w stay at bounded distance?

    Exact (endpoint comparison) in hyperbolic charts. Elsewhere a bounded
    horizon heuristic: since t -> d(exp tv, exp tw) is convex, it is bounded
    iff it is non-increasing after its maximum; we check this on [0, T].
    """
    if v.model != w.model:
        raise DomainError("vectors live in different models")
    vu, wu = v.unit(), w.unit()
    if v.model.hyperbolic:
        same = _same_endpoint(_hp_endpoint_of(vu), _hp_endpoint_of(wu))
        return AsymptoticResult(same, 0.0 if same else INF, True)
    ts = np.linspace(0.0, T, samples)
    P = M.exp_array(v.model, np.repeat(vu.base.array[None], samples, 0), ts[:, None] * vu.array[None])
    Q = M.exp_array(w.model, np.repeat(wu.base.array[None], samples, 0), ts[:, None] * wu.array[None])
    d = M.distance_array(v.model, P, Q)
    k = int(np.argmax(d))
    tail = d[k:]
    monotone = bool(np.all(np.diff(tail) <= tol))
    bounded = bool(d[-1] <= d[samples // 2] + tol)
    return AsymptoticResult(monotone and bounded, float(d.max()), False)


def busemann_array(v: ModelVector, X, Y) -> np.ndarray:
    """B_v(x, y) for rows of X and Y."""
    model = v.model
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    u = v.unit()
    if model.tag == "poincare-disk":
        e = boundary_endpoint(u).repr
        zeta = complex(math.cos(e), math.sin(e))

        def h(P):
            a = P[:, 0] + 1j * P[:, 1]
            return 2.0 * np.log(np.abs(a - zeta)) - np.log1p(-np.abs(a) ** 2)
        return h(X) - h(Y)
    if model.hyperbolic:
        xi = _hp_endpoint_of(u)
        zx, _ = to_half_plane(model, X)
        zy, _ = to_half_plane(model, Y)
        return h_value(zx, xi) - h_value(zy, xi)
    if model.tag in ("euclidean", "flat-torus-cover"):
        return (Y - X) @ u.array
    return _busemann_limit(u, X, Y)


LADDER = tuple(16.0 * 2 ** k for k in range(8))


def _richardson(vals):
    """Two Richardson levels on values at t, 2t, 4t, 8t; errors c1/t + c2/t^2."""
    e = [2 * b - a for a, b in zip(vals, vals[1:])]
    f1 = (4 * e[1] - e[0]) / 3
    f2 = (4 * e[2] - e[1]) / 3
    return f1, f2


def _busemann_limit(u: ModelVector, X, Y, t0: float | None = None, tol: float = 1e-6) -> np.ndarray:
    """Defining limit with Richardson extrapolation in 1/t.

    Values are taken on the ladder t = 16 * 2^k. Windows of four
    consecutive times are tried from the far end down: rays ending down in
    the expanding end overflow at large t, nearly critical rays only settle
    late, and the farthest samples of a critical ray lose precision. The
    first window whose two extrapolation levels agree wins. A given ``t0``
    restricts the search to the single window starting there.
    """
    model = u.model
    times = LADDER if t0 is None else tuple(t0 * 2 ** k for k in range(4))
    vals = {}
    for t in times:
        try:
            with np.errstate(all="ignore"):
                g = M.exp_array(model, u.base.array[None], t * u.array[None])
                v = M.distance_array(model, X, g) - M.distance_array(model, g, Y)
        except (NumericError, DomainError, FloatingPointError):
            continue
        if np.all(np.isfinite(v)):
            vals[t] = v
    best = None
    for i in range(len(times) - 4, -1, -1):
        win = times[i:i + 4]
        if not all(t in vals for t in win):
            continue
        f1, f2 = _richardson([vals[t] for t in win])
        gap = float(np.max(np.abs(f1 - f2)))
        if gap <= tol:
            return f2
        if best is None or gap < best[0]:
            best = (gap, f1, f2)
    if best is None:
        raise NumericError("no finite window of ray samples for the Busemann limit")
    gap, f1, f2 = best
    raise NumericError(f"finite-t Busemann values disagree: {f1.tolist()} vs {f2.tolist()}", residual=gap)


def busemann(v: ModelVector, x: ModelPoint, y: ModelPoint) -> float:
    if not (v.model == x.model == y.model):
        raise DomainError("Busemann arguments live in different models")
    if x == y:
        return 0.0
    return float(busemann_array(v, x.array[None], y.array[None])[0])


def busemann_finite_t(v: ModelVector, x: ModelPoint, y: ModelPoint, t: float) -> float:
    """d(x, exp tv) - d(exp tv, y): the defining expression at finite t."""
    g = M.exp_map(v.unit(), t)
    return M.distance(v.model, x, g) - M.distance(v.model, g, y)


def _moebius_to_axis(xi_minus: float, xi_plus: float) -> np.ndarray:
    """Real matrix (det 1) sending xi_minus to 0 and xi_plus to infinity."""
    if math.isinf(xi_plus):
        m = np.array([[1.0, -xi_minus], [0.0, 1.0]])
    elif math.isinf(xi_minus):
        m = np.array([[0.0, -1.0], [1.0, -xi_plus]])
    else:
        s = math.copysign(1.0, xi_minus - xi_plus)
        m = np.array([[s, -s * xi_minus], [1.0, -xi_plus]])
    return m / math.sqrt(abs(np.linalg.det(m)))


def _mob(m, z):
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def _mob_inv(m):
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def distance_to_geodesic(model: ModelId, P, xi_minus: float, xi_plus: float) -> np.ndarray:
    """Distance from points to the geodesic with half-plane endpoints xi_minus, xi_plus."""
    z, _ = to_half_plane(model, P)
    w = _mob(_moebius_to_axis(xi_minus, xi_plus), z)
    return np.arcsinh(np.abs(w.real) / w.imag)


def horosphere_project(v_plus: ModelVector, v_minus: ModelVector) -> ModelVector:
    """Unit vector on the geodesic from endpoint(v_minus) to endpoint(v_plus) at B = 0."""
    if v_plus.base != v_minus.base:
        raise DomainError("both directions must share a base point")
    model = v_plus.model
    if not model.hyperbolic:
        if model.tag == "warped-xy":
            raise VisibilityError(
                "warped-xy lacks strong visibility: geodesics of each type have at most one end "
                "escaping upward, so no geodesic joins two upward escaping directions")
        raise VisibilityError(f"{model} is flat; distinct directions are not joined by a unique geodesic")
    xp = _hp_endpoint_of(v_plus.unit())
    xm = _hp_endpoint_of(v_minus.unit())
    if _same_endpoint(xp, xm):
        raise VisibilityError("the two directions are asymptotic; no connecting geodesic")
    m = _moebius_to_axis(xm, xp)
    z, _ = to_half_plane(model, v_plus.base.array)
    w = _mob(m, z[0])
    qa = 1j * w.imag
    mi = _mob_inv(m)
    q = _mob(mi, qa)
    dq = 1.0 / (mi[1, 0] * qa + mi[1, 1]) ** 2
    vq = dq * (1j * w.imag)
    P, V = from_half_plane(model, np.array([q]), np.array([vq]),
                           ref=None if model.tag != "hyperbolic-polar" else v_plus.base.array[1:2])
    out = ModelVector(ModelPoint(model, tuple(P[0])), tuple(V[0]))
    return out.unit()


# ---------------------------------------------------------------------------
# orbit limits

@dataclass(frozen=True)
class BoundaryLimits:
    x_plus: BoundaryPoint
    x_minus: BoundaryPoint
    separation: float
    spread_plus: float
    spread_minus: float


def _limit_of(points: np.ndarray, window: int, radial_tol: float):
    a = points[:, 0] + 1j * points[:, 1]
    tail = a[-window:]
    if 1.0 - abs(tail[-1]) > radial_tol:
        raise NumericError(f"terminal points do not approach the unit circle (1-|z| = {1 - abs(tail[-1]):.3g})",
                           residual=float(1 - abs(tail[-1])))
    ang = np.unwrap(np.angle(tail))
    return float(ang[-1]) % (2 * math.pi), float(ang.max() - ang.min())


def orbit_boundary_limits(fwd, bwd, window: int = 5, radial_tol: float = 1e-3) -> BoundaryLimits:
    """Limits on the closed disk of the forward and backward half-orbits."""
    for s in (fwd, bwd):
        if s.model.tag != "poincare-disk":
            raise UnsupportedModelError("boundary limits are read in the disk model")
    w = max(1, min(window, len(fwd.points), len(bwd.points)))
    ap, sp = _limit_of(fwd.array, w, radial_tol)
    am, sm = _limit_of(bwd.array, w, radial_tol)
    bp = BoundaryPoint(M.DISK, ap)
    bm = BoundaryPoint(M.DISK, am)
    return BoundaryLimits(bp, bm, bp.separation(bm), sp, sm)
