"""Model geometries: charts of Hadamard manifolds and their deck groups.

Every chart exposes vectorized ``dist``, ``exp``, ``log``, ``metric`` and
``christoffel`` on arrays of shape (N, dim). The public functions wrap
them for single ``ModelPoint`` / ``ModelVector`` values.

Hyperbolic charts (disk, half-plane, Fermi, polar) share closed forms.
The warped plane uses the Clairaut quadrature in ``_warped``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _warped
from .errors import DomainError, LiftError, NumericError, UnsupportedModelError

TAGS = ("euclidean", "flat-torus-cover", "poincare-disk", "upper-half-plane",
        "warped-xy", "fermi-strip", "hyperbolic-polar")
HYPERBOLIC = ("poincare-disk", "upper-half-plane", "fermi-strip", "hyperbolic-polar")


@dataclass(frozen=True)
class ModelId:
    tag: str
    dim: int = 2

    def __post_init__(self):
        if self.tag not in TAGS:
            raise DomainError(f"unknown model tag {self.tag!r}")
        if self.tag not in ("euclidean", "flat-torus-cover") and self.dim != 2:
            raise DomainError(f"{self.tag} is two-dimensional")
        if self.dim < 1:
            raise DomainError("dimension must be positive")

    @classmethod
    def parse(cls, text: str) -> "ModelId":
        text = text.strip()
        m = re.fullmatch(r"([a-z\-]+)(?:\((\d+)\))?", text)
        if not m:
            raise DomainError(f"cannot parse model {text!r}")
        tag, dim = m.group(1), m.group(2)
        return cls(tag, int(dim) if dim else 2)

    def __str__(self):
        if self.tag in ("euclidean", "flat-torus-cover"):
            return f"{self.tag}({self.dim})"
        return self.tag

    @property
    def hyperbolic(self) -> bool:
        return self.tag in HYPERBOLIC


EUCLIDEAN2 = ModelId("euclidean", 2)
TORUS2 = ModelId("flat-torus-cover", 2)
DISK = ModelId("poincare-disk")
HALF_PLANE = ModelId("upper-half-plane")
WARPED = ModelId("warped-xy")
FERMI = ModelId("fermi-strip")
POLAR = ModelId("hyperbolic-polar")


def _as_model(model) -> ModelId:
    if isinstance(model, ModelId):
        return model
    return ModelId.parse(str(model))


# ---------------------------------------------------------------------------
# complex helpers for the hyperbolic plane

def hp_dist(z, w):
    """Half-plane distance, written to avoid overflow and cancellation."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    num = np.hypot(z.real - w.real, z.imag - w.imag)
    return 2.0 * np.arcsinh(num / (2.0 * np.sqrt(z.imag) * np.sqrt(w.imag)))


def hp_exp(z, v):
    """exp in the half-plane; v is the Euclidean velocity as a complex number."""
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    x, y = z.real, z.imag
    speed = np.abs(v) / y
    psi = np.angle(v)
    phi = 0.5 * (psi - 0.5 * np.pi)
    c, s = np.cos(phi), np.sin(phi)
    h = 0.5 * speed
    # K(i e^{2h}) with numerator and denominator divided by e^{h}
    eh, emh = np.exp(h), np.exp(-h)
    k = (c * 1j * eh + s * emh) / (-s * 1j * eh + c * emh)
    out = x + y * k
    return np.where(speed == 0, z, out)


def hp_log(z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    x, y = z.real, z.imag
    wp = (w - x) / y
    d = hp_dist(1j, wp)
    zeta = (wp - 1j) / (wp + 1j)
    mag = np.abs(zeta)
    unit = np.where(mag > 0, zeta / np.where(mag > 0, mag, 1.0), 0.0)
    return d * y * 1j * unit


def disk_dist(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    num = np.abs(a - b)
    den = np.sqrt((1.0 - np.abs(a) ** 2) * (1.0 - np.abs(b) ** 2))
    return 2.0 * np.arcsinh(num / den)


def disk_exp(a, v):
    a = np.asarray(a, dtype=complex)
    v = np.asarray(v, dtype=complex)
    u = v / (1.0 - np.abs(a) ** 2)
    mag = np.abs(u)
    w0 = np.where(mag > 0, np.tanh(mag) * u / np.where(mag > 0, mag, 1.0), 0.0)
    return (w0 + a) / (1.0 + np.conj(a) * w0)


def disk_log(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    wp = (b - a) / (1.0 - np.conj(a) * b)
    mag = np.abs(wp)
    u = np.where(mag > 0, np.arctanh(np.minimum(mag, 1.0 - 1e-17)) * wp / np.where(mag > 0, mag, 1.0), 0.0)
    return u * (1.0 - np.abs(a) ** 2)


def disk_to_hp(a):
    a = np.asarray(a, dtype=complex)
    return 1j * (1.0 + a) / (1.0 - a)


def hp_to_disk(z):
    z = np.asarray(z, dtype=complex)
    return (z - 1j) / (z + 1j)


def disk_to_hp_vec(a, v):
    return np.asarray(v) * 2j / (1.0 - np.asarray(a)) ** 2


def hp_to_disk_vec(z, v):
    return np.asarray(v) * 2j / (np.asarray(z) + 1j) ** 2


def _c(P):
    P = np.asarray(P, dtype=float)
    return P[:, 0] + 1j * P[:, 1]


def _r(z):
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=1)


# ---------------------------------------------------------------------------
# charts

class _Chart:
    model: ModelId

    def contains(self, P):
        return np.all(np.isfinite(P), axis=1)

    def check(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[1] != self.model.dim:
            raise DomainError(f"{self.model} expects {self.model.dim} coordinates")
        ok = self.contains(P)
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise DomainError(f"point {P[bad].tolist()} lies outside the {self.model} domain")
        return P


class _Euclid(_Chart):
    def __init__(self, model):
        self.model = model

    def dist(self, P, Q):
        return np.linalg.norm(Q - P, axis=1)

    def exp(self, P, V):
        return P + V

    def log(self, P, Q):
        return Q - P

    def metric(self, P):
        n, d = P.shape
        return np.broadcast_to(np.eye(d), (n, d, d)).copy()

    def christoffel(self, P):
        n, d = P.shape
        return np.zeros((n, d, d, d))


class _HalfPlane(_Chart):
    model = HALF_PLANE

    def contains(self, P):
        return super().contains(P) & (P[:, 1] > 0)

    def dist(self, P, Q):
        return hp_dist(_c(P), _c(Q))

    def exp(self, P, V):
        return _r(hp_exp(_c(P), _c(V)))

    def log(self, P, Q):
        return _r(hp_log(_c(P), _c(Q)))

    def metric(self, P):
        g = 1.0 / P[:, 1] ** 2
        return g[:, None, None] * np.eye(2)[None]

    def christoffel(self, P):
        # conformal factor e^{2f}, f = -ln y
        return _conformal_christoffel(np.zeros(len(P)), -1.0 / P[:, 1])


class _Disk(_Chart):
    model = DISK

    def contains(self, P):
        return super().contains(P) & (P[:, 0] ** 2 + P[:, 1] ** 2 < 1.0)

    def dist(self, P, Q):
        return disk_dist(_c(P), _c(Q))

    def exp(self, P, V):
        return _r(disk_exp(_c(P), _c(V)))

    def log(self, P, Q):
        return _r(disk_log(_c(P), _c(Q)))

    def metric(self, P):
        g = 4.0 / (1.0 - P[:, 0] ** 2 - P[:, 1] ** 2) ** 2
        return g[:, None, None] * np.eye(2)[None]

    def christoffel(self, P):
        den = 1.0 - P[:, 0] ** 2 - P[:, 1] ** 2
        return _conformal_christoffel(2 * P[:, 0] / den, 2 * P[:, 1] / den)


def _conformal_christoffel(fx, fy):
    # Gamma^k_ij = d_ik f_j + d_jk f_i - d_ij f_k for metric e^{2f} delta
    n = len(fx)
    grad = np.stack([fx, fy], axis=1)
    G = np.zeros((n, 2, 2, 2))
    eye = np.eye(2)
    for k in range(2):
        for i in range(2):
            for j in range(2):
                G[:, k, i, j] = eye[i, k] * grad[:, j] + eye[j, k] * grad[:, i] - eye[i, j] * grad[:, k]
    return G


class _Fermi(_Chart):
    """Fermi coordinates (x, r) about the imaginary axis of the half-plane."""

    model = FERMI

    @staticmethod
    def to_hp(P):
        x, r = P[:, 0], P[:, 1]
        return np.exp(x) * (np.tanh(r) + 1j / np.cosh(r))

    @staticmethod
    def from_hp(z):
        x = np.log(np.abs(z))
        r = np.arcsinh(z.real / z.imag)
        return np.stack([x, r], axis=1)

    def dist(self, P, Q):
        dxh = 0.5 * (Q[:, 0] - P[:, 0])
        drh = 0.5 * (Q[:, 1] - P[:, 1])
        s2 = np.cosh(P[:, 1]) * np.cosh(Q[:, 1]) * np.sinh(dxh) ** 2 + np.sinh(drh) ** 2
        return 2.0 * np.arcsinh(np.sqrt(s2))

    def _push(self, P, V):
        z = self.to_hp(P)
        return z * (V[:, 0] - 1j * V[:, 1] / np.cosh(P[:, 1]))

    def _pull(self, P, dz):
        z = self.to_hp(P)
        q = dz / z
        return np.stack([q.real, -np.cosh(P[:, 1]) * q.imag], axis=1)

    def exp(self, P, V):
        return self.from_hp(hp_exp(self.to_hp(P), self._push(P, V)))

    def log(self, P, Q):
        return self._pull(P, hp_log(self.to_hp(P), self.to_hp(Q)))

    def metric(self, P):
        n = len(P)
        g = np.zeros((n, 2, 2))
        g[:, 0, 0] = np.cosh(P[:, 1]) ** 2
        g[:, 1, 1] = 1.0
        return g

    def christoffel(self, P):
        r = P[:, 1]
        G = np.zeros((len(P), 2, 2, 2))
        G[:, 0, 0, 1] = G[:, 0, 1, 0] = np.tanh(r)
        G[:, 1, 0, 0] = -np.cosh(r) * np.sinh(r)
        return G


class _Polar(_Chart):
    """Geodesic polar coordinates (r, theta) about the disk origin."""

    model = POLAR

    def contains(self, P):
        return super().contains(P) & (P[:, 0] > 0)

    @staticmethod
    def to_disk(P):
        return np.tanh(0.5 * P[:, 0]) * np.exp(1j * P[:, 1])

    @staticmethod
    def from_disk(a, theta_ref):
        r = 2.0 * np.arctanh(np.abs(a))
        th = np.angle(a)
        # keep theta on the branch nearest the reference angle
        th = th + 2 * np.pi * np.round((theta_ref - th) / (2 * np.pi))
        return np.stack([r, th], axis=1)

    def dist(self, P, Q):
        drh = 0.5 * (Q[:, 0] - P[:, 0])
        s2 = np.sinh(drh) ** 2 + np.sinh(P[:, 0]) * np.sinh(Q[:, 0]) * np.sin(0.5 * (Q[:, 1] - P[:, 1])) ** 2
        return 2.0 * np.arcsinh(np.sqrt(s2))

    def _push(self, P, V):
        r, th = P[:, 0], P[:, 1]
        return np.exp(1j * th) * (0.5 / np.cosh(0.5 * r) ** 2 * V[:, 0] + 1j * np.tanh(0.5 * r) * V[:, 1])

    def _pull(self, P, da):
        r, th = P[:, 0], P[:, 1]
        q = da * np.exp(-1j * th)
        return np.stack([2.0 * np.cosh(0.5 * r) ** 2 * q.real, q.imag / np.tanh(0.5 * r)], axis=1)

    def exp(self, P, V):
        return self.from_disk(disk_exp(self.to_disk(P), self._push(P, V)), P[:, 1])

    def log(self, P, Q):
        return self._pull(P, disk_log(self.to_disk(P), self.to_disk(Q)))

    def metric(self, P):
        n = len(P)
        g = np.zeros((n, 2, 2))
        g[:, 0, 0] = 1.0
        g[:, 1, 1] = np.sinh(P[:, 0]) ** 2
        return g

    def christoffel(self, P):
        r = P[:, 0]
        G = np.zeros((len(P), 2, 2, 2))
        G[:, 0, 1, 1] = -np.sinh(r) * np.cosh(r)
        G[:, 1, 0, 1] = G[:, 1, 1, 0] = 1.0 / np.tanh(r)
        return G


class _Warped(_Chart):
    model = WARPED

    def dist(self, P, Q):
        return _warped.distance(P, Q)

    def exp(self, P, V):
        return _warped.exp(P, V)

    def log(self, P, Q):
        return _warped.log(P, Q)

    def metric(self, P):
        n = len(P)
        g = np.zeros((n, 2, 2))
        g[:, 0, 0] = _warped.w_of(P[:, 1]) ** 2
        g[:, 1, 1] = 1.0
        return g

    def christoffel(self, P):
        y = P[:, 1]
        e = np.exp(-y)
        w = 1.0 + e
        G = np.zeros((len(P), 2, 2, 2))
        G[:, 0, 0, 1] = G[:, 0, 1, 0] = -e / w
        G[:, 1, 0, 0] = w * e
        return G


_FIXED = {"upper-half-plane": _HalfPlane(), "poincare-disk": _Disk(), "fermi-strip": _Fermi(),
          "hyperbolic-polar": _Polar(), "warped-xy": _Warped()}


def chart(model) -> _Chart:
    model = _as_model(model)
    if model.tag in _FIXED:
        return _FIXED[model.tag]
    return _Euclid(model)


# ---------------------------------------------------------------------------
# public types

@dataclass(frozen=True)
class ModelPoint:
    model: ModelId
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "model", _as_model(self.model))
        c = tuple(float(v) for v in np.ravel(self.coords))
        object.__setattr__(self, "coords", c)
        chart(self.model).check(np.array([c]))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)

    @classmethod
    def from_complex(cls, model, z: complex) -> "ModelPoint":
        return cls(model, (z.real, z.imag))

    @property
    def z(self) -> complex:
        return complex(self.coords[0], self.coords[1])


@dataclass(frozen=True)
class ModelVector:
    base: ModelPoint
    components: tuple
    norm: float = field(init=False)

    def __post_init__(self):
        c = tuple(float(v) for v in np.ravel(self.components))
        if len(c) != self.base.model.dim:
            raise DomainError("vector dimension does not match its base")
        object.__setattr__(self, "components", c)
        g = chart(self.base.model).metric(self.base.array[None])[0]
        v = np.array(c)
        object.__setattr__(self, "norm", float(np.sqrt(max(v @ g @ v, 0.0))))

    @property
    def model(self) -> ModelId:
        return self.base.model

    @property
    def array(self) -> np.ndarray:
        return np.array(self.components)

    def scaled(self, s: float) -> "ModelVector":
        return ModelVector(self.base, tuple(s * self.array))

    def unit(self) -> "ModelVector":
        if self.norm == 0:
            raise DomainError("zero vector has no direction")
        return self.scaled(1.0 / self.norm)

    def inner(self, other: "ModelVector") -> float:
        if other.base != self.base:
            raise DomainError("vectors have different base points")
        g = chart(self.model).metric(self.base.array[None])[0]
        return float(self.array @ g @ other.array)


def point(model, *coords) -> ModelPoint:
    return ModelPoint(_as_model(model), coords)


def vector(p: ModelPoint, *components) -> ModelVector:
    return ModelVector(p, components)


def _same(p: ModelPoint, q: ModelPoint):
    if p.model != q.model:
        raise DomainError(f"model mismatch: {p.model} vs {q.model}")


# ---------------------------------------------------------------------------
# operations

def distance_array(model, P, Q) -> np.ndarray:
    """Distances between rows of P and Q (broadcast when one has a single row)."""
    ch = chart(model)
    P = ch.check(P)
    Q = ch.check(Q)
    if len(P) == 1 and len(Q) > 1:
        P = np.repeat(P, len(Q), axis=0)
    if len(Q) == 1 and len(P) > 1:
        Q = np.repeat(Q, len(P), axis=0)
    return ch.dist(P, Q)


def distance(model, p: ModelPoint, q: ModelPoint) -> float:
    model = _as_model(model)
    if p.model != model or q.model != model:
        raise DomainError("points do not belong to the requested model")
    return float(distance_array(model, p.array[None], q.array[None])[0])


def exp_array(model, P, V) -> np.ndarray:
    ch = chart(model)
    P = ch.check(P)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    out = ch.exp(P, V)
    if not np.all(np.isfinite(out)):
        raise NumericError("exponential map produced non-finite coordinates")
    return out


def log_array(model, P, Q) -> np.ndarray:
    ch = chart(model)
    P = ch.check(P)
    Q = ch.check(Q)
    if len(P) == 1 and len(Q) > 1:
        P = np.repeat(P, len(Q), axis=0)
    return ch.log(P, Q)


def exp_map(v: ModelVector, t: float = 1.0) -> ModelPoint:
    out = exp_array(v.model, v.base.array[None], t * v.array[None])[0]
    return ModelPoint(v.model, tuple(out))


def log_map(p: ModelPoint, q: ModelPoint) -> ModelVector:
    _same(p, q)
    if p == q:
        return ModelVector(p, (0.0,) * p.model.dim)
    return ModelVector(p, tuple(log_array(p.model, p.array[None], q.array[None])[0]))


def geodesic_point(p: ModelPoint, q: ModelPoint, s: float) -> ModelPoint:
    _same(p, q)
    d = distance(p.model, p, q)
    if s < -1e-12 or s > d * (1 + 1e-12) + 1e-12:
        raise DomainError(f"arclength {s} outside [0, {d}]")
    if d == 0:
        return p
    v = log_map(p, q)
    return exp_map(v, s / d)


def geodesic_points_array(model, P, Q, frac) -> np.ndarray:
    """Points at fraction ``frac`` of the way along the segments P->Q."""
    V = log_array(model, P, Q)
    frac = np.broadcast_to(np.asarray(frac, dtype=float), (len(V),))
    return exp_array(model, P, V * frac[:, None])


@dataclass(frozen=True)
class GeodesicSegment:
    model: ModelId
    p: ModelPoint
    q: ModelPoint

    @property
    def length(self) -> float:
        return distance(self.model, self.p, self.q)

    def at(self, s: float) -> ModelPoint:
        return geodesic_point(self.p, self.q, s)


# ---------------------------------------------------------------------------
# deck transformations

DECK_KINDS = ("lattice-translation", "moebius", "x-shift")


@dataclass(frozen=True)
class DeckTransformation:
    kind: str
    data: tuple
    model: ModelId

    def __post_init__(self):
        object.__setattr__(self, "model", _as_model(self.model))
        if self.kind not in DECK_KINDS:
            raise DomainError(f"unknown deck kind {self.kind!r}")
        if self.kind == "lattice-translation":
            if self.model.tag not in ("euclidean", "flat-torus-cover"):
                raise DomainError("lattice translations act on flat models")
            vec = tuple(int(v) for v in self.data)
            if len(vec) != self.model.dim or any(v != float(u) for v, u in zip(vec, self.data)):
                raise DomainError("lattice translation needs an integer vector of the model dimension")
            object.__setattr__(self, "data", vec)
        elif self.kind == "moebius":
            if self.model.tag not in ("upper-half-plane", "poincare-disk"):
                raise DomainError("Moebius deck maps act on the half-plane or the disk")
            m = np.asarray(self.data, dtype=float).reshape(2, 2)
            det = float(np.linalg.det(m))
            if abs(det - 1.0) > 1e-9:
                raise DomainError(f"Moebius matrix must have determinant 1, got {det}")
            object.__setattr__(self, "data", tuple(float(v) for v in m.ravel()))
        else:
            if self.model.tag not in ("warped-xy", "fermi-strip", "euclidean", "flat-torus-cover"):
                raise DomainError("x-shifts act on warped-xy, fermi-strip or flat models")
            object.__setattr__(self, "data", (float(np.ravel(self.data)[0]),))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.data).reshape(2, 2)

    @classmethod
    def lattice(cls, model, *vec):
        return cls("lattice-translation", tuple(vec), _as_model(model))

    @classmethod
    def moebius(cls, matrix, model=HALF_PLANE):
        return cls("moebius", tuple(np.ravel(matrix)), _as_model(model))

    @classmethod
    def xshift(cls, t, model=WARPED):
        return cls("x-shift", (t,), _as_model(model))

    def compose(self, other: "DeckTransformation") -> "DeckTransformation":
        """self after other."""
        if other.kind != self.kind or other.model != self.model:
            raise DomainError("can only compose deck maps of the same kind and model")
        if self.kind == "lattice-translation":
            return DeckTransformation(self.kind, tuple(a + b for a, b in zip(self.data, other.data)), self.model)
        if self.kind == "moebius":
            return DeckTransformation(self.kind, tuple((self.matrix @ other.matrix).ravel()), self.model)
        return DeckTransformation(self.kind, (self.data[0] + other.data[0],), self.model)

    def inverse(self) -> "DeckTransformation":
        if self.kind == "lattice-translation":
            return DeckTransformation(self.kind, tuple(-a for a in self.data), self.model)
        if self.kind == "moebius":
            a, b, c, d = self.data
            return DeckTransformation(self.kind, (d, -b, -c, a), self.model)
        return DeckTransformation(self.kind, (-self.data[0],), self.model)

    def identity(self) -> "DeckTransformation":
        if self.kind == "lattice-translation":
            return DeckTransformation(self.kind, (0,) * self.model.dim, self.model)
        if self.kind == "moebius":
            return DeckTransformation(self.kind, (1.0, 0.0, 0.0, 1.0), self.model)
        return DeckTransformation(self.kind, (0.0,), self.model)

    def power(self, k: int) -> "DeckTransformation":
        g = self.identity()
        base = self if k >= 0 else self.inverse()
        for _ in range(abs(k)):
            g = base.compose(g)
        return g

    def apply_array(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.kind == "lattice-translation":
            return P + np.array(self.data, dtype=float)[None]
        if self.kind == "x-shift":
            out = P.copy()
            out[:, 0] += self.data[0]
            return out
        a, b, c, d = self.data
        if self.model.tag == "upper-half-plane":
            z = _c(P)
            return _r((a * z + b) / (c * z + d))
        z = disk_to_hp(_c(P))
        return _r(hp_to_disk((a * z + b) / (c * z + d)))

    def apply_vector_array(self, P, V) -> np.ndarray:
        """Differential of the deck map at rows of P applied to V."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if self.kind != "moebius":
            return V.copy()
        a, b, c, d = self.data
        if self.model.tag == "upper-half-plane":
            z = _c(P)
            return _r(_c(V) / (c * z + d) ** 2)
        w = _c(P)
        z = disk_to_hp(w)
        vz = disk_to_hp_vec(w, _c(V))
        gz = (a * z + b) / (c * z + d)
        vg = vz / (c * z + d) ** 2
        return _r(hp_to_disk_vec(gz, vg))


def deck_apply(g: DeckTransformation, p: ModelPoint) -> ModelPoint:
    if g.model != p.model:
        raise DomainError(f"deck map acts on {g.model}, point lives in {p.model}")
    return ModelPoint(p.model, tuple(g.apply_array(p.array[None])[0]))


def deck_apply_vector(g: DeckTransformation, v: ModelVector) -> ModelVector:
    base = deck_apply(g, v.base)
    comp = g.apply_vector_array(v.base.array[None], v.array[None])[0]
    return ModelVector(base, tuple(comp))


# ---------------------------------------------------------------------------
# lifting

@dataclass
class Cover:
    """A cover together with generators of its deck group."""

    model: ModelId
    generators: Sequence[DeckTransformation]

    def __post_init__(self):
        self.model = _as_model(self.model)
        for g in self.generators:
            if g.model != self.model:
                raise DomainError("generator acts on a different model")


@dataclass
class LiftedOrbit:
    points: np.ndarray
    deck_word: list
    deck: DeckTransformation | None


def lift_orbit(cover: Cover, base_orbit, step_bound: float) -> LiftedOrbit:
    """Lift a base orbit (given by fundamental-domain representatives) by path continuation.

    At each step the next representative is moved by the current deck
    element times one of {identity, generators, inverses}; the candidate
    closest to the current lift wins. A step longer than ``step_bound`` or
    a second candidate within the bound makes the continuation ambiguous.
    The accumulated word lists (generator index, +1/-1) letters.
    """
    base = np.atleast_2d(np.asarray(base_orbit, dtype=float))
    model = cover.model
    ch = chart(model)
    base = ch.check(base)
    gens = list(cover.generators)
    single = [((i, s),) for i in range(len(gens)) for s in (1, -1)]
    depth = max(2, model.dim) if gens and gens[0].kind == "lattice-translation" else 2
    words = [()] + single
    frontier = single
    for _ in range(depth - 1):
        frontier = [w + l for w in frontier for l in single if l[0][0] != w[-1][0]]
        words += frontier
    if gens:
        current = gens[0].identity()
    else:
        current = None
    lifted = [base[0].copy()]
    word = []
    for k in range(1, len(base)):
        prev = lifted[-1]
        cands = []
        for wd in words:
            g = current
            for idx, sgn in wd:
                g = g.compose(gens[idx] if sgn == 1 else gens[idx].inverse())
            img = base[k:k + 1] if g is None else g.apply_array(base[k:k + 1])
            d = float(ch.dist(prev[None], img)[0])
            cands.append((d, wd, None, g, img[0]))
        cands.sort(key=lambda c: c[0])
        best = cands[0]
        if best[0] > step_bound:
            raise LiftError(f"step {k} moves {best[0]:.6g} > bound {step_bound}", index=k)
        for other in cands[1:]:
            if other[0] > step_bound:
                break
            if other[3] != best[3]:
                raise LiftError(f"ambiguous continuation at step {k}: two lifts within the bound", index=k)
        word.extend(best[1])
        current = best[3]
        lifted.append(best[4])
    return LiftedOrbit(np.array(lifted), word, current)


# ---------------------------------------------------------------------------
# curves

def covariant_acceleration(model, samples, dt: float, width: int = 2) -> np.ndarray:
    """D/dt of the velocity of a uniformly sampled curve.

    Derivatives use centered finite differences of half-width ``width``
    (2 gives the five-point stencil); the end samples fall back to
    one-sided second-order formulas.
    """
    model = _as_model(model)
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(X) < 5:
        raise DomainError("covariant acceleration needs at least 5 samples")
    if width not in (1, 2):
        raise DomainError("stencil half-width must be 1 or 2")
    if width == 2:
        d1 = np.gradient(X, dt, axis=0, edge_order=2)
        d2 = np.gradient(d1, dt, axis=0, edge_order=2)
        c1 = (X[:-4] - 8 * X[1:-3] + 8 * X[3:-1] - X[4:]) / (12 * dt)
        c2 = (-X[:-4] + 16 * X[1:-3] - 30 * X[2:-2] + 16 * X[3:-1] - X[4:]) / (12 * dt * dt)
        d1[2:-2] = c1
        d2[2:-2] = c2
    else:
        d1 = np.gradient(X, dt, axis=0, edge_order=2)
        d2 = np.gradient(d1, dt, axis=0, edge_order=2)
        d2[1:-1] = (X[2:] - 2 * X[1:-1] + X[:-2]) / (dt * dt)
    G = chart(model).christoffel(X)
    return d2 + np.einsum("nkij,ni,nj->nk", G, d1, d1)


def velocity(samples, dt: float) -> np.ndarray:
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    return np.gradient(X, dt, axis=0, edge_order=2)


def metric_array(model, P) -> np.ndarray:
    ch = chart(model)
    return ch.metric(ch.check(P))


def norm_array(model, P, V) -> np.ndarray:
    V = np.atleast_2d(V)
    if _as_model(model) == HALF_PLANE:
        # |v| / y without squaring y, which overflows far out
        return np.hypot(V[:, 0], V[:, 1]) / np.atleast_2d(P)[:, 1]
    g = metric_array(model, P)
    return np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", V, g, V), 0.0))


def rotate_left(model, P, V) -> np.ndarray:
    """Rotate tangent vectors by +90 degrees in the metric (the complex structure i)."""
    g = metric_array(model, P)
    # for orthogonal metrics J(v) = (-sqrt(g22/g11) v2, sqrt(g11/g22) v1)
    g11, g22, g12 = g[:, 0, 0], g[:, 1, 1], g[:, 0, 1]
    if np.any(np.abs(g12) > 0):
        raise UnsupportedModelError("rotation implemented for orthogonal charts")
    V = np.atleast_2d(V)
    return np.stack([-np.sqrt(g22 / g11) * V[:, 1], np.sqrt(g11 / g22) * V[:, 0]], axis=1)


def random_points(model, n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Points spread over a bounded region of the chart, for property tests."""
    model = _as_model(model)
    tag = model.tag
    if tag in ("euclidean", "flat-torus-cover"):
        return rng.uniform(-2 * scale, 2 * scale, (n, model.dim))
    if tag == "poincare-disk":
        r = np.tanh(rng.uniform(0, 2.0 * scale, n) / 2)
        th = rng.uniform(0, 2 * np.pi, n)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    if tag == "upper-half-plane":
        return np.stack([rng.uniform(-2 * scale, 2 * scale, n), np.exp(rng.uniform(-1.5 * scale, 1.5 * scale, n))], axis=1)
    if tag == "warped-xy":
        return rng.uniform(-2 * scale, 2 * scale, (n, 2))
    if tag == "fermi-strip":
        return rng.uniform(-1.5 * scale, 1.5 * scale, (n, 2))
    return np.stack([rng.uniform(0.2, 2.5 * scale, n), rng.uniform(-np.pi, np.pi, n)], axis=1)

