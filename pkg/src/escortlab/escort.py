"""Cones, alignment, rate of escape and geodesic-escort fitting.

All analysis consumes a ``PointSequence``: points of a lifted orbit with
time stamps. For map orbits the stamps are the iterate indices; for
sampled flows they are the sample times, and every "divide by n" below
divides by elapsed time instead.
"""

from __future__ import annotations

import csv
import configparser
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import models as M
from .errors import DomainError, FitError, PreconditionError
from .models import ModelId, ModelPoint, ModelVector

EPS_GRID = (0.5, 0.2, 0.1, 0.05, 0.02)
K_GRID = (10, 30, 100, 300)


def f_eps(eps: float) -> float:
    """Chord bound factor: d(alpha(d_k), x_k) <= f(eps) d_k inside eps-cones."""
    return 2.0 * math.sqrt(1.0 - math.exp(-2.0 * eps))


@dataclass(frozen=True, eq=False)
class PointSequence:
    model: ModelId
    array: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        model = M._as_model(self.model)
        object.__setattr__(self, "model", model)
        arr = np.atleast_2d(np.asarray(self.array, dtype=float))
        if arr.size == 0:
            raise DomainError("a point sequence must be nonempty")
        M.chart(model).check(arr)
        t = np.asarray(self.times, dtype=float).ravel()
        if len(t) != len(arr):
            raise DomainError("times and points differ in length")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        arr.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "array", arr)
        object.__setattr__(self, "times", t)

    @classmethod
    def from_points(cls, points, times=None) -> "PointSequence":
        points = list(points)
        if not points:
            raise DomainError("a point sequence must be nonempty")
        model = points[0].model
        if any(p.model != model for p in points):
            raise DomainError("all points must share the model")
        arr = np.array([p.coords for p in points])
        if times is None:
            times = np.arange(len(points), dtype=float)
        return cls(model, arr, times)

    @classmethod
    def orbit(cls, model, array) -> "PointSequence":
        arr = np.atleast_2d(np.asarray(array, dtype=float))
        return cls(model, arr, np.arange(len(arr), dtype=float))

    def __len__(self):
        return len(self.array)

    def point(self, k: int) -> ModelPoint:
        return ModelPoint(self.model, tuple(self.array[k]))

    @property
    def points(self) -> list:
        return [self.point(k) for k in range(len(self))]

    def subsequence(self, idx) -> "PointSequence":
        idx = np.asarray(idx)
        return PointSequence(self.model, self.array[idx], self.times[idx])


# ---------------------------------------------------------------------------
# cones

def cone_contains(x: ModelPoint, y: ModelPoint, z: ModelPoint, eps: float) -> bool:
    """Exact test of e^{-eps} d(x,z) + d(z,y) <= d(x,y)."""
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if not (x.model == y.model == z.model):
        raise DomainError("cone arguments live in different models")
    m = x.model
    if math.isinf(eps):
        return M.distance(m, z, y) <= M.distance(m, x, y)
    return math.exp(-eps) * M.distance(m, x, z) + M.distance(m, z, y) <= M.distance(m, x, y)


def cone_margin_array(model, X, Y, Z, eps: float) -> np.ndarray:
    """d(x,y) - e^{-eps} d(x,z) - d(z,y); nonnegative inside the cone."""
    dxy = M.distance_array(model, X, Y)
    return dxy - math.exp(-eps) * M.distance_array(model, X, Z) - M.distance_array(model, Z, Y)


def cone_chord_gap(x: ModelPoint, y: ModelPoint, z: ModelPoint, eps: float, tol: float = 1e-12):
    """(d(z,w)^2, 4(1-e^{-2eps}) d(x,z)^2) with w at distance d(x,z) along [x,y]."""
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    m = x.model
    dxy = M.distance(m, x, y)
    dxz = M.distance(m, x, z)
    if math.exp(-eps) * dxz + M.distance(m, z, y) > dxy + tol:
        raise PreconditionError("z is not in the eps-cone [x,y]_eps")
    w = M.geodesic_point(x, y, min(dxz, dxy))
    lhs = M.distance(m, z, w) ** 2
    rhs = 4.0 * (1.0 - math.exp(-2.0 * eps)) * dxz ** 2
    return lhs, rhs


def cone_chord_gap_array(model, X, Y, Z):
    """Vectorized chord gap with eps taken as the smallest one admitting z."""
    dxy = M.distance_array(model, X, Y)
    dxz = M.distance_array(model, X, Z)
    dzy = M.distance_array(model, Z, Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(dxz > 0, -np.log(np.clip((dxy - dzy) / dxz, 1e-300, 1.0)), 0.0)
    frac = np.where(dxy > 0, np.minimum(dxz, dxy) / np.where(dxy > 0, dxy, 1.0), 0.0)
    W = M.geodesic_points_array(model, X, Y, frac)
    lhs = M.distance_array(model, Z, W) ** 2
    rhs = 4.0 * (1.0 - np.exp(-2.0 * eps)) * dxz ** 2
    return lhs, rhs, eps


def cone_boundary(x: ModelPoint, y: ModelPoint, eps: float, n_angles: int = 360) -> np.ndarray:
    """Boundary of [x,y]_eps traced along geodesic rays from the midpoint.

    The cone is a sublevel set of a convex function, hence star-shaped about
    the midpoint, which lies inside for every eps >= 0.
    """
    model = x.model
    if eps <= 0:
        raise DomainError("the boundary is traced for eps > 0")
    dxy = M.distance(model, x, y)
    mid = M.geodesic_point(x, y, 0.5 * dxy)
    th = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    base = np.repeat(mid.array[None], n_angles, 0)
    g = M.metric_array(model, mid.array[None])[0]
    dirs = np.stack([np.cos(th) / math.sqrt(g[0, 0]), np.sin(th) / math.sqrt(g[1, 1])], axis=1)
    X = np.repeat(x.array[None], n_angles, 0)
    Y = np.repeat(y.array[None], n_angles, 0)
    lo = np.zeros(n_angles)
    hi = np.full(n_angles, dxy)
    for _ in range(60):
        s = 0.5 * (lo + hi)
        Z = M.exp_array(model, base, dirs * s[:, None])
        inside = cone_margin_array(model, X, Y, Z, eps) >= 0
        lo = np.where(inside, s, lo)
        hi = np.where(inside, hi, s)
    return M.exp_array(model, base, dirs * lo[:, None])


# ---------------------------------------------------------------------------
# escape and alignment

def rate_of_escape(seq: PointSequence):
    """Terminal value and curve of d(x_0, x_n) / (t_n - t_0)."""
    if len(seq) < 2:
        raise DomainError("rate of escape needs at least two points")
    d = M.distance_array(seq.model, seq.array[:1], seq.array[1:])
    curve = d / (seq.times[1:] - seq.times[0])
    return float(curve[-1]), curve


@dataclass
class AlignmentReport:
    R_hat: float
    L_hat: float
    admissible_times: list
    epsilon_grid: tuple
    K_grid: tuple
    achieved_eps: float | None = None
    achieved_K: int | None = None
    achieved_n: int | None = None
    L_by_K: dict = field(default_factory=dict)
    evaluated: np.ndarray | None = None

    def __post_init__(self):
        if self.L_hat < 0:
            raise DomainError("L_hat is clipped at 0")
        if any(b <= a for a, b in zip(self.admissible_times, self.admissible_times[1:])):
            raise DomainError("admissible times must increase")

    def summary(self) -> dict:
        return {"R_hat": self.R_hat, "L_hat": self.L_hat, "eps": self.achieved_eps,
                "K": self.achieved_K, "n": self.achieved_n,
                "n_admissible": len(self.admissible_times)}


def _budget(model: ModelId) -> int:
    return 40_000 if model.tag == "warped-xy" else 20_000_000


def _evaluation_indices(n_total: int, K_min: int, budget: int) -> np.ndarray:
    """Sample indices for the pair computations, thinned to fit the budget."""
    stride = 1
    while (n_total / stride) * (n_total / (2 * stride)) > budget:
        stride += 1
    idx = np.arange(0, n_total, stride)
    return np.unique(np.concatenate([idx, [n_total - 1], np.arange(0, min(n_total, K_min + 1))[: 1]]))


def alignment_statistic(seq: PointSequence, K_grid=K_GRID, eps_grid=EPS_GRID,
                        budget: int | None = None) -> AlignmentReport:
    """Finite-horizon version of L = lim_K limsup_n min_{K<=k<=n} (d_{0n} - d_{nk}) / k.

    The limsup over n is read on the tail window n >= N/2: near n = K the
    min collapses to d_{0K}/K and would make every sequence look aligned.
    """
    K_grid = tuple(int(k) for k in K_grid)
    N = len(seq)
    if N < max(K_grid) + 2:
        raise DomainError(f"sequence of length {N} too short for K up to {max(K_grid)}")
    R_hat, _ = rate_of_escape(seq)
    model = seq.model
    idx = _evaluation_indices(N, min(K_grid), budget or _budget(model))
    sub = seq.array[idx]
    t = seq.times[idx] - seq.times[0]
    d0 = M.distance_array(model, sub[:1], sub)
    d0[0] = 0.0
    tail = np.flatnonzero(idx >= max((N - 1) // 2, 1))
    K_time = {K: seq.times[min(K, N - 1)] - seq.times[0] for K in K_grid}
    L_by_K = {K: 0.0 for K in K_grid}
    best = (0.0, None, None)
    # records of n -> d_{0n} - e^{-eps/2} R t_n for every eps
    records = {}
    for eps in eps_grid:
        g = d0 - math.exp(-eps / 2) * R_hat * t
        run = np.maximum.accumulate(np.concatenate([[-np.inf], g[:-1]]))
        records[eps] = set(np.flatnonzero((g > run) & (t > 0)).tolist())
    cone_ok = {}
    kmin_pos = np.searchsorted(t, min(K_time.values()))
    for j in tail:
        if t[j] <= 0:
            continue
        ks = np.arange(kmin_pos, j + 1)
        if ks.size == 0:
            continue
        dnk = M.distance_array(model, sub[j:j + 1], sub[ks])
        dnk[ks == j] = 0.0
        ratio = (d0[j] - dnk) / t[ks]
        suffix_min = np.minimum.accumulate(ratio[::-1])[::-1]
        for K in K_grid:
            pos = np.searchsorted(t[ks], K_time[K])
            if pos >= ks.size or t[j] <= K_time[K]:
                continue
            val = max(float(suffix_min[pos]), 0.0)
            if val > L_by_K[K]:
                L_by_K[K] = val
            if val > best[0]:
                best = (val, K, int(idx[j]))
        if R_hat <= 0:
            continue
        margin = d0[j] - np.exp(-np.array(eps_grid))[:, None] * d0[ks][None, :] - dnk[None, :]
        for e_i, eps in enumerate(eps_grid):
            if j not in records[eps]:
                continue
            bad = margin[e_i] < -1e-12
            for K in K_grid:
                pos = np.searchsorted(t[ks], K_time[K])
                if pos < ks.size and not np.any(bad[pos:]):
                    cone_ok.setdefault((eps, K), []).append(int(idx[j]))
    L_hat = max(L_by_K.values()) if L_by_K else 0.0
    achieved_eps = achieved_K = None
    admissible = []
    for eps in sorted(eps_grid):
        for K in sorted(K_grid):
            if cone_ok.get((eps, K)):
                achieved_eps, achieved_K = eps, K
                admissible = sorted(cone_ok[(eps, K)])
                break
        if achieved_eps is not None:
            break
    return AlignmentReport(R_hat=R_hat, L_hat=float(L_hat), admissible_times=admissible,
                           epsilon_grid=tuple(eps_grid), K_grid=K_grid, achieved_eps=achieved_eps,
                           achieved_K=achieved_K, achieved_n=best[2], L_by_K=L_by_K, evaluated=idx)


# ---------------------------------------------------------------------------
# escort fitting

@dataclass
class EscortFit:
    direction: ModelVector
    speed: float
    residuals: list
    cauchy_gap: float
    anchor: ModelPoint | None = None
    eps: float | None = None
    K: int | None = None
    n_star: int | None = None

    def __post_init__(self):
        if self.speed > 0 and abs(self.direction.norm - 1.0) > 1e-9:
            raise DomainError("escort direction must be a unit vector")
        if self.speed == 0 and self.direction.norm != 0:
            raise DomainError("a speed-zero escort has the zero direction")
        if any(r < 0 for _, r in self.residuals):
            raise DomainError("residuals are nonnegative")

    @property
    def far_residual(self) -> float:
        return self.residuals[-1][1] if self.residuals else 0.0

    def point_at(self, s: float) -> ModelPoint:
        return M.exp_map(self.direction, s)


def fit_escort(seq: PointSequence, report: AlignmentReport, max_residuals: int | None = None,
               gap_points: int = 128) -> EscortFit:
    model = seq.model
    x0 = seq.point(0)
    zero = ModelVector(x0, (0.0,) * model.dim)
    if report.R_hat <= 0:
        return EscortFit(zero, 0.0, [], 0.0)
    if not report.admissible_times:
        raise FitError("no admissible times found; use a longer orbit or coarser grids")
    adm = np.array(report.admissible_times)
    n_star = int(adm[-1])
    v = M.log_map(x0, seq.point(n_star))
    direction = v.unit()
    # alpha_n(1) for admissible n, thinned to the latest gap_points
    use = adm[-gap_points:]
    U = M.log_array(model, seq.array[:1], seq.array[use])
    norms = M.norm_array(model, np.repeat(seq.array[:1], len(use), 0), U)
    A1 = M.exp_array(model, np.repeat(seq.array[:1], len(use), 0), U / norms[:, None])
    if len(use) > 1:
        ii, jj = np.triu_indices(len(use), 1)
        gap = float(np.max(M.distance_array(model, A1[ii], A1[jj])))
    else:
        gap = 0.0
    first = int(adm[0])
    ks = np.arange(first, len(seq))
    if max_residuals is None:
        max_residuals = 400 if model.tag == "warped-xy" else 20_000
    if ks.size > max_residuals:
        ks = np.unique(np.concatenate([np.linspace(first, len(seq) - 1, max_residuals).astype(int), [len(seq) - 1]]))
    dk = M.distance_array(model, seq.array[:1], seq.array[ks])
    keep = dk > 0
    ks, dk = ks[keep], dk[keep]
    B = np.repeat(seq.array[:1], len(ks), 0)
    alpha = M.exp_array(model, B, dk[:, None] * direction.array[None])
    res = M.distance_array(model, seq.array[ks], alpha) / dk
    residuals = [(int(k), float(r)) for k, r in zip(ks, res)]
    return EscortFit(direction, report.R_hat, residuals, gap, anchor=seq.point(n_star),
                     eps=report.achieved_eps, K=report.achieved_K, n_star=n_star)


def semicontraction_check(seq: PointSequence, samples: int = 1000, rng_seed: int = 0, tol: float = 1e-9):
    """Test d(x_{m+k}, x_{n+k}) <= d(x_m, x_n) on random (k, m, n)."""
    N = len(seq)
    if N < 3:
        raise DomainError("need at least three points")
    rng = np.random.default_rng(rng_seed)
    k = rng.integers(1, N - 1, samples)
    m = rng.integers(0, N - k)
    n = rng.integers(0, N - k)
    lhs = M.distance_array(seq.model, seq.array[m + k], seq.array[n + k])
    rhs = M.distance_array(seq.model, seq.array[m], seq.array[n])
    worst = float(np.max(lhs - rhs))
    return worst <= tol, max(worst, 0.0)


# ---------------------------------------------------------------------------
# CSV

def write_csv(seq: PointSequence, path: str) -> None:
    """Write ``t,c1,c2,...`` rows plus a sidecar ``.cfg`` declaring the model."""
    dim = seq.array.shape[1]
    tmp = path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t"] + [f"c{i + 1}" for i in range(dim)])
        for t, row in zip(seq.times, seq.array):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    os.replace(tmp, path)
    cfg = configparser.ConfigParser()
    cfg["sequence"] = {"model": str(seq.model), "rows": str(len(seq))}
    with open(path + ".cfg.tmp", "w", encoding="utf-8") as fh:
        cfg.write(fh)
    os.replace(path + ".cfg.tmp", path + ".cfg")


def read_csv(path: str, model=None) -> PointSequence:
    if model is None:
        cfg = configparser.ConfigParser()
        if not cfg.read(path + ".cfg"):
            raise DomainError(f"no model given and no sidecar {path}.cfg")
        model = cfg["sequence"]["model"]
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise DomainError("CSV must start with a t,c1,... header")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if data.size == 0:
        raise DomainError("CSV holds no samples")
    return PointSequence(model, data[:, 1:], data[:, 0])
