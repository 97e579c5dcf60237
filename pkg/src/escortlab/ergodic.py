"""Birkhoff and Kingman-style averages over finite seed ensembles."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import models as M
from .errors import DomainError, NumericError
from .escort import AlignmentReport, PointSequence, alignment_statistic, rate_of_escape


def thread_count() -> int:
    """Worker cap from ESCORTLAB_THREADS (default 1, i.e. serial)."""
    raw = os.environ.get("ESCORTLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"ESCORTLAB_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def _map_seeds(fn, items):
    """Apply fn per seed, possibly concurrently; results stay in seed order."""
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class OrbitGenerator:
    step: Callable[[Any], Any]
    embed: Callable[[Any], M.ModelPoint]
    seeds: list
    rng_seed: int = 0
    model: M.ModelId | None = None
    # measure-preserving map behind the sequence; the orbit step by default
    shift: Callable[[Any], Any] | None = None

    def orbit(self, seed: Any, n: int) -> PointSequence:
        """Embedded orbit x_0..x_n of one seed state."""
        pts = []
        s = seed
        for k in range(n + 1):
            try:
                pts.append(self.embed(s).coords)
            except Exception as exc:  # embed failures carry the index
                raise NumericError(f"embedding failed at step {k}: {exc}") from exc
            if k < n:
                s = self.step(s)
        model = self.model or self.embed(seed).model
        return PointSequence.orbit(model, np.array(pts))

    def orbits(self, n: int) -> list:
        return _map_seeds(lambda s: self.orbit(s, n), self.seeds)


@dataclass
class KingmanEstimate:
    per_seed_R: list
    ensemble_mean: float
    cesaro_curve: list
    tail_slopes: list = field(default_factory=list)
    subadditivity_violation: float = 0.0
    stationarity_violation: float = 0.0

    def __post_init__(self):
        if any(r < 0 for r in self.per_seed_R):
            raise DomainError("per-seed rates are nonnegative")
        if any(c < 0 for c in self.cesaro_curve):
            raise DomainError("the Cesaro curve is nonnegative")


def birkhoff_average(gen: OrbitGenerator, observable: Callable[[Any], float], n: int) -> list:
    """Per-seed partial means (1/k) sum_{j<k} g(f^j x), k = 1..n."""
    if n < 1:
        raise DomainError("n must be at least 1")

    def one(seed):
        vals = np.empty(n)
        s = seed
        for k in range(n):
            try:
                vals[k] = float(observable(s))
            except Exception as exc:
                raise NumericError(f"observable undefined at step {k}: {exc}") from exc
            s = gen.step(s)
        return np.cumsum(vals) / np.arange(1, n + 1)

    return _map_seeds(one, gen.seeds)


def _tail_slope(d: np.ndarray) -> float:
    n = len(d) - 1
    k = np.arange(n // 2, n + 1, dtype=float)
    slope = np.polyfit(k, d[n // 2:], 1)[0]
    return float(slope)


def kingman_rate(gen: OrbitGenerator, n: int, checks: int = 200, tol: float = 1e-9) -> KingmanEstimate:
    """Rate of escape per seed, ensemble Cesaro curve and hypothesis spot checks."""
    if n < 2:
        raise DomainError("n must be at least 2")
    rng = np.random.default_rng(gen.rng_seed)
    seqs = gen.orbits(n)
    rates, dists, slopes = [], [], []
    for seq in seqs:
        R, _ = rate_of_escape(seq)
        d = np.concatenate([[0.0], M.distance_array(seq.model, seq.array[:1], seq.array[1:])])
        rates.append(R)
        dists.append(d)
        slopes.append(max(_tail_slope(d), 0.0))
    mean_d = np.mean(dists, axis=0)
    cesaro = (mean_d[1:] / np.arange(1, n + 1)).tolist()
    # subadditivity on random l < m < n
    sub = 0.0
    for seq in seqs[: min(len(seqs), 8)]:
        lmn = np.sort(rng.choice(n + 1, size=(checks, 3), replace=True), axis=1)
        A = seq.array
        lhs = M.distance_array(seq.model, A[lmn[:, 0]], A[lmn[:, 2]])
        rhs = (M.distance_array(seq.model, A[lmn[:, 0]], A[lmn[:, 1]])
               + M.distance_array(seq.model, A[lmn[:, 1]], A[lmn[:, 2]]))
        sub = max(sub, float(np.max(lhs - rhs)))
    # stationarity: a_x(m+1, n+1) against a_{f x}(m, n)
    stat = 0.0
    for seed, seq in list(zip(gen.seeds, seqs))[:2]:
        shifted = gen.orbit((gen.shift or gen.step)(seed), n - 1)
        mn = np.sort(rng.integers(0, n, size=(checks, 2)), axis=1)
        a1 = M.distance_array(seq.model, seq.array[mn[:, 0] + 1], seq.array[mn[:, 1] + 1])
        a2 = M.distance_array(seq.model, shifted.array[mn[:, 0]], shifted.array[mn[:, 1]])
        stat = max(stat, float(np.max(np.abs(a1 - a2) / (1.0 + a1))))
    if sub > tol:
        warnings.warn(f"subadditivity violated by {sub:.3g}")
    if stat > 1e-6:
        warnings.warn(f"stationarity violated by {stat:.3g} (relative)")
    return KingmanEstimate(rates, float(np.mean(rates)), cesaro, slopes, max(sub, 0.0), stat)


@dataclass
class EnsembleAlignment:
    fraction: float
    reports: list
    escaping: list
    delta: float
    # largest distance between starting points; stands in for the support of mu
    seed_diameter: float = 0.0

    def failing(self) -> list:
        return [i for i in self.escaping
                if self.reports[i].L_hat < (1 - self.delta) * self.reports[i].R_hat]


def alignment_ensemble_check(gen: OrbitGenerator, n: int, delta: float,
                             min_rate: float = 1e-9) -> EnsembleAlignment:
    """Fraction of escaping seeds with L_hat >= (1 - delta) R_hat.

    Seeds with R_hat <= min_rate do not escape linearly and leave the
    denominator; an ensemble with none left reports the vacuous fraction 1.
    """
    if not 0 <= delta < 1:
        raise DomainError("delta must lie in [0, 1)")
    seqs = gen.orbits(n)
    reports: list[AlignmentReport] = _map_seeds(alignment_statistic, seqs)
    escaping = [i for i, r in enumerate(reports) if r.R_hat > min_rate]
    X0 = np.array([q.array[0] for q in seqs])
    i, j = np.triu_indices(len(X0), 1)
    diam = float(np.max(M.distance_array(gen.model, X0[i], X0[j]))) if len(i) else 0.0
    if not escaping:
        return EnsembleAlignment(1.0, reports, [], delta, diam)
    good = sum(1 for i in escaping if reports[i].L_hat >= (1 - delta) * reports[i].R_hat)
    return EnsembleAlignment(good / len(escaping), reports, escaping, delta, diam)


# ---------------------------------------------------------------------------
# stock generators

def _mob(m, z):
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def moebius_generator(matrix, n_seeds: int = 16, rng_seed: int = 0, spread: float = 1.0) -> OrbitGenerator:
    """Orbits of a single Moebius map of the half-plane from random starts."""
    m = np.asarray(matrix, dtype=float)
    rng = np.random.default_rng(rng_seed)
    seeds = [complex(rng.normal(0, spread), np.exp(rng.normal(0, spread))) for _ in range(n_seeds)]
    return OrbitGenerator(step=lambda z: complex(_mob(m, z)),
                          embed=lambda z: M.ModelPoint(M.HALF_PLANE, (z.real, z.imag)),
                          seeds=seeds, rng_seed=rng_seed, model=M.HALF_PLANE)


# Two hyperbolic maps sharing the fixed point at infinity: z -> 1.2 z and
# z -> 1.15 z + 1. Products escape to infinity, where double precision keeps
# relative accuracy; products converging to a finite boundary point would
# not be resolvable beyond a few dozen steps.
RANDOM_PAIR = (np.array([[1.2, 0.0], [0.0, 1.0]]), np.array([[1.15, 1.0], [0.0, 1.0]]))


@dataclass(frozen=True)
class ProductState:
    """Right product g_{w_0} ... g_{w_{k-1}} and the symbol sequence w."""
    matrix: tuple
    word: tuple
    k: int
    start: complex


def random_product_generator(matrices=RANDOM_PAIR, n_seeds: int = 64, rng_seed: int = 0,
                             n_max: int = 8192, weights=None) -> OrbitGenerator:
    """i.i.d. products of Moebius maps as a skew product over the Bernoulli shift.

    The state is a point of the shift space together with the partial product;
    the embedded sequence is x_n = g_{w_0} ... g_{w_{n-1}} x_0, whose distances
    form a stationary subadditive process.
    """
    mats = [np.asarray(g, dtype=float) for g in matrices]
    rng = np.random.default_rng(rng_seed)
    p = None if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)
    seeds = []
    for _ in range(n_seeds):
        word = tuple(int(w) for w in rng.choice(len(mats), size=n_max, p=p))
        seeds.append(ProductState(((1.0, 0.0), (0.0, 1.0)), word, 0, 1j))

    def step(s: ProductState) -> ProductState:
        if s.k >= len(s.word):
            raise DomainError("symbol sequence exhausted; raise n_max")
        prod = np.asarray(s.matrix) @ mats[s.word[s.k]]
        prod = prod / np.sqrt(abs(np.linalg.det(prod)))
        return ProductState(tuple(map(tuple, prod)), s.word, s.k + 1, s.start)

    def embed(s: ProductState) -> M.ModelPoint:
        z = complex(_mob(np.asarray(s.matrix), s.start))
        return M.ModelPoint(M.HALF_PLANE, (z.real, z.imag))

    def shift(s: ProductState) -> ProductState:
        return ProductState(((1.0, 0.0), (0.0, 1.0)), s.word[s.k + 1:], 0, s.start)

    return OrbitGenerator(step=step, embed=embed, seeds=seeds, rng_seed=rng_seed,
                          model=M.HALF_PLANE, shift=shift)


def translation_generator(a, seeds, model=M.EUCLIDEAN2) -> OrbitGenerator:
    """Lifted torus rotation p -> p + a on the universal cover."""
    a = np.asarray(a, dtype=float)
    return OrbitGenerator(step=lambda p: tuple(np.asarray(p) + a),
                          embed=lambda p: M.ModelPoint(model, tuple(p)),
                          seeds=[tuple(map(float, s)) for s in seeds], model=model)


def constant_generator(points, model=M.HALF_PLANE) -> OrbitGenerator:
    return OrbitGenerator(step=lambda p: p, embed=lambda p: M.ModelPoint(model, tuple(p)),
                          seeds=[tuple(map(float, p)) for p in points], model=model)
