import math
import warnings

import numpy as np
import pytest

from escortlab import boundary as B
from escortlab import ergodic as E
from escortlab import escort
from escortlab import models as M
from escortlab.errors import DomainError, NumericError

LN4 = math.log(4)
DIAG4 = [[2.0, 0.0], [0.0, 0.5]]


def axis_generator(n_seeds=4):
    # seeds on the imaginary axis, all following z -> 4z
    seeds = [1j * 2.0 ** k for k in range(n_seeds)]
    return E.OrbitGenerator(step=lambda z: 4 * z, embed=lambda z: M.ModelPoint(M.HALF_PLANE, (z.real, z.imag)),
                            seeds=seeds, model=M.HALF_PLANE)


def test_birkhoff_constant_observable():
    curves = E.birkhoff_average(axis_generator(), lambda z: 2.5, 30)
    assert all(np.allclose(c, 2.5) for c in curves)


def test_birkhoff_busemann_increment_telescopes():
    up = M.vector(M.point(M.HALF_PLANE, 0, 1), 0, 1)
    gen = E.OrbitGenerator(step=lambda z: 4 * z, embed=None, seeds=[1j])

    def g(z):
        return B.busemann(up, M.point(M.HALF_PLANE, z.real, z.imag),
                          M.point(M.HALF_PLANE, (4 * z).real, (4 * z).imag))
    (curve,) = E.birkhoff_average(gen, g, 40)
    assert np.allclose(curve, LN4, atol=1e-12)


def test_birkhoff_torus_displacement():
    gen = E.translation_generator((0.3, 0.1), [(0.0, 0.0), (0.5, 0.2)], M.TORUS2)
    curves = E.birkhoff_average(gen, lambda p: 0.3, 10)
    assert np.allclose(curves, 0.3)
    a = np.array([0.3, 0.1])
    disp = E.birkhoff_average(gen, lambda p: float((np.asarray(p) + a - np.asarray(p))[0]), 50)
    assert np.allclose(disp, 0.3, atol=1e-15)


def test_birkhoff_errors():
    with pytest.raises(DomainError):
        E.birkhoff_average(axis_generator(), lambda z: 1.0, 0)

    def bad(z):
        if abs(z) > 100:
            raise ValueError("undefined")
        return 1.0
    with pytest.raises(NumericError, match="step"):
        E.birkhoff_average(axis_generator(1), bad, 10)


def test_kingman_axis_orbits():
    k = E.kingman_rate(axis_generator(), 60)
    assert np.allclose(k.per_seed_R, LN4, atol=1e-12)
    assert k.ensemble_mean == pytest.approx(LN4, abs=1e-12)
    assert k.subadditivity_violation <= 1e-9


def test_kingman_identity_map():
    gen = E.constant_generator([(0.0, 1.0), (1.0, 2.0)])
    k = E.kingman_rate(gen, 20)
    assert k.per_seed_R == [0.0, 0.0] and all(c == 0 for c in k.cesaro_curve)


def test_kingman_matches_rate_of_escape():
    gen = E.moebius_generator([[1.3, 0.4], [0.2, 0.8307692307692308]], n_seeds=3, rng_seed=5)
    k = E.kingman_rate(gen, 40)
    for seed, R in zip(gen.seeds, k.per_seed_R):
        assert R == pytest.approx(escort.rate_of_escape(gen.orbit(seed, 40))[0], abs=1e-12)


def test_kingman_random_products_common_drift():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        k1 = E.kingman_rate(E.random_product_generator(n_seeds=64, rng_seed=1, n_max=2010), 2000)
        # oracle: an independent ensemble at twice the length
        k2 = E.kingman_rate(E.random_product_generator(n_seeds=64, rng_seed=2, n_max=4010), 4000)
    assert k1.ensemble_mean > 0
    assert abs(k1.ensemble_mean - k2.ensemble_mean) <= 0.02 * k2.ensemble_mean
    assert np.std(k1.per_seed_R) < 0.05 * k1.ensemble_mean
    assert k1.stationarity_violation < 1e-9


def test_stationarity_violation_warns():
    # a "shift" that is not the dynamics behind the sequence
    gen = axis_generator(2)
    gen.shift = lambda z: 3 * z + 1
    with pytest.warns(UserWarning, match="stationarity"):
        E.kingman_rate(gen, 30)


def test_kingman_estimate_invariants():
    with pytest.raises(DomainError):
        E.KingmanEstimate([-1.0], 0.0, [0.0])


def test_ensemble_isometry_orbits_fully_aligned():
    gen = E.moebius_generator(DIAG4, n_seeds=8, rng_seed=3)
    res = E.alignment_ensemble_check(gen, 400, 0.1)
    assert res.fraction == 1.0 and res.failing() == []


def test_ensemble_constant_orbits_vacuous():
    res = E.alignment_ensemble_check(E.constant_generator([(0.0, 1.0)] * 3), 400, 0.1)
    assert res.fraction == 1.0 and res.escaping == []


def test_ensemble_seed_diameter():
    # seeds i, 2i, 4i, 8i: the widest pair is ln 8 apart
    res = E.alignment_ensemble_check(axis_generator(), 400, 0.1)
    assert res.seed_diameter == pytest.approx(math.log(8), abs=1e-12)


def test_random_product_fraction_does_not_drop_when_n_doubles():
    gen = E.random_product_generator(n_seeds=12, rng_seed=5, n_max=4010)
    f2000 = E.alignment_ensemble_check(gen, 2000, 0.1).fraction
    f4000 = E.alignment_ensemble_check(gen, 4000, 0.1).fraction
    assert f2000 >= 0.9
    assert f4000 >= f2000


def test_ensemble_delta_range():
    with pytest.raises(DomainError):
        E.alignment_ensemble_check(axis_generator(), 400, 1.5)


def test_thread_count(monkeypatch):
    monkeypatch.setenv("ESCORTLAB_THREADS", "3")
    assert E.thread_count() == 3
    monkeypatch.setenv("ESCORTLAB_THREADS", "zero")
    with pytest.raises(DomainError):
        E.thread_count()


def test_parallel_results_in_seed_order(monkeypatch):
    gen = E.moebius_generator([[1.3, 0.4], [0.2, 0.8307692307692308]], n_seeds=6, rng_seed=9)
    serial = [s.array.copy() for s in gen.orbits(30)]
    monkeypatch.setenv("ESCORTLAB_THREADS", "4")
    par = [s.array for s in gen.orbits(30)]
    assert all(np.array_equal(a, b) for a, b in zip(serial, par))


def test_random_products_are_right_products():
    gen = E.random_product_generator(n_seeds=1, rng_seed=4, n_max=10)
    s = gen.seeds[0]
    seq = gen.orbit(s, 5)
    mats = E.RANDOM_PAIR
    prod = np.eye(2)
    for k in range(5):
        prod = prod @ mats[s.word[k]]
    z = (prod[0, 0] * 1j + prod[0, 1]) / (prod[1, 0] * 1j + prod[1, 1])
    assert np.allclose(seq.array[5], [z.real, z.imag], rtol=1e-12)
