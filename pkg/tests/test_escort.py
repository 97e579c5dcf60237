import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from escortlab import escort as E
from escortlab import flows as F
from escortlab import models as M
from escortlab.errors import DomainError, FitError, PreconditionError

H, D = M.HALF_PLANE, M.DISK
LN4 = math.log(4)


def four_orbit(n):
    return E.PointSequence.orbit(H, np.stack([np.zeros(n + 1), 4.0 ** np.arange(n + 1)], axis=1))


def disk_d(a, b):
    # independent re-implementation of the disk distance
    a, b = complex(*a), complex(*b)
    return 2 * math.atanh(abs((a - b) / (1 - a.conjugate() * b)))


# point sequences -------------------------------------------------------------

def test_point_sequence_invariants():
    with pytest.raises(DomainError):
        E.PointSequence(H, np.empty((0, 2)), [])
    with pytest.raises(DomainError):
        E.PointSequence(H, [[0, 1], [0, 2]], [0.0, 0.0])
    with pytest.raises(DomainError):
        E.PointSequence.from_points([M.point(H, 0, 1), M.point(D, 0, 0)])
    with pytest.raises(DomainError):
        E.PointSequence(D, [[0, 0], [2, 0]], [0, 1])
    s = E.PointSequence.from_points([M.point(H, 0, 1), M.point(H, 0, 2)])
    assert len(s) == 2 and s.point(1).coords == (0.0, 2.0)


# cones -------------------------------------------------------------------------

def test_cone_trivial_cases():
    x, y = M.point(D, 0.1, 0.2), M.point(D, -0.4, 0.3)
    for eps in (0.0, 0.3, math.inf):
        assert E.cone_contains(x, y, x, eps)
    e = M.EUCLIDEAN2
    assert E.cone_contains(M.point(e, 0, 0), M.point(e, 4, 0), M.point(e, 1, 0), 0.0)
    with pytest.raises(DomainError):
        E.cone_contains(x, y, x, -0.1)


def test_cone_disk_oracle():
    x, y, z = (0.0, 0.0), (0.9, 0.0), (0.0, 0.5)
    eps = 0.2
    want = math.exp(-eps) * disk_d(x, z) + disk_d(z, y) <= disk_d(x, y)
    got = E.cone_contains(M.point(D, *x), M.point(D, *y), M.point(D, *z), eps)
    assert got == want
    margin = E.cone_margin_array(D, np.array([x]), np.array([y]), np.array([z]), eps)[0]
    assert margin == pytest.approx(disk_d(x, y) - math.exp(-eps) * disk_d(x, z) - disk_d(z, y), abs=1e-12)


def test_infinite_cone_is_closed_ball():
    x, y = M.point(H, 0, 1), M.point(H, 1, 2)
    d = M.distance(H, x, y)
    inside = M.exp_map(M.vector(y, 0.3, 0.1).unit(), 0.9 * d)
    outside = M.exp_map(M.vector(y, 0.3, 0.1).unit(), 1.1 * d)
    assert E.cone_contains(x, y, inside, math.inf)
    assert not E.cone_contains(x, y, outside, math.inf)


pts = st.tuples(st.floats(-2, 2), st.floats(0.1, 5))


@settings(max_examples=150)
@given(pts, pts, pts, st.floats(0, 2), st.floats(0, 2))
def test_cone_monotone_in_eps(a, b, c, e1, e2):
    lo, hi = sorted((e1, e2))
    x, y, z = (M.point(H, *p) for p in (a, b, c))
    if E.cone_contains(x, y, z, lo):
        assert E.cone_contains(x, y, z, hi)


def test_chord_gap_examples():
    x, y = M.point(H, 0, 1), M.point(H, 2, 3)
    z = M.geodesic_point(x, y, 0.4 * M.distance(H, x, y))
    lhs, rhs = E.cone_chord_gap(x, y, z, 0.3)
    assert lhs == pytest.approx(0.0, abs=1e-20) and lhs <= rhs
    lhs, rhs = E.cone_chord_gap(x, y, z, 0.0)
    assert rhs == 0.0 and lhs < 1e-20
    with pytest.raises(PreconditionError):
        E.cone_chord_gap(x, y, M.point(H, 5, 0.1), 0.1)


def test_chord_gap_disk_rejection_sampled(rng):
    got = 0
    while got < 1000:
        X, Y, Z = (M.random_points(D, 1, rng)[0] for _ in range(3))
        x, y, z = (M.point(D, *p) for p in (X, Y, Z))
        eps = rng.uniform(0.05, 1.0)
        if not E.cone_contains(x, y, z, eps):
            continue
        lhs, rhs = E.cone_chord_gap(x, y, z, eps)
        assert lhs <= rhs + 1e-9
        got += 1


def test_cone_boundary_euclidean():
    e = M.EUCLIDEAN2
    x, y = M.point(e, 0, 0), M.point(e, 1, 0)
    B = E.cone_boundary(x, y, 0.2, n_angles=90)
    margin = E.cone_margin_array(e, np.repeat(x.array[None], len(B), 0),
                                 np.repeat(y.array[None], len(B), 0), B, 0.2)
    assert np.max(np.abs(margin)) < 1e-9


# rate of escape / alignment -------------------------------------------------------

def test_rate_of_escape_examples():
    R, curve = E.rate_of_escape(four_orbit(50))
    assert R == pytest.approx(LN4, abs=1e-12)
    assert np.allclose(curve, LN4)
    c = E.PointSequence.orbit(H, np.tile([0.0, 1.0], (20, 1)))
    assert E.rate_of_escape(c)[0] == 0.0
    with pytest.raises(DomainError):
        E.rate_of_escape(E.PointSequence.orbit(H, [[0, 1]]))


def test_rate_of_escape_warped():
    n = 10_000
    seq = E.PointSequence.orbit(M.WARPED, np.stack([np.arange(n + 1.0), np.zeros(n + 1)], axis=1))
    R = E.rate_of_escape(seq)[0]
    assert 1.0 <= R <= 1 + (2 * math.log(n) + 1) / n


def test_rate_invariant_under_deck(rng):
    g = M.DeckTransformation.moebius([[2, 1], [1, 1]])
    seq = four_orbit(30)
    moved = E.PointSequence.orbit(H, g.apply_array(seq.array))
    assert E.rate_of_escape(moved)[0] == pytest.approx(E.rate_of_escape(seq)[0], rel=1e-9)


def test_alignment_isometry_orbit():
    rep = E.alignment_statistic(four_orbit(500))
    assert rep.L_hat >= 0.95 * rep.R_hat
    assert rep.admissible_times == sorted(rep.admissible_times)
    assert rep.achieved_eps is not None


def test_alignment_constant_sequence():
    rep = E.alignment_statistic(E.PointSequence.orbit(H, np.tile([0.0, 1.0], (400, 1))))
    assert rep.L_hat == 0.0 and rep.R_hat == 0.0


def test_alignment_spiral_not_aligned():
    # n e^{i ln n}: L/R evaluated at n = 10^4 is 0, far from 1
    n = np.arange(1, 10_001)
    z = n * np.exp(1j * np.log(n))
    rep = E.alignment_statistic(E.PointSequence.orbit(M.EUCLIDEAN2, np.stack([z.real, z.imag], axis=1)))
    assert rep.R_hat > 0.9
    assert rep.L_hat / rep.R_hat < 0.5


def test_alignment_too_short():
    with pytest.raises(DomainError):
        E.alignment_statistic(four_orbit(100))


# fitting --------------------------------------------------------------------------

def test_fit_on_geodesic_orbit():
    seq = four_orbit(400)
    fit = E.fit_escort(seq, E.alignment_statistic(seq))
    assert np.allclose(fit.direction.components, [0.0, 1.0], atol=1e-12)
    assert fit.speed == pytest.approx(LN4, abs=1e-12)
    assert max(r for _, r in fit.residuals) < 1e-9


def test_fit_reproduces_geodesic_direction(rng):
    v = M.vector(M.point(H, 0.3, 0.8), -0.6, 0.2).unit()
    t = np.arange(600) * 0.7
    P = M.exp_array(H, np.repeat(v.base.array[None], len(t), 0), t[:, None] * v.array[None])
    seq = E.PointSequence(H, P, t)
    fit = E.fit_escort(seq, E.alignment_statistic(seq))
    assert abs(fit.direction.inner(v) - 1) < 1e-6


def test_fit_zero_speed():
    seq = E.PointSequence.orbit(H, np.tile([0.0, 1.0], (400, 1)))
    fit = E.fit_escort(seq, E.alignment_statistic(seq))
    assert fit.speed == 0.0 and fit.direction.norm == 0.0


def test_fit_without_admissible_times():
    seq = four_orbit(400)
    rep = E.alignment_statistic(seq)
    rep.admissible_times = []
    with pytest.raises(FitError):
        E.fit_escort(seq, rep)


def test_fit_magnetic_far_residual():
    tr = F.magnetic_trajectory(F.magnetic_start(2.0), 200.0, 0.005, frame_only=True)
    seq = E.PointSequence(H, tr.frame_points, tr.times)
    rep = E.alignment_statistic(seq)
    fit = E.fit_escort(seq, rep)
    assert fit.far_residual < 2 * E.f_eps(rep.achieved_eps)
    assert fit.speed == pytest.approx(math.sqrt(3), rel=0.01)


# semicontraction ---------------------------------------------------------------

def test_semicontraction_examples():
    ok, worst = E.semicontraction_check(four_orbit(60), 500)
    assert ok and worst <= 1e-9
    z = [0.0 + 0j]
    for _ in range(60):
        z.append(z[-1] / 2 + 0.1)
    seq = E.PointSequence.orbit(M.EUCLIDEAN2, np.stack([np.real(z), np.imag(z)], axis=1) + [[0, 0]])
    assert E.semicontraction_check(seq, 500)[0]
    arr = np.stack([np.arange(60.0), np.zeros(60)], axis=1)
    arr[30] = [30.0, 25.0]
    ok, worst = E.semicontraction_check(E.PointSequence.orbit(M.EUCLIDEAN2, arr), 5000)
    assert not ok and worst > 0


# csv ---------------------------------------------------------------------------------

def test_csv_roundtrip_bit_exact(tmp_path, rng):
    P = M.random_points(H, 50, rng)
    seq = E.PointSequence(H, P, np.cumsum(rng.uniform(0.1, 1, 50)))
    path = str(tmp_path / "orbit.csv")
    E.write_csv(seq, path)
    back = E.read_csv(path)
    assert back.model == H
    assert np.array_equal(back.array, seq.array) and np.array_equal(back.times, seq.times)
    with open(path) as fh:
        assert fh.readline().strip() == "t,c1,c2"
