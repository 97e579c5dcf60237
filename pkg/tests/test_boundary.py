import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from escortlab import models as M
from escortlab import boundary as B
from escortlab import flows as F
from escortlab.errors import DomainError, UnsupportedModelError, VisibilityError
from escortlab.escort import PointSequence
from escortlab.suite import _aim

H, D = M.HALF_PLANE, M.DISK


def vec(model, p, u):
    return M.vector(M.point(model, *p), *u)


# --- endpoints ---------------------------------------------------------------

def test_endpoint_examples():
    assert B.boundary_endpoint(vec(D, (0, 0), (1, 0))).repr == pytest.approx(0.0, abs=1e-15)
    assert math.isinf(B.boundary_endpoint(vec(H, (0, 1), (0, 1))).repr)
    assert B.boundary_endpoint(vec(D, (0.5, 0), (1, 0))).repr == pytest.approx(0.0, abs=1e-15)
    e = B.boundary_endpoint(vec(D, (0, 0), (0, 1)))
    assert e.repr == pytest.approx(math.pi / 2)
    with pytest.raises(UnsupportedModelError):
        B.boundary_endpoint(vec(M.EUCLIDEAN2, (0, 0), (1, 0)))


def test_boundary_point_separation():
    a = B.BoundaryPoint(H, 0.0)
    b = B.BoundaryPoint(H, math.inf)
    assert a.separation(b) == pytest.approx(math.pi)
    assert B.BoundaryPoint(D, 2 * math.pi + 0.1).repr == pytest.approx(0.1)


def test_asymptotic_examples():
    up = vec(H, (0, 1), (0, 1))
    assert B.asymptotic_test(up, vec(H, (3, 0.2), (0, 5)))
    assert not B.asymptotic_test(up, vec(H, (0, 1), (0, -1)))
    # euclidean parallel rays are asymptotic, diverging ones are not
    e = M.EUCLIDEAN2
    assert B.asymptotic_test(vec(e, (0, 0), (1, 0)), vec(e, (0, 3), (2, 0)))
    assert not B.asymptotic_test(vec(e, (0, 0), (1, 0)), vec(e, (0, 0), (0, 1)))


# --- Busemann ----------------------------------------------------------------

def test_busemann_vertical_examples():
    up = vec(H, (0, 1), (0, 1))
    for a in (0.5, 2.0, 5.0):
        assert B.busemann(up, M.point(H, 0, 1), M.point(H, 0, a)) == pytest.approx(math.log(a), abs=1e-12)
    x = M.point(H, 0.3, 2.0)
    assert B.busemann(up, x, x) == 0.0


def _poisson(a, xi):
    return (1 - abs(a) ** 2) / abs(xi - a) ** 2


def test_busemann_disk_poisson_oracle(rng):
    # B_v(x, y) = log P(y, xi) - log P(x, xi), with P the Poisson kernel
    for _ in range(50):
        p = M.random_points(D, 3, rng)
        u = rng.normal(size=2)
        v = M.vector(M.point(D, *p[0]), *u).unit()
        xi = np.exp(1j * B.boundary_endpoint(v).repr)
        x, y = complex(*p[1]), complex(*p[2])
        want = math.log(_poisson(y, xi)) - math.log(_poisson(x, xi))
        got = B.busemann(v, M.point(D, *p[1]), M.point(D, *p[2]))
        assert got == pytest.approx(want, abs=1e-9)


def test_busemann_euclidean():
    v = vec(M.EUCLIDEAN2, (5, 5), (3, 4))
    got = B.busemann(v, M.point(M.EUCLIDEAN2, 0, 0), M.point(M.EUCLIDEAN2, 1, 2))
    assert got == pytest.approx((3 + 8) / 5, abs=1e-12)


def test_busemann_finite_t_converges():
    v = vec(H, (0.2, 1.3), (1, 0.4)).unit()
    x, y = M.point(H, -1, 0.5), M.point(H, 2, 3)
    lim = B.busemann(v, x, y)
    assert B.busemann_finite_t(v, x, y, 25.0) == pytest.approx(lim, abs=1e-9)


hp_pt = st.tuples(st.floats(-3, 3), st.floats(0.1, 4))
angle = st.floats(0, 2 * math.pi)


@settings(max_examples=60, deadline=None)
@given(hp_pt, angle, hp_pt, hp_pt, hp_pt)
def test_busemann_lipschitz_and_cocycle(b, th, p, q, r):
    v = M.vector(M.point(H, *b), math.cos(th), math.sin(th)).unit()
    P, Q, R = (M.point(H, *t) for t in (p, q, r))
    bpq, bqr, bpr = B.busemann(v, P, Q), B.busemann(v, Q, R), B.busemann(v, P, R)
    assert abs(bpq) <= M.distance(H, P, Q) + 1e-9
    assert abs(bpq + bqr - bpr) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(hp_pt, angle, hp_pt, hp_pt, hp_pt)
def test_busemann_asymptotic_vectors_agree(b, th, q, x, y):
    v = M.vector(M.point(H, *b), math.cos(th), math.sin(th)).unit()
    w = _aim(M.point(H, *q), v)
    assert B.asymptotic_test(v, w)
    X, Y = M.point(H, *x), M.point(H, *y)
    assert B.busemann(v, X, Y) == pytest.approx(B.busemann(w, X, Y), abs=1e-9)


def test_warped_vertical_ray():
    up = vec(M.WARPED, (0, 0), (0, 1))
    o = M.point(M.WARPED, 0, 0)
    assert B.busemann(up, o, M.point(M.WARPED, 0, 1.5)) == pytest.approx(1.5, abs=1e-6)
    assert B.busemann(up, o, M.point(M.WARPED, 1, 0)) == pytest.approx(0.0, abs=1e-6)


def test_warped_busemann_bounds():
    v = vec(M.WARPED, (0, 0), (0.25, math.sqrt(0.75)))
    o, y = M.point(M.WARPED, 0, 0), M.point(M.WARPED, 1, 0)
    b = B.busemann(v, o, y)
    assert abs(b) <= M.distance(M.WARPED, o, y) + 1e-6


def test_busemann_query_requires_unit():
    with pytest.raises(DomainError):
        B.BusemannQuery(vec(H, (0, 1), (0, 2)), M.point(H, 0, 1), M.point(H, 0, 2))
    q = B.BusemannQuery(vec(H, (0, 1), (0, 1)), M.point(H, 0, 1), M.point(H, 0, 2))
    assert q.evaluate() == pytest.approx(math.log(2))


# --- horosphere projection ---------------------------------------------------

def test_horosphere_project_axis():
    up, down = vec(H, (0, 1), (0, 1)), vec(H, (0, 1), (0, -1))
    phi = B.horosphere_project(up, down)
    assert np.allclose(phi.base.array, [0, 1], atol=1e-14)
    assert np.allclose(phi.array, [0, 1], atol=1e-14)


def test_horosphere_project_off_axis():
    # base 1+i; plus toward infinity, minus toward 0: lands at i on the imaginary axis
    p = M.point(H, 1, 1)
    up = M.vector(p, 0, 1)
    to0 = M.vector(p, *M.log_map(p, M.point(H, 1e-9, 1e-9)).components).unit()
    assert B.boundary_endpoint(to0).repr == pytest.approx(0.0, abs=1e-6)
    to0 = _aim(p, vec(H, (0, 1), (0, -1)))
    phi = B.horosphere_project(up, to0)
    assert np.allclose(phi.base.array, [0, 1], atol=1e-12)
    assert np.allclose(phi.unit().array, [0, 1], atol=1e-12)


def test_horosphere_project_disk_root_find():
    o = M.point(D, 0, 0)
    vp, vm = M.vector(o, 1, 0), M.vector(o, 0, 1)
    phi = B.horosphere_project(vp, vm)
    # geodesic from i to 1: circle |a - (1+i)| = 1; find B_{v+}(0, q) = 0 on it
    def q_of(s):
        a = (1 + 1j) + np.exp(1j * (math.pi + s * math.pi / 2))  # s in (0,1): from 1 to i side
        return M.point(D, a.real, a.imag)

    def g(s):
        return B.busemann_finite_t(vp, o, q_of(s), 18.0)

    s = brentq(g, 1e-6, 1 - 1e-6, xtol=1e-14)
    q = q_of(s)
    assert np.allclose(phi.base.array, q.array, atol=1e-6)
    # phi points toward endpoint 1 and its backward ray ends at i
    assert B.boundary_endpoint(phi).repr == pytest.approx(0.0, abs=1e-9)
    back = M.vector(phi.base, *(-phi.array))
    assert B.boundary_endpoint(back).repr == pytest.approx(math.pi / 2, abs=1e-9)


def test_horosphere_project_properties(rng):
    for _ in range(100):
        z = M.random_points(H, 1, rng)[0]
        p = M.point(H, *z)
        a, b = rng.uniform(0, 2 * math.pi, 2)
        vp, vm = M.vector(p, math.cos(a), math.sin(a)), M.vector(p, math.cos(b), math.sin(b))
        if abs(math.remainder(a - b, 2 * math.pi)) < 1e-3:
            continue
        phi = B.horosphere_project(vp, vm)
        assert B.asymptotic_test(phi, vp)
        assert B.asymptotic_test(M.vector(phi.base, *(-phi.array)), vm)
        assert abs(B.busemann(vp.unit(), p, phi.base)) <= 1e-8
        # equivariance under a random Moebius map
        m = rng.normal(size=(2, 2))
        if np.linalg.det(m) < 0:
            m[0] *= -1
        m /= math.sqrt(np.linalg.det(m))
        g = M.DeckTransformation.moebius(m, H)
        def push(w):
            P = g.apply_array(w.base.array[None])
            V = g.apply_vector_array(w.base.array[None], w.array[None])
            return M.vector(M.point(H, *P[0]), *V[0])
        lhs = B.horosphere_project(push(vp), push(vm))
        rhs = push(phi)
        assert np.allclose(lhs.base.array, rhs.base.array, atol=1e-8 * max(1, abs(rhs.base.array).max()))
        assert np.allclose(lhs.array, rhs.array, atol=1e-8 * max(1, abs(rhs.array).max()))


def test_horosphere_project_continuity(rng):
    # an empirical threshold: 1e-6 input perturbations move the base point by at most 1e-3.
    # Nearly equal directions push the projection far out and amplify by about e^d, so
    # sampled configurations keep the directions at least 0.5 apart.
    for model in (H, D):
        for _ in range(100):
            p = M.point(model, *M.random_points(model, 1, rng)[0])
            a, b = rng.uniform(0, 2 * math.pi, 2)
            if abs(math.remainder(a - b, 2 * math.pi)) < 0.5:
                continue
            da, db = rng.uniform(-1e-6, 1e-6, 2)
            phi = B.horosphere_project(M.vector(p, math.cos(a), math.sin(a)), M.vector(p, math.cos(b), math.sin(b)))
            psi = B.horosphere_project(M.vector(p, math.cos(a + da), math.sin(a + da)),
                                       M.vector(p, math.cos(b + db), math.sin(b + db)))
            assert M.distance(model, phi.base, psi.base) <= 1e-3


def test_horosphere_project_visibility_errors():
    for model in (M.WARPED, M.EUCLIDEAN2):
        p = M.point(model, 0, 0)
        with pytest.raises(VisibilityError):
            B.horosphere_project(M.vector(p, 0, 1), M.vector(p, 1, 1))
    p = M.point(H, 0, 1)
    with pytest.raises(VisibilityError):
        B.horosphere_project(M.vector(p, 0, 1), M.vector(p, 0, 2))
    with pytest.raises(DomainError):
        B.horosphere_project(M.vector(p, 0, 1), vec(H, (0, 2), (0, -1)))


# --- distance to geodesic, orbit limits -------------------------------------

def test_distance_to_geodesic_imaginary_axis(rng):
    P = M.random_points(H, 50, rng)
    got = B.distance_to_geodesic(H, P, 0.0, math.inf)
    assert np.allclose(got, np.arcsinh(np.abs(P[:, 0]) / P[:, 1]), atol=1e-12)
    # same geodesic after swapping ends
    assert np.allclose(B.distance_to_geodesic(H, P, math.inf, 0.0), got, atol=1e-12)


def _seq(model, pts):
    pts = np.asarray(pts, dtype=float)
    return PointSequence(model, pts, np.arange(len(pts), dtype=float))


def test_orbit_limits_radial():
    n = np.arange(1, 30)
    fwd = _seq(D, np.stack([np.tanh(n / 2), 0 * n], 1))
    bwd = _seq(D, np.stack([-np.tanh(n / 2), 0 * n], 1))
    lim = B.orbit_boundary_limits(fwd, bwd)
    assert lim.x_plus.repr == pytest.approx(0.0, abs=1e-12)
    assert lim.separation == pytest.approx(math.pi, abs=1e-12)


def test_orbit_limits_scaling_antipodal():
    n = np.arange(0, 21)
    fz = M.hp_to_disk(1j * 4.0 ** n)
    bz = M.hp_to_disk(1j * 4.0 ** (-n))
    lim = B.orbit_boundary_limits(_seq(D, np.stack([fz.real, fz.imag], 1)),
                                  _seq(D, np.stack([bz.real, bz.imag], 1)))
    assert abs(lim.separation - math.pi) < 1e-6


def test_orbit_limits_magnetic():
    s = F.magnetic_start(2.0, model=D)
    fw = F.magnetic_trajectory(s, 12.0, 0.005)
    bw = F.magnetic_trajectory(s, 12.0, 0.005, backward=True)
    lim = B.orbit_boundary_limits(_seq(D, fw.positions[::100]), _seq(D, bw.positions[::100]))
    assert 0 < lim.separation <= math.pi
    with pytest.raises(UnsupportedModelError):
        B.orbit_boundary_limits(_seq(H, [[0, 1], [0, 2]]), _seq(H, [[0, 1], [0, 2]]))
