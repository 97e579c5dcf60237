"""Geodesics of the warped plane ds^2 = (1+e^{-y})^2 dx^2 + dy^2.

The metric does not depend on x, so p1 = w(y)^2 x' is conserved and a
unit-speed geodesic satisfies y'^2 = 1 - p1^2 / w(y)^2, w = 1 + e^{-y}.
Since w decreases in y, a geodesic either has monotone y or a single
maximum y* with w(y*) = |p1|. Distances follow from the Clairaut
integrals

    dx = a dy / (w sqrt(w^2 - a^2)),   dL = w dy / sqrt(w^2 - a^2)

with a = |p1|. When a > 1 we integrate in theta, defined by
e^{-y} = q cosh^2(theta) with q = a - 1, which removes the square-root
singularity at the turning height. Everything is vectorized over batches
so the geometry suites can afford tens of thousands of distances.
"""

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NumericError


def _quiet(fn):
    # overflow in far-out quadrature nodes is expected and masked downstream
    def wrapped(*a, **k):
        with np.errstate(all="ignore"):
            return fn(*a, **k)
    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(128)


def w_of(y):
    return 1.0 + np.exp(-y)


def _gl(f, lo, hi):
    # Gauss-Legendre on [lo, hi] row-wise; f maps (N, n) nodes to values
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[:, None] + half[:, None] * _NODES[None, :]
    return half * (f(nodes) @ _WEIGHTS)


def _theta_of(delta):
    # theta at a height delta = y* - y below the turning height
    return np.arcsinh(np.sqrt(np.expm1(np.maximum(delta, 0.0))))


def _piece_theta(a, q, th_lo, th_hi):
    """Integrals of dx and dL over theta in [th_lo, th_hi] (q > 0)."""
    qa = q[:, None]
    aa = a[:, None]

    def fx(th):
        u = qa * np.cosh(th) ** 2
        return 2.0 * aa / ((1.0 + u) * np.sqrt(u * (u + 2.0 + qa)))

    def fl(th):
        u = qa * np.cosh(th) ** 2
        return 2.0 * (1.0 + u) / np.sqrt(u * (u + 2.0 + qa))

    return _gl(fx, th_lo, th_hi), _gl(fl, th_lo, th_hi)


def _piece_y(a, y_lo, y_hi):
    """Integrals of dx and dL over y in [y_lo, y_hi] (a <= 1)."""
    aa = a[:, None]

    def fx(y):
        w = w_of(y)
        return aa / (w * np.sqrt(w * w - aa * aa))

    def fl(y):
        w = w_of(y)
        return w / np.sqrt(w * w - aa * aa)

    return _gl(fx, y_lo, y_hi), _gl(fl, y_lo, y_hi)


def _evaluate(lam, y_lo, y_hi):
    """Horizontal span X, length L and momentum a for shooting parameter lam.

    lam <= 0: monotone geodesic whose vertical speed at y_hi is -lam.
    lam > 0: geodesic turning at y* = y_hi + lam^2.
    """
    n = lam.shape[0]
    X = np.zeros(n)
    L = np.zeros(n)
    a = np.zeros(n)
    e_h = np.exp(-y_hi)
    w_h = 1.0 + e_h

    turn = lam > 0
    if np.any(turn):
        lt = lam[turn]
        # heights below the turning point kept as differences, not via y*
        q = np.exp(-y_hi[turn]) * np.exp(-lt * lt)
        at = 1.0 + q
        th_h = _theta_of(lt * lt)
        th_l = _theta_of((y_hi[turn] - y_lo[turn]) + lt * lt)
        x1, l1 = _piece_theta(at, q, np.zeros_like(q), th_h)
        x2, l2 = _piece_theta(at, q, np.zeros_like(q), th_l)
        X[turn] = x1 + x2
        L[turn] = l1 + l2
        a[turn] = at

    mono = ~turn
    if np.any(mono):
        v = -lam[mono]
        wh = w_h[mono]
        eh = e_h[mono]
        am = np.sqrt(np.maximum(wh * wh - v * v, 0.0))
        a[mono] = am
        big = am > 1.0
        idx = np.flatnonzero(mono)
        if np.any(big):
            ab = am[big]
            vb = v[big]
            ehb = eh[big]
            q = ab - 1.0
            # y* - y_hi, written to stay accurate as v -> 0
            ratio_m1 = vb * vb * (1.0 / (wh[big] + ab) - 1.0 / ehb) / (ab + 1.0)
            d_hi = -np.log1p(ratio_m1)
            th_h = _theta_of(d_hi)
            th_l = _theta_of((y_hi[idx[big]] - y_lo[idx[big]]) + d_hi)
            xb, lb = _piece_theta(ab, q, th_h, th_l)
            X[idx[big]] = xb
            L[idx[big]] = lb
        small = ~big
        if np.any(small):
            xs, ls = _piece_y(am[small], y_lo[idx[small]], y_hi[idx[small]])
            X[idx[small]] = xs
            L[idx[small]] = ls
    return X, L, a


@_quiet
def solve(dx, y0, y1, tol=1e-13, max_iter=200):
    """Solve the boundary problem for horizontal spans dx >= 0.

    Returns (L, a, up) where L is the distance, a = |p1| of the
    unit-speed geodesic and up tells whether y increases at the start.
    """
    dx = np.asarray(dx, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    n = dx.shape[0]
    y_lo = np.minimum(y0, y1)
    y_hi = np.maximum(y0, y1)
    L = np.abs(y1 - y0)
    a = np.zeros(n)
    lam = np.zeros(n)
    active = dx > 0
    if np.any(active):
        idx = np.flatnonzero(active)
        lo_l = -w_of(y_hi[idx])
        hi_l = np.ones(idx.size)
        ylo = y_lo[idx]
        yhi = y_hi[idx]
        target = dx[idx]
        # grow the upper bracket until X(hi) >= target
        for _ in range(60):
            Xh, _, _ = _evaluate(hi_l, ylo, yhi)
            short = Xh < target
            if not np.any(short):
                break
            hi_l = np.where(short, 2.0 * hi_l, hi_l)
        else:
            raise NumericError("warped shooting: could not bracket the horizontal span")
        f_lo = -target.copy()
        f_hi = Xh - target
        lam_a = lo_l.copy()
        lam_b = hi_l.copy()
        side = np.zeros(idx.size, dtype=int)
        cur = 0.5 * (lam_a + lam_b)
        done = np.zeros(idx.size, dtype=bool)
        for it in range(max_iter):
            und = ~done
            if not np.any(und):
                break
            # Illinois regula falsi with bisection every few steps
            denom = f_hi[und] - f_lo[und]
            guess = lam_b[und] - f_hi[und] * (lam_b[und] - lam_a[und]) / np.where(denom == 0, 1.0, denom)
            bad = ~np.isfinite(guess) | (guess <= np.minimum(lam_a[und], lam_b[und])) | (guess >= np.maximum(lam_a[und], lam_b[und]))
            if it % 4 == 3:
                bad[:] = True
            guess = np.where(bad, 0.5 * (lam_a[und] + lam_b[und]), guess)
            Xg, _, _ = _evaluate(guess, ylo[und], yhi[und])
            fg = Xg - target[und]
            u_idx = np.flatnonzero(und)
            pos = fg > 0
            # replace the endpoint with the same sign
            nb = np.where(pos, guess, lam_b[u_idx])
            na = np.where(pos, lam_a[u_idx], guess)
            nfb = np.where(pos, fg, f_hi[u_idx])
            nfa = np.where(pos, f_lo[u_idx], fg)
            same_b = pos & (side[u_idx] == 1)
            same_a = (~pos) & (side[u_idx] == -1)
            nfa = np.where(same_b, nfa * 0.5, nfa)
            nfb = np.where(same_a, nfb * 0.5, nfb)
            side[u_idx] = np.where(pos, 1, -1)
            lam_a[u_idx], lam_b[u_idx] = na, nb
            f_lo[u_idx], f_hi[u_idx] = nfa, nfb
            cur[u_idx] = guess
            width = np.abs(nb - na)
            conv = (np.abs(fg) <= tol * (1.0 + target[u_idx])) | (width <= 4e-16 * (1.0 + np.abs(guess)))
            done[u_idx] = conv
        if not np.all(done):
            bad_res = np.max(np.abs(f_hi[~done]))
            raise NumericError("warped shooting did not converge", residual=float(bad_res))
        _, Lf, af = _evaluate(cur, ylo, yhi)
        L[idx] = Lf
        a[idx] = af
        lam[idx] = cur
    up = np.where(lam > 0, True, y1 > y0)
    up = np.where(dx > 0, up, y1 >= y0)
    return L, a, up


@_quiet
def distance(P, Q):
    P = np.atleast_2d(P)
    Q = np.atleast_2d(Q)
    L, _, _ = solve(np.abs(Q[:, 0] - P[:, 0]), P[:, 1], Q[:, 1])
    return L


@_quiet
def log(P, Q):
    """Initial velocity (x', y') at P of the geodesic reaching Q at time 1."""
    P = np.atleast_2d(P)
    Q = np.atleast_2d(Q)
    ddx = Q[:, 0] - P[:, 0]
    L, a, up = solve(np.abs(ddx), P[:, 1], Q[:, 1])
    w0 = w_of(P[:, 1])
    p1 = np.sign(ddx) * a
    vx = p1 / (w0 * w0)
    vy = np.sqrt(np.maximum(1.0 - (a / w0) ** 2, 0.0)) * np.where(up, 1.0, -1.0)
    return np.stack([vx * L, vy * L], axis=1)


def _rhs_batch(n):
    def rhs(_t, s):
        x, y, p1, p2 = s[:n], s[n:2 * n], s[2 * n:3 * n], s[3 * n:]
        e = np.exp(-y)
        w = 1.0 + e
        return np.concatenate([p1 / (w * w), p2, np.zeros(n), -(p1 * p1) * e / w ** 3])
    return rhs


def hamiltonian_state(P, V):
    P = np.atleast_2d(P)
    V = np.atleast_2d(V)
    w = w_of(P[:, 1])
    return np.stack([P[:, 0], P[:, 1], w * w * V[:, 0], V[:, 1]], axis=1)


def energy(S):
    S = np.atleast_2d(S)
    w = w_of(S[:, 1])
    return S[:, 2] ** 2 / (w * w) + S[:, 3] ** 2


@_quiet
def flow(S, times, rtol=1e-12, atol=1e-12):
    """Integrate Hamiltonian states S (N, 4) and sample at common times.

    Returns an array (len(times), N, 4). The momentum p2 is re-projected
    onto the initial energy shell at every sample.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n = S.shape[0]
    times = np.asarray(times, dtype=float)
    E0 = energy(S)
    y0 = np.concatenate([S[:, 0], S[:, 1], S[:, 2], S[:, 3]])
    t_end = float(times[-1])
    if t_end == 0.0:
        out = np.repeat(S[None], len(times), axis=0)
        return out
    sol = solve_ivp(_rhs_batch(n), (0.0, t_end), y0, method="DOP853", t_eval=times,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericError("warped geodesic integration failed: " + str(sol.message))
    Y = sol.y.T.reshape(len(times), 4, n).transpose(0, 2, 1).copy()
    # renormalize p2 to the conserved energy, keeping its sign
    w = w_of(Y[..., 1])
    rest = np.maximum(E0[None, :] - Y[..., 2] ** 2 / (w * w), 0.0)
    Y[..., 3] = np.where(Y[..., 3] >= 0, 1.0, -1.0) * np.sqrt(rest)
    return Y


@_quiet
def exp(P, V):
    """Point at time 1 on the geodesics with initial velocity V at P."""
    S = hamiltonian_state(P, V)
    Y = flow(S, np.array([0.0, 1.0]))
    return Y[-1, :, :2]


def shooting_distance(p, q, tol=1e-11):
    """Independent check: Newton shooting on the initial angle.

    Integrates the geodesic equation for one pair with scipy and solves
    for (angle, length). Slow; used as a cross-check only.
    """
    from scipy.optimize import fsolve

    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q - p
    chord = float(np.hypot(d[0] * w_of(0.5 * (p[1] + q[1])), d[1]))
    w0 = float(w_of(p[1]))

    def endpoint(params):
        ang, ln = params
        v = np.array([np.cos(ang) / w0, np.sin(ang)]) * ln
        S = hamiltonian_state(p[None], v[None])
        Y = flow(S, np.array([0.0, 1.0]), rtol=1e-12, atol=1e-13)
        return Y[-1, 0, :2] - q

    guesses = [np.arctan2(d[1], d[0] * w0)]
    guesses += [g + s for g in guesses for s in (0.3, -0.3, 0.8)]
    best = None
    for g in guesses:
        sol, info, ier, msg = fsolve(endpoint, [g, max(chord, 1e-6)], full_output=True, xtol=tol)
        res = float(np.max(np.abs(endpoint(sol))))
        if best is None or res < best[1]:
            best = (sol, res)
        if res < 1e-9 and sol[1] > 0:
            return float(sol[1])
    raise NumericError("shooting did not converge", residual=best[1])
