"""Compiled evaluation and stepping kernels.

Every model is reduced to a tuple ``K = (kind, p, eig, B, q, hmod)``:

* ``kind``  -- ``COLLOCATION`` (scalar ODEs, wave, plate) or ``KIRCHHOFF``
* ``p``     -- float parameters ``[alpha, beta, b, c, lam, mu, forcing_freq, degenerate]``
* ``eig``   -- eigenvalues of the linear operator on the modal basis
* ``B``     -- collocation matrix (grid points x modes), ``B[j, k] = e_k(x_j)``
* ``q``     -- quadrature weights on the grid
* ``hmod``  -- modal coefficients of the forcing profile ``h0``

The H scalar product is always the Euclidean dot product of modal
coefficients (the bases are orthonormal).
"""

import numpy as np
from numba import njit

COLLOCATION = 0
KIRCHHOFF = 1

P_ALPHA, P_BETA, P_B, P_C, P_LAM, P_MU, P_FREQ, P_DEGEN = range(8)

OK = 0
UNDERFLOW = 1
NONFINITE = 2
MAX_STEPS = 3

_EPS = np.finfo(np.float64).eps

# Dormand-Prince 5(4)
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# difference between the 5th and embedded 4th order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit(cache=True, inline="always")
def _signed_pow(x, e):
    # |x|^e x, with the value 0 at x = 0 for every e >= 0
    if x == 0.0:
        return 0.0
    return abs(x) ** e * x


@njit(cache=True)
def collocate(K, a):
    out = np.empty(K[3].shape[0])
    collocate_into(K, a, out)
    return out


@njit(cache=True)
def collocate_into(K, a, out):
    B = K[3]
    m, n = B.shape
    for j in range(m):
        s = 0.0
        for k in range(n):
            s += B[j, k] * a[k]
        out[j] = s


@njit(cache=True, inline="always")
def potential(K, u):
    kind, p, eig = K[0], K[1], K[2]
    beta, b, lam = p[P_BETA], p[P_B], p[P_LAM]
    n = u.shape[0]
    quad = 0.0
    sq = 0.0
    for k in range(n):
        quad += eig[k] * u[k] * u[k]
        sq += u[k] * u[k]
    if kind == KIRCHHOFF:
        lin = 0.0 if p[P_DEGEN] != 0.0 else 0.5 * quad
        return lin + b / (beta + 2.0) * quad ** ((beta + 2.0) / 2.0) - 0.5 * lam * sq
    val = 0.5 * quad - 0.5 * lam * sq
    if b != 0.0:
        B, q = K[3], K[4]
        s = 0.0
        for j in range(B.shape[0]):
            x = 0.0
            for k in range(n):
                x += B[j, k] * u[k]
            s += q[j] * abs(x) ** (beta + 2.0)
        val += b / (beta + 2.0) * s
    return val


@njit(cache=True, inline="always")
def grad_potential(K, u, out):
    kind, p, eig = K[0], K[1], K[2]
    beta, b, lam = p[P_BETA], p[P_B], p[P_LAM]
    n = u.shape[0]
    if kind == KIRCHHOFF:
        quad = 0.0
        for k in range(n):
            quad += eig[k] * u[k] * u[k]
        coef = (0.0 if p[P_DEGEN] != 0.0 else 1.0) + b * quad ** (beta / 2.0)
        for k in range(n):
            out[k] = coef * eig[k] * u[k] - lam * u[k]
        return
    for k in range(n):
        out[k] = eig[k] * u[k] - lam * u[k]
    if b != 0.0:
        B, q = K[3], K[4]
        for j in range(B.shape[0]):
            x = 0.0
            for k in range(n):
                x += B[j, k] * u[k]
            w = b * q[j] * _signed_pow(x, beta)
            for k in range(n):
                out[k] += B[j, k] * w


@njit(cache=True, inline="always")
def damping(K, t, v, out):
    kind, p = K[0], K[1]
    alpha, c, mu, freq = p[P_ALPHA], p[P_C], p[P_MU], p[P_FREQ]
    hmod = K[5]
    n = v.shape[0]
    prof = np.cos(freq * t)
    if kind == KIRCHHOFF:
        sq = 0.0
        for k in range(n):
            sq += v[k] * v[k]
        coef = c * sq ** (alpha / 2.0) - mu
        for k in range(n):
            out[k] = coef * v[k] - prof * hmod[k]
        return
    for k in range(n):
        out[k] = -mu * v[k] - prof * hmod[k]
    if c != 0.0:
        B, q = K[3], K[4]
        for j in range(B.shape[0]):
            x = 0.0
            for k in range(n):
                x += B[j, k] * v[k]
            w = c * q[j] * _signed_pow(x, alpha)
            for k in range(n):
                out[k] += B[j, k] * w


@njit(cache=True, inline="always")
def _energy(K, u, v):
    s = 0.0
    for k in range(v.shape[0]):
        s += v[k] * v[k]
    return 0.5 * s + potential(K, u)


@njit(cache=True, inline="always")
def _accel(K, t, u, v, acc, gbuf):
    # returns the dissipation rate <g(t, v), v>
    grad_potential(K, u, acc)
    damping(K, t, v, gbuf)
    d = 0.0
    for k in range(v.shape[0]):
        d += gbuf[k] * v[k]
        acc[k] = -acc[k] - gbuf[k]
    return d


@njit(cache=True)
def workspace(n):
    return (np.empty((7, n)), np.empty((7, n)), np.empty(7), np.empty(n),
            np.empty(n), np.empty(n))


@njit(cache=True)
def _dopri_trial(K, t, u, v, h, rtol, atol, un, vn, ws):
    """One Dormand-Prince trial step of size ``h``.

    Writes the 5th order solution into ``un``/``vn`` and returns the scaled
    error norm and the dissipated energy over the step, integrated with the
    same stage weights.
    """
    n = u.shape[0]
    ku, kv, d, g, us, vs = ws

    for i in range(n):
        ku[0, i] = v[i]
    d[0] = _accel(K, t, u, v, kv[0], g)

    for i in range(n):
        us[i] = u[i] + h * _A21 * ku[0, i]
        vs[i] = v[i] + h * _A21 * kv[0, i]
        ku[1, i] = vs[i]
    d[1] = _accel(K, t + _C2 * h, us, vs, kv[1], g)

    for i in range(n):
        us[i] = u[i] + h * (_A31 * ku[0, i] + _A32 * ku[1, i])
        vs[i] = v[i] + h * (_A31 * kv[0, i] + _A32 * kv[1, i])
        ku[2, i] = vs[i]
    d[2] = _accel(K, t + _C3 * h, us, vs, kv[2], g)

    for i in range(n):
        us[i] = u[i] + h * (_A41 * ku[0, i] + _A42 * ku[1, i] + _A43 * ku[2, i])
        vs[i] = v[i] + h * (_A41 * kv[0, i] + _A42 * kv[1, i] + _A43 * kv[2, i])
        ku[3, i] = vs[i]
    d[3] = _accel(K, t + _C4 * h, us, vs, kv[3], g)

    for i in range(n):
        us[i] = u[i] + h * (_A51 * ku[0, i] + _A52 * ku[1, i] + _A53 * ku[2, i]
                            + _A54 * ku[3, i])
        vs[i] = v[i] + h * (_A51 * kv[0, i] + _A52 * kv[1, i] + _A53 * kv[2, i]
                            + _A54 * kv[3, i])
        ku[4, i] = vs[i]
    d[4] = _accel(K, t + _C5 * h, us, vs, kv[4], g)

    for i in range(n):
        us[i] = u[i] + h * (_A61 * ku[0, i] + _A62 * ku[1, i] + _A63 * ku[2, i]
                            + _A64 * ku[3, i] + _A65 * ku[4, i])
        vs[i] = v[i] + h * (_A61 * kv[0, i] + _A62 * kv[1, i] + _A63 * kv[2, i]
                            + _A64 * kv[3, i] + _A65 * kv[4, i])
        ku[5, i] = vs[i]
    d[5] = _accel(K, t + h, us, vs, kv[5], g)

    for i in range(n):
        un[i] = u[i] + h * (_B1 * ku[0, i] + _B3 * ku[2, i] + _B4 * ku[3, i]
                            + _B5 * ku[4, i] + _B6 * ku[5, i])
        vn[i] = v[i] + h * (_B1 * kv[0, i] + _B3 * kv[2, i] + _B4 * kv[3, i]
                            + _B5 * kv[4, i] + _B6 * kv[5, i])
        ku[6, i] = vn[i]
    d[6] = _accel(K, t + h, un, vn, kv[6], g)

    dissipated = h * (_B1 * d[0] + _B3 * d[2] + _B4 * d[3] + _B5 * d[4] + _B6 * d[5])

    acc = 0.0
    for i in range(n):
        eu = h * (_E1 * ku[0, i] + _E3 * ku[2, i] + _E4 * ku[3, i] + _E5 * ku[4, i]
                  + _E6 * ku[5, i] + _E7 * ku[6, i])
        ev = h * (_E1 * kv[0, i] + _E3 * kv[2, i] + _E4 * kv[3, i] + _E5 * kv[4, i]
                  + _E6 * kv[5, i] + _E7 * kv[6, i])
        su = atol + rtol * max(abs(u[i]), abs(un[i]))
        sv = atol + rtol * max(abs(v[i]), abs(vn[i]))
        acc += (eu / su) ** 2 + (ev / sv) ** 2
    err = np.sqrt(acc / (2 * n))
    return err, dissipated


@njit(cache=True)
def _isfinite_vec(x):
    for i in range(x.shape[0]):
        if not np.isfinite(x[i]):
            return False
    return True


@njit(cache=True)
def adaptive_step(K, t, u, v, e_old, h, rtol, atol, etol, dt_min, dt_max, h_cap, ws):
    """Take one accepted step starting with trial size ``h`` (signed).

    A trial is accepted when the embedded error norm is <= 1 and the energy
    residual |dE + dissipated| stays within ``etol * |h| * max(1, |E|)`` plus
    a rounding floor.  Energy-rejected trials are halved.

    Returns ``(status, h_used, h_next, u_new, v_new, e_new, dissipated,
    residual)`` with ``residual`` relative to ``max(1, |E_old|)``.
    """
    n = u.shape[0]
    un = np.empty(n)
    vn = np.empty(n)
    sgn = 1.0 if h >= 0.0 else -1.0
    habs = min(abs(h), dt_max, h_cap)
    while True:
        if habs < dt_min:
            return UNDERFLOW, sgn * habs, sgn * habs, un, vn, e_old, 0.0, 0.0
        hs = sgn * habs
        err, dis = _dopri_trial(K, t, u, v, hs, rtol, atol, un, vn, ws)
        if not (np.isfinite(err) and _isfinite_vec(un) and _isfinite_vec(vn)):
            if not (_isfinite_vec(u) and _isfinite_vec(v)):
                return NONFINITE, hs, hs, un, vn, e_old, 0.0, 0.0
            habs *= 0.25
            continue
        if err > 1.0:
            habs *= max(0.2, 0.9 * err ** -0.2)
            continue
        e_new = _energy(K, un, vn)
        if not np.isfinite(e_new):
            return NONFINITE, hs, hs, un, vn, e_old, 0.0, 0.0
        scale = max(1.0, abs(e_old))
        res = abs(e_new - e_old + dis)
        floor = 64.0 * _EPS * (abs(e_old) + abs(e_new) + abs(dis))
        if res > etol * habs * scale + floor:
            habs *= 0.5
            continue
        if err == 0.0:
            grow = 5.0
        else:
            grow = min(5.0, 0.9 * err ** -0.2)
        h_next = sgn * min(habs * grow, dt_max)
        return OK, hs, h_next, un, vn, e_new, dis, res / scale


@njit(cache=True)
def advance(K, t, t_stop, u, v, h, rtol, atol, etol, dt_min, dt_max, max_steps):
    """Advance from ``t`` to exactly ``t_stop``.

    Returns ``(status, u, v, h_next, dissipated, abs_residual_sum, nsteps,
    t_reached)``; the residual sum is in units of ``max(1, |E|)`` per step.
    """
    ws = workspace(u.shape[0])
    e = _energy(K, u, v)
    dis_total = 0.0
    res_total = 0.0
    nsteps = 0
    sgn = 1.0 if t_stop >= t else -1.0
    if h * sgn <= 0.0:
        h = sgn * abs(h)
    h_next = h
    while (t_stop - t) * sgn > 0.0:
        remaining = abs(t_stop - t)
        last = remaining <= abs(h)
        cap = remaining
        status, hu, h_next, un, vn, e_new, dis, res = adaptive_step(
            K, t, u, v, e, h, rtol, atol, etol, dt_min, dt_max, cap, ws)
        if status != OK:
            if status == UNDERFLOW and remaining < dt_min:
                # tail shorter than dt_min: take it unconditionally
                err, dis = _dopri_trial(K, t, u, v, sgn * remaining, rtol, atol, un, vn, ws)
                e_new = _energy(K, un, vn)
                res = abs(e_new - e + dis) / max(1.0, abs(e))
                t = t_stop
                u, v = un, vn
                dis_total += dis
                res_total += res
                e = e_new
                nsteps += 1
                break
            return status, u, v, h, dis_total, res_total, nsteps, t
        if abs(hu) >= remaining:
            t = t_stop
        else:
            t = t + hu
        u, v = un, vn
        e = e_new
        dis_total += dis
        res_total += res
        nsteps += 1
        # keep the controller's proposal when the step was clipped to land on t_stop
        if last and abs(hu) < abs(h):
            h_next = h
        h = h_next
        if nsteps >= max_steps:
            return MAX_STEPS, u, v, h, dis_total, res_total, nsteps, t
    return OK, u, v, h, dis_total, res_total, nsteps, t


@njit(cache=True)
def energy(K, u, v):
    return _energy(K, u, v)


@njit(cache=True)
def accel(K, t, u, v):
    acc = np.empty(u.shape[0])
    g = np.empty(u.shape[0])
    _accel(K, t, u, v, acc, g)
    return acc
