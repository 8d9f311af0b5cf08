"""Compiled inner loops for the intermittent (LSV) family.

The ambient map is f(x) = x(1 + 2^g x^g) on [0, 1/2) and 2x - 1 on [1/2, 1].
Ambient return-time weights h are polynomials given by coefficient arrays
(h(x) = sum_k hc[k] x^k) so they can be evaluated inside the kernels.
"""
import math

import numpy as np
from numba import njit

NEWTON_TOL = 1e-13
MAX_NEWTON = 60
MAX_IDENT = 10_000_000


@njit(cache=True, inline="always")
def _pw(x, gamma):
    # sqrt is several times cheaper than pow for the common gamma = 1/2 case
    if gamma == 0.5:
        return math.sqrt(x)
    return x**gamma


@njit(cache=True)
def _horner(hc, x):
    acc = 0.0
    for k in range(hc.shape[0] - 1, -1, -1):
        acc = acc * x + hc[k]
    return acc


@njit(cache=True)
def _left_inverse_scalar(z, gamma, c):
    # solve x + c x^(1+gamma) = z on [z/(1+c z^gamma), z]
    if z <= 0.0:
        return 0.0, True
    lo = z / (1.0 + c * _pw(z, gamma))
    hi = z
    x = lo
    for _ in range(MAX_NEWTON):
        xg = _pw(x, gamma)
        g = x * (1.0 + c * xg) - z
        if g > 0.0:
            hi = x
        else:
            lo = x
        dg = 1.0 + (1.0 + gamma) * c * xg
        step = g / dg
        xn = x - step
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= NEWTON_TOL * xn:
            # one polishing step inside the bracket
            xg = _pw(xn, gamma)
            xp = xn - (xn * (1.0 + c * xg) - z) / (1.0 + (1.0 + gamma) * c * xg)
            if lo <= xp <= hi:
                xn = xp
            return xn, True
        x = xn
    return x, False


@njit(cache=True)
def left_inverse(z, gamma):
    """Vectorised inverse of the neutral branch; returns (x, n_failed)."""
    c = 2.0**gamma
    out = np.empty_like(z)
    bad = 0
    for i in range(z.shape[0]):
        x, ok = _left_inverse_scalar(z[i], gamma, c)
        out[i] = x
        if not ok:
            bad += 1
    return out, bad


@njit(cache=True)
def preimage_chain(gamma, n):
    """x_0 = 1/2 and x_{k+1} the neutral-branch preimage of x_k."""
    c = 2.0**gamma
    xs = np.empty(n + 1)
    xs[0] = 0.5
    bad = 0
    for k in range(n):
        x, ok = _left_inverse_scalar(xs[k], gamma, c)
        xs[k + 1] = x
        if not ok:
            bad += 1
    return xs, bad


@njit(cache=True)
def first_return_scalar(y, gamma, c, hc):
    """Return (F y, tau, phi) where phi sums h along the ambient excursion."""
    phi = _horner(hc, y)
    x = 2.0 * y - 1.0
    tau = 1
    while x < 0.5:
        if x <= 0.0:
            return x, -1, phi
        phi += _horner(hc, x)
        x = x * (1.0 + c * _pw(x, gamma))
        tau += 1
    return x, tau, phi


@njit(cache=True)
def first_return(y, gamma, hc):
    c = 2.0**gamma
    n = y.shape[0]
    fy = np.empty(n)
    tau = np.empty(n, dtype=np.int64)
    phi = np.empty(n)
    for i in range(n):
        a, b, p = first_return_scalar(y[i], gamma, c, hc)
        fy[i] = a
        tau[i] = b
        phi[i] = p
    return fy, tau, phi


@njit(cache=True)
def advance(y, fy, phi, u, dt, gamma, hc, cap):
    """Flow every state forward by dt in place; returns identification counts.

    State per sample: current base point y, its image fy, roof phi(y) (the
    untruncated value), height u.  The effective roof is min(phi, cap).
    A negative count flags an escaping orbit or the identification cap.
    """
    c = 2.0**gamma
    n = y.shape[0]
    count = np.zeros(n, dtype=np.int64)
    for i in range(n):
        ui = u[i] + dt
        yi = y[i]
        fyi = fy[i]
        pi = phi[i]
        k = 0
        while True:
            r = pi if pi < cap else cap
            if ui < r:
                break
            ui -= r
            yi = fyi
            fyi, tau, pi = first_return_scalar(yi, gamma, c, hc)
            k += 1
            if tau < 0 or k > MAX_IDENT:
                k = -1
                break
        u[i] = ui
        y[i] = yi
        fy[i] = fyi
        phi[i] = pi
        count[i] = k
    return count


@njit(cache=True)
def project(y, u, gamma, hc):
    """Ambient point (x, s) with s in [0, h(x)) for suspension points (y, u)."""
    c = 2.0**gamma
    n = y.shape[0]
    xs = np.empty(n)
    ss = np.empty(n)
    for i in range(n):
        x = y[i]
        s = u[i]
        hx = _horner(hc, x)
        while s >= hx:
            s -= hx
            x = x * (1.0 + c * _pw(x, gamma)) if x < 0.5 else 2.0 * x - 1.0
            hx = _horner(hc, x)
        xs[i] = x
        ss[i] = s
    return xs, ss


@njit(cache=True)
def ambient_step(x, gamma):
    c = 2.0**gamma
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        xi = x[i]
        out[i] = xi * (1.0 + c * _pw(xi, gamma)) if xi < 0.5 else 2.0 * xi - 1.0
    return out


@njit(cache=True)
def ambient_visit_frequency(x0, gamma, n_steps):
    """Fraction of time each ambient orbit spends in [1/2, 1]."""
    c = 2.0**gamma
    out = np.empty(x0.shape[0])
    for i in range(x0.shape[0]):
        x = x0[i]
        hits = 0
        for _ in range(n_steps):
            if x >= 0.5:
                hits += 1
                x = 2.0 * x - 1.0
            else:
                x = x * (1.0 + c * _pw(x, gamma))
        out[i] = hits / n_steps
    return out
