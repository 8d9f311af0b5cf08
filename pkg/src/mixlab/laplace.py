"""Laplace transforms of correlation functions.

Pollicott's decomposition

    rho^(s) = J0^(s) + |phi|_1^{-1} int_Y (I - R^(s))^{-1} R V^(s) . w^(s) dmu

with V^(s)(y) = int_0^phi e^{-s(phi-u)} v du and w^(s)(y) = int_0^phi e^{-su} w du,
evaluated on a Chebyshev collocation discretisation of the twisted operator,
plus contour inversion and a convolution utility.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .correlation import batch_streams
from .errors import ContourUndersampled, SingularResolvent
from .suspension import Observable, SuspensionFlow
from .twisted_op import RCOND_MIN, CollocationOperator

EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# elementary kernels, stable near s = 0


def _e1(z):
    """(1 - e^{-z}) / z, with value 1 at z = 0."""
    z = np.asarray(z, complex)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-3
    out[big] = -np.expm1(-z[big]) / z[big]
    zs = z[~big]
    out[~big] = 1.0 - zs / 2.0 + zs**2 / 6.0 - zs**3 / 24.0
    return out


def _e2(z):
    """(z - 1 + e^{-z}) / z^2, with value 1/2 at z = 0."""
    z = np.asarray(z, complex)
    out = np.full_like(z, 0.5)
    big = np.abs(z) > 0.1
    zb = z[big]
    out[big] = (zb + np.expm1(-zb)) / zb**2
    zs = z[~big]
    c = [1 / 2, -1 / 6, 1 / 24, -1 / 120, 1 / 720, -1 / 5040, 1 / 40320, -1 / 362880]
    acc = np.zeros_like(zs)
    for k in range(len(c) - 1, -1, -1):
        acc = acc * zs + c[k]
    out[~big] = acc
    return out


def _is_u_constant(obs: Observable):
    return obs.y_factor is not None and getattr(obs.u_profile, "constant", False)


@lru_cache(maxsize=256)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def _gl_nodes(a, b, s, min_nodes=64, panel=4.0):
    """Panelised Gauss-Legendre nodes on [a, b], dense enough for e^{-s u}."""
    L = b - a
    if L <= 0:
        return np.zeros(0), np.zeros(0)
    n_pan = max(1, int(math.ceil(L / panel)))
    per = max(min_nodes, int(math.ceil(abs(complex(s).imag) * L / n_pan * 0.6)) + 32)
    per = 16 * int(math.ceil(per / 16))          # coarse steps keep the node cache small
    x, w = _leggauss(per)
    e = np.linspace(a, b, n_pan + 1)
    lo, wd = e[:-1], np.diff(e)
    u = (lo[:, None] + 0.5 * wd[:, None] * (x[None, :] + 1.0)).ravel()
    ww = (0.5 * wd[:, None] * w[None, :]).ravel()
    return u, ww


# ---------------------------------------------------------------------------
# transformed observables


@dataclass
class TransformedObservable:
    s: complex
    values: np.ndarray
    kind: str                    # "Vhat" | "what" | "vs"
    points: np.ndarray
    error: float = 0.0


def _profile_transform(prof, a, s, sign, n_min=64):
    """int_0^a e^{sign s u} prof(u) du by Gauss-Legendre, with a half-order error estimate."""
    u, wq = _gl_nodes(0.0, a, s, n_min)
    val = np.sum(wq * np.exp(sign * complex(s) * u) * prof(u))
    u2, w2 = _gl_nodes(0.0, a, s, max(n_min // 2, 8))
    val2 = np.sum(w2 * np.exp(sign * complex(s) * u2) * prof(u2))
    return complex(val), float(abs(val - val2))


def _u_transform(fl: SuspensionFlow, obs: Observable, s, points, kind):
    """Shared engine for V^, w^ and v_s on a point set."""
    y = np.atleast_1d(np.asarray(points, float))
    phi = np.asarray(fl.roof(y), float)
    s = complex(s)
    if obs.y_factor is not None:
        a = np.asarray(obs.y_factor(y), float)
        c = obs.offset
        if kind == "Vhat":
            const_part = phi * _e1(s * phi)                    # int_0^phi e^{-s(phi-u)} du
        elif kind == "what":
            const_part = phi * _e1(s * phi)
        else:
            const_part = phi * _e1(-s * phi)                   # int_0^phi e^{su} du
        if getattr(obs.u_profile, "constant", False):
            return (a + c) * const_part, 0.0
        sup_u = obs.u_support[1] if obs.u_support is not None else None
        if sup_u is not None and sup_u <= phi.min():
            sign = -1.0 if kind == "what" else 1.0
            q, err = _profile_transform(obs.u_profile, sup_u, s, sign)
            if kind == "Vhat":
                prof_part = np.exp(-s * phi) * q
            else:
                prof_part = np.full(y.shape, q)
            return a * prof_part + c * const_part, float(np.max(np.abs(a)) * err)
    # generic: per-point quadrature
    out = np.empty(y.shape, complex)
    err = 0.0
    for i, (yi, pi) in enumerate(zip(y, phi)):
        vals = []
        for nmin in (64, 32):
            u, wq = _gl_nodes(0.0, pi, s, nmin)
            f = obs(np.full(u.shape, yi), u)
            if kind == "Vhat":
                k = np.exp(-s * (pi - u))
            elif kind == "what":
                k = np.exp(-s * u)
            else:
                k = np.exp(s * u)
            vals.append(np.sum(wq * k * f))
        out[i] = vals[0]
        err = max(err, abs(vals[0] - vals[1]))
    return out, float(err)


def hat_V(fl: SuspensionFlow, v: Observable, s, points) -> TransformedObservable:
    """V^(s)(y) = int_0^phi(y) e^{-s(phi(y) - u)} v(y, u) du."""
    vals, err = _u_transform(fl, v, s, points, "Vhat")
    return TransformedObservable(complex(s), vals, "Vhat", np.asarray(points), err)


def hat_w(fl: SuspensionFlow, w: Observable, s, points) -> TransformedObservable:
    """w^(s)(y) = int_0^phi(y) e^{-su} w(y, u) du."""
    vals, err = _u_transform(fl, w, s, points, "what")
    return TransformedObservable(complex(s), vals, "what", np.asarray(points), err)


def v_s(fl: SuspensionFlow, v: Observable, s, points) -> TransformedObservable:
    """v_s(y) = int_0^phi(y) e^{su} v(y, u) du, so that e^{-s phi} v_s = V^(s)."""
    vals, err = _u_transform(fl, v, s, points, "vs")
    return TransformedObservable(complex(s), vals, "vs", np.asarray(points), err)


# ---------------------------------------------------------------------------
# the n = 0 term


@dataclass
class J0Value:
    value: complex
    stderr: float
    method: str


def _j0_reduced(fl, v, w, s, points, weights):
    """J0^(s) for v constant in u: |phi|^{-1} int v(y) int_0^phi w(y,r) (1 - e^{-sr})/s dr dmu."""
    y = np.asarray(points, float)
    phi = np.asarray(fl.roof(y), float)
    vy = np.asarray(v.y_factor(y), float) + v.offset
    s = complex(s)
    if w.y_factor is not None:
        a = np.asarray(w.y_factor(y), float)
        c = w.offset
        if getattr(w.u_profile, "constant", False):
            inner = (a + c) * phi**2 * _e2(s * phi)
            return complex(np.sum(weights * vy * inner)) / fl.phi_norm, 0.0
        sup_u = w.u_support[1] if w.u_support is not None else None
        if sup_u is not None and sup_u <= phi.min():
            u, wq = _gl_nodes(0.0, sup_u, s)
            q = np.sum(wq * u * _e1(s * u) * w.u_profile(u))
            inner = a * q + c * phi**2 * _e2(s * phi)
            return complex(np.sum(weights * vy * inner)) / fl.phi_norm, 0.0
    inner = np.empty(y.shape, complex)
    for i, (yi, pi) in enumerate(zip(y, phi)):
        u, wq = _gl_nodes(0.0, pi, s)
        inner[i] = np.sum(wq * u * _e1(s * u) * w(np.full(u.shape, yi), u))
    return complex(np.sum(weights * vy * inner)) / fl.phi_norm, 0.0


def hat_J0(fl: SuspensionFlow, v: Observable, w: Observable, s, method="auto", n_samples=200_000, seed=0,
           disc: Optional[CollocationOperator] = None) -> J0Value:
    """J0^(s) = int_0^inf e^{-st} J0(t) dt, J0(t) = int 1{t+u<phi} v(y,u) w(y,t+u) dmu^phi.

    ``method="mc"`` averages the inner time integral over samples of mu^phi.
    ``"reduced"`` (used by ``"auto"`` when v is constant in u) integrates u
    out exactly and leaves a y-quadrature on the collocation nodes.
    """
    s = complex(s)
    if method == "auto":
        method = "reduced" if _is_u_constant(v) else "mc"
    if method == "reduced":
        if not _is_u_constant(v):
            raise ValueError("reduced J0 needs an observable constant in u")
        if disc is None:
            disc = CollocationOperator(fl.gm, fl.roof, nodes_per_branch=24)
        val, _ = _j0_reduced(fl, v, w, s, disc.nodes, disc.weights)
        return J0Value(val, 0.0, "reduced")
    # Monte Carlo over mu^phi of int_0^{phi-u} e^{-st} v(y,u) w(y,u+t) dt
    parts = []
    for rng in batch_streams(seed, 16):
        st = fl.sample(n_samples // 16, rng)
        phi = fl.effective(st.phi)
        x, wq = np.polynomial.legendre.leggauss(48)
        L = phi - st.u
        t = 0.5 * L[:, None] * (x[None, :] + 1.0)
        yy = np.repeat(st.y[:, None], x.size, axis=1)
        ww = w(yy.ravel(), (st.u[:, None] + t).ravel()).reshape(t.shape)
        inner = (0.5 * L[:, None] * wq[None, :] * np.exp(-s * t) * ww).sum(axis=1)
        parts.append(np.mean(v(st.y, st.u) * inner))
    parts = np.array(parts)
    return J0Value(complex(parts.mean()), float(np.sqrt(np.sum(np.abs(parts - parts.mean()) ** 2) / (parts.size - 1) / parts.size)), "mc")


@dataclass
class J0BoundReport:
    t: np.ndarray
    J0: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    passed: bool


def J0_bound_check(fl: SuspensionFlow, v: Observable, w: Observable, t_grid, n_samples=400_000, seed=0) -> J0BoundReport:
    """|J0(t)| <= |v|_inf |w|_inf |phi|_1^{-1} int 1{phi>t} phi dmu, by Monte Carlo."""
    t_grid = np.asarray(t_grid, float)
    acc = []
    for rng in batch_streams(seed, 16):
        st = fl.sample(n_samples // 16, rng)
        phi = fl.effective(st.phi)
        vv = v(st.y, st.u)
        row = []
        for t in t_grid:
            alive = st.u + t < phi
            val = np.zeros(st.y.size)
            if np.any(alive):
                val[alive] = vv[alive] * w(st.y[alive], st.u[alive] + t)
            row.append(val.mean())
        acc.append(row)
    acc = np.array(acc)
    J = acc.mean(axis=0)
    se = acc.std(axis=0, ddof=1) / 4.0
    vs = v.sup if v.sup is not None else 1.0
    wsup = w.sup if w.sup is not None else 1.0
    tail = fl.tail_integral(t_grid) + t_grid * fl.tail_prob(t_grid)   # int 1{phi>t} phi dmu
    bound = vs * wsup * tail / fl.phi_norm
    return J0BoundReport(t_grid, J, se, bound, bool(np.all(np.abs(J) <= bound + 3.0 * se)))


# ---------------------------------------------------------------------------
# the resolvent term


class PollicottModel:
    """Precomputed pieces for evaluating rho^(s) at many s.

    The flow must have a bounded roof (truncate first); v should have mean
    zero with respect to mu^phi, which is checked against the collocation
    quadrature.
    """

    def __init__(self, fl: SuspensionFlow, v: Observable, w: Observable, nodes_per_branch=24,
                 j0_method="auto", mean_tol=1e-8, **j0_kw):
        if fl.roof.sup_phi is None or not np.isfinite(fl.roof.sup_phi):
            if fl.cap is None:
                raise ValueError("Pollicott evaluation needs a bounded (truncated) roof")
        self.fl, self.v, self.w = fl, v, w
        self.disc = CollocationOperator(fl.gm, fl.roof, nodes_per_branch=nodes_per_branch, kind="chebyshev")
        d = self.disc
        self.T0 = d.matrix(0.0)
        self.j0_method = j0_method
        self.j0_kw = j0_kw
        V0 = hat_V(fl, v, 0.0, d.nodes).values
        self.mean_v = float(np.real(d.weights @ V0)) / fl.phi_norm
        scale = v.sup if v.sup is not None else float(np.max(np.abs(V0))) + 1.0
        if abs(self.mean_v) > mean_tol * scale:
            raise ValueError(f"v is not mean-zero on Y^phi (mean {self.mean_v:.3e})")
        self.n = d.n
        self._rows, self._cols = d._rows, d._cols
        self._vals, self._phi = d._vals, d._phi

    def matrix(self, s):
        A = np.zeros((self.n, self.n), complex)
        np.add.at(A, (self._rows, self._cols), self._vals * np.exp(-complex(s) * self._phi))
        return A

    def resolvent_term(self, s):
        d = self.disc
        s = complex(s)
        Vh = hat_V(self.fl, self.v, s, d.nodes).values
        wh = hat_w(self.fl, self.w, s, d.nodes).values
        M = np.eye(self.n) - self.matrix(s)
        lu, piv = sla.lu_factor(M, check_finite=False)
        gecon = sla.get_lapack_funcs("gecon", (lu,))
        rc, _ = gecon(lu, float(np.abs(M).sum(axis=0).max()), norm="1")
        if rc < RCOND_MIN:
            raise SingularResolvent(f"1 is (numerically) in the spectrum of R^(s) at s = {s}")
        x = sla.lu_solve((lu, piv), self.T0 @ Vh)
        return complex(d.weights @ (x * wh)) / self.fl.phi_norm

    def j0(self, s):
        return hat_J0(self.fl, self.v, self.w, s, method=self.j0_method, disc=self.disc, **self.j0_kw).value

    def __call__(self, s):
        return self.j0(s) + self.resolvent_term(s)


def pollicott_rho_hat(fl: SuspensionFlow, v: Observable, w: Observable, s, model: Optional[PollicottModel] = None,
                      **kw) -> complex:
    """rho^(s) = J0^(s) + |phi|_1^{-1} int (I - R^(s))^{-1} R V^(s) w^(s) dmu."""
    s = complex(s)
    if s.real < 0:
        raise ValueError("Re s must be nonnegative")
    if s == 0:
        raise ValueError("s = 0 is excluded (pole of the resolvent)")
    if model is None:
        model = PollicottModel(fl, v, w, **kw)
    return model(s)


def geometric_partial_sums(fl: SuspensionFlow, v: Observable, w: Observable, s, n_max, model: PollicottModel):
    """J0 + |phi|^{-1} sum_{n=1}^{N} int R^(s)^{n-1} R V^(s) . w^(s) dmu for N = 1..n_max."""
    d = model.disc
    s = complex(s)
    Vh = hat_V(fl, v, s, d.nodes).values
    wh = hat_w(fl, w, s, d.nodes).values
    A = model.matrix(s)
    x = model.T0 @ Vh
    j0 = model.j0(s)
    acc, out = j0, []
    for _ in range(n_max):
        acc += complex(d.weights @ (x * wh)) / fl.phi_norm
        out.append(acc)
        x = A @ x
    return np.array(out)


def Jn_monte_carlo(fl: SuspensionFlow, v: Observable, w: Observable, s, n, n_samples=200_000, seed=0):
    """J_n^(s) = |phi|^{-1} int e^{-s phi_n} v_s . w^(s) o F^n dmu, by sampling mu."""
    s = complex(s)
    parts = []
    for rng in batch_streams(seed, 16):
        y = fl.sample_mu(n_samples // 16, rng)
        vs_ = v_s(fl, v, s, y).values
        z = y.copy()
        phin = np.zeros_like(y)
        for _ in range(n):
            phin += fl.roof(z)
            z = fl.gm.step(z, rng)
        parts.append(np.mean(np.exp(-s * phin) * vs_ * hat_w(fl, w, s, z).values) / fl.phi_norm)
    parts = np.array(parts)
    return complex(parts.mean()), float(np.sqrt(np.sum(np.abs(parts - parts.mean()) ** 2) / (parts.size - 1) / parts.size))


# ---------------------------------------------------------------------------
# contour series and inversion


@dataclass
class TransformSeries:
    eps: float
    b_grid: np.ndarray
    rho_hat: np.ndarray
    value_error: float = 0.0

    def __post_init__(self):
        self.b_grid = np.asarray(self.b_grid, float)
        self.rho_hat = np.asarray(self.rho_hat, complex)

    @property
    def s(self):
        return self.eps + 1j * self.b_grid

    def to_rows(self):
        return np.column_stack([self.b_grid, self.rho_hat.real, self.rho_hat.imag])


def contour_series(fn: Callable, eps, B, h) -> TransformSeries:
    """Samples of a transform on s = eps + ib, b = 0, h, ..., <= B (conjugate symmetry covers b < 0)."""
    b = np.arange(0.0, B + 0.5 * h, h)
    vals = np.array([fn(eps + 1j * bb) for bb in b])
    return TransformSeries(eps, b, vals)


@dataclass
class InversionResult:
    t: np.ndarray
    rho: np.ndarray
    truncation: np.ndarray
    aliasing: np.ndarray
    roundoff: np.ndarray
    m: int
    jumps: np.ndarray

    @property
    def bound(self):
        return self.truncation + self.aliasing + self.roundoff


def estimate_jumps(series: TransformSeries, m, frac=0.3):
    """Fit rho^(s) ~ sum_{j<m} d_j s^{-(j+1)} on the top part of the contour."""
    if m == 0:
        return np.zeros(0)
    b = series.b_grid
    sel = b >= (1.0 - frac) * b.max()
    s = series.s[sel]
    X = np.stack([s ** (-(j + 1)) for j in range(m)], axis=1)
    y = series.rho_hat[sel]
    # scale columns so the least-squares problem is well conditioned
    sc = np.abs(X).max(axis=0)
    coef, *_ = np.linalg.lstsq(X / sc, y, rcond=None)
    return np.real(coef / sc)


def _tail_power(b, r):
    """Decay power p of |r(b)| ~ b^{-p} over the last decade-fraction of the contour."""
    sel = b >= 0.6 * b.max()
    ok = sel & (np.abs(r) > 0)
    if ok.sum() < 4:
        return np.inf
    return float(-np.polyfit(np.log(b[ok]), np.log(np.abs(r[ok])), 1)[0])


def invert_laplace(series: TransformSeries, t_grid, jumps: Optional[Sequence] = None, m: Optional[int] = None,
                   max_m=4, sup_bound=1.0) -> InversionResult:
    """rho(t) = (1/2pi) int e^{(eps+ib)t} rho^(eps+ib) db by the trapezoid rule.

    Before summing, the leading terms sum_j d_j / s^{j+1} are removed (their
    inverse transforms d_j t^j / j! are added back exactly); d_j are the
    one-sided derivatives of rho at 0, given or fitted from the contour.
    The order m is the smallest that makes the remainder integrable with a
    negligible tail, capped at ``max_m``.
    """
    t = np.atleast_1d(np.asarray(t_grid, float))
    b = series.b_grid
    if b[0] != 0.0:
        raise ValueError("b_grid must start at 0 (conjugate symmetry is used)")
    h = b[1] - b[0]
    if not np.allclose(np.diff(b), h, rtol=1e-9, atol=0.0):
        raise ValueError("b_grid must be uniform")
    P = 2.0 * math.pi / h
    if P <= 2.0 * t.max():
        raise ContourUndersampled(f"step {h:g} aliases at period {P:.3g} < 2 t_max = {2 * t.max():.3g}")
    eps = series.eps
    s = series.s
    B = b.max()
    wts = np.full(b.size, h)
    wts[0] *= 0.5
    wts[-1] *= 0.5

    def attempt(mm, d):
        r = series.rho_hat - sum(d[j] * s ** (-(j + 1)) for j in range(mm))
        ph = np.exp(1j * np.outer(t, b))
        core = (ph * (wts * r)[None, :]).sum(axis=1).real / math.pi
        poly = sum(d[j] * t**j / math.factorial(j) for j in range(mm))
        rho = np.exp(eps * t) * core + poly
        p = _tail_power(b, r)
        if p <= 1.0:
            trunc = np.full(t.shape, np.inf)
        else:
            rB = np.abs(r[-max(3, b.size // 50):]).max()
            trunc = np.exp(eps * t) * rB * B / (math.pi * (p - 1.0))
        tau = t + P
        growth = sup_bound + sum(abs(d[j]) * tau**j / math.factorial(j) for j in range(mm))
        alias = growth * np.exp(-eps * P) / (1.0 - np.exp(-eps * P))
        ro = np.exp(eps * t) * (4.0 * EPS * np.sum(wts * np.abs(series.rho_hat)) / math.pi
                                + series.value_error * B / math.pi)
        return rho, trunc, alias, ro

    if m is not None or jumps is not None:
        mm = len(jumps) if jumps is not None else int(m)
        d = np.asarray(jumps, float) if jumps is not None else estimate_jumps(series, mm)
        rho, tr, al, ro = attempt(mm, d)
        return InversionResult(t, rho, tr, al, ro, mm, d)
    best = None
    for mm in range(0, max_m + 1):
        d = estimate_jumps(series, mm)
        rho, tr, al, ro = attempt(mm, d)
        res = InversionResult(t, rho, tr, al, ro, mm, d)
        if best is None or np.max(res.bound) < np.max(best.bound):
            best = res
        if np.all(np.isfinite(tr)) and np.max(tr) <= np.max(ro + al):
            return res
    return best


def forward_laplace(f: Callable, s_values, t_max, n=4096):
    """int_0^t_max e^{-st} f(t) dt by panelised Gauss-Legendre (for synthetic round trips)."""
    panel = t_max / max(1, n // 64)
    out = []
    for s in np.atleast_1d(s_values):
        # node density follows Im s so the oscillating kernel stays resolved
        u, wq = _gl_nodes(0.0, t_max, s, min_nodes=64, panel=panel)
        out.append(np.sum(wq * np.exp(-complex(s) * u) * f(u)))
    return np.array(out)


# ---------------------------------------------------------------------------
# convolution


def convolve(f_samples, g_samples, t_grid):
    """(f*g)(t_n) = int_0^{t_n} f(x) g(t_n - x) dx by the trapezoid rule on a uniform grid."""
    f = np.asarray(f_samples, float)
    g = np.asarray(g_samples, float)
    t = np.asarray(t_grid, float)
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h) or abs(t[0]) > 1e-14:
        raise ValueError("t_grid must be uniform and start at 0")
    n = t.size
    full = np.convolve(f, g)[:n]
    return h * (full - 0.5 * (f[0] * g[:n] + g[0] * f[:n]))


@dataclass
class ConvolutionBound:
    a: float
    b: float
    K: float
    exponent: float
    exponent_se: float
    passed: bool


def convolution_bound_check(a, b, t_max=2000.0, n=200_001, window=(200.0, 2000.0), tol=0.1) -> ConvolutionBound:
    """Power-law inputs (1+t)^{-a}, (1+t)^{-b}: fit K in |f*g| <= K (1+t)^{-a} and the decay exponent."""
    if not (b > a > 0 and b > 1):
        raise ValueError("need b > a > 0 and b > 1")
    t = np.linspace(0.0, t_max, n)
    f = (1.0 + t) ** (-a)
    g = (1.0 + t) ** (-b)
    c = convolve(f, g, t)
    K = float(np.max(np.abs(c) * (1.0 + t) ** a))
    sel = (t >= window[0]) & (t <= window[1])
    coef, cov = np.polyfit(np.log1p(t[sel]), np.log(np.abs(c[sel])), 1, cov=True)
    ex = float(-coef[0])
    return ConvolutionBound(a, b, K, ex, float(math.sqrt(cov[0, 0])), bool(abs(ex - a) <= tol and np.isfinite(K)))
