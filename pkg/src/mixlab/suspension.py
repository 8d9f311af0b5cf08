"""Suspension semiflows over Gibbs-Markov maps.

A suspension point is (y, u) with 0 <= u < phi(y); the flow moves u up at unit
speed and identifies (y, phi(y)) with (F y, 0).  The invariant measure is
mu x Lebesgue normalised by |phi|_1.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import _kernels
from .errors import (AmbientOrbitEscapes, EqInfViolated, OutOfDomain,
                     PointOnBoundary, RoofNotBoundedBelow)
from .gibbs_markov import GibbsMarkovMap, LSVFirstReturn, separation_times

MAX_IDENT = _kernels.MAX_IDENT


# ---------------------------------------------------------------------------
# roof functions


@dataclass
class PowerTail:
    """Analytic tail model mu(phi > t) = min(1, c t^{-beta})."""
    c: float
    beta: float

    def __call__(self, t):
        t = np.asarray(t, float)
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, self.c * t**-self.beta)


class RoofFunction:
    """Positive roof on Y.  Subclasses implement ``__call__`` vectorised."""

    inf_phi: float = 0.0
    sup_phi: float = math.inf
    tail_model: Optional[PowerTail] = None
    C1: Optional[float] = None
    cap: Optional[float] = None

    def __call__(self, y):
        raise NotImplementedError

    @property
    def base(self):
        return self

    def describe(self):
        return {"kind": type(self).__name__}


class ConstantRoof(RoofFunction):
    def __init__(self, c=1.0):
        self.c = float(c)
        self.inf_phi = self.sup_phi = self.c

    def __call__(self, y):
        return np.full(np.shape(y), self.c)

    def describe(self):
        return {"kind": "constant", "c": self.c}


class BranchConstantRoof(RoofFunction):
    """phi = values[j] on branch j (ids of the map)."""

    def __init__(self, gm, values: dict):
        self.gm = gm
        self.values = {int(k): float(v) for k, v in values.items()}
        ids = np.array(gm.ids)
        self._table = np.array([self.values.get(int(i), np.nan) for i in ids])
        self.inf_phi = float(np.nanmin(self._table))
        self.sup_phi = float(np.nanmax(self._table))

    def __call__(self, y):
        idx = np.atleast_1d(self.gm.locate(y))
        if np.any(idx < 0):
            raise OutOfDomain("point outside the retained branches")
        out = self._table[idx]
        return out if np.ndim(y) else float(out[0])

    def describe(self):
        return {"kind": "branch-constant", "values": self.values}


class FunctionRoof(RoofFunction):
    def __init__(self, fn: Callable, inf_phi=None, sup_phi=None, tail_model=None, name="function"):
        self.fn = fn
        self.name = name
        self.tail_model = tail_model
        self._inf = inf_phi
        self.sup_phi = math.inf if sup_phi is None else float(sup_phi)
        self.inf_phi = float(inf_phi) if inf_phi is not None else float("nan")

    def __call__(self, y):
        return np.asarray(self.fn(np.asarray(y, float)), float)

    def describe(self):
        return {"kind": "function", "name": self.name}


class InducedRoof(RoofFunction):
    """phi(y) = sum_{l < tau(y)} h(f^l y) for the LSV first-return map.

    ``h`` is a positive constant, a coefficient list of a polynomial (used by
    the compiled kernels) or a general callable on [0, 1].
    """

    def __init__(self, gm: LSVFirstReturn, h=1.0):
        self.gm = gm
        self.gamma = gm.gamma
        if callable(h):
            self.h = h
            self.hc = None
        else:
            hc = np.atleast_1d(np.asarray(h, float))
            self.hc = np.ascontiguousarray(hc)
            self.h = lambda x, hc=hc: np.polynomial.polynomial.polyval(np.asarray(x, float), hc)
        xs = np.linspace(0.0, 1.0, 1001)
        hv = np.asarray(self.h(xs), float)
        if np.any(~np.isfinite(hv)) or hv.min() <= 0:
            raise RoofNotBoundedBelow("ambient return-time weight h must satisfy inf h > 0")
        self.h_inf = float(hv.min())
        self.h_sup = float(hv.max())
        self.inf_phi = self.h_inf
        self.sup_phi = math.inf
        # mu(phi > t) = O(t^{-beta}) with beta = 1/gamma; constant measured later
        self.tail_model = None
        self.beta = 1.0 / self.gamma

    def __call__(self, y):
        scalar = np.ndim(y) == 0
        y = np.ascontiguousarray(np.atleast_1d(y), dtype=float)
        if self.hc is not None:
            _, tau, phi = _kernels.first_return(y, self.gamma, self.hc)
            if np.any(tau < 0):
                raise AmbientOrbitEscapes("ambient orbit reached the neutral fixed point")
        else:
            phi = self._generic(y)
        return float(phi[0]) if scalar else phi

    def _generic(self, y):
        c = 2.0**self.gamma
        phi = np.asarray(self.h(y), float).copy()
        x = 2.0 * y - 1.0
        live = x < 0.5
        steps = 0
        while live.any():
            if np.any(x[live] <= 0.0) or steps > MAX_IDENT:
                raise AmbientOrbitEscapes("ambient orbit reached the neutral fixed point")
            xl = x[live]
            phi[live] += np.asarray(self.h(xl), float)
            x[live] = xl * (1.0 + c * xl**self.gamma)
            live = x < 0.5
            steps += 1
        return phi

    def describe(self):
        return {"kind": "induced", "gamma": self.gamma,
                "h": self.hc.tolist() if self.hc is not None else "callable"}


class TruncatedRoof(RoofFunction):
    """phi ^ N = min(phi, N)."""

    def __init__(self, base: RoofFunction, N: float):
        self._base = base
        self.N = float(N)
        self.cap = self.N
        self.inf_phi = min(base.inf_phi, self.N)
        self.sup_phi = min(base.sup_phi, self.N)
        self.tail_model = None

    @property
    def base(self):
        return self._base

    def __call__(self, y):
        return np.minimum(self._base(y), self.N)

    def describe(self):
        d = {"kind": "truncated", "N": self.N}
        d["base"] = self._base.describe()
        return d


def induced_roof(h, gm: LSVFirstReturn, tau_table=None) -> InducedRoof:
    roof = InducedRoof(gm, h)
    if tau_table is not None:
        # every retained branch must return in exactly its tabulated time
        mids = 0.5 * (tau_table.lo + tau_table.hi)
        _, tau, _ = _kernels.first_return(np.ascontiguousarray(mids), gm.gamma, np.array([1.0]))
        if np.any(tau != tau_table.tau):
            raise AmbientOrbitEscapes("ambient orbit disagrees with the tabulated return times")
    return roof


# ---------------------------------------------------------------------------
# observables


@dataclass
class Observable:
    """Real observable on Y^phi.

    ``fn(y, u)`` is vectorised.  Optional separable structure
    v(y, u) = y_factor(y) * u_profile(u) + offset is used by the Laplace
    transforms for closed forms.  ``u_support`` = (0, a) declares that v
    vanishes for u >= a.
    """
    fn: Callable
    class_tag: str = "F_theta"
    sup: Optional[float] = None
    name: str = "v"
    y_factor: Optional[Callable] = None
    u_profile: Optional[Callable] = None
    offset: float = 0.0
    u_support: Optional[tuple] = None
    u_derivative_bound: Optional[float] = None

    def __call__(self, y, u):
        return np.asarray(self.fn(np.asarray(y, float), np.asarray(u, float)), float)

    def scaled(self, a):
        yf = (lambda y, f=self.y_factor: a * f(y)) if self.y_factor is not None else None
        return Observable(lambda y, u: a * self.fn(y, u), self.class_tag,
                          None if self.sup is None else abs(a) * self.sup, f"{a}*{self.name}",
                          yf, self.u_profile, a * self.offset, self.u_support, self.u_derivative_bound)

    def shifted(self, c):
        """v - c."""
        return Observable(lambda y, u: self.fn(y, u) - c, self.class_tag,
                          None if self.sup is None else self.sup + abs(c), f"{self.name}-{c}",
                          self.y_factor, self.u_profile, self.offset - c, None, self.u_derivative_bound)


def separable_observable(y_factor, u_profile=None, offset=0.0, name="v", sup=None, u_support=None, class_tag="F_theta"):
    if u_profile is None:
        prof = lambda u: np.ones_like(u)
        prof.constant = True           # lets the transforms use closed forms
    else:
        prof = u_profile
    fn = lambda y, u: y_factor(y) * prof(u) + offset
    return Observable(fn, class_tag, sup, name, y_factor, prof, offset, u_support)


def constant_observable(c=1.0):
    return separable_observable(lambda y: np.full(np.shape(y), float(c)), None, 0.0, name=f"const{c}", sup=abs(c))


def smooth_bump(u, a=0.0, b=1.0):
    """C^infinity bump supported on (a, b) with maximum 1 at the midpoint."""
    u = np.asarray(u, float)
    x = (u - a) / (b - a)
    out = np.zeros_like(x)
    m = (x > 0) & (x < 1)
    xm = x[m]
    out[m] = np.exp(4.0 - 1.0 / (xm * (1.0 - xm)))
    return out


# ---------------------------------------------------------------------------
# sampling machinery


class AliasTable:
    """Walker/Vose alias table for a finite discrete distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, float)
        n = w.size
        p = w * n / w.sum()
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if p[i] < 1.0]
        large = [i for i in range(n) if p[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            self.prob[s] = p[s]
            self.alias[s] = l
            p[l] = p[l] + p[s] - 1.0
            (small if p[l] < 1.0 else large).append(l)
        self.n = n

    def sample(self, rng, size):
        k = rng.integers(0, self.n, size)
        keep = rng.random(size) < self.prob[k]
        return np.where(keep, k, self.alias[k])


class StratifiedSampler:
    """Exact rejection sampler for a density g(y) on Y over histogram bins.

    Bins are uniform cells refined by the branch endpoints; the envelope on
    each bin is 1.02 x the largest of six evaluations.  An optional power-law
    stratum on [1/2, a) covers the truncated tail of the LSV family, with
    proposal proportional to (2y-1)^{-kappa}.
    """

    def __init__(self, g, edges, tail=None, kappa=0.0, slack=1.02):
        self.g = g
        self.edges = edges
        lo, hi = edges[:-1], edges[1:]
        width = hi - lo
        probe = [lo, np.nextafter(hi, -np.inf)]
        for t in (0.1127016653792583, 0.5, 0.8872983346207417):
            probe.append(lo + t * width)
        vals = np.max(np.stack([self._g(p)[0] for p in probe]), axis=0)
        self.M = slack * vals
        wts = [width * self.M]
        self.tail = tail
        self.kappa = kappa
        if tail is not None:
            # tail = (a, x_top): stratum y in [1/2, a), x = 2y - 1 in (0, x_top)
            x_top = tail[1]
            xs = x_top * np.logspace(0.0, -8.0, 400)
            gx = self._g(0.5 * (1.0 + xs))[0] * xs**kappa
            self.K = slack * 1.05 * float(gx.max())
            self.tail_weight = self.K * x_top ** (1.0 - kappa) / (2.0 * (1.0 - kappa))
            wts.append(np.array([self.tail_weight]))
        self.table = AliasTable(np.concatenate(wts))
        self.n_bins = len(lo)
        self.violations = 0
        self.proposals = 0

    def _g(self, y):
        r = self.g(y)
        if isinstance(r, tuple):
            return np.asarray(r[0], float), r[1]
        return np.asarray(r, float), None

    def sample(self, n, rng, with_aux=False):
        """n exact draws; with_aux also returns the auxiliary rows g produced."""
        out = np.empty(n)
        aux_out = None
        got = 0
        while got < n:
            m = int((n - got) * 1.1) + 16
            k = self.table.sample(rng, m)
            y = np.empty(m)
            env = np.empty(m)
            binm = k < self.n_bins
            kb = k[binm]
            y[binm] = self.edges[kb] + rng.random(kb.size) * (self.edges[kb + 1] - self.edges[kb])
            env[binm] = self.M[kb]
            if self.tail is not None and (~binm).any():
                nt = int((~binm).sum())
                x = self.tail[1] * rng.random(nt) ** (1.0 / (1.0 - self.kappa))
                x = np.maximum(x, 1e-300)
                y[~binm] = 0.5 * (1.0 + x)
                env[~binm] = self.K * x ** (-self.kappa)
            gy, aux = self._g(y)
            self.violations += int(np.sum(gy > env))
            self.proposals += m
            acc = rng.random(m) * env < gy
            ya = y[acc][: n - got]
            out[got: got + ya.size] = ya
            if with_aux and aux is not None:
                if aux_out is None:
                    aux_out = np.empty((aux.shape[0], n))
                aux_out[:, got: got + ya.size] = aux[:, acc][:, : ya.size]
            got += ya.size
        return (out, aux_out) if with_aux else out


def _hist_edges(gm, n_bins):
    uni = np.linspace(gm.y_lo, gm.y_hi, n_bins + 1)
    ends = gm.endpoints
    e = np.unique(np.concatenate([uni, ends]))
    if isinstance(gm, LSVFirstReturn):
        a = min(b.lo for b in gm.branches)
        e = e[e >= a]
    return e


# ---------------------------------------------------------------------------
# samples and flow


@dataclass
class SuspensionPoint:
    y: float
    u: float


@dataclass
class SampleSet:
    y: np.ndarray
    u: np.ndarray
    phi: np.ndarray                  # untruncated base roof phi(y)
    fy: Optional[np.ndarray] = None  # F(y), kept for the compiled LSV path

    def copy(self):
        return SampleSet(self.y.copy(), self.u.copy(), self.phi.copy(), None if self.fy is None else self.fy.copy())

    def subset(self, mask):
        return SampleSet(self.y[mask], self.u[mask], self.phi[mask], None if self.fy is None else self.fy[mask])

    def __len__(self):
        return self.y.size

    def points(self):
        return [SuspensionPoint(float(a), float(b)) for a, b in zip(self.y, self.u)]


@dataclass
class EqInfAudit:
    C1: float
    max_ratio: float
    sup_inf_ratio: float
    n_pairs: int
    passed_sup_bound: bool


class SuspensionFlow:
    """Suspension semiflow Y^phi over a Gibbs-Markov map."""

    def __init__(self, gm: GibbsMarkovMap, roof: RoofFunction, n_bins=2**16, tail_nodes=2**14):
        self.gm = gm
        self.roof = roof
        self.cap = roof.cap
        base = roof.base
        self.kernel = isinstance(base, InducedRoof) and base.hc is not None
        self.hc = base.hc if self.kernel else None
        self._n_bins = n_bins
        self._tail_nodes = tail_nodes
        self.audit: Optional[EqInfAudit] = None
        self._build_quadrature()

    # -- exact-ish mu quadrature ------------------------------------------
    def _build_quadrature(self):
        gm = self.gm
        h = gm.density
        edges = _hist_edges(gm, self._n_bins)
        self.edges = edges
        lo, w = edges[:-1], np.diff(edges)
        x4, w4 = np.polynomial.legendre.leggauss(4)
        x2, w2 = np.polynomial.legendre.leggauss(2)
        nodes = (lo[:, None] + 0.5 * w[:, None] * (x4[None, :] + 1.0)).ravel()
        wts = (0.5 * w[:, None] * w4[None, :]).ravel() * h(nodes)
        nodes2 = (lo[:, None] + 0.5 * w[:, None] * (x2[None, :] + 1.0)).ravel()
        wts2 = (0.5 * w[:, None] * w2[None, :]).ravel() * h(nodes2)
        phi = self.roof(nodes)
        phi2 = self.roof(nodes2)
        qn, qw, qp = [nodes], [wts], [phi]
        err = abs(float(wts @ phi - wts2 @ phi2))
        self.tail_stratum = None
        if isinstance(gm, LSVFirstReturn):
            a = min(b.lo for b in gm.branches)
            x_top = 2.0 * a - 1.0
            g = gm.gamma
            kap = 1.0 / (1.0 - g)

            def tail_rule(m):
                z = (np.arange(m) + 0.5) / m
                x = x_top * z**kap
                y = 0.5 * (1.0 + x)
                jac = 0.5 * x_top * kap * z ** (kap - 1.0) / m
                return y, jac * h(y)

            ty, tw = tail_rule(self._tail_nodes)
            tp = self.roof(ty)
            ty2, tw2 = tail_rule(self._tail_nodes // 2)
            err += abs(float(tw @ tp - tw2 @ self.roof(ty2)))
            qn.append(ty)
            qw.append(tw)
            qp.append(tp)
            self.tail_stratum = (a, x_top)
        self.q_nodes = np.concatenate(qn)
        self.q_weights = np.concatenate(qw)
        self.q_phi = np.concatenate(qp)
        mass = self.q_weights.sum()
        self.q_weights /= mass
        self.phi_norm = float(self.q_weights @ self.q_phi)
        self.phi_norm_err = err + abs(mass - 1.0) * self.phi_norm
        self.phi2_mean = float(self.q_weights @ self.q_phi**2)

    def tail_prob(self, t):
        """mu(phi > t) from the quadrature rule."""
        t = np.atleast_1d(np.asarray(t, float))
        order = np.argsort(self.q_phi)
        ps = self.q_phi[order]
        cw = np.concatenate([np.cumsum(self.q_weights[order][::-1])[::-1], [0.0]])
        k = np.searchsorted(ps, t, side="right")
        return cw[k]

    def tail_integral(self, t):
        """int_t^infty mu(phi > s) ds = E_mu[(phi - t)^+]."""
        t = np.atleast_1d(np.asarray(t, float))
        order = np.argsort(self.q_phi)
        ps = self.q_phi[order]
        ws = self.q_weights[order]
        m1 = np.concatenate([np.cumsum((ws * ps)[::-1])[::-1], [0.0]])
        m0 = np.concatenate([np.cumsum(ws[::-1])[::-1], [0.0]])
        k = np.searchsorted(ps, t, side="right")
        return m1[k] - t * m0[k]

    def integrate_mu(self, f):
        """int_Y f dmu using the flow's quadrature rule (f sees node values)."""
        return float(self.q_weights @ np.asarray(f(self.q_nodes)))

    # -- sampling --------------------------------------------------------
    def roof_values(self, y):
        return self.roof(y)

    def _sampler(self, weighted):
        key = "_s_phi" if weighted else "_s_mu"
        if not hasattr(self, key):
            h = self.gm.density
            if weighted and self.kernel:
                def g(y):
                    fy, tau, phi = _kernels.first_return(np.ascontiguousarray(y, dtype=float), self.gm.gamma, self.hc)
                    return h(y) * self.effective(phi), np.stack([fy, phi])
                kappa = 0.0 if self.cap is not None else self.gm.gamma
            elif weighted:
                g = lambda y: h(y) * self.roof(y)
                kappa = 0.0 if self.cap is not None else self.gm.gamma if isinstance(self.gm, LSVFirstReturn) else 0.0
            else:
                g = h
                kappa = 0.0
            setattr(self, key, StratifiedSampler(g, self.edges, self.tail_stratum, kappa))
        return getattr(self, key)

    def sample_mu(self, n, rng):
        return self._sampler(False).sample(int(n), rng)

    def sample(self, n, rng) -> SampleSet:
        """n independent draws from mu^phi."""
        y, aux = self._sampler(True).sample(int(n), rng, with_aux=True)
        if aux is None:
            return self.state_at(y, None, rng)
        fy, phi = aux[0], aux[1]
        if np.any(fy <= 0.0):
            raise AmbientOrbitEscapes("sample on the neutral fixed point")
        u = rng.random(y.size) * self.effective(phi)
        return SampleSet(y, u, phi, fy)

    def state_at(self, y, u=None, rng=None) -> SampleSet:
        y = np.ascontiguousarray(np.atleast_1d(y), dtype=float)
        if self.kernel:
            fy, tau, phi = _kernels.first_return(y, self.gm.gamma, self.hc)
            if np.any(tau < 0):
                raise AmbientOrbitEscapes("sample on the neutral fixed point")
        else:
            fy = None
            phi = np.asarray(self.roof.base(y), float)
        r = phi if self.cap is None else np.minimum(phi, self.cap)
        if u is None:
            u = rng.random(y.size) * r
        else:
            u = np.array(np.broadcast_to(np.asarray(u, float), y.shape))
        return SampleSet(y, u, phi, fy)

    def effective(self, phi):
        return phi if self.cap is None else np.minimum(phi, self.cap)

    # -- dynamics ----------------------------------------------------------
    def advance(self, st: SampleSet, dt, rng=None, cap=None):
        """Flow every sample forward by dt in place; returns identification counts."""
        c = self.cap if cap is None else cap
        capv = math.inf if c is None else float(c)
        if self.kernel:
            counts = _kernels.advance(st.y, st.fy, st.phi, st.u, float(dt), self.gm.gamma, self.hc, capv)
            if np.any(counts < 0):
                raise AmbientOrbitEscapes("orbit escaped or identification cap exceeded")
            return counts
        st.u += dt
        counts = np.zeros(st.y.size, dtype=np.int64)
        base = self.roof.base
        for _ in range(MAX_IDENT):
            r = np.minimum(st.phi, capv)
            m = st.u >= r
            if not m.any():
                break
            idx = np.flatnonzero(m)
            st.u[idx] -= r[idx]
            st.y[idx] = self.gm.step(st.y[idx], rng)
            st.phi[idx] = base(st.y[idx])
            counts[idx] += 1
        else:
            raise AmbientOrbitEscapes("identification cap exceeded")
        return counts

    def flow_point(self, point: SuspensionPoint, t):
        """Checked single-point flow; returns (point, identifications)."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        y, u = float(point.y), float(point.u) + float(t)
        n = 0
        r = float(self.effective(np.asarray(self.roof.base(np.array([y]))))[0])
        while u >= r:
            u -= r
            y = self.gm.apply(y)
            r = float(self.effective(np.asarray(self.roof.base(np.array([y]))))[0])
            n += 1
            if n > MAX_IDENT:
                raise AmbientOrbitEscapes("identification cap exceeded")
        return SuspensionPoint(y, u), n

    def truncated(self, N) -> "SuspensionFlow":
        return make_suspension(self.gm, TruncatedRoof(self.roof.base, N), eq_inf_cap=None)

    # -- ambient projection (induced roofs with polynomial h) ----------------
    def project(self, y, u):
        if not self.kernel:
            raise TypeError("ambient projection needs an induced roof with polynomial h")
        return _kernels.project(np.ascontiguousarray(y, dtype=float), np.ascontiguousarray(u, dtype=float),
                                self.gm.gamma, self.hc)


def flow(fl: SuspensionFlow, point, t):
    return fl.flow_point(point if isinstance(point, SuspensionPoint) else SuspensionPoint(*point), t)


def sample_invariant(fl: SuspensionFlow, n, rng_seed) -> SampleSet:
    rng = np.random.Generator(np.random.Philox(rng_seed))
    return fl.sample(n, rng)


def eq_inf_audit(fl: SuspensionFlow, pairs_per_branch=8, seed=0, max_branches=None) -> EqInfAudit:
    """max |phi(y)-phi(y')| / (d_theta(y,y') inf_{Y_j} phi) over sampled same-branch pairs."""
    gm = fl.gm
    rng = np.random.default_rng(seed)
    theta = gm.theta
    branches = gm.branches if max_branches is None else gm.branches[:max_branches]
    ys, ys2, infs = [], [], []
    worst_sup = 1.0
    for b in branches:
        grid = np.linspace(b.lo, np.nextafter(b.hi, -np.inf), 33)
        pv = np.asarray(fl.roof(grid), float)
        inf_b = float(pv.min())
        if inf_b <= 0:
            raise RoofNotBoundedBelow(f"roof not positive on branch {b.id}")
        worst_sup = max(worst_sup, float(pv.max()) / inf_b)
        a = b.lo + rng.random(pairs_per_branch) * b.width
        # separations spread over several scales
        scale = b.width * 10.0 ** (-rng.integers(0, 6, pairs_per_branch).astype(float))
        a2 = np.clip(a + scale * rng.uniform(-1, 1, pairs_per_branch), b.lo, np.nextafter(b.hi, -np.inf))
        ys.append(a)
        ys2.append(a2)
        infs.append(np.full(pairs_per_branch, inf_b))
    y1 = np.concatenate(ys)
    y2 = np.concatenate(ys2)
    infv = np.concatenate(infs)
    s = separation_times(gm, y1, y2, n_max=60)
    keep = np.isfinite(s) & (y1 != y2)
    d = theta ** s[keep]
    dphi = np.abs(fl.roof(y1[keep]) - fl.roof(y2[keep]))
    ratio = dphi / (d * infv[keep])
    max_ratio = float(ratio.max()) if ratio.size else 0.0
    C1 = max(1.0, max_ratio, 0.5 * worst_sup)
    return EqInfAudit(C1, max_ratio, worst_sup, int(keep.sum()), worst_sup <= 2.0 * C1)


def make_suspension(gm: GibbsMarkovMap, roof: RoofFunction, eq_inf_cap: Optional[float] = 1e3,
                    audit_pairs=8, n_bins=2**16) -> SuspensionFlow:
    """Validate the roof and build the flow (|phi|_1, sampler, eq:inf audit)."""
    if isinstance(roof, (int, float)):
        roof = ConstantRoof(roof)
    a = min(b.lo for b in gm.branches)
    probe = np.concatenate([gm.grid[gm.grid >= a], [0.5 * (b.lo + b.hi) for b in gm.branches]])
    vals = np.asarray(roof(probe), float)
    if np.any(~np.isfinite(vals)) or vals.min() <= 0 or not (roof.inf_phi > 0 or math.isnan(roof.inf_phi)):
        raise RoofNotBoundedBelow("roof must satisfy inf phi > 0 on every retained branch")
    if math.isnan(roof.inf_phi):
        roof.inf_phi = float(vals.min())
    fl = SuspensionFlow(gm, roof, n_bins=n_bins)
    if eq_inf_cap is not None:
        fl.audit = eq_inf_audit(fl, audit_pairs)
        roof.C1 = fl.audit.C1
        if fl.audit.C1 > eq_inf_cap:
            raise EqInfViolated(f"measured C1 = {fl.audit.C1:.3g} exceeds the configured slack {eq_inf_cap}")
    return fl


# ---------------------------------------------------------------------------
# tails, cross-checks and dumps


@dataclass
class RoofTail:
    t: np.ndarray
    tail: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    exponent: float
    exponent_se: float
    n: int


def wilson_interval(k, n, z=1.96):
    k = np.asarray(k, float)
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return np.maximum(centre - half, 0.0), np.minimum(centre + half, 1.0)


def fit_tail_exponent(t, tail, lo=None, hi=None):
    """Weighted log-log fit of tail(t); returns (beta, stderr)."""
    t = np.asarray(t, float)
    tail = np.asarray(tail, float)
    ok = tail > 0
    if ok.sum() < 2:
        return float("nan"), float("nan")
    x = np.log(t[ok])
    yv = np.log(tail[ok])
    if lo is not None:
        sig = np.maximum((np.log(hi[ok]) - np.log(np.maximum(lo[ok], 1e-300))) / (2 * 1.96), 1e-12)
    else:
        sig = np.ones_like(x)
    A = np.stack([np.ones_like(x), x], axis=1) / sig[:, None]
    coef, *_ = np.linalg.lstsq(A, yv / sig, rcond=None)
    cov = np.linalg.pinv(A.T @ A)
    if lo is None and len(x) > 2:
        res = yv - (coef[0] + coef[1] * x)
        cov = cov * (res @ res) / (len(x) - 2)
    return float(-coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def roof_tail(fl: SuspensionFlow, t_grid, n_samples=10**6, seed=0, window=None) -> RoofTail:
    """Monte Carlo mu(phi > t) with Wilson intervals and a fitted exponent."""
    t = np.asarray(t_grid, float)
    rng = np.random.Generator(np.random.Philox(seed))
    y = fl.sample_mu(n_samples, rng)
    phi = np.sort(fl.roof(y))
    k = n_samples - np.searchsorted(phi, t, side="right")
    tail = k / n_samples
    lo, hi = wilson_interval(k, n_samples)
    w = np.ones(t.size, bool) if window is None else (t >= window[0]) & (t <= window[1])
    w &= k >= 10
    beta, se = fit_tail_exponent(t[w], tail[w], lo[w], hi[w]) if w.sum() >= 2 else (float("nan"), float("nan"))
    return RoofTail(t, tail, lo, hi, beta, se, n_samples)


def kac_birkhoff_phi_norm(fl: SuspensionFlow, n_orbits=1000, n_steps=2000, seed=0):
    """Cross-check of |phi|_1 by Birkhoff averages of phi along F-orbits."""
    rng = np.random.default_rng(seed)
    y = fl.sample_mu(n_orbits, rng)
    acc = np.zeros(n_orbits)
    for _ in range(n_steps):
        acc += fl.roof(y)
        y = fl.gm.step(y, rng)
    per = acc / n_steps
    return float(per.mean()), float(per.std(ddof=1) / math.sqrt(n_orbits))


def two_sample_ks(a, b):
    return stats.ks_2samp(a, b)


def dump_samples(samples: SampleSet, path, meta: dict):
    """Little-endian (y, u) rows plus a JSON sidecar."""
    arr = np.empty((len(samples), 2), dtype="<f8")
    arr[:, 0] = samples.y
    arr[:, 1] = samples.u
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())
    side = dict(meta)
    side.update({"n": len(samples), "columns": ["y", "u"], "dtype": "<f8"})
    with open(str(path) + ".json", "w") as fh:
        json.dump(side, fh, indent=1, sort_keys=True)


def load_samples(path):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    arr = np.fromfile(path, dtype="<f8").reshape(-1, 2)
    return arr[:, 0], arr[:, 1], meta


def lifted_observable(fl: SuspensionFlow, A: Callable, name="lifted", sup=None) -> Observable:
    """V(x, s) = (1 - s/h(x)) A(x) + (s/h(x)) A(f x) on the ambient suspension, lifted to Y^phi.

    With h = 1 this is the linear interpolation of A along the flow line,
    Lipschitz in the flow direction.
    """
    base = fl.roof.base
    gamma = fl.gm.gamma
    c = 2.0**gamma

    def fn(y, u):
        x, s = fl.project(y, u)
        hx = np.asarray(base.h(x), float)
        fx = np.where(x < 0.5, x * (1.0 + c * x**gamma), 2.0 * x - 1.0)
        lam = s / hx
        return (1.0 - lam) * A(x) + lam * A(fx)

    return Observable(fn, "F_theta_eta", sup, name)
