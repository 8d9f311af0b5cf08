"""Monte Carlo correlation functions, tail integrals and decay diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DivergentTail, WindowBelowNoise, ZeroMeanObservable
from .gibbs_markov import GibbsMarkovMap
from .suspension import Observable, PowerTail, SuspensionFlow

N_BATCHES = 32


@dataclass
class CorrelationSeries:
    t_grid: np.ndarray
    rho: np.ndarray
    stderr: np.ndarray
    n_samples: int
    seed: int
    mean_v: float = float("nan")
    mean_v_se: float = float("nan")
    mean_w: np.ndarray = None
    mean_w_se: np.ndarray = None
    batch_rho: np.ndarray = None

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, float)
        self.rho = np.asarray(self.rho, float)
        self.stderr = np.asarray(self.stderr, float)
        if not (self.t_grid.shape == self.rho.shape == self.stderr.shape):
            raise ValueError("t_grid, rho and stderr must have the same length")


@dataclass
class TailIntegral:
    t_grid: np.ndarray
    values: np.ndarray
    source: str


@dataclass
class ExponentFit:
    slope: float
    stderr: float
    t_used: np.ndarray
    intercept: float


@dataclass
class AsymptoticReport:
    t: np.ndarray
    ratio: np.ndarray
    ratio_lo: np.ndarray
    ratio_hi: np.ndarray
    predicted: np.ndarray
    window: tuple
    band: tuple
    verdict: str
    coverage: bool
    support_ok: bool


@dataclass
class CLTReport:
    sigma2: float
    sigma2_se: float
    ad_statistic: float
    ad_critical_1pct: float
    normal_ok: bool
    n_time: int
    n_samples: int


def batch_streams(seed, n=N_BATCHES):
    """Independent Philox generators from one seed via SeedSequence spawning."""
    ss = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(n)]


def correlate(fl: SuspensionFlow, v: Observable, w: Observable, t_grid, n_samples: int, seed: int = 0,
              n_batches: int = N_BATCHES, chunk: int = 2**19) -> CorrelationSeries:
    """rho_{v,w}(t) = E[v(p) w(F_t p)] - E v E w over p ~ mu^phi, with batch-means errors."""
    t_grid = np.asarray(t_grid, float)
    if np.any(t_grid < 0):
        raise ValueError("t must be nonnegative")
    order = np.argsort(t_grid, kind="stable")
    ts = t_grid[order]
    nb = n_batches
    per = int(n_samples) // nb
    if per < 1:
        raise ValueError("need at least one sample per batch")
    nt = ts.size
    s_vw = np.zeros((nb, nt))
    s_w = np.zeros((nb, nt))
    s_v = np.zeros(nb)
    for b, rng in enumerate(batch_streams(seed, nb)):
        done = 0
        while done < per:
            m = min(chunk, per - done)
            st = fl.sample(m, rng)
            vv = v(st.y, st.u)
            s_v[b] += vv.sum()
            tcur = 0.0
            for k, t in enumerate(ts):
                if t > tcur:
                    fl.advance(st, t - tcur, rng)
                    tcur = t
                ww = w(st.y, st.u)
                s_vw[b, k] += vv @ ww
                s_w[b, k] += ww.sum()
            done += m
    mv_b = s_v / per
    mw_b = s_w / per
    rho_b = s_vw / per - mv_b[:, None] * mw_b
    n = per * nb
    mv = s_v.sum() / n
    mw = s_w.sum(axis=0) / n
    rho = s_vw.sum(axis=0) / n - mv * mw
    se = rho_b.std(axis=0, ddof=1) / math.sqrt(nb)
    scale = np.maximum(np.abs(rho), 1.0) * 1e-15
    se = np.maximum(se, scale)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return CorrelationSeries(t_grid, rho[inv], se[inv], n, int(seed),
                             float(mv), float(mv_b.std(ddof=1) / math.sqrt(nb)),
                             mw[inv], (mw_b.std(axis=0, ddof=1) / math.sqrt(nb))[inv], rho_b[:, inv])


def tail_integral(source, t_grid, empirical_beta: Optional[float] = None) -> TailIntegral:
    """int_t^infty mu(phi > s) ds.

    ``source`` is a PowerTail (closed form), a SuspensionFlow (quadrature of
    E(phi - t)^+), or a pair (t_emp, tail_emp) of empirical tail values, for
    which the trapezoid rule is continued beyond the last point by a power law
    with exponent ``empirical_beta`` (fitted if not given).
    """
    t = np.asarray(t_grid, float)
    if isinstance(source, PowerTail):
        beta, c = source.beta, source.c
        if beta <= 1.0:
            raise DivergentTail(f"tail exponent {beta} <= 1: integral diverges")
        t0 = c ** (1.0 / beta)
        with np.errstate(divide="ignore"):
            far = c * np.maximum(t, 1e-300) ** (1.0 - beta) / (beta - 1.0)
        near = (t0 - t) + c * t0 ** (1.0 - beta) / (beta - 1.0)
        return TailIntegral(t, np.where(t >= t0, far, near), "analytic")
    if isinstance(source, SuspensionFlow):
        return TailIntegral(t, source.tail_integral(t), "quadrature")
    te, fe = (np.asarray(a, float) for a in source)
    beta = empirical_beta
    if beta is None:
        k = max(2, te.size // 2)
        ok = fe[-k:] > 0
        beta = -np.polyfit(np.log(te[-k:][ok]), np.log(fe[-k:][ok]), 1)[0]
    if beta <= 1.0:
        raise DivergentTail(f"tail exponent {beta:.3g} <= 1: integral diverges")
    seg = 0.5 * (fe[1:] + fe[:-1]) * np.diff(te)
    cum = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    rem = fe[-1] * te[-1] / (beta - 1.0)
    at_nodes = cum + rem
    vals = np.interp(t, te, at_nodes)
    beyond = t > te[-1]
    vals[beyond] = fe[-1] * te[-1] ** beta * t[beyond] ** (1.0 - beta) / (beta - 1.0)
    vals = np.minimum.accumulate(vals)
    return TailIntegral(t, vals, "empirical")


def decay_exponent_fit(series: CorrelationSeries, window=(5.0, 200.0), n_sigma=3.0, min_points=3) -> ExponentFit:
    """Weighted least squares of log|rho| on log t over the initial above-noise run."""
    t = series.t_grid
    m = (t >= window[0]) & (t <= window[1])
    idx = np.flatnonzero(m)
    idx = idx[np.argsort(t[idx])]
    r = series.rho[idx]
    se = series.stderr[idx]
    above = np.abs(r) > n_sigma * se
    sign = np.sign(r[0]) if r.size else 0.0
    run = 0
    while run < idx.size and above[run] and np.sign(r[run]) == sign:
        run += 1
    if run < min_points:
        raise WindowBelowNoise(f"only {run} leading points of the window exceed {n_sigma} standard errors")
    use = idx[:run]
    x = np.log(t[use])
    yv = np.log(np.abs(series.rho[use]))
    sig = series.stderr[use] / np.abs(series.rho[use])
    sig = np.maximum(sig, 1e-12)
    A = np.stack([np.ones_like(x), x], axis=1) / sig[:, None]
    coef, *_ = np.linalg.lstsq(A, yv / sig, rcond=None)
    cov = np.linalg.inv(A.T @ A)
    res = (yv - A @ coef * sig) / sig
    dof = max(len(x) - 2, 1)
    # inflate by the reduced chi-square when the power law misfits
    scale = max(1.0, float(res @ res) / dof)
    return ExponentFit(float(coef[1]), float(math.sqrt(cov[1, 1] * scale)), t[use], float(coef[0]))


def mt_asymptotic_check(fl: SuspensionFlow, v: Observable, w: Observable, series: CorrelationSeries,
                        window=(20.0, 100.0), band=(0.8, 1.2), n_sigma=3.0) -> AsymptoticReport:
    """Ratio of rho(t) to |phi|_1^{-1} int v int w int_t^infty mu(phi > s) ds.

    Means are the Monte Carlo means carried by the series.  PASS requires
    every ratio point in the window to lie in the band; the coverage flag
    records whether every CI overlaps the band.
    """
    mv, sv = series.mean_v, series.mean_v_se
    mw = np.asarray(series.mean_w)
    sw = np.asarray(series.mean_w_se)
    if abs(mv) <= n_sigma * sv or np.any(np.abs(mw) <= n_sigma * sw):
        raise ZeroMeanObservable("int v or int w vanishes: the leading term is zero; "
                                 "use the mean-zero bound t^{-(beta-eps)} instead")
    t = series.t_grid
    sel = (t >= window[0]) & (t <= window[1])
    ti = t[sel]
    tail = fl.tail_integral(ti)
    pred = mv * mw[sel] * tail / fl.phi_norm
    ratio = series.rho[sel] / pred
    rel = np.sqrt((series.stderr[sel] / np.abs(series.rho[sel])) ** 2 + (sv / mv) ** 2
                  + (sw[sel] / mw[sel]) ** 2 + (fl.phi_norm_err / fl.phi_norm) ** 2)
    half = 1.96 * np.abs(ratio) * rel
    lo, hi = ratio - half, ratio + half
    inside = np.all((ratio >= band[0]) & (ratio <= band[1]))
    coverage = bool(np.all((hi >= band[0]) & (lo <= band[1])))
    support_ok = True
    for obs in (v, w):
        if obs.u_support is None or obs.u_support[1] > fl.roof.inf_phi + 1e-12:
            support_ok = False
    return AsymptoticReport(ti, ratio, lo, hi, pred, tuple(window), tuple(band),
                            "PASS" if inside else "FAIL", coverage, support_ok)


def mixing_verdict(series: CorrelationSeries, late_fraction=1.0 / 3.0, n_sigma=3.0):
    """'NON_MIXING' when |rho| on the late part of the grid does not drop below half its early size."""
    order = np.argsort(series.t_grid)
    r = np.abs(series.rho[order])
    se = series.stderr[order]
    k = max(1, int(len(r) * late_fraction))
    early = r[:k].max()
    late = r[-k:].max()
    late_signal = np.any(r[-k:] > n_sigma * se[-k:])
    return "NON_MIXING" if (late_signal and late >= 0.5 * early) else "DECAYING"


def clt_diagnostic(target, v, n_time: int, n_samples: int, seed: int = 0) -> CLTReport:
    """Variance and normality of n^{-1/2} sum_{j<n} v o T_j.

    ``target`` is a SuspensionFlow (time-one map of the flow, v on Y^phi) or a
    GibbsMarkovMap (the map itself, v on Y).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    if isinstance(target, SuspensionFlow):
        st = target.sample(n_samples, rng)
        S = np.zeros(n_samples)
        for j in range(n_time):
            if j:
                target.advance(st, 1.0, rng)
            S += v(st.y, st.u)
    elif isinstance(target, GibbsMarkovMap):
        ys = target.density
        y = _sample_density(target, n_samples, rng)
        S = np.zeros(n_samples)
        for j in range(n_time):
            if j:
                y = target.step(y, rng)
            S += v(y)
    else:
        raise TypeError("target must be a SuspensionFlow or a GibbsMarkovMap")
    Z = S / math.sqrt(n_time)
    Zc = Z - Z.mean()
    sigma2 = float(Zc @ Zc / (n_samples - 1))
    # batch variance error bar
    nb = N_BATCHES
    per = n_samples // nb
    bv = np.array([np.var(Z[i * per:(i + 1) * per], ddof=1) for i in range(nb)])
    se = float(bv.std(ddof=1) / math.sqrt(nb))
    if sigma2 <= 0.0 or not np.isfinite(sigma2):
        return CLTReport(0.0, se, 0.0, float("inf"), True, n_time, n_samples)
    ad = stats.anderson(Zc / math.sqrt(sigma2), "norm")
    crit = float(ad.critical_values[list(ad.significance_level).index(1.0)])
    return CLTReport(sigma2, se, float(ad.statistic), crit, bool(ad.statistic < crit), n_time, n_samples)


def _sample_density(gm: GibbsMarkovMap, n, rng):
    d = gm.density
    # inverse-cdf sampling of the piecewise linear density on the node grid
    u = rng.random(n)
    grid = d.nodes
    cdf = d.cdf(grid)
    k = np.clip(np.searchsorted(cdf, u) - 1, 0, len(grid) - 2)
    lo, hi = grid[k], grid[k + 1]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        below = d.cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def laplace_of_series(series: CorrelationSeries, s, tail_fn=None):
    """Trapezoid Laplace transform of a sampled correlation function.

    Returns (value, error bar from the Monte Carlo stderr).  ``tail_fn`` may
    supply an estimate of the contribution beyond the last grid point.
    """
    t = series.t_grid
    order = np.argsort(t)
    t = t[order]
    r = series.rho[order]
    se = series.stderr[order]
    s = complex(s)
    k = np.exp(-s * t)
    wts = np.zeros_like(t)
    dt = np.diff(t)
    wts[:-1] += 0.5 * dt
    wts[1:] += 0.5 * dt
    val = complex(np.sum(wts * k * r))
    err = float(np.sqrt(np.sum((wts * np.abs(k) * se) ** 2)))
    if tail_fn is not None:
        val += tail_fn(s, t[-1])
    return val, err
