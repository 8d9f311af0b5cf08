"""Criteria for the absence of approximate eigenfunctions.

Periodic-orbit periods and a Diophantine test on period ratios, the
good-asymptotics fit of periods along a family of orbits, the temporal
distance function on symbolic skew models with a box-counting dimension
estimate, and a direct probe of M_b^n u = e^{i psi} u on a finite subsystem.
All verdicts here are numerical evidence, never certificates.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np
from scipy import optimize

from .errors import (DegenerateTriple, FitDegenerate, PrecisionExhausted, ScaleRangeTooNarrow,
                     SolverDiverged, WindowTooShort)
from .gibbs_markov import CylinderWord, IntervalMap, compose_inverse
from .suspension import RoofFunction

ACCEPT, REJECT, UNKNOWN = "ACCEPT", "REJECT", "UNKNOWN"
ABSENT, INCONCLUSIVE = "ABSENT", "INCONCLUSIVE"


# ---------------------------------------------------------------------------
# periodic orbits


@dataclass
class PeriodicOrbit:
    word: CylinderWord
    point: float
    flow_period: float
    orbit: np.ndarray
    residual: float


def _parse_word(gm: IntervalMap, word):
    if isinstance(word, CylinderWord):
        return list(word.symbols)
    if isinstance(word, str):
        ids = {str(i): i for i in gm.ids}
        if all(ch in ids for ch in word):
            return [ids[ch] for ch in word]
        return [ids[tok] for tok in word.split(",")]
    return list(word)


def _inside(gm, sym, y):
    b = gm.branch(sym)
    return min(max(y, b.lo), float(np.nextafter(b.hi, b.lo)))


def _fixed_point(gm, syms, tol, max_iter):
    z = 0.5 * (gm.y_lo + gm.y_hi)
    for it in range(max_iter):
        y, d = compose_inverse(gm, syms, np.array([z]))
        y = float(y[0])
        if d[0] <= 1.0:
            raise SolverDiverged("composed inverse branch is not a contraction")
        if abs(y - z) <= tol * max(1.0, abs(y)):
            return y
        z = y
    raise SolverDiverged(f"fixed-point iteration did not settle in {max_iter} steps")


def periodic_point(gm: IntervalMap, word, roof: Optional[RoofFunction] = None, tol=1e-14, max_iter=2000) -> PeriodicOrbit:
    """Periodic point with itinerary ``word`` and its flow period phi_p(y).

    Each orbit point is computed as the fixed point of the correspondingly
    rotated inverse branch, so no forward iteration error accumulates.
    """
    syms = _parse_word(gm, word)
    if not syms:
        raise ValueError("empty word")
    for sym in syms:
        gm.branch(sym)
    p = len(syms)
    orbit = np.array([_fixed_point(gm, syms[k:] + syms[:k], tol, max_iter) for k in range(p)])
    y = orbit[0]
    img = gm.branch(syms[-1]).forward(np.array([_inside(gm, syms[-1], orbit[-1])]))[0]
    res = abs(img - y)
    if roof is None:
        L = float(p)
    else:
        pts = np.array([_inside(gm, syms[k], orbit[k]) for k in range(p)])
        L = float(np.sum(roof(pts)))
    return PeriodicOrbit(CylinderWord(tuple(syms)), float(y), L, orbit, float(res))


# ---------------------------------------------------------------------------
# Diophantine heuristic


@dataclass
class DiophantineVerdict:
    verdict: str
    quotients: list
    trusted_depth: int
    exponent: float
    terminated: bool
    note: str = "heuristic: finite continued-fraction data cannot decide Diophantine type"


def _as_fraction(x, precision):
    if isinstance(x, Fraction):
        return x, precision if precision is not None else 10**6
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x)), precision if precision is not None else 10**6
    if isinstance(x, mpmath.mpf):
        man, exp = x.man_exp
        fr = Fraction(int(man)) * (Fraction(2) ** int(exp))
        return fr, precision if precision is not None else mpmath.mp.prec
    if isinstance(x, str):
        with mpmath.workprec(precision or 3400):
            return _as_fraction(mpmath.mpf(x), precision or 3400)
    xf = float(x)
    if not math.isfinite(xf):
        raise ValueError("x must be finite")
    return Fraction(xf), precision if precision is not None else 53


def diophantine_verdict(x, depth=40, precision: Optional[int] = None, poly_c=50.0, poly_d=2.0,
                        min_depth=8) -> DiophantineVerdict:
    """Continued-fraction heuristic for Diophantine type.

    ``precision`` is the number of trustworthy binary digits of x (53 for a
    float).  A partial quotient a_{k+1} is trusted only while the convergent
    denominator satisfies q_k^2 < 2^precision / max(|x|, 1).  ACCEPT if all
    trusted quotients obey a_k <= poly_c k^poly_d, REJECT if the expansion
    terminates inside the trusted range (x is rational to working precision)
    or a quotient exceeds that growth.
    """
    fr, prec = _as_fraction(x, precision)
    limit = Fraction(2) ** int(prec) / max(abs(fr), Fraction(1))
    quotients = []
    q_prev, q = 0, 1
    rem = fr
    exponent = 2.0
    terminated = False
    for k in range(depth + 1):
        a = math.floor(rem)
        if k > 0 and q * q >= limit:
            break
        quotients.append(int(a))
        if k > 0 and q > 1:
            exponent = max(exponent, 2.0 + math.log(max(a, 1)) / math.log(q))
        q_prev, q = q, a * q + q_prev
        frac = rem - a
        if frac == 0:
            terminated = True
            break
        rem = 1 / frac
    trusted = len(quotients)
    if terminated:
        return DiophantineVerdict(REJECT, quotients, trusted, math.inf, True)
    tail = quotients[1:]
    for k, a in enumerate(tail, start=1):
        if a > poly_c * k**poly_d:
            return DiophantineVerdict(REJECT, quotients, trusted, exponent, False)
    if trusted - 1 < min(min_depth, depth):
        raise PrecisionExhausted(f"only {trusted - 1} trustworthy partial quotients at {prec} bits")
    return DiophantineVerdict(ACCEPT, quotients, trusted, exponent, False)


@dataclass
class TripleReport:
    periods: tuple
    ratio: float
    verdict: str
    diophantine: Optional[DiophantineVerdict]


def period_triple_test(gm: IntervalMap, roof: RoofFunction, words=None, tol=1e-12, **kw) -> TripleReport:
    """Ratio (L1 - L3)/(L2 - L3) of three fixed-point periods, judged by the Diophantine heuristic."""
    if words is None:
        words = [[i] for i in gm.ids[:3]]
    if len(words) != 3:
        raise ValueError("need exactly three words")
    syms = [_parse_word(gm, wd) for wd in words]
    if any(len(s) != 1 for s in syms) or len({s[0] for s in syms}) != 3:
        raise ValueError("need three distinct one-symbol words")
    L = tuple(periodic_point(gm, s, roof).flow_period for s in syms)
    den = L[1] - L[2]
    if abs(den) < tol * max(1.0, abs(L[2])):
        raise DegenerateTriple(f"L2 - L3 = {den:.3e} is below tolerance")
    ratio = (L[0] - L[2]) / den
    try:
        dv = diophantine_verdict(ratio, **kw)
    except PrecisionExhausted:
        return TripleReport(L, ratio, UNKNOWN, None)
    return TripleReport(L, ratio, ABSENT if dv.verdict == ACCEPT else INCONCLUSIVE, dv)


# ---------------------------------------------------------------------------
# good asymptotics


@dataclass
class GoodAsymptoticsFit:
    L0: float
    kappa: float
    gamma: float
    omega: float
    E: float
    phase: float
    envelope: np.ndarray
    residuals: np.ndarray
    liminf_ok: bool
    omega_case: str          # "zero" or "interior"


def _varpro(N, L, gamma, omega):
    g = gamma**N
    X = np.stack([N, np.ones_like(N), g * np.cos(N * omega), g * np.sin(N * omega)], axis=1)
    if abs(omega) < 1e-12 or abs(omega - math.pi) < 1e-12:
        X = X[:, :3]
    coef, *_ = np.linalg.lstsq(X, L, rcond=None)
    return coef, L - X @ coef


def good_asymptotics_fit(L_sequence, N_range=None, noise=None, omega_zero_tol=1e-4) -> GoodAsymptoticsFit:
    """Fit L_N = N L0 + kappa + E gamma^N cos(N omega + omega_0) by variable projection.

    The model is linear in (L0, kappa, E cos omega_0, -E sin omega_0) for
    fixed (gamma, omega); those two are found by a grid search refined with
    bounded least squares.
    """
    L = np.asarray(L_sequence, float)
    N = np.arange(1, L.size + 1, dtype=float) if N_range is None else np.asarray(N_range, float)
    if L.size < 12:
        raise ValueError("need at least 12 terms")
    scale = max(1.0, float(np.max(np.abs(L))))
    noise = 1e-12 * scale if noise is None else noise
    lin = np.polyfit(N, L, 1)
    if np.max(np.abs(L - np.polyval(lin, N))) < 100 * noise:
        raise FitDegenerate("no remainder beyond the affine part (below numeric noise)")

    def obj0(p):
        return _varpro(N, L, p[0], 0.0)[1]

    def obj(p):
        return _varpro(N, L, p[0], p[1])[1]

    gs = np.linspace(0.05, 0.95, 19)
    g0 = gs[int(np.argmin([np.sum(obj0((g,)) ** 2) for g in gs]))]
    sol0 = optimize.least_squares(obj0, x0=[g0], bounds=([1e-6], [1.0 - 1e-9]),
                                  xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    rss0 = float(np.sum(sol0.fun**2))
    best = None
    for g in np.linspace(0.1, 0.95, 12):
        for w in np.linspace(0.1, math.pi - 0.1, 16):
            r = np.sum(obj((g, w)) ** 2)
            if best is None or r < best[0]:
                best = (r, g, w)
    sol1 = optimize.least_squares(obj, x0=[best[1], best[2]], bounds=([1e-6, 1e-6], [1.0 - 1e-9, math.pi]),
                                  xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    rss1 = float(np.sum(sol1.fun**2))
    # the oscillating model has two more parameters: require a clear gain
    if rss0 <= max(4.0 * rss1, N.size * (10 * noise) ** 2) or sol1.x[1] < omega_zero_tol:
        case, gamma, omega = "zero", float(sol0.x[0]), 0.0
        coef, res = _varpro(N, L, gamma, omega)
        A, B = coef[2], 0.0
    else:
        case, gamma, omega = "interior", float(sol1.x[0]), float(sol1.x[1])
        coef, res = _varpro(N, L, gamma, omega)
        A, B = coef[2], coef[3]
    E = float(math.hypot(A, B))
    phase = float(math.atan2(-B, A))
    env = np.abs(L - N * coef[0] - coef[1]) / gamma**N
    return GoodAsymptoticsFit(float(coef[0]), float(coef[1]), gamma, omega, E, phase, env, res,
                              bool(E > 1e3 * noise), case)


# ---------------------------------------------------------------------------
# approximate eigenfunction probes


def _z0_points(gm, Z0):
    """Z0 as explicit points, or (alphabet, word_length): periodic points of all such words."""
    if isinstance(Z0, tuple) and len(Z0) == 2 and np.ndim(Z0[1]) == 0:
        alphabet, k = Z0
        pts = [periodic_point(gm, list(wd)).point for wd in itertools.product(list(alphabet), repeat=int(k))]
        return np.array(pts)
    return np.asarray(Z0, float)


def _mb_power(gm, roof, y, b, n):
    """(phase increment b phi_n(y), F^n y) along forward orbits."""
    z = np.asarray(y, float).copy()
    acc = np.zeros_like(z)
    for _ in range(n):
        acc += b * np.asarray(roof(z), float)
        z = gm.step(z)
    return acc, z


def _deviation_from(mb, u0):
    c = np.mean(mb * np.conj(u0))
    psi = math.atan2(c.imag, c.real) if abs(c) > 0 else 0.0
    return float(np.max(np.abs(mb - np.exp(1j * psi) * u0))), psi


def mb_power_deviation(gm: IntervalMap, roof: RoofFunction, u: Callable, b, n, Z0, return_phase=False):
    """min over psi of sup_{Z0} |M_b^n u - e^{i psi} u|, M_b v = e^{ib phi} v o F.

    psi is taken as the mean direction of (M_b^n u) conj(u), which is the
    exact minimiser of the mean-square deviation.
    """
    y = _z0_points(gm, Z0)
    u0 = np.asarray(u(y), complex)
    if np.max(np.abs(np.abs(u0) - 1.0)) > 1e-10:
        raise ValueError("u must be unimodular")
    ph, z = _mb_power(gm, roof, y, b, int(n))
    mb = np.exp(1j * ph) * np.asarray(u(z), complex)
    dev, psi = _deviation_from(mb, u0)
    return (dev, psi) if return_phase else dev


@dataclass
class ApproxEigProbe:
    b_grid: np.ndarray
    xi: float
    n: np.ndarray
    deviations: np.ndarray
    slope: float
    flag: bool
    coefficients: list
    note: str = "evidence only: absence cannot be certified by a finite scan"


def approx_eig_scan(gm: IntervalMap, roof: RoofFunction, b_grid, xi, Z0, trials=4, seed=0, C=1.0, n_basis=16,
                    passes=3, zero_tol=1e-8) -> ApproxEigProbe:
    """Minimal deviations over phases theta = b sum_k c_k psi_k (hat functions psi_k).

    Coefficients are bounded by C|Y|/2, the range of a C-Lipschitz phase
    modulo constants.  Each b starts from the best coefficients of the previous b
    plus random restarts; a few coordinate-descent passes on a coefficient
    grid are followed by a least-squares polish.  The flag is raised when the
    deviations vanish or decay like a negative power of b.
    """
    b_grid = np.sort(np.asarray(b_grid, float))
    if np.any(b_grid < 2):
        raise ValueError("b_grid must lie in [2, inf)")
    if xi <= 0:
        raise ValueError("xi must be positive")
    rng = np.random.default_rng(seed)
    y = _z0_points(gm, Z0)
    knots = np.linspace(gm.y_lo, gm.y_hi, n_basis)
    hw = knots[1] - knots[0]
    width = gm.y_hi - gm.y_lo
    cmax = 0.5 * C * width                    # |theta/b| range of a C-Lipschitz phase, up to a constant

    def basis(x):
        return np.maximum(0.0, 1.0 - np.abs(np.asarray(x)[:, None] - knots[None, :]) / hw)

    Py = basis(y)
    devs, ns, coefs = [], [], []
    prev = np.zeros(n_basis)
    for b in b_grid:
        n = max(1, int(math.floor(xi * math.log(b))))
        ph, z = _mb_power(gm, roof, y, b, n)
        Pz = basis(z)

        def resid(c):
            th_y = b * (Py @ c)
            th_z = b * (Pz @ c)
            mb = np.exp(1j * (ph + th_z))
            u0 = np.exp(1j * th_y)
            cm = np.mean(mb * np.conj(u0))
            psi = math.atan2(cm.imag, cm.real)
            d = mb - np.exp(1j * psi) * u0
            return np.concatenate([d.real, d.imag])

        def sup_dev(c):
            r = resid(c)
            k = r.size // 2
            return float(np.max(np.hypot(r[:k], r[k:])))

        starts = [prev.copy(), np.zeros(n_basis)] + [rng.uniform(-cmax, cmax, n_basis) for _ in range(trials)]
        best_c, best_d = None, math.inf
        grid = np.linspace(-cmax, cmax, 9)
        for c in starts:
            c = c.copy()
            for _ in range(passes):
                for k in range(n_basis):
                    vals = []
                    for g in grid:
                        c[k] = g
                        vals.append(sup_dev(c))
                    c[k] = grid[int(np.argmin(vals))]
            try:
                sol = optimize.least_squares(resid, c, bounds=(-cmax, cmax), xtol=1e-14, ftol=1e-14, max_nfev=400)
                c = sol.x
            except ValueError:
                pass
            d = sup_dev(c)
            if d < best_d:
                best_c, best_d = c.copy(), d
            if best_d < zero_tol:
                break
        prev = best_c
        devs.append(best_d)
        ns.append(n)
        coefs.append(best_c)
    devs = np.array(devs)
    pos = devs > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(b_grid[pos]), np.log(devs[pos]), 1)[0])
    else:
        slope = -math.inf
    flag = bool(np.all(devs < zero_tol) or (slope < -0.5 and devs[-1] < 0.1))
    return ApproxEigProbe(b_grid, float(xi), np.array(ns), devs, slope, flag, coefs)


# ---------------------------------------------------------------------------
# temporal distance on symbolic skew models


@dataclass
class SymbolicSkewModel:
    """Full shift on ``alphabet_size`` symbols with a roof of K+1 future coordinates.

    ``roof`` takes an integer array of shape (..., K+1) holding (y_0, ..., y_K)
    and returns the roof value.  Points are pairs (past, future) with
    past = (y_{-L}, ..., y_{-1}) and future = (y_0, y_1, ...).
    """
    alphabet_size: int
    roof: Callable
    K: int
    gamma: float = 0.5
    weights: Optional[np.ndarray] = None
    inf_phi: Optional[float] = None

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.full(self.alphabet_size, 1.0 / self.alphabet_size)
        words = np.array(list(itertools.product(range(self.alphabet_size), repeat=self.K + 1)))
        vals = np.asarray(self.roof(words), float)
        self.inf_phi = float(vals.min())
        self.osc = float(vals.max() - vals.min())
        if self.inf_phi <= 0:
            raise ValueError("roof must be bounded below by a positive constant")

    def check_window(self, trials=64, seed=0):
        """Roof values depend only on coordinates 0..K (evaluated on padded words)."""
        rng = np.random.default_rng(seed)
        w = rng.integers(0, self.alphabet_size, size=(trials, self.K + 1))
        return bool(np.allclose(self.roof(w), self.roof(np.concatenate([w, rng.integers(0, self.alphabet_size, size=(trials, 3))], axis=1)[:, :self.K + 1])))


@dataclass
class TemporalDistance:
    value: float
    error_bound: float
    m: int
    y2: tuple
    y3: tuple


def _windows(past, future, m, K):
    """Coordinate windows (y_n, ..., y_{n+K}) for n = -m .. -1."""
    seq = np.concatenate([past, future])
    off = len(past)
    return np.stack([seq[off + n: off + n + K + 1] for n in range(-m, 0)])


def temporal_distance(model: SymbolicSkewModel, y1, y4, m) -> TemporalDistance:
    """D_m(y1, y4) = sum_{n=-m}^{-1} [phi(F^n y1) - phi(F^n y2) - phi(F^n y3) + phi(F^n y4)].

    Pasts are listed oldest first, i.e. past[-1] is y_{-1}.
    y2 has the future of y1 and the past of y4; y3 the future of y4 and the
    past of y1.  For a roof depending on coordinates 0..K the summands with
    n < -K cancel, so D_m is exact for m >= K; below that the omitted terms
    are bounded by 2 osc(phi) each.
    """
    p1, f1 = (np.asarray(a, int) for a in y1)
    p4, f4 = (np.asarray(a, int) for a in y4)
    K = model.K
    if min(len(p1), len(p4)) < m or min(len(f1), len(f4)) < K:
        raise WindowTooShort(f"need past >= {m} and future >= {K} symbols")
    y2 = (p4, f1)
    y3 = (p1, f4)
    if m == 0:
        return TemporalDistance(0.0, 2.0 * model.osc * K, 0, y2, y3)
    vals = [np.asarray(model.roof(_windows(p, f, m, K)), float) for p, f in ((p1, f1), y2, y3, (p4, f4))]
    D = float(np.sum(vals[0] - vals[1] - vals[2] + vals[3]))
    err = 2.0 * model.osc * max(0, K - m)
    return TemporalDistance(D, err, int(m), y2, y3)


def temporal_distance_values(model: SymbolicSkewModel, depth, future=None, m=None):
    """D over all pairs of pasts of length ``depth`` (futures fixed), vectorised."""
    K = model.K
    m = depth if m is None else m
    A = model.alphabet_size
    if future is None:
        future = (np.zeros(K + 1, int), np.ones(K + 1, int) % A)
    f1, f4 = (np.asarray(f, int) for f in future)
    pasts = np.array(list(itertools.product(range(A), repeat=depth)))
    P = len(pasts)

    def sums(p_arr, f):
        seq = np.concatenate([p_arr, np.broadcast_to(f, (len(p_arr), len(f)))], axis=1)
        tot = np.zeros(len(p_arr))
        for n in range(-m, 0):
            tot += np.asarray(model.roof(seq[:, depth + n: depth + n + K + 1]), float)
        return tot

    s_p_f1 = sums(pasts, f1)      # y1-type and y2-type sums depend on (past, f1)
    s_p_f4 = sums(pasts, f4)
    # D(y1=(p,f1), y4=(q,f4)) = S(p,f1) - S(q,f1) - S(p,f4) + S(q,f4)
    a = s_p_f1 - s_p_f4
    return (a[:, None] - a[None, :]).ravel()


@dataclass
class BoxDimension:
    estimate: float
    scales: np.ndarray
    counts: np.ndarray
    slopes: np.ndarray
    threshold: float
    verdict: str


def box_dimension(values, scale_grid=None, threshold=0.05, min_octaves=3.0, min_values=1000) -> BoxDimension:
    """Lower box-dimension estimate: the smallest two-point slope of log N(eps) vs log(1/eps)."""
    v = np.asarray(values, float).ravel()
    if v.size < min_values:
        raise ValueError(f"need at least {min_values} values")
    if scale_grid is None:
        scale_grid = 2.0 ** -np.arange(2, 11)
    eps = np.sort(np.asarray(scale_grid, float))[::-1]
    if math.log2(eps[0] / eps[-1]) < min_octaves:
        raise ScaleRangeTooNarrow(f"scales span {math.log2(eps[0] / eps[-1]):.2f} octaves < {min_octaves}")
    lo, rng_ = float(v.min()), float(v.max() - v.min())
    counts = []
    for e in eps:
        top = max(int(math.ceil(rng_ / e)) - 1, 0)
        idx = np.minimum(np.floor((v - lo) / e).astype(np.int64), top)
        counts.append(np.unique(idx).size)
    counts = np.array(counts, float)
    slopes = np.diff(np.log(counts)) / np.diff(np.log(1.0 / eps))
    est = float(max(0.0, slopes.min())) if slopes.size else 0.0
    return BoxDimension(est, eps, counts, slopes, threshold, ABSENT if est > threshold else INCONCLUSIVE)


def geometric_window_model(K=10, gamma=0.5, c=0.3) -> SymbolicSkewModel:
    """Roof 1 + c y_0 sum_{k<=K} gamma^k y_k on the {0,1}-shift.

    Any finite-window roof has finitely many temporal distance values, so its
    box dimension is zero; this family spreads the values over a Cantor-like
    set down to scale gamma^K, which makes the box counter meaningful.
    """
    wts = gamma ** np.arange(K + 1)

    def roof(w):
        w = np.asarray(w)
        return 1.0 + c * w[..., 0] * np.sum(w[..., :K + 1] * wts, axis=-1)

    return SymbolicSkewModel(2, roof, K, gamma=gamma)
