"""Full-branch Gibbs-Markov interval maps.

Provides the doubling map, affine full-branch maps, the intermittent (LSV)
ambient map and its first-return map to Y = [1/2, 1], together with branch
dispatch, transfer operators, invariant densities and the distortion and
spectral-gap probes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid

from . import _kernels
from .errors import (CellStraddlesBranch, CutoffTooSmall, GridMismatch,
                     NoSuchBranch, OutOfDomain, PointOnBoundary, SolverDiverged)

INFINITE = math.inf
BOUNDARY_ULPS = 8


@dataclass(frozen=True)
class Branch:
    id: int
    lo: float
    hi: float
    forward: Callable
    inverse: Callable
    derivative: Callable

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class CylinderWord:
    symbols: tuple

    def __post_init__(self):
        if len(self.symbols) == 0:
            raise ValueError("cylinder word must be nonempty")

    def __len__(self):
        return len(self.symbols)


@dataclass
class TransferResult:
    values: np.ndarray
    tail_weight: float


@dataclass
class ReturnTimeTable:
    tau: np.ndarray
    chain: np.ndarray          # x_0 .. x_J of the neutral preimage chain
    lo: np.ndarray
    hi: np.ndarray
    leb_tail: np.ndarray       # normalised Lebesgue measure of {tau > n}, n = 1..J
    tail_exponent: float


@dataclass
class GapProbe:
    terms: np.ndarray
    gamma1: float
    C3: float


@dataclass
class DistortionReport:
    C2: float
    ratios: np.ndarray
    depths: np.ndarray


class Density:
    """Piecewise linear density on uniform nodes, with exact cdf of the interpolant."""

    def __init__(self, nodes, values):
        self.nodes = np.asarray(nodes, float)
        self.values = np.asarray(values, float)
        d = np.diff(self.nodes)
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * d * (self.values[1:] + self.values[:-1]))])

    def __call__(self, y):
        return np.interp(y, self.nodes, self.values)

    def cdf(self, y):
        y = np.clip(np.asarray(y, float), self.nodes[0], self.nodes[-1])
        k = np.clip(np.searchsorted(self.nodes, y, side="right") - 1, 0, len(self.nodes) - 2)
        dx = self.nodes[k + 1] - self.nodes[k]
        t = y - self.nodes[k]
        slope = (self.values[k + 1] - self.values[k]) / dx
        return self._cum[k] + self.values[k] * t + 0.5 * slope * t * t

    def mass(self, a, b):
        return self.cdf(b) - self.cdf(a)


class IntervalMap:
    """Piecewise monotone interval map given by a list of branches.

    Branch domains are half-open [lo, hi); the branch touching y_hi also
    contains y_hi.  A region not covered by any retained branch (the tail of
    a truncated countable family) is allowed and reported by ``locate`` as -1.
    """

    def __init__(self, branches: Sequence[Branch], y_lo: float, y_hi: float,
                 name: str = "map", params: Optional[dict] = None):
        self.branches = list(branches)
        self.y_lo = float(y_lo)
        self.y_hi = float(y_hi)
        self.name = name
        self.params = dict(params or {})
        self._by_id = {b.id: i for i, b in enumerate(self.branches)}
        order = np.argsort([b.lo for b in self.branches])
        self._order = order
        self._los = np.array([self.branches[i].lo for i in order])
        self._his = np.array([self.branches[i].hi for i in order])
        self.dither = 0.0

    @property
    def ids(self):
        return [b.id for b in self.branches]

    @cached_property
    def endpoints(self):
        return np.unique(np.concatenate([self._los, self._his]))

    def branch(self, branch_id) -> Branch:
        try:
            return self.branches[self._by_id[branch_id]]
        except KeyError:
            raise NoSuchBranch(f"no branch with id {branch_id}") from None

    def locate(self, y):
        """Index into ``self.branches`` of the branch containing y (-1 if none)."""
        y = np.asarray(y, float)
        k = np.searchsorted(self._los, y, side="right") - 1
        kk = np.clip(k, 0, len(self._los) - 1)
        inside = (k >= 0) & ((y < self._his[kk]) | ((y == self.y_hi) & (self._his[kk] == self.y_hi)))
        return np.where(inside, self._order[kk], -1)

    def symbol(self, y):
        """Branch id of the element of the partition containing y."""
        idx = np.atleast_1d(self.locate(y))
        ids = np.array(self.ids)
        out = np.where(idx >= 0, ids[np.maximum(idx, 0)], -1)
        return out if np.ndim(y) else int(out[0])

    def _check(self, y):
        y = np.asarray(y, float)
        if np.any(~np.isfinite(y)) or np.any(y < self.y_lo) or np.any(y > self.y_hi):
            raise OutOfDomain(f"point outside [{self.y_lo}, {self.y_hi}]")
        ends = self.endpoints
        inner = ends[(ends > self.y_lo) & (ends < self.y_hi)]
        if inner.size:
            j = np.clip(np.searchsorted(inner, y), 1, len(inner) - 1) if len(inner) > 1 else np.zeros(np.shape(y), int)
            dist = np.minimum(np.abs(y - inner[np.clip(j - 1, 0, len(inner) - 1)]), np.abs(y - inner[np.clip(j, 0, len(inner) - 1)]))
            tol = BOUNDARY_ULPS * np.spacing(np.maximum(np.abs(y), 1.0))
            if np.any((dist > 0) & (dist < tol)):
                raise PointOnBoundary("point within rounding distance of a partition endpoint")

    def step(self, y, rng=None):
        """Unchecked vectorised forward map (optionally dithered, see ``dither``)."""
        y = np.asarray(y, float)
        out = np.empty_like(y)
        idx = self.locate(y)
        for i, b in enumerate(self.branches):
            m = idx == i
            if m.any():
                out[m] = b.forward(y[m])
        if np.any(idx < 0):
            raise OutOfDomain("point in the truncated tail region")
        if rng is not None and self.dither > 0.0:
            width = self.y_hi - self.y_lo
            out = self.y_lo + np.mod(out - self.y_lo + self.dither * rng.random(out.shape), width)
        return out

    def apply(self, y):
        """F(y) with domain and boundary checks."""
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, float))
        self._check(y)
        out = self.step(y)
        return float(out[0]) if scalar else out

    def inverse_branch(self, branch_id, y):
        b = self.branch(branch_id)
        scalar = np.ndim(y) == 0
        yy = np.atleast_1d(np.asarray(y, float))
        if np.any(yy < self.y_lo) or np.any(yy > self.y_hi):
            raise OutOfDomain("inverse branch evaluated outside Y")
        x = np.asarray(b.inverse(yy), float)
        return float(x[0]) if scalar else x

    def derivative(self, y):
        y = np.atleast_1d(np.asarray(y, float))
        out = np.empty_like(y)
        idx = self.locate(y)
        for i, b in enumerate(self.branches):
            m = idx == i
            if m.any():
                out[m] = b.derivative(y[m])
        return out

    def preimages(self, z):
        """All retained preimages of z and |F'| there, shape (n_branches, len(z))."""
        z = np.asarray(z, float)
        pre = np.empty((len(self.branches), z.size))
        der = np.empty_like(pre)
        for i, b in enumerate(self.branches):
            pre[i] = b.inverse(z)
            der[i] = np.abs(b.derivative(pre[i]))
        return pre, der


class GibbsMarkovMap(IntervalMap):
    """Full-branch uniformly expanding map with normalised potential.

    The invariant density is computed lazily: power iteration of the
    Lebesgue Ulam matrix on ``density_cells`` partition-adapted cells, then a
    few sweeps of the pointwise Perron-Frobenius operator on a fine node grid
    to remove the cell-averaging bias.
    """

    def __init__(self, branches, y_lo, y_hi, name="map", params=None, theta=None,
                 grid_size=1025, density_cells=4096, cutoff=None, tail_leb=0.0):
        super().__init__(branches, y_lo, y_hi, name, params)
        self.grid = np.linspace(self.y_lo, self.y_hi, grid_size)
        self.density_cells = int(density_cells)
        self.cutoff = cutoff if cutoff is not None else len(self.branches)
        self.tail_leb = float(tail_leb)
        self._theta = theta
        self.distortion_constant = None

    @cached_property
    def lam_min(self):
        z = np.linspace(self.y_lo, self.y_hi, 65)
        _, der = self.preimages(z)
        return float(der.min())

    @property
    def theta(self):
        return self._theta if self._theta is not None else 1.0 / self.lam_min

    @cached_property
    def density(self) -> Density:
        return invariant_density(self)

    @cached_property
    def branch_masses(self):
        d = self.density
        return np.array([d.mass(b.lo, b.hi) for b in self.branches])

    @property
    def tail_mass(self):
        """mu-mass of the region not covered by retained branches."""
        return float(max(0.0, 1.0 - self.branch_masses.sum()))

    def potential_weights(self, y):
        """e^{p(y_j)} for all retained branches at points y, normalised to sum 1.

        Returns (preimages, weights, raw_sums).
        """
        y = np.atleast_1d(np.asarray(y, float))
        pre, der = self.preimages(y)
        # y = y_hi pulls back onto right endpoints, which belong to the next branch;
        # keep preimages inside their own branch so branch-wise data is read correctly
        his = np.array([b.hi for b in self.branches])
        pre = np.minimum(pre, np.nextafter(his, -np.inf)[:, None])
        h = self.density
        raw = h(pre) / (h(y)[None, :] * der)
        s = raw.sum(axis=0)
        return pre, raw / s[None, :], s

    def cached_weights(self, pts):
        """potential_weights with a small cache keyed on the point set."""
        key = (pts.size, float(pts[0]), float(pts[-1]), hash(pts.tobytes()))
        cache = self.__dict__.setdefault("_wcache", {})
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            cache[key] = self.potential_weights(pts)
        return cache[key]

    def integrate(self, values, points=None):
        """Integral against mu of a function sampled on ``points`` (trapezoid)."""
        pts = self.grid if points is None else np.asarray(points, float)
        f = np.asarray(values) * self.density(pts)
        return trapezoid(f, pts)


# ---------------------------------------------------------------------------
# constructors


def _affine_branch(i, lo, hi, y_lo, y_hi):
    slope = (y_hi - y_lo) / (hi - lo)
    return Branch(
        id=i, lo=lo, hi=hi,
        forward=lambda x, lo=lo, s=slope: y_lo + s * (x - lo),
        inverse=lambda y, lo=lo, s=slope: lo + (y - y_lo) / s,
        derivative=lambda x, s=slope: np.full(np.shape(x), s),
    )


def affine_full_branch_map(breaks, name=None, **kw) -> GibbsMarkovMap:
    """Increasing affine full-branch map with branch endpoints ``breaks``."""
    breaks = np.asarray(breaks, float)
    y_lo, y_hi = breaks[0], breaks[-1]
    branches = [_affine_branch(i, breaks[i], breaks[i + 1], y_lo, y_hi) for i in range(len(breaks) - 1)]
    m = GibbsMarkovMap(branches, y_lo, y_hi, name=name or "affine",
                       params={"kind": "affine", "breaks": breaks.tolist()}, **kw)
    slopes = (y_hi - y_lo) / np.diff(breaks)
    # integer slopes on a dyadic-like grid lose a bit per step in floating point;
    # a tiny uniform dither keeps Monte Carlo orbits alive and leaves Lebesgue invariant
    if np.allclose(slopes, np.round(slopes)):
        m.dither = 2.0**-40 * (y_hi - y_lo)
    return m


def doubling_map(**kw) -> GibbsMarkovMap:
    m = affine_full_branch_map([0.0, 0.5, 1.0], name="doubling", **kw)
    m.params["kind"] = "doubling"
    return m


def linear_map(k: int, **kw) -> GibbsMarkovMap:
    """y -> k y mod 1."""
    m = affine_full_branch_map(np.linspace(0.0, 1.0, k + 1), name=f"times{k}", **kw)
    m.params = {"kind": "linear", "k": int(k)}
    return m


def lsv_map(gamma: float) -> IntervalMap:
    """Ambient intermittent map on [0, 1] (not uniformly expanding)."""
    if not 0.0 < gamma < 1.0 + 1e-12:
        raise ValueError("gamma must lie in (0, 1]")
    c = 2.0**gamma

    def left_inv(y):
        x, bad = _kernels.left_inverse(np.ascontiguousarray(np.atleast_1d(y), float) / 1.0, gamma)
        if bad:
            raise SolverDiverged("neutral branch inverse did not converge")
        return x

    left = Branch(0, 0.0, 0.5,
                  forward=lambda x: x * (1.0 + c * x**gamma),
                  inverse=lambda y: left_inv(np.asarray(y, float) * 1.0),
                  derivative=lambda x: 1.0 + (1.0 + gamma) * c * x**gamma)
    right = Branch(1, 0.5, 1.0,
                   forward=lambda x: 2.0 * x - 1.0,
                   inverse=lambda y: 0.5 * (np.asarray(y, float) + 1.0),
                   derivative=lambda x: np.full(np.shape(x), 2.0))
    return IntervalMap([left, right], 0.0, 1.0, name="lsv", params={"kind": "lsv", "gamma": gamma})


class LSVFirstReturn(GibbsMarkovMap):
    """First-return map of the intermittent map to Y = [1/2, 1].

    Branch n (return time n) is [(1+x_{n-1})/2, (1+x_{n-2})/2) with x_{-1} = 1,
    on which F(y) = g^{n-1}(2y-1), g the neutral branch.  Only n <= J are
    retained; the forward map itself is exact for every point of Y.
    """

    def __init__(self, gamma, J, chain, **kw):
        self.gamma = float(gamma)
        self._c = 2.0**gamma
        self.chain = chain
        xm = np.concatenate([[1.0], chain])          # xm[k] = x_{k-1}
        branches = []
        for n in range(1, J + 1):
            lo = 0.5 * (1.0 + xm[n])
            hi = 0.5 * (1.0 + xm[n - 1])
            branches.append(Branch(n, lo, hi,
                                   forward=lambda y, n=n: self._forward_n(y, n),
                                   inverse=lambda z, n=n: self._inverse_n(z, n),
                                   derivative=lambda y, n=n: self._deriv_n(y, n)))
        super().__init__(branches, 0.5, 1.0, name=f"lsv-first-return(gamma={gamma})",
                         params={"kind": "lsv-first-return", "gamma": gamma, "J": J},
                         cutoff=J, tail_leb=0.5 * chain[J - 1], **kw)
        self._theta = kw.get("theta")

    def _g(self, x):
        return x * (1.0 + self._c * x**self.gamma)

    def _dg(self, x):
        return 1.0 + (1.0 + self.gamma) * self._c * x**self.gamma

    def _forward_n(self, y, n):
        x = 2.0 * np.asarray(y, float) - 1.0
        for _ in range(n - 1):
            x = self._g(x)
        return x

    def _deriv_n(self, y, n):
        x = 2.0 * np.asarray(y, float) - 1.0
        d = np.full(np.shape(x), 2.0)
        for _ in range(n - 1):
            d = d * self._dg(x)
            x = self._g(x)
        return d

    def _linv(self, z):
        x, bad = _kernels.left_inverse(np.ascontiguousarray(z, dtype=float), self.gamma)
        if bad:
            raise SolverDiverged("neutral branch inverse did not converge")
        return x

    def _inverse_n(self, z, n):
        x = np.atleast_1d(np.asarray(z, float)).copy()
        for _ in range(n - 1):
            x = self._linv(x)
        return 0.5 * (1.0 + x)

    def preimages(self, z):
        z = np.atleast_1d(np.asarray(z, float))
        J = len(self.branches)
        pre = np.empty((J, z.size))
        der = np.empty_like(pre)
        x = z.copy()
        d = np.full(z.size, 2.0)
        for n in range(1, J + 1):
            if n > 1:
                x = self._linv(x)
                d = d * self._dg(x)
            pre[n - 1] = 0.5 * (1.0 + x)
            der[n - 1] = d
        return pre, der

    def first_return(self, y, hc=(1.0,)):
        """(F y, tau, induced roof) for every y in Y, including the tail region."""
        y = np.ascontiguousarray(np.atleast_1d(y), dtype=float)
        return _kernels.first_return(y, self.gamma, np.asarray(hc, float))

    def step(self, y, rng=None):
        fy, tau, _ = self.first_return(y)
        if np.any(tau < 0):
            raise PointOnBoundary("orbit stuck at the neutral fixed point")
        return fy

    def symbol(self, y):
        _, tau, _ = self.first_return(y)
        return tau if np.ndim(y) else int(tau[0])

    def derivative(self, y):
        y = np.atleast_1d(np.asarray(y, float))
        _, tau, _ = self.first_return(y)
        out = np.empty_like(y)
        for n in np.unique(tau):
            m = tau == n
            out[m] = self._deriv_n(y[m], int(n))
        return out


def lsv_first_return(gamma: float, J: int = 200, min_coverage: float = 0.999, **kw):
    """Build the LSV first-return map and its return-time table."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    chain, bad = _kernels.preimage_chain(float(gamma), int(J))
    if bad:
        raise SolverDiverged("preimage chain did not converge")
    if not np.all(np.diff(chain) < 0):
        raise SolverDiverged("preimage chain is not strictly decreasing")
    coverage = 1.0 - chain[J - 1]
    if coverage < min_coverage:
        raise CutoffTooSmall(f"retained branches cover {coverage:.6f} of Y (< {min_coverage})")
    m = LSVFirstReturn(gamma, J, chain, **kw)
    n = np.arange(1, J + 1)
    leb_tail = chain[n - 1]                       # Leb{tau > n} / Leb(Y) = x_{n-1}
    w = (n >= max(2, J // 4))
    slope = np.polyfit(np.log(n[w]), np.log(leb_tail[w]), 1)[0]
    table = ReturnTimeTable(tau=n, chain=chain, lo=np.array([b.lo for b in m.branches]),
                            hi=np.array([b.hi for b in m.branches]), leb_tail=leb_tail,
                            tail_exponent=float(-slope))
    return m, table


# ---------------------------------------------------------------------------
# cells, Ulam pieces and the invariant density


def partition_cells(gm: IntervalMap, n_cells: int, power: float = 1.0):
    """Cell edges adapted to the partition: no cell straddles a branch endpoint.

    Each retained branch receives cells in proportion to width**power (at
    least one); an uncovered tail region becomes a single cell with branch
    index -1.  Returns (edges, cell_branch).
    """
    widths = np.array([b.width for b in gm.branches])
    order = np.argsort([b.lo for b in gm.branches])
    wts = widths**power
    counts = np.maximum(1, np.floor(n_cells * wts / wts.sum())).astype(int)
    extra = n_cells - counts.sum() - (1 if gm._los.min() > gm.y_lo else 0)
    if extra > 0:
        frac = n_cells * wts / wts.sum() - np.floor(n_cells * wts / wts.sum())
        counts[np.argsort(-frac)[:extra]] += 1
    edges = []
    cell_branch = []
    if gm._los.min() > gm.y_lo:
        edges.append(gm.y_lo)
        cell_branch.append(-1)
    for i in order:
        b = gm.branches[i]
        e = np.linspace(b.lo, b.hi, counts[i] + 1)[:-1]
        edges.extend(e.tolist())
        cell_branch.extend([i] * counts[i])
    edges.append(gm.y_hi)
    edges = np.array(edges)
    cell_branch = np.array(cell_branch)
    if np.any(np.diff(edges) <= 0):
        raise CellStraddlesBranch("degenerate cell in partition-adapted grid")
    mids = 0.5 * (edges[1:] + edges[:-1])
    loc = gm.locate(mids)
    if np.any(loc != cell_branch):
        raise CellStraddlesBranch("cell not contained in a single branch domain")
    return edges, cell_branch


@dataclass
class UlamPieces:
    """Intersections cell_k ∩ F^{-1}(cell_i) for every retained branch."""
    edges: np.ndarray
    cell_branch: np.ndarray
    target: np.ndarray
    source: np.ndarray
    length: np.ndarray
    mid: np.ndarray
    branch: np.ndarray

    @property
    def n_cells(self):
        return len(self.edges) - 1


def ulam_pieces(gm: IntervalMap, edges, cell_branch) -> UlamPieces:
    pre, _ = gm.preimages(edges)
    tgt, src, ln, md, br = [], [], [], [], []
    for i, b in enumerate(gm.branches):
        p = pre[i]
        inc = p[-1] >= p[0]
        pts = p if inc else p[::-1]
        own = edges[(edges > b.lo) & (edges < b.hi)]
        bp = np.unique(np.concatenate([pts, own, [b.lo, b.hi]]))
        bp = bp[(bp >= b.lo) & (bp <= b.hi)]
        lengths = np.diff(bp)
        keep = lengths > 0
        mids = 0.5 * (bp[1:] + bp[:-1])[keep]
        lengths = lengths[keep]
        k = np.searchsorted(edges, mids, side="right") - 1
        j = np.searchsorted(pts, mids, side="right") - 1
        if not inc:
            j = len(edges) - 2 - j
        j = np.clip(j, 0, len(edges) - 2)
        tgt.append(j)
        src.append(k)
        ln.append(lengths)
        md.append(mids)
        br.append(np.full(len(mids), i))
    return UlamPieces(np.asarray(edges), np.asarray(cell_branch), np.concatenate(tgt),
                      np.concatenate(src), np.concatenate(ln), np.concatenate(md), np.concatenate(br))


def lebesgue_ulam(pieces: UlamPieces):
    """Column-sub-stochastic Ulam matrix P acting on cell densities."""
    leb = np.diff(pieces.edges)
    vals = pieces.length / leb[pieces.target]
    n = pieces.n_cells
    return sparse.csr_matrix((vals, (pieces.target, pieces.source)), shape=(n, n))


def ulam_fixed_density(pieces: UlamPieces, tol=1e-14, max_iter=20000):
    """Perron vector of the Lebesgue Ulam matrix: (cell densities, eigenvalue)."""
    P = lebesgue_ulam(pieces)
    leb = np.diff(pieces.edges)
    rho = np.full(pieces.n_cells, 1.0 / leb.sum())
    lam = 1.0
    for _ in range(max_iter):
        new = P @ rho
        lam = float(new @ leb)
        new /= lam
        if np.abs(new - rho) @ leb < tol:
            rho = new
            break
        rho = new
    return rho, lam


def invariant_density(gm: GibbsMarkovMap, n_nodes: int = 16385, sweeps: int = 60, tol: float = 1e-13) -> Density:
    edges, cb = partition_cells(gm, gm.density_cells)
    pieces = ulam_pieces(gm, edges, cb)
    rho, _ = ulam_fixed_density(pieces)
    nodes = np.linspace(gm.y_lo, gm.y_hi, n_nodes)
    k = np.clip(np.searchsorted(edges, nodes, side="right") - 1, 0, len(rho) - 1)
    h = rho[k].copy()
    pre, der = gm.preimages(nodes)
    inv = 1.0 / der
    width = gm.y_hi - gm.y_lo
    for _ in range(sweeps):
        new = (np.interp(pre, nodes, h) * inv).sum(axis=0)
        new /= trapezoid(new, nodes)
        change = np.max(np.abs(new - h)) * width
        h = new
        if change < tol:
            break
    return Density(nodes, h)


# ---------------------------------------------------------------------------
# operators and probes


def apply(gm: IntervalMap, y):
    return gm.apply(y)


def inverse_branch(gm: IntervalMap, branch_id, y):
    return gm.inverse_branch(branch_id, y)


def transfer_apply(gm: GibbsMarkovMap, v, s_weight: Optional[Callable] = None, points=None) -> TransferResult:
    """(Rv)(y) = sum_j e^{p(y_j)} w(y_j) v(y_j) on the evaluation points.

    ``v`` is a callable or an array sampled on ``points`` (default: the map's
    evaluation grid), interpolated linearly at the preimages.
    """
    pts = gm.grid if points is None else np.atleast_1d(np.asarray(points, float))
    pre, wts, raw = gm.cached_weights(pts)
    if callable(v):
        vals = np.asarray(v(pre))
    else:
        v = np.asarray(v)
        if v.shape != pts.shape:
            raise GridMismatch(f"values of shape {v.shape} do not match grid of shape {pts.shape}")
        if np.iscomplexobj(v):
            vals = np.interp(pre, pts, v.real) + 1j * np.interp(pre, pts, v.imag)
        else:
            vals = np.interp(pre, pts, v)
    if s_weight is not None:
        vals = vals * np.asarray(s_weight(pre))
    out = (wts * vals).sum(axis=0)
    return TransferResult(out, float(np.max(np.abs(1.0 - raw))))


def separation_time(gm: IntervalMap, y, y2, n_max: int = 64):
    """Least n with F^n y and F^n y2 in distinct partition elements."""
    y = float(y)
    y2 = float(y2)
    for n in range(n_max + 1):
        if y == y2:
            return INFINITE
        gm._check(np.array([y, y2]))
        if gm.symbol(y) != gm.symbol(y2):
            return n
        y, y2 = gm.apply(y), gm.apply(y2)
    return INFINITE


def separation_times(gm: IntervalMap, y, y2, n_max: int = 64):
    """Vectorised separation time without boundary checks (inf where none found)."""
    y = np.array(y, float, copy=True)
    y2 = np.array(y2, float, copy=True)
    out = np.full(y.shape, INFINITE)
    live = y != y2
    for n in range(n_max + 1):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        s1 = np.atleast_1d(gm.symbol(y[idx]))
        s2 = np.atleast_1d(gm.symbol(y2[idx]))
        sep = s1 != s2
        out[idx[sep]] = n
        live[idx[sep]] = False
        idx = idx[~sep]
        if idx.size == 0 or n == n_max:
            break
        y[idx] = gm.step(y[idx])
        y2[idx] = gm.step(y2[idx])
        live[idx] = y[idx] != y2[idx]
    return out


def theta_seminorm(gm: IntervalMap, values, points):
    """Grid surrogate of the Lipschitz seminorm in the symbolic metric.

    Pairs in different branches have d_theta = 1 and contribute the
    oscillation; neighbouring points in one branch contribute |Y| times the
    difference quotient (d_theta ~ |y - y'| / |Y| for theta = 1/lambda).
    """
    v = np.asarray(values)
    pts = np.asarray(points, float)
    if v.size < 2:
        return 0.0
    osc = float(np.max(np.abs(v[:, None] - v[None, :]))) if v.size <= 2048 else float(
        max(np.ptp(v.real), np.ptp(v.imag)) * math.sqrt(2.0) if np.iscomplexobj(v) else np.ptp(v))
    sym = np.atleast_1d(gm.symbol(pts))
    same = sym[1:] == sym[:-1]
    dq = np.abs(np.diff(v)) / np.diff(pts)
    lip = float(dq[same].max()) if same.any() else 0.0
    return max(osc, (gm.y_hi - gm.y_lo) * lip)


def theta_norm(gm, values, points):
    return float(np.max(np.abs(values))) + theta_seminorm(gm, values, points)


def spectral_gap_probe(gm: GibbsMarkovMap, v, n_max: int = 20, points=None, floor_factor: float = 10.0) -> GapProbe:
    """Sequence ||R^n v - int v dmu||_theta, n = 0..n_max, with a geometric fit.

    The grid operator converges to a constant that differs from the exact
    mean by the interpolation error; terms below ``floor_factor`` times that
    discrepancy are excluded from the fit.
    """
    pts = gm.grid if points is None else np.asarray(points, float)
    vals = np.asarray(v(pts) if callable(v) else v, float)
    if vals.shape != pts.shape:
        raise GridMismatch("values do not match the grid")
    if callable(v):
        nodes = gm.density.nodes
        mean = gm.integrate(v(nodes), nodes)
    else:
        mean = gm.integrate(vals, pts)
    terms = [theta_norm(gm, vals - mean, pts)]
    cur = vals
    for _ in range(n_max):
        cur = transfer_apply(gm, cur, points=pts).values
        terms.append(theta_norm(gm, cur - mean, pts))
    terms = np.array(terms)
    limit = cur
    for _ in range(40):
        limit = transfer_apply(gm, limit, points=pts).values
    floor = floor_factor * float(np.max(np.abs(limit - mean))) + 1e-13 * max(terms[0], 1e-300)
    n = np.arange(len(terms))
    above = terms > floor
    run = int(np.argmin(above)) if not above.all() else len(terms)
    norm_v = max(theta_norm(gm, vals, pts), 1e-300)
    if run >= 3:
        gamma1 = float(math.exp(np.polyfit(n[1:run], np.log(terms[1:run]), 1)[0]))
    elif run == 2:
        gamma1 = float(terms[1] / terms[0])
    else:
        gamma1 = 0.0
    if gamma1 > 0:
        C3 = float(np.max(terms[:max(run, 1)] / (gamma1 ** n[:max(run, 1)] * norm_v)))
    else:
        C3 = float(terms[0] / norm_v)
    return GapProbe(terms, gamma1, C3)


def compose_inverse(gm: IntervalMap, word, z):
    """y = g_{w0} o ... o g_{w_{d-1}}(z) and |(F^d)'(y)|, vectorised over z."""
    z = np.atleast_1d(np.asarray(z, float))
    y = z.copy()
    d = np.ones_like(z)
    for s in reversed(list(word)):
        y = gm.inverse_branch(s, y)
        d = d * np.abs(gm.branch(s).derivative(y))
    return y, d


def distortion_probe(gm: GibbsMarkovMap, n_cylinders: int = 500, max_depth: int = 8, seed: int = 0) -> DistortionReport:
    """Ratios e^{p_n(y)} / mu(d) over random cylinders; C2 is the global bound."""
    rng = np.random.default_rng(seed)
    masses = gm.branch_masses
    probs = masses / masses.sum()
    ids = np.array(gm.ids)
    h = gm.density
    gl_x, gl_w = np.polynomial.legendre.leggauss(24)
    width = gm.y_hi - gm.y_lo
    zq = gm.y_lo + 0.5 * width * (gl_x + 1.0)
    wq = 0.5 * width * gl_w
    zt = gm.y_lo + width * np.array([0.05, 0.5, 0.95])
    ratios, depths = [], []
    for _ in range(n_cylinders):
        d = int(rng.integers(1, max_depth + 1))
        word = ids[rng.choice(len(ids), size=d, p=probs)]
        yq, dq = compose_inverse(gm, word, zq)
        mu_d = float(np.sum(wq * h(yq) / dq))
        yt, dt = compose_inverse(gm, word, zt)
        ep = h(yt) / (h(zt) * dt)
        ratios.append(ep / mu_d)
        depths.append(d)
    ratios = np.concatenate(ratios)
    C2 = float(max(ratios.max(), 1.0 / ratios.min()))
    gm.distortion_constant = C2
    return DistortionReport(C2, ratios, np.array(depths))


# ---------------------------------------------------------------------------
# text export / import


def export_map(gm: IntervalMap, path):
    lines = ["# mixlab map v1", f"kind {gm.params.get('kind', 'unknown')}"]
    for k in ("gamma", "J", "k"):
        if k in gm.params:
            lines.append(f"{k} {gm.params[k]!r}")
    if isinstance(gm, GibbsMarkovMap):
        lines.append(f"grid_size {len(gm.grid)}")
        lines.append(f"density_cells {gm.density_cells}")
    if isinstance(gm, LSVFirstReturn):
        lines.append("endpoints")
        lines.extend(repr(float(x)) for x in gm.chain)
    elif "breaks" in gm.params:
        lines.append("endpoints")
        lines.extend(repr(float(x)) for x in gm.params["breaks"])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_map(path):
    fields, ends = {}, []
    in_ends = False
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "endpoints":
                in_ends = True
                continue
            if in_ends:
                ends.append(float(line))
            else:
                key, val = line.split(None, 1)
                fields[key] = val
    kind = fields["kind"]
    kw = {}
    if "grid_size" in fields:
        kw["grid_size"] = int(fields["grid_size"])
    if "density_cells" in fields:
        kw["density_cells"] = int(fields["density_cells"])
    if kind == "lsv-first-return":
        gm, _ = lsv_first_return(float(fields["gamma"]), int(fields["J"]), **kw)
        if ends and not np.allclose(gm.chain, ends, rtol=1e-12, atol=0):
            raise ValueError("stored endpoints disagree with the recomputed preimage chain")
        return gm
    if kind == "doubling":
        return doubling_map(**kw)
    if kind == "linear":
        return linear_map(int(fields["k"]), **kw)
    if kind == "affine":
        return affine_full_branch_map(ends, **kw)
    if kind == "lsv":
        return lsv_map(float(fields["gamma"]))
    raise ValueError(f"unknown map kind {kind!r}")
