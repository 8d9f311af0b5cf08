"""Twisted transfer operators R^(s) v = R(e^{-s phi} v).

Two discretisations are provided.  ``UlamOperator`` acts on cell averages
over a partition-adapted grid (cells never straddle branch endpoints) and is
used for eigenvalues and resolvent sweeps.
``CollocationOperator`` acts on point values at per-branch nodes (uniform or
Chebyshev-Lobatto) and is used for the Lasota-Yorke probe and wherever
spectral accuracy in y is needed.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla

from .correlation import batch_streams
from .errors import NoConvergence, SingularResolvent
from .gibbs_markov import GibbsMarkovMap, partition_cells, ulam_pieces
from .suspension import (RoofFunction, SuspensionFlow, TruncatedRoof,
                         make_suspension)

RCOND_MIN = 1e-12


# ---------------------------------------------------------------------------
# Ulam discretisation


class UlamAssembly:
    """Pieces of the Ulam matrix, reusable for many values of s.

    Entry (i, k) of R^(s) is sum over pieces P = cell_k ∩ F^{-1}(cell_i) of
    mu(P) e^{-s phi(mid P)} / m_i, with m_i the total mass flowing into cell i
    at s = 0, so that R^(0) 1 = 1 exactly.  The gap between m_i and mu(cell_i)
    is the weight of the neglected branches.
    """

    def __init__(self, gm: GibbsMarkovMap, roof: Optional[RoofFunction], grid_size=4096, power=0.5):
        self.gm = gm
        self.roof = roof
        self.grid_size = grid_size
        edges, cb = partition_cells(gm, grid_size, power)
        # the uncovered tail cell (if any) carries no retained dynamics of its own
        self.edges = edges
        self.cell_branch = cb
        p = ulam_pieces(gm, edges, cb)
        h = gm.density
        self.piece_mass = p.length * h(p.mid)
        self.target = p.target
        self.source = p.source
        self.mid = p.mid
        n = len(edges) - 1
        self.n = n
        inflow = np.bincount(self.target, weights=self.piece_mass, minlength=n)
        self.cell_mu = h.mass(edges[:-1], edges[1:])
        self.inflow = np.where(inflow > 0, inflow, 1.0)
        rel = np.abs(1.0 - inflow / np.maximum(self.cell_mu, 1e-300))
        self.neglected_mass = float(max(0.0, self.cell_mu.sum() - inflow.sum()))
        self.neglected_rel = float(rel[inflow > 0].max()) if np.any(inflow > 0) else 0.0
        self.phi_mid = np.asarray(roof(self.mid), float) if roof is not None else np.zeros_like(self.mid)
        self.cell_mid = 0.5 * (edges[1:] + edges[:-1])
        self.cell_width = np.diff(edges)

    def operator(self, s=0.0, allow_negative=False) -> "UlamOperator":
        s = complex(s)
        if s.real < 0 and not allow_negative:
            raise ValueError("Re s must be nonnegative")
        if s == 0:
            tw = np.ones_like(self.phi_mid)
        else:
            tw = np.exp(-s * self.phi_mid)
        vals = self.piece_mass * tw / self.inflow[self.target]
        if s.imag == 0:
            vals = vals.real
        A = sparse.csr_matrix((vals, (self.target, self.source)), shape=(self.n, self.n))
        A.sum_duplicates()
        return UlamOperator(s, self, A)

    def cell_average(self, f: Callable, nodes=4):
        """mu-weighted average of f over each cell (Gauss-Legendre)."""
        x, w = np.polynomial.legendre.leggauss(nodes)
        lo = self.edges[:-1]
        wd = self.cell_width
        pts = lo[:, None] + 0.5 * wd[:, None] * (x[None, :] + 1.0)
        hv = self.gm.density(pts)
        fv = np.asarray(f(pts))
        return (w[None, :] * hv * fv).sum(axis=1) / (w[None, :] * hv).sum(axis=1)


@dataclass
class UlamOperator:
    s: complex
    assembly: UlamAssembly
    matrix: sparse.csr_matrix

    @property
    def edges(self):
        return self.assembly.edges

    @property
    def mu(self):
        return self.assembly.cell_mu

    @property
    def neglected_mass(self):
        return self.assembly.neglected_mass

    def dense(self):
        return self.matrix.toarray()

    def apply(self, v):
        return self.matrix @ v

    def __matmul__(self, v):
        return self.matrix @ v


def ulam_matrix(gm: GibbsMarkovMap, roof: Optional[RoofFunction], s, grid_size=4096, J=None) -> UlamOperator:
    if grid_size < 256:
        raise ValueError("grid_size must be at least 256")
    return UlamAssembly(gm, roof, grid_size).operator(s)


# ---------------------------------------------------------------------------
# eigenvalues


@dataclass
class EigenResult:
    lam: complex
    eigfun: np.ndarray
    residual: float
    iterations: int
    gap_ratio: float
    method: str


def _normalise(v, mu):
    c = np.vdot(np.conj(mu), v) if np.iscomplexobj(v) else mu @ v
    return v / c if c != 0 else v / np.linalg.norm(v)


def leading_eigen(op, tol=1e-12, max_iter=3000, v0=None) -> EigenResult:
    """Dominant eigenpair by power iteration, with an ARPACK fallback.

    The eigenfunction is normalised so that int eigfun dmu = 1.
    """
    A = op.matrix if hasattr(op, "matrix") else op
    mu = op.mu if hasattr(op, "mu") else np.ones(A.shape[0]) / A.shape[0]
    v = np.ones(A.shape[0], dtype=complex if np.iscomplexobj(A.data if sparse.issparse(A) else A) else float) if v0 is None else np.asarray(v0)
    lam = 0.0
    ratios = []
    prev_res = None
    for it in range(1, max_iter + 1):
        w = A @ v
        den = mu @ v
        lam = (mu @ w) / den if abs(den) > 1e-300 else np.vdot(v, w) / np.vdot(v, v)
        res = np.linalg.norm(w - lam * v) / max(np.linalg.norm(v), 1e-300)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return EigenResult(0.0, v, 0.0, it, 0.0, "power")
        if prev_res is not None and prev_res > 0:
            ratios.append(res / prev_res)
        prev_res = res
        if res < tol * max(abs(lam), 1e-300):
            gap = float(np.median(ratios[-10:])) if ratios else 0.0
            return EigenResult(complex(lam) if np.iscomplexobj(lam) else float(lam),
                               _normalise(v, mu), float(res), it, gap, "power")
        v = w / nrm
        if it > 200 and ratios and np.median(ratios[-20:]) > 0.995:
            break
    # slow convergence: near-degenerate spectrum, try ARPACK
    try:
        vals, vecs = spla.eigs(A.astype(complex), k=2, which="LM", tol=tol, maxiter=20000)
        order = np.argsort(-np.abs(vals))
        lam = vals[order[0]]
        vec = vecs[:, order[0]]
        res = np.linalg.norm(A @ vec - lam * vec) / np.linalg.norm(vec)
        gap = float(abs(vals[order[1]]) / abs(lam)) if abs(lam) > 0 else 1.0
        if res < 1e3 * tol * max(abs(lam), 1e-300) and gap < 1.0 - 1e-9:
            return EigenResult(complex(lam), _normalise(vec, mu), float(res), max_iter, gap, "arpack")
    except spla.ArpackNoConvergence:
        pass
    raise NoConvergence("leading eigenvalue did not separate (near-degenerate spectrum)")


def spectral_radius(op) -> tuple:
    """(|lambda_max|, residual)."""
    r = leading_eigen(op)
    return abs(r.lam), r.residual


@dataclass
class EigenDerivativeReport:
    dlam: float
    phi_norm: float
    rel_gap: float
    lam_plus: complex
    lam_minus: complex
    h: float
    grid_size: int


def eigen_derivative_check(gm: GibbsMarkovMap, roof: RoofFunction, grid_size=4096, h=1e-4,
                           phi_norm: Optional[float] = None) -> EigenDerivativeReport:
    """Central difference of lambda(s) at s = 0 against -|phi|_1."""
    asm = UlamAssembly(gm, roof, grid_size)
    lp = leading_eigen(asm.operator(h)).lam
    lm = leading_eigen(asm.operator(-h, allow_negative=True)).lam
    d = float(np.real(lp - lm) / (2.0 * h))
    if phi_norm is None:
        phi_norm = make_suspension(gm, roof, eq_inf_cap=None).phi_norm
    return EigenDerivativeReport(d, float(phi_norm), abs(d + phi_norm) / phi_norm, lp, lm, h, asm.n)


# ---------------------------------------------------------------------------
# norms and resolvent sweep


def _grid_difference(asm: UlamAssembly):
    """Sparse difference quotients between neighbouring cells of one branch."""
    cb = asm.cell_branch
    mids = asm.cell_mid
    same = (cb[1:] == cb[:-1]) & (cb[1:] >= 0)
    k = np.flatnonzero(same)
    dx = (mids[k + 1] - mids[k]) / (asm.gm.y_hi - asm.gm.y_lo)
    rows = np.concatenate([np.arange(k.size), np.arange(k.size)])
    cols = np.concatenate([k, k + 1])
    vals = np.concatenate([-1.0 / dx, 1.0 / dx])
    D = sparse.csr_matrix((vals, (rows, cols)), shape=(k.size, asm.n))
    wts = 0.5 * (asm.cell_mu[k] + asm.cell_mu[k + 1])
    return D, wts


def lipschitz_seminorm(asm: UlamAssembly, v):
    """Largest within-branch difference quotient of cell values, in units of |Y|."""
    D, _ = _grid_difference(asm)
    return float(np.max(np.abs(D @ v))) if D.shape[0] else 0.0


def b_norm_matrix(asm: UlamAssembly, b, C4=1.0):
    """Hilbert surrogate of ||.||_b: diag(mu) + c_b^2 D^T W D, c_b = 1/(2 C4 (|b| + 2))."""
    D, wts = _grid_difference(asm)
    cb = 1.0 / (2.0 * C4 * (abs(b) + 2.0))
    S = sparse.diags(asm.cell_mu) + cb * cb * (D.T @ sparse.diags(wts) @ D)
    return S.toarray()


@dataclass
class ResolventPoint:
    b: float
    norm: float
    lam: complex
    residual: float
    rcond: float


@dataclass
class ResolventSweep:
    points: list
    alpha: float
    alpha_se: float
    grid_size: int

    @property
    def b(self):
        return np.array([p.b for p in self.points])

    @property
    def norms(self):
        return np.array([p.norm for p in self.points])

    def rows(self):
        return [(p.b, p.norm, p.lam.real, p.lam.imag, p.residual) for p in self.points]


def _rcond(lu, piv, anorm):
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rc, info = gecon(lu, anorm, norm="1")
    return float(rc)


def _hat(k, hw):
    return lambda y: np.maximum(0.0, 1.0 - np.abs(y - k) / hw)


def hat_trial_space(disc, n_trial=64):
    """Piecewise-linear hat functions on a uniform mesh of Y, discretised.

    Cell averages for an Ulam assembly, node values for a collocation
    operator.  The span does not depend on the resolution, which makes norms
    restricted to it comparable across grids.
    """
    gm = disc.gm
    knots = np.linspace(gm.y_lo, gm.y_hi, n_trial + 1)
    hw = knots[1] - knots[0]
    if isinstance(disc, UlamAssembly):
        cols = [disc.cell_average(_hat(k, hw)) for k in knots]
    else:
        cols = [_hat(k, hw)(disc.nodes) for k in knots]
    return np.array(cols).T


@dataclass
class DiscreteOperator:
    s: complex
    matrix: object
    mu: np.ndarray


def _discrete(disc, s):
    if isinstance(disc, UlamAssembly):
        return disc.operator(s), b_norm_matrix
    return DiscreteOperator(complex(s), disc.sparse_matrix(s), disc.weights), lambda d, b, C4: d.b_norm_matrix(b, C4)


def resolvent_norm(disc, b, C4=1.0, iters=60, tol=1e-8, seed=0, trial=None):
    """||(I - R^(ib))^{-1}|| in the discrete b-norm, plus lambda(ib) and rcond.

    ``disc`` is an UlamAssembly or a CollocationOperator.  With ``trial`` (an
    n x K matrix of discretised functions) the norm is the maximum of
    ||B v||_b / ||v||_b over their span, a generalised Hermitian eigenproblem.
    Without it the norm is induced on all grid vectors, where grid-scale
    vectors dominate and the value depends on the resolution.
    """
    op, norm_matrix = _discrete(disc, 1j * b)
    A = op.matrix.toarray() if sparse.issparse(op.matrix) else np.asarray(op.matrix)
    n = A.shape[0]
    M = np.eye(n, dtype=complex) - A
    anorm = float(np.abs(M).sum(axis=0).max())
    lu, piv = sla.lu_factor(M, check_finite=False)
    rc = _rcond(lu, piv, anorm)
    if rc < RCOND_MIN or not np.isfinite(rc):
        raise SingularResolvent(f"I - R^(ib) is numerically singular at b = {b:g} (rcond = {rc:.2e})")
    S = norm_matrix(disc, b, C4)
    if trial is not None:
        BV = sla.lu_solve((lu, piv), trial.astype(complex))
        G1 = BV.conj().T @ S @ BV
        G0 = trial.T @ S @ trial
        est = math.sqrt(float(sla.eigh(G1, G0.astype(complex), eigvals_only=True)[-1]))
        return _with_eigen(op, b, est, rc)
    L = np.linalg.cholesky(S)                    # S = L L^T
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        # C = L^T B L^{-T};  y = C^H C x
        z = sla.solve_triangular(L.T, x, lower=False)
        z = sla.lu_solve((lu, piv), z)
        z = L.T @ z
        z = L @ z
        z = sla.lu_solve((lu, piv), z, trans=2)
        z = sla.solve_triangular(L, z, lower=True)
        new = math.sqrt(max(np.linalg.norm(z), 0.0))
        x = z / np.linalg.norm(z)
        if abs(new - est) < tol * new:
            est = new
            break
        est = new
    return _with_eigen(op, b, est, rc)


def _with_eigen(op, b, est, rc):
    try:
        ev = leading_eigen(op)
        lam, res = ev.lam, ev.residual
    except NoConvergence:
        lam, res = complex("nan"), float("nan")
    return ResolventPoint(float(b), est, complex(lam), float(res), rc)


def resolvent_sweep(gm: GibbsMarkovMap, roof: RoofFunction, b_grid, grid_size=1024, C4=1.0,
                    n_trial: Optional[int] = 64, method="collocation") -> ResolventSweep:
    """Resolvent norms along the imaginary axis and the fitted log-log slope.

    ``method="collocation"`` discretises point values with linear
    interpolation; ``"ulam"`` uses cell averages.  ``n_trial`` hat functions
    span the trial space (None: all grid vectors).
    """
    b_grid = np.asarray(b_grid, float)
    if np.any(b_grid == 0):
        raise ValueError("b_grid must avoid 0")
    if method == "ulam":
        disc = UlamAssembly(gm, roof, grid_size)
    else:
        disc = CollocationOperator(gm, roof, kind="linear", grid_size=grid_size)
    trial = hat_trial_space(disc, n_trial) if n_trial else None
    pts = [resolvent_norm(disc, b, C4, trial=trial) for b in b_grid]
    x = np.log(np.abs(b_grid))
    yv = np.log([p.norm for p in pts])
    if len(x) >= 2:
        coef, cov = np.polyfit(x, yv, 1, cov=len(x) > 3) if len(x) > 3 else (np.polyfit(x, yv, 1), np.zeros((2, 2)))
        alpha, se = float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0)))
    else:
        alpha, se = float("nan"), float("nan")
    return ResolventSweep(pts, alpha, se, disc.n)


# ---------------------------------------------------------------------------
# Lasota-Yorke probe


@dataclass
class LasotaYorkeReport:
    seminorms: np.ndarray        # (n_vectors, n_max + 1)
    sup_norms: np.ndarray
    C4: float
    theta_rate: float
    passed: bool


def lasota_yorke_probe(gm: GibbsMarkovMap, roof: RoofFunction, s, n_max, vs: Sequence, grid_size=1024,
                       C4_max=100.0) -> LasotaYorkeReport:
    """|R^(s)^n v|_theta against C4 ((|s|+1)|v|_inf + theta^n |v|_theta).

    Uses the point-value operator with linear interpolation: cell averaging
    coarsens Lipschitz data into staircases and inflates difference quotients.
    """
    co = CollocationOperator(gm, roof, kind="linear", grid_size=grid_size)
    op = co.matrix(s)
    theta = gm.theta
    semis, sups = [], []
    C4 = 0.0
    for v in vs:
        x = np.asarray(v(co.nodes), float) if callable(v) else np.asarray(v)
        x = x.astype(complex) if complex(s) != 0 else x
        v_inf = float(np.max(np.abs(x)))
        v_lip = co.lipschitz_seminorm(x)
        row = [v_lip]
        srow = [v_inf]
        for n in range(1, n_max + 1):
            x = op @ x
            lip = co.lipschitz_seminorm(x)
            row.append(lip)
            srow.append(float(np.max(np.abs(x))))
            bound = (abs(complex(s)) + 1.0) * v_inf + theta**n * v_lip
            if bound > 0:
                C4 = max(C4, lip / bound)
        semis.append(row)
        sups.append(srow)
    semis = np.array(semis)
    # contraction rate of the seminorm over the first steps, across vectors
    rates = []
    for row in semis:
        r = row[: min(6, len(row))]
        ok = r > 1e-12 * max(r[0], 1e-300)
        if ok.sum() >= 2 and r[0] > 0:
            k = np.flatnonzero(ok)
            rates.append(float(np.exp(np.polyfit(k, np.log(r[ok]), 1)[0])))
    rate = float(np.max(rates)) if rates else 0.0
    C4 = max(C4, 1.0)
    return LasotaYorkeReport(semis, np.array(sups), float(C4), rate, bool(np.isfinite(C4) and C4 <= C4_max))


# ---------------------------------------------------------------------------
# collocation discretisation


class CollocationOperator:
    """Point-value discretisation of R^(s) on per-branch nodes.

    ``kind="chebyshev"`` uses Chebyshev-Lobatto nodes and barycentric
    interpolation on each branch (spectrally accurate for functions smooth on
    branches); ``kind="linear"`` uses uniform nodes and linear interpolation,
    which keeps the discrete operator positive.  With ``grid_size`` the node
    budget is spread over branches in proportion to width**power.
    """

    def __init__(self, gm: GibbsMarkovMap, roof: RoofFunction, nodes_per_branch=24, kind="chebyshev",
                 grid_size=None, power=0.5):
        self.gm = gm
        self.roof = roof
        self.kind = kind
        order = np.argsort([b.lo for b in gm.branches])
        self.branch_order = order
        nb = len(gm.branches)
        if grid_size is not None:
            w = np.array([gm.branches[i].width for i in order]) ** power
            counts = np.maximum(3, np.round(grid_size * w / w.sum())).astype(int)
        else:
            counts = np.full(nb, int(nodes_per_branch))
        if kind == "chebyshev" and np.any(counts < 2):
            raise ValueError("need at least two nodes per branch")
        self.counts = counts
        nodes, owner, wq, refs = [], [], [], []
        for j, i in enumerate(order):
            m = counts[j]
            b = gm.branches[i]
            if kind == "chebyshev":
                ref = -np.cos(np.pi * np.arange(m) / (m - 1))
                cc = _clenshaw_curtis_weights(m)
            else:
                ref = np.linspace(-1.0, 1.0, m)
                cc = np.full(m, 2.0 / (m - 1))
                cc[0] *= 0.5
                cc[-1] *= 0.5
            refs.append(ref)
            # the right endpoint belongs to the next branch; stay one ulp inside
            nodes.append(np.minimum(b.lo + 0.5 * b.width * (ref + 1.0), np.nextafter(b.hi, b.lo)))
            owner.append(np.full(m, i))
            wq.append(0.5 * b.width * cc)
        self.refs = refs
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.nodes = np.concatenate(nodes)
        self.owner = np.concatenate(owner)
        self.weights = np.concatenate(wq) * gm.density(self.nodes)   # int f dmu ~ weights @ f(nodes)
        n = self.nodes.size
        self.n = n
        pre, ew, _ = gm.potential_weights(self.nodes)                # (n_branches, n_nodes)
        rows, cols, vals, phis = [], [], [], []
        for j, bi in enumerate(order):
            b = gm.branches[bi]
            t = 2.0 * (pre[bi] - b.lo) / b.width - 1.0
            P = sparse.coo_matrix(self._interp_matrix(t, j))
            rows.append(P.row)
            cols.append(P.col + self.offsets[j])
            vals.append(P.data * ew[bi][P.row])
            # a preimage can sit on the right endpoint, which belongs to the next branch
            inside = np.minimum(pre[bi], np.nextafter(b.hi, b.lo))
            phis.append(np.asarray(roof(inside), float)[P.row])
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._vals = np.concatenate(vals)
        self._phi = np.concatenate(phis)
        same = self.owner[1:] == self.owner[:-1]
        k = np.flatnonzero(same)
        dx = (self.nodes[k + 1] - self.nodes[k]) / (gm.y_hi - gm.y_lo)
        self.D = sparse.csr_matrix((np.concatenate([-1.0 / dx, 1.0 / dx]),
                                    (np.concatenate([np.arange(k.size)] * 2), np.concatenate([k, k + 1]))),
                                   shape=(k.size, n))
        self.D_weights = 0.5 * (self.weights[k] + self.weights[k + 1])

    def _interp_matrix(self, t, j):
        t = np.clip(np.asarray(t, float), -1.0, 1.0)
        ref = self.refs[j]
        m = ref.size
        if self.kind == "chebyshev":
            bw = (-1.0) ** np.arange(m)
            bw[0] *= 0.5
            bw[-1] *= 0.5
            diff = t[:, None] - ref[None, :]
            exact = diff == 0
            with np.errstate(divide="ignore", invalid="ignore"):
                q = bw[None, :] / diff
                P = q / q.sum(axis=1, keepdims=True)
            r = np.flatnonzero(exact.any(axis=1))
            P[r] = exact[r].astype(float)
            return P
        pos = (t + 1.0) * 0.5 * (m - 1)
        k = np.clip(np.floor(pos).astype(int), 0, m - 2)
        f = pos - k
        P = np.zeros((t.size, m))
        P[np.arange(t.size), k] = 1.0 - f
        P[np.arange(t.size), k + 1] += f
        return P

    def sparse_matrix(self, s):
        s = complex(s)
        vals = self._vals if s == 0 else self._vals * np.exp(-s * self._phi)
        A = sparse.csr_matrix((vals, (self._rows, self._cols)), shape=(self.n, self.n))
        A.sum_duplicates()
        return A

    def matrix(self, s):
        """Dense matrix of R^(s) on node values."""
        return self.sparse_matrix(s).toarray()

    def lipschitz_seminorm(self, x):
        """Largest within-branch difference quotient of node values, in units of |Y|."""
        return float(np.max(np.abs(self.D @ x))) if self.D.shape[0] else 0.0

    def b_norm_matrix(self, b, C4=1.0):
        cb = 1.0 / (2.0 * C4 * (abs(b) + 2.0))
        S = sparse.diags(self.weights) + cb * cb * (self.D.T @ sparse.diags(self.D_weights) @ self.D)
        return S.toarray()

    def integrate(self, f_nodes):
        return self.weights @ f_nodes


def _clenshaw_curtis_weights(m):
    """Clenshaw-Curtis weights on [-1, 1] for the m increasing Chebyshev-Lobatto nodes."""
    n = m - 1
    theta = np.pi * np.arange(m) / n
    w = np.zeros(m)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(n * theta[1:-1]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / n
    return w[::-1].copy()


# ---------------------------------------------------------------------------
# truncation probe


@dataclass
class TruncationReport:
    N: np.ndarray
    t: np.ndarray
    diff: np.ndarray          # (len(N), len(t))
    stderr: np.ndarray
    shape: np.ndarray
    C_fit: float
    C_max: float
    passed: bool
    n_slope: float
    beta: float


def truncation_error_probe(fl: SuspensionFlow, v, w, N_grid, t_grid, n_samples=2_000_000, seed=0,
                           beta=None, C_max=10.0, n_batches=32) -> TruncationReport:
    """Coupled Monte Carlo of rho on Y^phi and on Y^{phi ^ N}.

    Samples from mu^phi with u < min(phi, N) are exactly mu^{phi ^ N}
    samples; both systems are flowed from the same starting points.
    """
    N_grid = np.asarray(N_grid, float)
    t_grid = np.asarray(t_grid, float)
    order = np.argsort(t_grid)
    ts = t_grid[order]
    beta = beta if beta is not None else getattr(fl.roof.base, "beta", None)
    if beta is None:
        raise ValueError("tail exponent beta must be given for this roof")
    nN, nt = N_grid.size, ts.size
    per = n_samples // n_batches
    # per batch sums: full system and each truncation
    full = np.zeros((n_batches, 3, nt))          # sum vw, sum v, sum w  (count = per)
    trunc = np.zeros((n_batches, nN, 4, nt))     # sum vw, sum v, sum w, count
    capv = fl.cap
    for b, rng in enumerate(batch_streams(seed, n_batches)):
        st = fl.sample(per, rng)
        v0 = v(st.y, st.u)
        states = []
        for k, N in enumerate(N_grid):
            keep = st.u < np.minimum(st.phi if capv is None else np.minimum(st.phi, capv), N)
            states.append((keep, st.subset(keep), v0[keep]))
        fst = st
        # every system consumes its own copy of one stream (dithered maps draw noise)
        rngs = [copy.deepcopy(rng) for _ in range(nN)]
        tcur = 0.0
        for j, t in enumerate(ts):
            if t > tcur:
                fl.advance(fst, t - tcur, rng)
                for k, N in enumerate(N_grid):
                    fl.advance(states[k][1], t - tcur, rngs[k], cap=N if capv is None else min(N, capv))
                tcur = t
            wf = w(fst.y, fst.u)
            full[b, 0, j] = v0 @ wf
            full[b, 1, j] = v0.sum()
            full[b, 2, j] = wf.sum()
            for k in range(nN):
                keep, sk, vk = states[k]
                wk = w(sk.y, sk.u)
                trunc[b, k, 0, j] = vk @ wk
                trunc[b, k, 1, j] = vk.sum()
                trunc[b, k, 2, j] = wk.sum()
                trunc[b, k, 3, j] = vk.size
    def rho_of(svw, sv, sw, cnt):
        return svw / cnt - (sv / cnt) * (sw / cnt)
    rf_b = rho_of(full[:, 0], full[:, 1], full[:, 2], per)                      # (B, nt)
    rt_b = rho_of(trunc[:, :, 0], trunc[:, :, 1], trunc[:, :, 2], trunc[:, :, 3])  # (B, nN, nt)
    d_b = rf_b[:, None, :] - rt_b
    tot = full.sum(axis=0)
    rf = rho_of(tot[0], tot[1], tot[2], per * n_batches)
    ttot = trunc.sum(axis=0)
    rt = rho_of(ttot[:, 0], ttot[:, 1], ttot[:, 2], ttot[:, 3])
    diff = rf[None, :] - rt
    se = d_b.std(axis=0, ddof=1) / math.sqrt(n_batches)
    vinf = v.sup if v.sup is not None else 1.0
    winf = w.sup if w.sup is not None else 1.0
    shape = vinf * winf * (ts[None, :] * N_grid[:, None] ** (-beta) + N_grid[:, None] ** (-(beta - 1.0)))
    excess = np.maximum(np.abs(diff) - 3.0 * se, 0.0)
    C_fit = float(np.max(excess / shape))
    # N-dependence at fixed t: slope of log|diff| against log N where resolved
    slopes = []
    for j in range(nt):
        ok = np.abs(diff[:, j]) > 3 * se[:, j]
        if ok.sum() >= 2:
            slopes.append(np.polyfit(np.log(N_grid[ok]), np.log(np.abs(diff[ok, j])), 1)[0])
    n_slope = float(np.median(slopes)) if slopes else float("nan")
    inv = np.argsort(order)
    return TruncationReport(N_grid, t_grid, diff[:, inv], se[:, inv], shape[:, inv], C_fit, C_max,
                            bool(C_fit <= C_max), n_slope, float(beta))
