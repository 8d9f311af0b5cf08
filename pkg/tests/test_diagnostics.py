import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixlab import diagnostics as dg
from mixlab import suspension as sp
from mixlab.errors import (DegenerateTriple, FitDegenerate, PrecisionExhausted, ScaleRangeTooNarrow,
                           WindowTooShort)
from mixlab.gibbs_markov import linear_map

GOLDEN = (1 + math.sqrt(5)) / 2


def _pair(oracles):
    # the frozen pair lists pasts nearest first; the library lists them oldest first
    p = oracles["temporal_pair"]
    y1 = (np.array(p["past1"][::-1]), np.array(p["fut1"]))
    y4 = (np.array(p["past4"][::-1]), np.array(p["fut4"]))
    return y1, y4


def _two_window_model():
    return dg.SymbolicSkewModel(2, lambda w: 1 + 0.3 * w[..., 0] + 0.2 * w[..., 0] * w[..., 1], 1)


# -- periodic orbits ----------------------------------------------------------

def test_periodic_points(doubling):
    assert dg.periodic_point(doubling, "0").point == pytest.approx(0.0, abs=1e-14)
    o = dg.periodic_point(doubling, "01", sp.ConstantRoof(1.0))
    assert o.point == pytest.approx(1 / 3, abs=1e-14)
    assert np.allclose(sorted(o.orbit), [1 / 3, 2 / 3], atol=1e-14)
    assert o.flow_period == pytest.approx(2.0, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=8))
def test_periodic_point_is_periodic(word):
    gm = linear_map(3)
    roof = sp.FunctionRoof(lambda y: 1 + 0.5 * y, inf_phi=1.0)
    o = dg.periodic_point(gm, word, roof)
    z = o.point
    for _ in word:
        z = float(gm.step(np.array([z]))[0])
    assert abs(z - o.point) < 1e-9
    assert o.flow_period >= len(word) * 1.0 - 1e-12


# -- Diophantine --------------------------------------------------------------

def test_golden_accept(oracles):
    r = dg.diophantine_verdict(GOLDEN, depth=30)
    assert r.verdict == dg.ACCEPT
    with mpmath.workprec(400):
        r = dg.diophantine_verdict((1 + mpmath.sqrt(5)) / 2, depth=30, precision=400)
    assert [int(a) for a in r.quotients[1:31]] == oracles["golden_cf"][:len(r.quotients[1:31])]


def test_rational_reject():
    r = dg.diophantine_verdict(1.5)
    assert r.verdict == dg.REJECT and r.terminated
    assert dg.diophantine_verdict(Fraction(3, 2)).quotients == [1, 2]


def test_liouville_reject(oracles):
    with mpmath.workprec(4000):
        x = mpmath.fsum(mpmath.mpf(10) ** (-math.factorial(k)) for k in range(1, 7))
        r = dg.diophantine_verdict(x, depth=40, precision=4000)
    assert r.verdict == dg.REJECT
    assert [str(a) for a in r.quotients[:8]] == oracles["liouville_cf_head"]


def test_precision_exhausted():
    with pytest.raises(PrecisionExhausted):
        # 8 trusted bits admit only convergent denominators below 10
        dg.diophantine_verdict(GOLDEN, depth=40, precision=8, min_depth=8)


def test_verdict_stable_under_small_perturbation():
    base = dg.diophantine_verdict(GOLDEN, depth=20).verdict
    for d in (1e-15, -2e-15):
        assert dg.diophantine_verdict(GOLDEN + d, depth=20).verdict == base


def test_triples():
    gm = linear_map(3)
    mk = lambda vals: sp.BranchConstantRoof(gm, dict(zip(gm.ids, vals)))
    assert dg.period_triple_test(gm, mk([1 + GOLDEN, 2.0, 1.0])).verdict == dg.ABSENT
    r = dg.period_triple_test(gm, mk([2.5, 2.0, 1.0]))
    assert r.ratio == pytest.approx(1.5) and r.verdict == dg.INCONCLUSIVE
    with pytest.raises(DegenerateTriple):
        dg.period_triple_test(gm, sp.ConstantRoof(1.0))


# -- good asymptotics ---------------------------------------------------------

def test_good_asymptotics_monotone():
    N = np.arange(1, 31, dtype=float)
    f = dg.good_asymptotics_fit(2 * N + 0.5 + 0.3 * 0.8**N)
    assert max(abs(f.L0 - 2), abs(f.kappa - 0.5), abs(f.gamma - 0.8), abs(f.omega)) < 1e-6
    assert f.omega_case == "zero"


def test_good_asymptotics_oscillating():
    N = np.arange(1, 31, dtype=float)
    f = dg.good_asymptotics_fit(2 * N + 0.5 + 0.3 * 0.8**N * np.cos(N * 1.0 + 0.2))
    assert abs(f.omega - 1.0) < 1e-3 and f.omega_case == "interior" and f.liminf_ok


def test_good_asymptotics_degenerate():
    N = np.arange(1, 31, dtype=float)
    with pytest.raises(FitDegenerate):
        dg.good_asymptotics_fit(2 * N)
    with pytest.raises(ValueError):
        dg.good_asymptotics_fit(2 * N[:8] + 0.8 ** N[:8])


# -- M_b powers and the approximate eigenfunction scan ------------------------

@pytest.mark.parametrize("c,b,n", [(1.0, 3.0, 2), (1.7, 5.5, 3)])
def test_mb_constant_roof(doubling, c, b, n):
    dev, psi = dg.mb_power_deviation(doubling, sp.ConstantRoof(c), lambda y: np.ones_like(y), b, n, ([0, 1], 4),
                                     return_phase=True)
    assert dev < 1e-12
    assert abs(np.exp(1j * psi) - np.exp(1j * n * b * c)) < 1e-12


def test_mb_b_zero(lsv):
    gm, tab = lsv
    roof = sp.induced_roof(1.0, gm, tab)
    pts = np.linspace(0.55, 0.95, 20)
    assert dg.mb_power_deviation(gm, roof, lambda y: np.ones_like(y), 0.0, 3, pts) == 0.0


def test_mb_generic_order_one(doubling):
    rng = np.random.default_rng(1)
    th = rng.uniform(0, 2 * np.pi, 8)
    u = lambda y: np.exp(1j * np.interp(y, np.linspace(0, 1, 8), th))
    roof = sp.FunctionRoof(lambda y: 1 + 0.3 * np.sin(np.pi * y) ** 2 + 0.1 * y, inf_phi=1.0)
    dev = dg.mb_power_deviation(doubling, roof, u, 5.0, int(math.log(5)), ([0, 1], 5))
    assert 0.1 < dev <= 2.0


def test_mb_rejects_non_unimodular(doubling):
    with pytest.raises(ValueError):
        dg.mb_power_deviation(doubling, sp.ConstantRoof(1.0), lambda y: 2 * np.ones_like(y), 1.0, 1, [0.2])


def test_period_relation_exact_case(doubling):
    # constant roof: e^{i b n L} u = u on every periodic orbit, so dist(b L, 2 pi Z) matches the phase exactly
    c, b = 1.3, 4.0
    for w in ("0", "01", "011"):
        o = dg.periodic_point(doubling, w, sp.ConstantRoof(c))
        dev, psi = dg.mb_power_deviation(doubling, sp.ConstantRoof(c), lambda y: np.ones_like(y), b, len(w),
                                         [o.point], return_phase=True)
        assert dev < 1e-12
        assert abs(np.exp(1j * (b * o.flow_period - psi)) - 1) < 1e-12


def _scan(doubling, roof):
    return dg.approx_eig_scan(doubling, roof, [2.0, 4.0, 8.0, 16.0], 1.0, ([0, 1], 5), trials=4, seed=0)


def test_scan_flags(doubling):
    psi = lambda y: 0.3 * np.asarray(y, float)
    r = _scan(doubling, sp.ConstantRoof(1.0))
    assert r.flag and np.all(r.deviations < 1e-10)
    coh = sp.FunctionRoof(lambda y: 1 + psi(doubling.step(np.asarray(y, float))) - psi(y), inf_phi=0.7)
    assert _scan(doubling, coh).flag
    gen = sp.FunctionRoof(lambda y: 1 + 0.3 * np.sin(np.pi * np.asarray(y)) ** 2 + 0.1 * np.asarray(y), inf_phi=1.0)
    r = _scan(doubling, gen)
    assert not r.flag and np.all(r.deviations >= 0)


def test_scan_preconditions(doubling):
    with pytest.raises(ValueError):
        dg.approx_eig_scan(doubling, sp.ConstantRoof(1.0), [1.0], 1.0, [0.2])
    with pytest.raises(ValueError):
        dg.approx_eig_scan(doubling, sp.ConstantRoof(1.0), [2.0], 0.0, [0.2])


# -- temporal distance --------------------------------------------------------

def test_temporal_oracle_pair(oracles):
    M = _two_window_model()
    y1, y4 = _pair(oracles)
    for m, ref in oracles["temporal_D_by_m"].items():
        r = dg.temporal_distance(M, y1, y4, int(m))
        assert r.value == pytest.approx(ref, abs=1e-14)
        assert r.error_bound == 0.0


def test_temporal_direct_four_orbit_sum(oracles):
    # independent evaluation: walk the four bi-infinite sequences symbol by symbol
    M = _two_window_model()
    y1, y4 = _pair(oracles)
    phi = lambda a, b: 1 + 0.3 * a + 0.2 * a * b

    def orbit_sum(past, fut, m):
        seq = list(past) + list(fut)
        off = len(past)
        return sum(phi(seq[off + n], seq[off + n + 1]) for n in range(-m, 0))

    m = 5
    ref = (orbit_sum(y1[0], y1[1], m) - orbit_sum(y4[0], y1[1], m)
           - orbit_sum(y1[0], y4[1], m) + orbit_sum(y4[0], y4[1], m))
    assert dg.temporal_distance(M, y1, y4, m).value == pytest.approx(ref, abs=1e-14)


def test_temporal_trivial_cases(oracles):
    y1, y4 = _pair(oracles)
    assert dg.temporal_distance(_two_window_model(), y1, y1, 5).value == 0.0
    const = dg.SymbolicSkewModel(2, lambda w: np.ones(np.shape(w)[:-1]), 1)
    assert dg.temporal_distance(const, y1, y4, 4).value == 0.0
    with pytest.raises(WindowTooShort):
        dg.temporal_distance(_two_window_model(), y1, y4, 9)


def test_window_check():
    assert _two_window_model().check_window()
    with pytest.raises(ValueError):
        dg.SymbolicSkewModel(2, lambda w: w[..., 0] * 1.0, 0)


_words = st.lists(st.integers(0, 1), min_size=6, max_size=6)


@settings(max_examples=60, deadline=None)
@given(_words, _words, st.lists(st.integers(0, 1), min_size=3, max_size=3),
       st.lists(st.integers(0, 1), min_size=3, max_size=3), st.integers(0, 6))
def test_temporal_symmetry(p1, p4, f1, f4, m):
    M = _two_window_model()
    a = dg.temporal_distance(M, (np.array(p1), np.array(f1)), (np.array(p4), np.array(f4)), m).value
    b = dg.temporal_distance(M, (np.array(p4), np.array(f4)), (np.array(p1), np.array(f1)), m).value
    assert a == b


@settings(max_examples=60, deadline=None)
@given(_words, _words, st.lists(st.integers(0, 1), min_size=4, max_size=4),
       st.lists(st.integers(0, 1), min_size=4, max_size=4), st.floats(-1, 1), st.floats(-1, 1))
def test_temporal_cocycle_invariance(p1, p4, f1, f4, a, b):
    # phi + psi o F - psi with psi(y) = a y_0 + b y_0 y_1 has window K = 2; D_m agrees for m > K
    base = _two_window_model()
    psi = lambda w0, w1: a * w0 + b * w0 * w1
    cob = dg.SymbolicSkewModel(2, lambda w: base.roof(w[..., :2]) + psi(w[..., 1], w[..., 2]) - psi(w[..., 0], w[..., 1])
                               + 2.0, 2)
    y1 = (np.array(p1), np.array(f1))
    y4 = (np.array(p4), np.array(f4))
    for m in (3, 4, 6):
        d0 = dg.temporal_distance(base, y1, y4, m).value
        d1 = dg.temporal_distance(cob, y1, y4, m).value
        assert d1 == pytest.approx(d0, abs=1e-12)


def test_temporal_values_match_pointwise():
    M = _two_window_model()
    depth = 4
    vals = dg.temporal_distance_values(M, depth)
    f1, f4 = np.zeros(2, int), np.ones(2, int)
    pasts = [np.array(p) for p in np.ndindex(*(2,) * depth)]
    ref = [dg.temporal_distance(M, (p, f1), (q, f4), depth).value for p in pasts for q in pasts]
    assert np.allclose(vals, ref, atol=1e-13)


# -- box dimension ------------------------------------------------------------

def test_box_dimension_examples(oracles):
    assert dg.box_dimension(np.zeros(2000)).estimate == 0.0
    r = dg.box_dimension(np.linspace(0, 1, 2**12), 2.0 ** -np.arange(2, 11))
    assert 0.9 <= r.estimate <= 1.0
    assert sorted(r.counts.tolist()) == oracles["uniform_grid_box_counts"]
    with pytest.raises(ScaleRangeTooNarrow):
        dg.box_dimension(np.linspace(0, 1, 2000), [0.1, 0.05])
    with pytest.raises(ValueError):
        dg.box_dimension(np.zeros(10))


def test_box_dimension_finite_window_and_geometric():
    fin = dg.box_dimension(dg.temporal_distance_values(_two_window_model(), 10), threshold=0.05)
    assert fin.estimate == 0.0 and fin.verdict == dg.INCONCLUSIVE
    geo = dg.geometric_window_model(10, 0.5)
    vals = dg.temporal_distance_values(geo, 10, future=(np.zeros(11, int), np.ones(11, int)))
    r = dg.box_dimension(vals, threshold=0.05)
    assert r.estimate > 0.05 and r.verdict == dg.ABSENT
