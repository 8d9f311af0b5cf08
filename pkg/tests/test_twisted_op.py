import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixlab import suspension as sp
from mixlab import twisted_op as to
from mixlab.errors import SingularResolvent


@pytest.fixture(scope="module")
def lsv_trunc(lsv):
    gm, tab = lsv
    return gm, sp.TruncatedRoof(sp.induced_roof(1.0, gm, tab), 50)


@pytest.fixture(scope="module")
def lsv_asm(lsv_trunc):
    gm, roof = lsv_trunc
    return to.UlamAssembly(gm, roof, 512)


def _affine_roof():
    return sp.FunctionRoof(lambda y: 1.0 + 0.3 * y, inf_phi=1.0, sup_phi=1.3, name="1+0.3y")


# -- assembly -----------------------------------------------------------------

def test_grid_size_minimum(doubling):
    with pytest.raises(ValueError):
        to.ulam_matrix(doubling, sp.ConstantRoof(1.0), 0, grid_size=128)


def test_normalisation_at_zero(lsv_asm):
    A = lsv_asm.operator(0)
    assert np.max(np.abs(A @ np.ones(A.matrix.shape[0]) - 1.0)) < 1e-10


def test_twist_modulus_bounded(lsv_asm):
    A0 = lsv_asm.operator(0).dense()
    for s in (0.3, 2j, 0.1 + 5j):
        assert np.all(np.abs(lsv_asm.operator(s).dense()) <= A0 + 1e-15)


def test_untwisted_is_zero_twist(lsv):
    gm, tab = lsv
    a = to.UlamAssembly(gm, sp.induced_roof(1.0, gm, tab), 512).operator(0).dense()
    b = to.UlamAssembly(gm, None, 512).operator(0).dense()
    assert np.array_equal(a, b)


def test_constant_roof_factors(lsv):
    gm, _ = lsv
    asm = to.UlamAssembly(gm, sp.ConstantRoof(1.0), 256)
    A0 = asm.operator(0).dense()
    for s in (0.5, 3j, 0.2 - 1j):
        assert np.allclose(asm.operator(s).dense(), np.exp(-s) * A0, rtol=0, atol=1e-15)


def test_doubling_affine_image(doubling):
    asm = to.UlamAssembly(doubling, sp.ConstantRoof(1.0), 1024)
    v = asm.cell_average(lambda x: x)
    out = asm.operator(0) @ v
    assert np.max(np.abs(out - (asm.cell_mid / 2 + 0.25))) < 2.0 / asm.n


def test_negative_real_part_rejected(lsv_asm):
    with pytest.raises(ValueError):
        lsv_asm.operator(-0.1)


# -- eigenvalues --------------------------------------------------------------

def test_leading_eigen_zero(lsv_asm):
    r = to.leading_eigen(lsv_asm.operator(0))
    assert r.lam == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(r.eigfun, 1.0, atol=1e-10)
    assert lsv_asm.cell_mu @ r.eigfun == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("b", [0.3, 1.0, 2.5])
def test_constant_roof_eigenvalue(lsv, b):
    gm, _ = lsv
    r = to.leading_eigen(to.UlamAssembly(gm, sp.ConstantRoof(1.0), 256).operator(1j * b))
    assert complex(r.lam) == pytest.approx(np.exp(-1j * b), abs=1e-10)


def test_small_real_s_two_grids(lsv_trunc):
    gm, roof = lsv_trunc
    lams = [to.leading_eigen(to.UlamAssembly(gm, roof, g).operator(0.01)).lam for g in (1024, 2048)]
    assert all(abs(np.imag(l)) < 1e-14 and np.real(l) < 1 for l in lams)
    assert abs(lams[0] - lams[1]) < 1e-6


@pytest.mark.parametrize("c", [1.0, 2.5])
def test_eigen_derivative_constant(lsv, c):
    gm, _ = lsv
    rep = to.eigen_derivative_check(gm, sp.ConstantRoof(c), grid_size=256, phi_norm=c)
    # central difference of e^{-cs}: truncation error c^3 h^2 / 6
    assert rep.dlam == pytest.approx(-c, abs=c**3 * rep.h**2 / 6 + 1e-9)


def test_spectral_radius_examples(lsv_asm, lsv):
    gm, _ = lsv
    assert to.spectral_radius(lsv_asm.operator(0))[0] == pytest.approx(1.0, abs=1e-12)
    asm = to.UlamAssembly(gm, sp.ConstantRoof(1.0), 256)
    assert to.spectral_radius(asm.operator(1j * math.pi))[0] == pytest.approx(1.0, abs=1e-10)


def test_lambda_lipschitz_in_b(doubling):
    # |lambda(ib) - lambda(ib')| <= L |b - b'| with L close to |phi|_1 near b = 0
    asm = to.UlamAssembly(doubling, _affine_roof(), 512)
    b = np.linspace(0, 0.2, 11)
    lam = np.array([to.leading_eigen(asm.operator(1j * x)).lam for x in b])
    L = np.max(np.abs(np.diff(lam)) / np.diff(b))
    assert L <= 1.05 * 1.15


# -- resolvent ----------------------------------------------------------------

def test_singular_resolvent(lsv):
    gm, _ = lsv
    asm = to.UlamAssembly(gm, sp.ConstantRoof(1.0), 256)
    with pytest.raises(SingularResolvent):
        to.resolvent_norm(asm, 2 * math.pi)


def test_resolvent_at_pi_on_constants(lsv):
    gm, _ = lsv
    asm = to.UlamAssembly(gm, sp.ConstantRoof(1.0), 256)
    A = asm.operator(1j * math.pi).dense()
    x = np.linalg.solve(np.eye(asm.n) - A, np.ones(asm.n))
    assert np.allclose(x, 0.5, atol=1e-12)
    assert np.isfinite(to.resolvent_norm(asm, math.pi).norm)


def test_sweep_two_resolutions(doubling):
    b = [0.5, 2.0, 8.0]
    s1 = to.resolvent_sweep(doubling, _affine_roof(), b, grid_size=512)
    s2 = to.resolvent_sweep(doubling, _affine_roof(), b, grid_size=1024)
    assert np.all(np.abs(s1.norms / s2.norms - 1) < 0.05)
    assert np.isfinite(s1.alpha)
    with pytest.raises(ValueError):
        to.resolvent_sweep(doubling, _affine_roof(), [0.0, 1.0], grid_size=256)


# -- properties ---------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.floats(0, 3), st.floats(-20, 20), st.integers(0, 2**31))
def test_l1_contraction(lsv_asm, a, b, seed):
    v = np.random.default_rng(seed).standard_normal(lsv_asm.n)
    w = lsv_asm.operator(complex(a, b)) @ v
    mu = lsv_asm.cell_mu
    assert mu @ np.abs(w) <= mu @ np.abs(v) * (1 + 1e-12) + 1e-15


@pytest.mark.parametrize("b", [0.7, 4.0])
def test_adjoint_of_mb(doubling, b):
    # <R^(ib) v, w> = <v, M_b w> with M_b w = e^{i b phi} w o F
    roof = _affine_roof()
    asm = to.UlamAssembly(doubling, roof, 2048)
    v = lambda y: np.exp(np.sin(2 * np.pi * y))
    w = lambda y: np.cos(3 * y) + 1j * y**2
    lhs = asm.cell_mu @ ((asm.operator(1j * b) @ asm.cell_average(v)) * np.conj(asm.cell_average(w)))
    y = (np.arange(200_000) + 0.5) / 200_000
    rhs = np.mean(v(y) * np.conj(np.exp(1j * b * roof(y)) * w(doubling.step(y))))
    assert abs(lhs - rhs) < 1e-2


# -- Lasota-Yorke -------------------------------------------------------------

def test_ly_constants(lsv):
    gm, _ = lsv
    rep = to.lasota_yorke_probe(gm, sp.ConstantRoof(1.0), 0, 5, [lambda y: np.ones_like(y)], grid_size=512)
    # round-off over the smallest node spacings near the neutral point
    assert np.all(rep.seminorms < 1e-7)


def test_ly_doubling_rate(doubling):
    rep = to.lasota_yorke_probe(doubling, sp.ConstantRoof(1.0), 0, 6, [lambda y: y], grid_size=512)
    assert rep.theta_rate == pytest.approx(0.5, abs=1e-6)
    assert np.allclose(rep.seminorms[0] * 2.0 ** np.arange(7), 1.0, atol=1e-9)


def test_ly_lsv_bounded(lsv_trunc):
    gm, roof = lsv_trunc
    rng = np.random.default_rng(0)
    vs = []
    for _ in range(4):
        k, ph = rng.integers(1, 6), rng.uniform(0, 2 * np.pi)
        vs.append(lambda y, k=k, ph=ph: np.sin(2 * np.pi * k * y + ph))
    rep = to.lasota_yorke_probe(gm, roof, 1j, 12, vs, grid_size=1024)
    assert rep.passed and np.all(np.isfinite(rep.seminorms))


# -- truncation ---------------------------------------------------------------

def test_truncation_identity_for_bounded_roof(doubling):
    fl = sp.make_suspension(doubling, sp.BranchConstantRoof(doubling, {0: 1.0, 1: 1.7}))
    v = sp.Observable(lambda y, u: y * (u < 1), sup=1.0)
    rep = to.truncation_error_probe(fl, v, v, [2.0, 4.0], [1.0, 3.0], n_samples=32_000, beta=2.0)
    assert np.all(rep.diff == 0.0) and rep.C_fit == 0.0 and rep.passed
