import math
import warnings

import numpy as np
import pytest

from coupled_escape.errors import (ConvergenceError, DomainError, NumericalOverflowError,
                                   SingularityError)
from coupled_escape.forman import (FundamentalMatrix, OperatorSpec, constant_fundamental,
                                   det_ratio, fit_critical_exponent, fit_power_law,
                                   integrate_fundamental, lattice_lowest_eigenvalue,
                                   negative_eigenvalue, neumann_boundary_matrices, prefactor,
                                   saddle_determinant, stable_determinant)
from coupled_escape.model import Instanton, ModelParams, critical_length
from coupled_escape.spectra import prefactor_below

import oracles

P32 = ModelParams(3, 2)
P42 = ModelParams(4, 2)
LC42 = critical_length(P42)


def _closed_block(c, L):
    s = math.sqrt(c)
    return np.array([[math.cosh(s * L), math.sinh(s * L) / s], [s * math.sinh(s * L), math.cosh(s * L)]])


def _as_blocks(y):
    # state ordering is (eta1, eta2, eta1', eta2'); pick out each field's 2x2 block
    return y[np.ix_([0, 2], [0, 2])], y[np.ix_([1, 3], [1, 3])]


def test_neumann_matrices_structure():
    bm = neumann_boundary_matrices()
    M = np.zeros((4, 4))
    N = np.zeros((4, 4))
    M[0, 2] = M[1, 3] = 1
    N[2, 2] = N[3, 3] = 1
    np.testing.assert_array_equal(bm.M, M)
    np.testing.assert_array_equal(bm.N, N)
    # four independent conditions on the eight boundary values
    assert np.linalg.matrix_rank(np.hstack([bm.M, bm.N])) == 4


def test_neumann_relation():
    bm = neumann_boundary_matrices()
    L = 2.0
    # a constant perturbation has zero slope at both ends
    const = np.array([0.3, -1.2, 0.0, 0.0])
    np.testing.assert_array_equal(bm.residual(const, const), 0.0)
    # eta = cos(pi z / L) e1 vanishes at the ends but has slope -+pi/L there
    left = np.array([0.0, 0, math.pi / L, 0])
    right = np.array([0.0, 0, -math.pi / L, 0])
    assert np.max(np.abs(bm.residual(left, right))) > 1.0


def test_stable_fundamental_closed_form():
    spec = OperatorSpec("uniform_stable", P42)
    fm = integrate_fundamental(spec, 1.0)
    assert np.all(fm.log_scales == 0)
    b1, b2 = _as_blocks(fm.matrix())
    np.testing.assert_allclose(b1, _closed_block(8.0, 1.0), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(b2, _closed_block(2.0, 1.0), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(fm.matrix()[np.ix_([0, 2], [1, 3])], 0.0, atol=1e-15)
    closed = constant_fundamental(8.0, 2.0, 1.0)
    np.testing.assert_allclose(fm.matrix(), closed.matrix(), rtol=1e-9, atol=1e-9)


def test_zero_length_gives_identity():
    for spec in (OperatorSpec("uniform_stable", P42), OperatorSpec("uniform_saddle", P42)):
        np.testing.assert_allclose(integrate_fundamental(spec, 1e-12).matrix(), np.eye(4), atol=1e-11)
    np.testing.assert_allclose(integrate_fundamental(OperatorSpec("uniform_stable", P32), 0.0).y,
                               np.eye(4))


def test_small_m_instanton_approaches_uniform_saddle():
    # the field-mixing term is linear in the amplitude, so the gap closes like sqrt(m)
    gaps = []
    for m in (1e-10, 1e-12, 1e-16):
        inst = Instanton.from_m(m, P42)
        fm = integrate_fundamental(OperatorSpec("nonuniform_saddle", P42, inst), inst.L)
        uni = constant_fundamental(-P42.gap, 2 * P42.mu2, inst.L)
        gaps.append(np.max(np.abs(fm.matrix() - uni.matrix())))
    assert gaps[0] / gaps[1] == pytest.approx(10.0, rel=1e-3)
    assert gaps[2] < 1e-6


def test_fourth_order_convergence():
    spec = OperatorSpec("uniform_stable", P42)
    L = 3.0
    exact = constant_fundamental(8.0, 2.0, L).matrix()
    errs = [np.max(np.abs(integrate_fundamental(spec, L, n).matrix() - exact)) for n in (256, 512, 1024)]
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(16, rel=0.2)


def test_rescaling_bookkeeping_invariant():
    spec = OperatorSpec("uniform_stable", P42)
    bm = neumann_boundary_matrices()
    L = 90.0
    a = integrate_fundamental(spec, L, 65536, 1e50)
    b = integrate_fundamental(spec, L, 65536, 1e100)
    assert a.log_scale > 0 and b.log_scale > 0
    sa, la = a.boundary_determinant(bm)
    sb, lb = b.boundary_determinant(bm)
    assert sa == sb
    assert la == pytest.approx(lb, rel=1e-10)
    sc, lc = constant_fundamental(8.0, 2.0, L).boundary_determinant(bm)
    assert sc == sa and lc == pytest.approx(la, rel=1e-9)
    for L in (0.5 * LC42, 1.5 * LC42, 5.0):
        r50 = det_ratio(L, P42, rescale_threshold=1e50)
        r100 = det_ratio(L, P42, rescale_threshold=1e100)
        assert r50 == pytest.approx(r100, rel=1e-10)


def test_overflow_without_rescaling():
    spec = OperatorSpec("uniform_stable", P42)
    with pytest.raises(NumericalOverflowError):
        integrate_fundamental(spec, 300.0, 4096, math.inf)


def test_integration_preconditions():
    spec = OperatorSpec("uniform_stable", P42)
    with pytest.raises(DomainError):
        integrate_fundamental(spec, 1.0, steps=100)
    inst = Instanton.from_length(3.0, P42)
    with pytest.raises(ValueError):
        integrate_fundamental(OperatorSpec("nonuniform_saddle", P42, inst), 3.5)
    with pytest.raises(ValueError):
        OperatorSpec("nonuniform_saddle", P42)
    with pytest.raises(ValueError):
        OperatorSpec("nonuniform_saddle", P32, inst)
    with pytest.raises(ValueError):
        OperatorSpec("dirichlet", P42)


def test_fundamental_matrix_columns_independent():
    # moderate L keeps the propagator well conditioned enough to see the invariant
    inst = Instanton.from_length(4.0, P32)
    fm = integrate_fundamental(OperatorSpec("nonuniform_saddle", P32, inst), inst.L)
    assert abs(np.linalg.det(fm.y)) > 0
    # Liouville: the propagator has unit determinant
    assert np.linalg.slogdet(fm.y)[1] + fm.log_scale == pytest.approx(0.0, abs=1e-8)


def test_det_ratio_below_matches_closed_form():
    for L in (0.5 * LC42, 0.3 * LC42, 0.9 * LC42):
        closed = (math.pi * prefactor_below(L, P42) / P42.gap) ** 2
        assert abs(det_ratio(L, P42)) == pytest.approx(closed, rel=1e-6)


def test_det_ratio_above_matches_lattice_product():
    L = 1.5 * LC42
    saddle = oracles.instanton_fields(L, 4, 2)
    logs = [oracles.lattice_det_ratio(L, 4, 2, n + 1, saddle) for n in (400, 800, 1600)]
    extrap = oracles.richardson(logs[1], logs[2])
    assert abs(oracles.richardson(logs[0], logs[1]) - extrap) < 1e-5
    assert math.log(abs(det_ratio(L, P42))) == pytest.approx(extrap, abs=1e-3)


def test_det_ratio_singular_and_domain():
    with pytest.raises(SingularityError):
        det_ratio(LC42 + 1e-10, P42)
    with pytest.raises(DomainError):
        det_ratio(0.0, P42)


def _negative_count(L, p, n=401):
    if L < critical_length(p):
        saddle = lambda z: (0 * z, math.sqrt(p.mu2) + 0 * z)
    else:
        saddle = oracles.instanton_fields(L, p.mu1, p.mu2)
    vals = oracles.lattice_eigenvalues(L, p.mu1, p.mu2, n, saddle, k=4)
    return int(np.sum(vals < 0))


@pytest.mark.parametrize("p", [P32, P42])
def test_saddle_determinant_sign_matches_negative_modes(p):
    # Forman's determinant carries the sign (-1)^(number of negative eigenvalues)
    lc = critical_length(p)
    for L in np.concatenate([np.linspace(0.3, 0.95, 4), np.linspace(1.05, 2.0, 5)]) * lc:
        sign, _ = saddle_determinant(L, p)
        assert _negative_count(L, p) == 1
        assert sign == -1.0
        assert stable_determinant(L, p)[0] == 1.0


@pytest.mark.parametrize("p", [P32, P42])
def test_uniform_saddle_determinant_changes_sign_once(p):
    lc = critical_length(p)
    ls = np.linspace(0.2, 1.8, 81) * lc
    ls = ls[np.abs(ls - lc) > 1e-6]
    signs = [saddle_determinant(L, p, branch="uniform")[0] for L in ls]
    flips = np.sum(np.diff(signs) != 0)
    assert flips == 1
    i = int(np.argmax(np.diff(signs) != 0))
    assert ls[i] < lc < ls[i + 1]
    # the continuation keeps a second negative mode above the critical length
    uniform = lambda z: (0 * z, math.sqrt(p.mu2) + 0 * z)
    vals = oracles.lattice_eigenvalues(1.3 * lc, p.mu1, p.mu2, 401, uniform, k=3)
    assert np.sum(vals < 0) == 2


def test_negative_eigenvalue_below():
    for L in (0.1, 1.0, 0.99 * LC42):
        assert negative_eigenvalue(L, P42) == -2.0
    with pytest.raises(DomainError):
        negative_eigenvalue(0.0, P42)


def test_negative_eigenvalue_at_twice_critical_length():
    L = 2 * LC42
    lam = negative_eigenvalue(L, P42)
    saddle = oracles.instanton_fields(L, 4, 2)
    assert lam == pytest.approx(oracles.cosine_galerkin_lowest(L, 4, 2, saddle, n_modes=64), rel=1e-4)
    coarse = oracles.lattice_eigenvalues(L, 4, 2, 401, saddle, 1)[0]
    fine = oracles.lattice_eigenvalues(L, 4, 2, 801, saddle, 1)[0]
    assert lam == pytest.approx(oracles.richardson(coarse, fine), rel=1e-4)
    assert lam < 0


def test_negative_eigenvalue_continuous_across_critical_length():
    for d in (1e-6, 1e-4, 1e-3):
        lam = negative_eigenvalue(LC42 + d, P42)
        # matches the value -gap just below within O(d)
        assert abs(lam + 2.0) < 10 * d
        saddle = oracles.instanton_fields(LC42 + d, 4, 2)
        e = [oracles.lattice_eigenvalues(LC42 + d, 4, 2, n, saddle, 1)[0] for n in (201, 401)]
        assert lam == pytest.approx(oracles.richardson(*e), abs=1e-3)
        assert lam == pytest.approx(e[1], abs=1e-3)


def test_lattice_eigenvalue_second_order():
    L = 1.5 * LC42
    lam = [lattice_lowest_eigenvalue(L, P42, n) for n in (100, 200, 400)]
    ratio = (lam[0] - lam[1]) / (lam[1] - lam[2])
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_negative_eigenvalue_convergence_error():
    with pytest.raises(ConvergenceError):
        negative_eigenvalue(1.5 * LC42, P42, intervals=16, rtol=1e-14, max_intervals=64)


def test_prefactor_matches_closed_form_below():
    L = 0.8 * LC42
    assert prefactor(L, P42) == pytest.approx(prefactor_below(L, P42), rel=1e-6)


def test_prefactor_diverges_on_both_sides():
    below = [prefactor(LC42 - d, P42) for d in (1e-2, 1e-3, 1e-4)]
    above = [prefactor(LC42 + d, P42) for d in (1e-2, 1e-3, 1e-4)]
    assert np.all(np.diff(below) > 0) and np.all(np.diff(above) > 0)
    assert below[-1] > 50 and above[-1] > 50
    with pytest.raises(SingularityError):
        prefactor(LC42 + 5e-7, P42)


def test_prefactor_slope_in_wide_window():
    d = np.geomspace(1e-3, 1e-1, 8)
    fit = fit_power_law(d, [prefactor(LC42 + x, P42) for x in d])
    assert fit.slope == pytest.approx(-0.5, abs=0.05)


def test_long_interval_determinant_refuses_to_guess():
    with pytest.raises(ConvergenceError):
        saddle_determinant(12.0, P42)


def test_fit_power_law_synthetic():
    d = np.geomspace(1e-4, 1e-2, 12)
    fit = fit_power_law(d, 3.7 * d ** -0.5)
    assert fit.slope == pytest.approx(-0.5, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(3.7), abs=1e-10)
    fit = fit_critical_exponent(P42, "above", prefactor_fn=lambda L: 3.7 * (L - LC42) ** -0.5)
    assert fit.slope == pytest.approx(-0.5, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(3.7), abs=1e-10)


def test_fit_critical_exponent_below():
    fit = fit_critical_exponent(P42, "below")
    assert fit.slope == pytest.approx(-0.5, abs=0.01)


def test_fit_critical_exponent_preconditions():
    with pytest.raises(DomainError):
        fit_critical_exponent(P42, "below", window=(1e-2, 1e-4))
    with pytest.raises(DomainError):
        fit_critical_exponent(P42, "below", window=(1e-3, 5.0))
    with pytest.raises(DomainError):
        fit_critical_exponent(P42, "above", n_points=5)
    with pytest.raises(ValueError):
        fit_critical_exponent(P42, "sideways")


def test_fit_aborts_on_prefactor_failure():
    def broken(L):
        raise ConvergenceError("no")

    with pytest.raises(ConvergenceError):
        fit_critical_exponent(P42, "above", prefactor_fn=broken)


def test_fundamental_matrix_scaled_determinant():
    y = np.diag([2.0, 3.0, 4.0, 5.0])
    fm = FundamentalMatrix(y, np.array([0.0, 1.0, 0.0, 2.0]))
    bm = neumann_boundary_matrices()
    sign, logdet = fm.boundary_determinant(bm)
    direct = np.linalg.slogdet(bm.M + bm.N @ fm.matrix())
    assert sign == direct[0] and logdet == pytest.approx(direct[1], rel=1e-14)


def test_conditioning_warning_is_quiet_in_range():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        det_ratio(1.5 * LC42, P42)
