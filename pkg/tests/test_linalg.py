"""Vectorization operators, Kronecker identities and the matrix normal density."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from mmar import linalg
from mmar.exceptions import NotPositiveDefiniteError

from conftest import random_spd


def test_vec_identity_and_single_entry():
    assert np.array_equal(linalg.vec(np.eye(2)), [1.0, 0.0, 0.0, 1.0])
    single = np.zeros((2, 3))
    single[0, 1] = 5.0
    out = linalg.vec(single)
    assert out[2] == 5.0 and np.count_nonzero(out) == 1


def test_mat_basic():
    assert np.array_equal(linalg.mat([1, 0, 0, 1], 2, 2), np.eye(2))
    assert np.array_equal(linalg.mat([1, 2, 3], 3, 1), [[1.0], [2.0], [3.0]])
    with pytest.raises(ValueError):
        linalg.mat([1, 2, 3], 2, 2)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_vec_mat_round_trip(m, n, seed):
    mtx = np.random.default_rng(seed).standard_normal((m, n))
    assert np.array_equal(linalg.mat(linalg.vec(mtx), m, n), mtx)


def test_vech_values():
    assert np.array_equal(linalg.vech(np.eye(2)), [1.0, 0.0, 1.0])
    assert np.array_equal(linalg.vech(np.ones((3, 3))), np.ones(6))
    with pytest.raises(ValueError):
        linalg.vech(np.arange(6.0).reshape(2, 3))
    with pytest.raises(ValueError):
        linalg.vech(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_vech_is_column_major_lower_stack():
    sym = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
    assert np.array_equal(linalg.vech(sym), [1, 2, 4, 3, 5, 6])


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_vech_unvech_round_trip(n, seed):
    raw = np.random.default_rng(seed).standard_normal((n, n))
    sym = raw + raw.T
    assert np.array_equal(linalg.unvech(linalg.vech(sym)), sym)


def test_kron_identity_blocks():
    assert np.array_equal(linalg.kron(np.eye(2), np.eye(3)), np.eye(6))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_kron_vec_bilinear_identity(seed):
    # kron(B, A) @ vec(Y) = vec(A @ Y @ B^T), checked against the direct product
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 2))
    b = rng.standard_normal((3, 3))
    y = rng.standard_normal((2, 3))
    lhs = linalg.kron(b, a) @ linalg.vec(y)
    rhs = linalg.vec(a @ y @ b.T)
    scale = 1.0 + np.linalg.norm(rhs)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale


def test_demo_regime_kron_radius(demo_model):
    explosive = demo_model.components[1]
    rho = linalg.spectral_radius(linalg.kron(explosive.B[0], explosive.A[0]))
    assert rho == pytest.approx(1.0989, abs=1e-3)


def test_commutation_row_vector_case():
    assert np.array_equal(linalg.commutation_matrix(1, 4), np.eye(4))


def test_commutation_transpose_relation():
    assert np.array_equal(linalg.commutation_matrix(2, 3),
                          linalg.commutation_matrix(3, 2).T)


def test_commutation_swaps_kron_factors(rng):
    m1 = rng.standard_normal((2, 2))
    m2 = rng.standard_normal((3, 3))
    k_nm = linalg.commutation_matrix(3, 2)
    k_mn = linalg.commutation_matrix(2, 3)
    lhs = k_nm @ np.kron(m1, m2) @ k_mn
    assert np.allclose(lhs, np.kron(m2, m1), atol=1e-12)


@given(st.integers(1, 5), st.integers(1, 5))
@settings(max_examples=25, deadline=None)
def test_commutation_is_permutation(m, n):
    k = linalg.commutation_matrix(m, n)
    assert np.array_equal(np.sort(np.unique(k)), [0.0, 1.0] if m * n > 1 else [1.0])
    assert np.array_equal(k.sum(axis=0), np.ones(m * n))
    assert np.array_equal(k.sum(axis=1), np.ones(m * n))


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_commutation_action(m, seed):
    n = (seed % 4) + 1
    mtx = np.random.default_rng(seed).standard_normal((m, n))
    assert np.array_equal(linalg.commutation_matrix(m, n) @ linalg.vec(mtx),
                          linalg.vec(mtx.T))


def test_expansion_trivial():
    assert np.array_equal(linalg.expansion_matrix(1), [[1.0]])


def test_expansion_round_trip(rng):
    raw = rng.standard_normal((2, 2))
    sym = raw + raw.T
    assert np.allclose(linalg.expansion_matrix(2) @ linalg.vech(sym),
                       linalg.vec(sym))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_expansion_column_sums(m):
    # diagonal entries appear once in vec, off-diagonal entries twice
    g = linalg.expansion_matrix(m)
    sums = g.sum(axis=0)
    diag_positions = [linalg.vech(np.diag(np.arange(1.0, m + 1)))[j] != 0
                      for j in range(m * (m + 1) // 2)]
    for j, is_diag in enumerate(diag_positions):
        assert sums[j] == (1.0 if is_diag else 2.0)


def test_spectral_radius_identity():
    assert linalg.spectral_radius(np.eye(3)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        linalg.spectral_radius(np.ones((2, 3)))


def test_demo_contracting_regime_radius(demo_model):
    comp = demo_model.components[0]
    rho = linalg.spectral_radius(np.kron(comp.B[0], comp.A[0]))
    assert rho == pytest.approx(0.8471, abs=1e-3)


def _char_poly_coeffs(mtx):
    # Faddeev-LeVerrier: coefficients from traces of powers, no eigensolver
    n = mtx.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    work = np.eye(n)
    for k in range(1, n + 1):
        work = mtx @ work
        coeffs[k] = -np.trace(work) / k
        work += coeffs[k] * np.eye(n)
    return coeffs


def test_spectral_radius_against_companion_roots(rng):
    mtx = rng.standard_normal((4, 4))
    roots = np.roots(_char_poly_coeffs(mtx))
    assert linalg.spectral_radius(mtx) == pytest.approx(
        float(np.max(np.abs(roots))), rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_spectral_radius_below_induced_norms(seed):
    mtx = np.random.default_rng(seed).standard_normal((5, 5))
    rho = linalg.spectral_radius(mtx)
    assert rho <= np.linalg.norm(mtx, 2) + 1e-12
    assert rho <= np.linalg.norm(mtx, 1) + 1e-12
    assert rho <= np.linalg.norm(mtx, np.inf) + 1e-12


def test_matrix_normal_at_standard_mode():
    val = linalg.matrix_normal_logpdf(np.zeros((2, 2)), np.zeros((2, 2)),
                                      np.eye(2), np.eye(2))
    assert val == pytest.approx(-2.0 * np.log(2.0 * np.pi), abs=1e-12)


def test_matrix_normal_matches_vec_form(rng):
    for _ in range(100):
        m, n = rng.integers(1, 5), rng.integers(1, 5)
        y = rng.standard_normal((m, n))
        mean = rng.standard_normal((m, n))
        u = random_spd(rng, m)
        v = random_spd(rng, n)
        ours = linalg.matrix_normal_logpdf(y, mean, u, v)
        ref = multivariate_normal.logpdf(linalg.vec(y), mean=linalg.vec(mean),
                                         cov=np.kron(v, u))
        assert ours == pytest.approx(ref, abs=1e-10)


def test_matrix_normal_scale_invariance(rng):
    y = rng.standard_normal((2, 3))
    mean = rng.standard_normal((2, 3))
    u = random_spd(rng, 2)
    v = random_spd(rng, 3)
    c = 3.7
    base = linalg.matrix_normal_logpdf(y, mean, u, v)
    scaled = linalg.matrix_normal_logpdf(y, mean, c * u, v / c)
    assert scaled == pytest.approx(base, abs=1e-10)


def test_matrix_normal_rejects_non_spd(rng):
    y = np.zeros((2, 2))
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite
    with pytest.raises(NotPositiveDefiniteError):
        linalg.matrix_normal_logpdf(y, y, bad, np.eye(2))
