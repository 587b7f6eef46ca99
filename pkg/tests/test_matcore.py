"""
Unit tests for the dense matrix kernel.
"""
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from engine.errors import ModelError, NumericalError
from engine.matcore import (
    as_mat, bracket, eigenvalues, expm, logm_unipotent, projection_residual, span_union,
)

small_matrices = arrays(np.float64, (3, 3), elements=st.floats(-3.0, 3.0, allow_nan=False))
unit_matrices = arrays(np.float64, (3, 3), elements=st.floats(-1.0, 1.0, allow_nan=False))


def test_as_mat_rejects_bad_input():
    with pytest.raises(ModelError):
        as_mat([1.0, 2.0])
    with pytest.raises(ModelError):
        as_mat([[1.0, np.nan], [0.0, 1.0]])
    m = as_mat([[1, 2], [3, 4]])
    assert m.dtype == np.float64
    assert not m.flags.writeable


def test_bracket():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert np.array_equal(bracket(a, b), np.diag([1.0, -1.0]))
    assert np.array_equal(bracket(a, a), np.zeros((2, 2)))
    with pytest.raises(ModelError):
        bracket(a, np.eye(3))


def test_expm_trivial_cases():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(expm(np.diag([1.0, -2.0]), 0.5), np.diag([np.exp(0.5), np.exp(-1.0)]), rtol=1e-14)
    rot = expm(np.array([[0.0, -1.0], [1.0, 0.0]]), 0.3)
    expected = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    assert np.allclose(rot, expected, atol=1e-15)


def test_expm_large_norm_matches_scipy(rng):
    a = 8.0 * rng.standard_normal((4, 4))
    ours = expm(a)
    ref = scipy.linalg.expm(a)
    assert np.linalg.norm(ours - ref) <= 1e-10 * np.linalg.norm(ref)


def test_expm_complex():
    z = np.array([[1j, 0], [0, -1j]])
    assert np.allclose(expm(z, 2.0), np.diag([np.exp(2j), np.exp(-2j)]), atol=1e-14)


def test_expm_overflow_raises():
    with pytest.raises(NumericalError):
        expm(1e5 * np.eye(2))


@given(small_matrices, st.floats(-1.0, 1.0))
def test_expm_matches_scipy(a, t):
    ref = scipy.linalg.expm(t * a)
    assert np.allclose(expm(a, t), ref, rtol=1e-10, atol=1e-10)


def test_logm_unipotent_inverts_exp():
    k = np.array([[0.0, 1.5, -0.7], [0.0, 0.0, 2.0], [0.0, 0.0, 0.0]])
    assert np.allclose(logm_unipotent(expm(k)), k, atol=1e-14)
    assert np.array_equal(logm_unipotent(np.eye(3)), np.zeros((3, 3)))


def test_logm_rejects_non_unipotent():
    with pytest.raises(ModelError):
        logm_unipotent(np.diag([2.0, 1.0, 1.0]))


def test_eigenvalues_diagonal_and_ordering():
    vals = eigenvalues(np.diag([-1.0, 3.0, 0.5]))
    assert np.allclose(vals, [3.0, 0.5, -1.0], atol=1e-14)


def test_eigenvalues_rotation_exact_conjugates():
    vals = eigenvalues(np.array([[0.0, -2.0], [2.0, 0.0]]))
    assert vals[0] == np.conj(vals[1])
    assert abs(vals[0] - 2j) < 1e-14


def test_eigenvalues_match_numpy(rng):
    for _ in range(20):
        a = rng.standard_normal((6, 6))
        ours = np.array(eigenvalues(a))
        ref = np.linalg.eigvals(a)
        for v in ref:
            assert np.min(np.abs(ours - v)) < 1e-8
        for v in ours:
            if v.imag != 0.0:
                assert np.conj(v) in ours


def test_eigenvalues_defective():
    vals = eigenvalues(np.array([[2.0, 1.0], [0.0, 2.0]]))
    assert np.allclose(vals, [2.0, 2.0], atol=1e-7)


def test_eigenvalues_iteration_cap(monkeypatch):
    from engine import settings
    monkeypatch.setitem(settings._load_numerics(), "qr_sweeps_per_dim", 0)
    with pytest.raises(NumericalError):
        eigenvalues(np.array([[0.0, -1.0], [1.0, 0.0]]))


def test_span_union_rank_and_orthonormality():
    basis = span_union([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    assert basis.shape == (2, 3)
    assert np.allclose(basis @ basis.T, np.eye(2), atol=1e-14)
    assert projection_residual(basis, [3.0, -1.0, 0.0]) < 1e-14
    assert abs(projection_residual(basis, [0.0, 0.0, 2.0]) - 2.0) < 1e-14


def test_span_union_degenerate_inputs():
    assert span_union([]).shape == (0, 0)
    assert span_union([[0.0, 0.0], [0.0, 0.0]]).shape == (0, 2)
    with pytest.raises(ModelError):
        span_union([[1.0, 0.0], [1.0, 0.0, 0.0]])


@given(small_matrices, small_matrices, small_matrices, st.floats(-2.0, 2.0))
def test_bracket_bilinear_and_jacobi(a, b, c, s):
    assert np.allclose(bracket(s * a + b, c), s * bracket(a, c) + bracket(b, c), atol=1e-9)
    assert np.allclose(bracket(a, b), -bracket(b, a), atol=0.0)
    jacobi = bracket(a, bracket(b, c)) + bracket(b, bracket(c, a)) + bracket(c, bracket(a, b))
    assert np.max(np.abs(jacobi)) <= 1e-9


@given(unit_matrices, st.floats(-1.0, 1.0))
def test_expm_determinant_is_exp_trace(a, t):
    assert np.linalg.det(expm(a, t)) == pytest.approx(np.exp(t * np.trace(a)), rel=1e-9)


@given(unit_matrices, st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_expm_one_parameter_group(a, s, t):
    whole = expm(a, s + t)
    assert np.allclose(whole, expm(a, s) @ expm(a, t), rtol=1e-9, atol=1e-9 * np.max(np.abs(whole)))


strict_upper = arrays(np.float64, (4, 4), elements=st.floats(-2.0, 2.0, allow_nan=False)).map(
    lambda m: np.triu(m, 1))


@given(strict_upper)
def test_logm_unipotent_inverts_exp_on_strictly_upper(k):
    assert np.allclose(logm_unipotent(expm(k)), k, atol=1e-11)


def test_eigenvalues_similarity_invariant(rng):
    for _ in range(20):
        a = rng.standard_normal((5, 5))
        p = np.eye(5) + 0.3 * rng.standard_normal((5, 5))
        ours = np.array(eigenvalues(a))
        similar = np.array(eigenvalues(p @ a @ np.linalg.inv(p)))
        for v in similar:
            assert np.min(np.abs(ours - v)) < 1e-6


def test_span_union_krylov_pair():
    b = np.array([1.0, 0.0])
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    basis = span_union([b, rotation @ b])
    assert basis.shape == (2, 2)
    assert np.allclose(basis @ basis.T, np.eye(2), atol=1e-14)
    assert span_union([b, 2.0 * np.eye(2) @ b]).shape == (1, 2)
