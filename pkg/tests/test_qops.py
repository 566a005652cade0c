import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from olrg.errors import ConfigError
from olrg.qops import adjoint_apply, haar_isometry, kron, pauli, thin_qr_isometry
from olrg.verify import adjoint_power_deviation, tensor_adjoint_deviation, tensor_adjoint_deviation_k2

X, Y, Z, I = (pauli(c) for c in "XYZI")

finite = st.floats(-3, 3, allow_nan=False)
mat2 = arrays(np.float64, (2, 2, 2), elements=finite).map(lambda a: a[0] + 1j * a[1])


def test_pauli_matrices():
    assert np.array_equal(X, [[0, 1], [1, 0]])
    assert np.array_equal(Z, [[1, 0], [0, -1]])
    assert np.array_equal(I, np.eye(2))


def test_unknown_pauli():
    with pytest.raises(ConfigError):
        pauli("W")


def test_kron_examples():
    assert np.array_equal(kron([I, I]), np.eye(4))
    assert np.array_equal(kron([Z, Z]), np.diag([1, -1, -1, 1]))
    ket00 = np.array([1, 0, 0, 0])
    assert np.array_equal(kron([X, I]) @ ket00, [0, 0, 1, 0])


def test_kron_empty():
    with pytest.raises(ConfigError):
        kron([])


def test_adjoint_examples():
    assert np.allclose(adjoint_apply(Z, -1, X), 2j * Y)
    A = np.arange(4).reshape(2, 2) + 1j
    assert np.allclose(adjoint_apply(A, 1, I), 2 * A)
    assert np.array_equal(adjoint_apply(I, -1, A), np.zeros((2, 2)))


def test_adjoint_dimension_mismatch():
    with pytest.raises(ConfigError):
        adjoint_apply(np.eye(2), 1, np.eye(4))


@settings(max_examples=50, deadline=None)
@given(mat2, mat2, mat2, st.sampled_from([-1, 1]))
def test_adjoint_linear_in_first_argument(a1, a2, b, sigma):
    lhs = adjoint_apply(a1 + a2, sigma, b)
    assert np.allclose(lhs, adjoint_apply(a1, sigma, b) + adjoint_apply(a2, sigma, b), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(mat2, mat2, mat2, mat2, st.sampled_from([-1, 1]))
def test_tensor_product_adjoint(a, b, x, y, sigma):
    assert tensor_adjoint_deviation(a, b, x, y, sigma) < 1e-10


@settings(max_examples=30, deadline=None)
@given(mat2, mat2, mat2, mat2, mat2, mat2, st.sampled_from([-1, 1]), st.sampled_from([-1, 1]))
def test_tensor_product_adjoint_iterated(a1, b1, a2, b2, x, y, s1, s2):
    assert tensor_adjoint_deviation_k2(a1, b1, a2, b2, x, y, s1, s2) < 1e-10


def test_tensor_adjoint_pauli_instance():
    lhs = adjoint_apply(np.kron(Z, Z), -1, np.kron(X, I))
    assert np.allclose(lhs, 2j * np.kron(Y, Z))
    assert tensor_adjoint_deviation(Z, Z, X, I, -1) < 1e-15


@settings(max_examples=50, deadline=None)
@given(mat2, mat2, mat2, st.sampled_from([-1, 1]))
def test_adjoint_power_expansion(a1, a2, b, sigma):
    assert adjoint_power_deviation(a1, a2, b, sigma) < 1e-10


def test_qr_examples():
    assert np.allclose(thin_qr_isometry(np.eye(3, dtype=complex)), np.eye(3))
    assert np.allclose(thin_qr_isometry(2 * np.eye(3, dtype=complex)), np.eye(3))
    rng = np.random.default_rng(0)
    m = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
    v = thin_qr_isometry(m)
    assert np.abs(v.conj().T @ v - np.eye(4)).max() < 1e-12


def test_qr_spans_input_and_r_is_positive():
    rng = np.random.default_rng(1)
    m = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    v = thin_qr_isometry(m)
    r = v.conj().T @ m
    assert np.allclose(v @ r, m)
    assert np.allclose(np.tril(r, -1), 0, atol=1e-12)
    assert np.all(np.diag(r).real > 0) and np.allclose(np.diag(r).imag, 0, atol=1e-12)


def test_qr_rank_deficient_completion():
    assert np.array_equal(thin_qr_isometry(np.zeros((4, 2), complex)), np.eye(4, 2))
    m = np.zeros((4, 2), complex)
    m[1, 0] = 3.0  # second column zero
    v = thin_qr_isometry(m)
    assert np.abs(v.conj().T @ v - np.eye(2)).max() < 1e-12
    assert np.allclose(v[:, 0], [0, 1, 0, 0])
    assert np.allclose(v[:, 1], [1, 0, 0, 0])


def test_qr_deterministic_and_batched_torch():
    g = torch.Generator().manual_seed(0)
    m = torch.randn(3, 8, 4, dtype=torch.complex128, generator=g)
    a, b = thin_qr_isometry(m), thin_qr_isometry(m.clone())
    assert torch.equal(a, b)
    assert (a.mH @ a - torch.eye(4)).abs().max() < 1e-12
    assert np.allclose(a[1].numpy(), thin_qr_isometry(m[1].numpy()))


def test_qr_rejects_wide_input():
    with pytest.raises(ConfigError):
        thin_qr_isometry(np.zeros((2, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10**6))
def test_haar_isometry_orthonormal(d_out, seed):
    v = haar_isometry(8, d_out, np.random.default_rng(seed))
    assert np.abs(v.conj().T @ v - np.eye(d_out)).max() < 1e-10
