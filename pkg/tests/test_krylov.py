import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from powermean_ssl.errors import DomainError, FactorizationError, InputError, NumericalError
from powermean_ssl.graph import normalized_laplacian
from powermean_ssl.krylov import (LinearOperator, as_operator, gmres_solve, incomplete_cholesky,
                                  lanczos_extreme, pcg_solve)
from powermean_ssl.msbm import MsbmParams, expected_adjacency, sample_msbm
from powermean_ssl.powermean import dense_power_mean_laplacian
from powermean_ssl.sparse import csr_from_dense, identity


def _sbm_layer(seed=3, n_half=50):
    params = MsbmParams(2, n_half, 0.2, 0.05)
    return normalized_laplacian(sample_msbm(params, seed).layers[0], self_loops=True)


def test_operator_linearity(rng):
    L = _sbm_layer()
    op = as_operator(L)
    x, y = rng.standard_normal(100), rng.standard_normal(100)
    a, b = 1.7, -0.3
    np.testing.assert_allclose(op(a * x + b * y), a * op(x) + b * op(y), atol=1e-10)
    with pytest.raises(InputError):
        as_operator(np.ones((2, 3)))


def test_pcg_identity_one_step(rng):
    b = rng.standard_normal(6)
    x, rep = pcg_solve(identity(6), b)
    np.testing.assert_allclose(x, b)
    assert rep.converged and rep.iterations <= 1


def test_pcg_diagonal():
    x, rep = pcg_solve(np.diag([1.0, 2.0, 4.0]), np.array([1.0, 2.0, 4.0]))
    np.testing.assert_allclose(x, [1.0, 1.0, 1.0], atol=1e-12)
    assert rep.converged


def test_pcg_ic_preconditioned_sbm_layer(rng):
    A = _sbm_layer().add_diagonal(0.3)
    b = rng.standard_normal(100)
    x, rep = pcg_solve(A, b, incomplete_cholesky(A, 1e-4), tol=1e-8)
    assert rep.converged and rep.iterations <= 5
    assert np.linalg.norm(A @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_pcg_converged_report_invariant(rng):
    A = _sbm_layer().add_diagonal(0.05)
    b = rng.standard_normal(100)
    _, rep = pcg_solve(A, b, tol=1e-10, max_iter=500)
    assert rep.converged
    assert rep.final_residual_norm <= 1e-10 * np.linalg.norm(b)


def test_pcg_nonconvergence_reported(rng):
    A = _sbm_layer().add_diagonal(0.01)
    _, rep = pcg_solve(A, rng.standard_normal(100), tol=1e-12, max_iter=2)
    assert not rep.converged and rep.iterations == 2


def test_pcg_indefinite_raises():
    with pytest.raises(NumericalError):
        pcg_solve(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))
    with pytest.raises(DomainError):
        pcg_solve(np.eye(2), np.ones(2), tol=0.0)


def test_pcg_error_energy_norm_nonincreasing(rng):
    # CG minimizes the A-norm of the error, so that quantity is monotone
    A = _sbm_layer().add_diagonal(0.1)
    D = A.to_dense()
    b = rng.standard_normal(100)
    xs = sla.solve(D, b)
    errs = []
    pcg_solve(A, b, tol=1e-12, callback=lambda x: errs.append(math.sqrt((x - xs) @ D @ (x - xs))))
    assert all(e2 <= e1 * (1 + 1e-10) for e1, e2 in zip(errs, errs[1:]))


def test_pcg_preconditioned_residual_shrinks(rng):
    A = _sbm_layer().add_diagonal(0.3)
    _, rep = pcg_solve(A, rng.standard_normal(100), incomplete_cholesky(A, 1e-4), tol=1e-10)
    h = rep.residual_history
    assert all(r2 <= r1 for r1, r2 in zip(h, h[1:]))


def test_gmres_complex_identity(rng):
    b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    op = LinearOperator(4, lambda x: x, np.complex128)
    x, rep = gmres_solve(op, b)
    np.testing.assert_allclose(x, b, atol=1e-14)
    assert rep.converged


def test_gmres_scalar_shift():
    s = 4 + 3j
    op = LinearOperator(3, lambda x: s * x, np.complex128)
    x, rep = gmres_solve(op, np.ones(3, dtype=complex))
    np.testing.assert_allclose(x, np.ones(3) / s, atol=1e-14)


def test_gmres_matches_dense_outer_system():
    params = MsbmParams(2, 30, (0.3, 0.2), (0.05, 0.2))
    g = sample_msbm(params, 11)
    L = dense_power_mean_laplacian(g, -1, self_loops=True)
    A = np.eye(60) + 1.0 * L
    b = np.zeros(60)
    b[:5] = 1.0
    x, rep = gmres_solve(A, b, tol=1e-12)
    np.testing.assert_allclose(x, sla.solve(A, b), atol=1e-8)
    assert rep.converged


def test_gmres_residual_nonincreasing_within_cycle(rng):
    M = rng.standard_normal((40, 40)) + 8 * np.eye(40)
    _, rep = gmres_solve(M, rng.standard_normal(40), tol=1e-12, restart=50)
    h = rep.residual_history
    assert all(r2 <= r1 * (1 + 1e-12) for r1, r2 in zip(h, h[1:]))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), kappa=st.floats(2.0, 50.0))
def test_gmres_iterations_within_rate_bound(seed, kappa):
    rng = np.random.Generator(np.random.PCG64(seed))
    n = 60
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (Q * np.linspace(1.0, kappa, n)) @ Q.T
    tol = 1e-8
    _, rep = gmres_solve(A, rng.standard_normal(n), tol=tol, restart=n)
    rate = math.sqrt((kappa ** 2 - 1) / kappa ** 2)
    predicted = math.log(tol) / math.log(rate)
    assert rep.converged and rep.iterations <= 3 * predicted


def test_gmres_nonconvergence_reported(rng):
    M = rng.standard_normal((30, 30))
    _, rep = gmres_solve(M, rng.standard_normal(30), tol=1e-14, restart=2, max_iter=4)
    assert not rep.converged


def test_ic_identity_and_diagonal():
    F = incomplete_cholesky(identity(4), 1e-4)
    np.testing.assert_array_equal(F.lower.to_dense(), np.eye(4))
    F = incomplete_cholesky(csr_from_dense(np.diag([4.0, 9.0])), 1e-4)
    np.testing.assert_array_equal(F.lower.to_dense(), np.diag([2.0, 3.0]))


def test_ic_zero_drop_is_exact_cholesky():
    A = _sbm_layer(n_half=25).add_diagonal(0.2)
    L = incomplete_cholesky(A, 0.0).lower.to_dense()
    np.testing.assert_allclose(L @ L.T, A.to_dense(), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**31))
def test_ic_tridiagonal_exact(n, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    off = rng.uniform(-1.0, 1.0, n - 1)
    diag = np.abs(np.concatenate([[0.0], off])) + np.abs(np.concatenate([off, [0.0]])) + 0.5
    D = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    L = incomplete_cholesky(csr_from_dense(D), 0.0).lower.to_dense()
    assert np.linalg.norm(L @ L.T - D) <= 1e-10 * np.linalg.norm(D)
    assert np.all(np.diag(L) > 0)
    assert np.allclose(L, np.tril(L))


def test_ic_failure_on_indefinite():
    with pytest.raises(FactorizationError):
        incomplete_cholesky(csr_from_dense(np.array([[1.0, 2.0], [2.0, 1.0]])), 0.0)
    with pytest.raises(DomainError):
        incomplete_cholesky(identity(2), -1.0)


def test_lanczos_diagonal_and_identity():
    assert abs(lanczos_extreme(np.diag([1.0, 2.0, 10.0]), "max") - 10.0) <= 1e-8
    assert abs(lanczos_extreme(np.diag([1.0, 2.0, 10.0]), "min") - 1.0) <= 1e-8
    for which in ("max", "min"):
        assert abs(lanczos_extreme(np.eye(7), which) - 1.0) <= 1e-12
    with pytest.raises(InputError):
        lanczos_extreme(np.eye(2), "middle")


def test_lanczos_iters_clamped():
    assert abs(lanczos_extreme(np.diag([3.0, 5.0]), "max", iters=50) - 5.0) <= 1e-12


def test_lanczos_expected_graph_laplacian():
    params = MsbmParams(2, 100, 0.3, 0.1)
    W = csr_from_dense(expected_adjacency(params))
    L = normalized_laplacian(W).add_diagonal(0.1)
    ref = np.linalg.eigvalsh(L.to_dense())[-1]
    est = lanczos_extreme(L, "max", iters=30, seed=4)
    assert abs(est - ref) <= 1e-6 * ref
    assert est <= ref * (1 + 1e-12)
