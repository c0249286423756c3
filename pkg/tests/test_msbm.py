import itertools
import math

import numpy as np
import pytest

from powermean_ssl.errors import DegreeError, DomainError, InputError, ScopeError
from powermean_ssl.graph import normalized_laplacian, shift_for_p
from powermean_ssl.msbm import (LabelBudget, MsbmParams, canonical_eigenvectors, chi_norm_sq,
                                expected_3layer_info_independent, expected_adjacency,
                                expected_graph, expected_solution_matrix, first_nodes_mask,
                                predict_zero_error, predict_zero_error_unbalanced, rho_epsilon,
                                sample_3layer_info_independent, sample_labels, sample_msbm,
                                unbalanced_bounds)
from powermean_ssl.powermean import LabelingProblem, dense_power_mean_laplacian, dense_ssl_solve

P_GRID = (-10, -1, 0, 1, 10)
# (p_in, p_out) pairs covering informative, noise and adversarial layers
PAIRS = [(0.09, 0.01), (0.07, 0.03), (0.06, 0.04), (0.05, 0.05), (0.03, 0.07), (0.01, 0.09),
         (0.2, 0.0), (0.1, 0.02)]


def test_params_validation():
    with pytest.raises(InputError):
        MsbmParams(1, 10, 0.5, 0.1)
    with pytest.raises(InputError):
        MsbmParams(2, 10, 1.5, 0.1)
    with pytest.raises(InputError):
        MsbmParams(2, 10, (0.5, 0.4), (0.1,))
    p = MsbmParams(3, 4, (0.5, 0.4), (0.1, 0.2))
    assert (p.T, p.n) == (2, 12)
    np.testing.assert_array_equal(p.ground_truth(), np.repeat([0, 1, 2], 4))


def test_sampler_cliques():
    g = sample_msbm(MsbmParams(3, 5, 1.0, 0.0), seed=1)
    B = np.kron(np.eye(3), np.ones((5, 5))) - np.eye(15)
    np.testing.assert_array_equal(g.layers[0].to_dense(), B)


def test_sampler_empty_then_degree_error():
    g = sample_msbm(MsbmParams(2, 5, 0.0, 0.0), seed=1)
    assert g.layers[0].nnz == 0
    with pytest.raises(DegreeError):
        g.laplacians()


def test_sampler_deterministic_and_no_self_edges():
    params = MsbmParams(2, 50, (0.2, 0.1), (0.05, 0.1))
    a, b = sample_msbm(params, 5), sample_msbm(params, 5)
    for x, y in zip(a.layers, b.layers):
        np.testing.assert_array_equal(x.to_dense(), y.to_dense())
        assert not np.any(x.diagonal())
    c = sample_msbm(params, 6)
    assert not np.array_equal(a.layers[0].to_dense(), c.layers[0].to_dense())


def test_sampler_density_within_binomial_ci():
    params = MsbmParams(2, 100, 0.09, 0.01)
    pairs_in = 2 * 100 * 99 // 2
    pairs_out = 100 * 100
    for seed in range(10):
        D = sample_msbm(params, seed).layers[0].to_dense()
        within = (np.triu(D[:100, :100], 1).sum() + np.triu(D[100:, 100:], 1).sum())
        between = D[:100, 100:].sum()
        for count, total, q in ((within, pairs_in, 0.09), (between, pairs_out, 0.01)):
            sd = math.sqrt(total * q * (1 - q))
            assert abs(count - total * q) <= 3 * sd


def test_expected_adjacency_spectrum():
    params = MsbmParams(2, 100, 0.09, 0.01)
    ev = np.sort(np.linalg.eigvalsh(expected_adjacency(params)))[::-1]
    assert ev[0] == pytest.approx(10.0, rel=1e-12)
    assert ev[1] == pytest.approx(8.0, rel=1e-12)
    np.testing.assert_allclose(ev[2:], 0.0, atol=1e-12)
    params3 = MsbmParams(3, 20, 0.3, 0.1)
    ev3 = np.sort(np.linalg.eigvalsh(expected_adjacency(params3)))[::-1]
    np.testing.assert_allclose(ev3[:3], [20 * 0.5, 20 * 0.2, 20 * 0.2], rtol=1e-12)
    assert np.linalg.matrix_rank(expected_adjacency(MsbmParams(2, 10, 0.3, 0.3))) == 1


def test_canonical_eigenvectors():
    X = canonical_eigenvectors(2, 100)
    np.testing.assert_array_equal(X[1], np.r_[np.ones(100), -np.ones(100)])
    assert X[1] @ X[1] == 200 == chi_norm_sq(2, 100, 2)
    for k in (3, 4):
        X = canonical_eigenvectors(k, 7)
        G = X @ X.T
        np.testing.assert_array_equal(G, np.diag([chi_norm_sq(r, 7, k) for r in range(1, k + 1)]))
        W = expected_adjacency(MsbmParams(k, 7, 0.4, 0.1))
        lam = [7 * (0.4 + (k - 1) * 0.1)] + [7 * 0.3] * (k - 1)
        for r in range(k):
            np.testing.assert_allclose(W @ X[r], lam[r] * X[r], atol=1e-12)


def test_rho_examples():
    assert rho_epsilon(MsbmParams(2, 10, 0.09, 0.01))[0] == pytest.approx(0.2, abs=1e-15)
    assert rho_epsilon(MsbmParams(2, 10, 0.3, 0.3), 0.25)[0] == 1.25
    assert rho_epsilon(MsbmParams(3, 10, 0.3, 0.0), 0.25)[0] == 0.25
    with pytest.raises(DomainError):
        rho_epsilon(MsbmParams(2, 10, 0.0, 0.0))


def test_rho_matches_laplacian_eigenvalue():
    params = MsbmParams(3, 10, 0.4, 0.1)
    L = normalized_laplacian(expected_graph(params).layers[0]).to_dense()
    ev = np.linalg.eigvalsh(L)
    np.testing.assert_allclose(ev[1:3], rho_epsilon(params)[0], atol=1e-12)


def test_predicate_examples():
    mixed = MsbmParams(2, 10, (0.09, 0.05), (0.01, 0.05))
    assert predict_zero_error(mixed, -math.inf)
    assert not predict_zero_error(mixed, math.inf)
    assert predict_zero_error(mixed, 1, eps=0.0)
    noise = MsbmParams(2, 10, (0.05, 0.03), (0.05, 0.03))
    for p in P_GRID + (math.inf, -math.inf):
        assert not predict_zero_error(noise, p)


@pytest.mark.parametrize("eps", [0.0, 0.3])
def test_predicate_monotone_in_p_at_fixed_shift(eps):
    ps = (-10, -1, 0, 1, 10)
    for pair1, pair2 in itertools.product(PAIRS, repeat=2):
        params = MsbmParams(2, 10, (pair1[0], pair2[0]), (pair1[1], pair2[1]))
        seen_false = False
        for p in ps:
            if p <= 0 and eps == 0.0 and min(rho_epsilon(params, eps)) == 0.0:
                continue
            z = predict_zero_error(params, p, eps=eps)
            # once false, stays false for larger p
            assert not (seen_false and z)
            seen_false = seen_false or not z


def test_unbalanced_bound_examples():
    exact, _ = unbalanced_bounds(0.0, 25, 25)
    assert exact == pytest.approx(1.0, rel=1e-15)
    _, sufficient = unbalanced_bounds(0.0, 30, 20)
    assert sufficient == pytest.approx(2 / 3)
    _, sufficient = unbalanced_bounds(0.0, 45, 5)
    assert sufficient == pytest.approx(1 / 9)
    # m_p(rho) = 0.9 on a single layer
    params = MsbmParams(2, 100, 0.055, 0.045)
    assert rho_epsilon(params)[0] == pytest.approx(0.9, abs=1e-12)
    assert not predict_zero_error_unbalanced(params, 1, 45, 5, eps=0.0, form="sufficient")
    with pytest.raises(ScopeError):
        predict_zero_error_unbalanced(MsbmParams(3, 10, 0.3, 0.1), 1, 5, 5)
    with pytest.raises(ScopeError):
        predict_zero_error_unbalanced(params, 1, 5, 5, lam=2.0)
    with pytest.raises(InputError):
        unbalanced_bounds(0.0, 0, 5)


def test_sufficient_implies_exact():
    for eps in (0.0, 1e-6, 0.3):
        for n1 in range(1, 50):
            exact, sufficient = unbalanced_bounds(eps, n1, 50 - n1)
            assert sufficient <= exact + 1e-12


@pytest.mark.parametrize("n1,n2", [(25, 25), (10, 40), (40, 10), (45, 5), (2, 48)])
def test_unbalanced_exact_predicate_matches_dense(n1, n2):
    truth = np.repeat([0, 1], 100)
    for pair1, pair2 in [((0.09, 0.01), (0.05, 0.05)), ((0.08, 0.02), (0.06, 0.04)),
                         ((0.06, 0.04), (0.03, 0.07))]:
        params = MsbmParams(2, 100, (pair1[0], pair2[0]), (pair1[1], pair2[1]))
        mask = first_nodes_mask(params, LabelBudget((n1, n2)))
        for p in P_GRID:
            L = dense_power_mean_laplacian(expected_graph(params), p)
            res = dense_ssl_solve(L, LabelingProblem.from_labels(truth, mask, 1.0, p))
            assert (res.test_error == 0.0) == predict_zero_error_unbalanced(params, p, n1, n2)


@pytest.mark.parametrize("k,T", [(2, 1), (2, 2), (3, 2), (3, 3), (4, 2)])
def test_closed_form_solution_matches_dense(k, T):
    C = 12
    rng = np.random.Generator(np.random.PCG64(k * 10 + T))
    pairs = [PAIRS[i] for i in rng.choice(len(PAIRS), T)]
    params = MsbmParams(k, C, tuple(a for a, _ in pairs), tuple(b for _, b in pairs))
    truth = params.ground_truth()
    counts = tuple(int(c) for c in rng.integers(1, C, k))
    mask = first_nodes_mask(params, LabelBudget(counts))
    cost = rng.uniform(0.5, 3.0, k)
    for p in P_GRID:
        L = dense_power_mean_laplacian(expected_graph(params), p)
        F_ref = expected_solution_matrix(params, p, mask, cost=cost)
        prob = LabelingProblem(np.eye(k)[truth] * mask[:, None], mask, 1.0, p,
                               cost=cost[truth], truth=truth)
        assert np.max(np.abs(dense_ssl_solve(L, prob).F - F_ref)) <= 1e-9


def test_closed_form_example_values():
    params = MsbmParams(2, 100, 0.09, 0.01)
    F = expected_solution_matrix(params, 1, first_nodes_mask(params, LabelBudget((10, 10))))
    assert F[50, 0] == pytest.approx(0.0416667, abs=5e-8)
    assert F[50, 1] == pytest.approx(0.0083333, abs=5e-8)


def test_closed_form_zero_beta_ties():
    params = MsbmParams(2, 10, 0.05, 0.05)
    mask = first_nodes_mask(params, LabelBudget((3, 3)))
    F = expected_solution_matrix(params, 1, mask)
    unl = ~mask
    assert np.ptp(F[unl, 0]) == 0.0 and np.ptp(F[unl, 1]) == 0.0


def test_info_independent_expected_layers():
    g = expected_3layer_info_independent(0.1, 0.02, 10)
    D = [W.to_dense() for W in g.layers]
    # layer 1 restricted to classes 2 and 3 is a single p_in block
    np.testing.assert_array_equal(D[0][10:, 10:], 0.1)
    for t, W in enumerate(D):
        L = normalized_laplacian(g.layers[t]).to_dense()
        ev = np.linalg.eigvalsh(L)
        assert np.sum(np.abs(ev - 1.0) > 1e-10) == 2
        assert np.sum(np.abs(ev) < 1e-10) == 1
    Ls = [normalized_laplacian(W).to_dense() for W in g.layers]
    # the layers do not commute: they are not jointly diagonalizable
    assert np.linalg.norm(Ls[0] @ Ls[1] - Ls[1] @ Ls[0]) > 1e-3


def test_info_independent_sampler():
    g = sample_3layer_info_independent(1.0, 0.0, 5, seed=2)
    D = g.layers[1].to_dense()
    inside = np.zeros(15, bool)
    inside[5:10] = True
    same = inside[:, None] == inside[None, :]
    np.testing.assert_array_equal(D, same.astype(float) - np.eye(15))


def test_sample_labels():
    truth = np.repeat([0, 1, 2], 10)
    assert sample_labels(truth, LabelBudget.uniform(3, 10), 0).all()
    mask = sample_labels(truth, LabelBudget.uniform(3, 1), 0)
    assert mask.sum() == 3 and set(truth[mask]) == {0, 1, 2}
    np.testing.assert_array_equal(mask, sample_labels(truth, LabelBudget.uniform(3, 1), 0))
    draws = {tuple(np.flatnonzero(sample_labels(truth, LabelBudget.uniform(3, 3), s)))
             for s in range(100)}
    assert len(draws) >= 95
    with pytest.raises(InputError):
        sample_labels(truth, LabelBudget.uniform(3, 11), 0)
    with pytest.raises(InputError):
        sample_labels(truth, LabelBudget((1, 1)), 0)


def test_budget_helpers():
    assert LabelBudget.from_fraction(2, 100, 0.15).counts == (15, 15)
    assert LabelBudget.from_fraction(2, 100, 0.001).counts == (1, 1)
    with pytest.raises(InputError):
        LabelBudget((3, 0)).check(MsbmParams(2, 10, 0.5, 0.1))
    with pytest.raises(InputError):
        LabelBudget((-1,))


def test_default_shift_used_in_predicate():
    params = MsbmParams(2, 10, (0.09, 0.05), (0.01, 0.05))
    for p in (-10, -1, 0):
        assert predict_zero_error(params, p) == predict_zero_error(params, p, eps=shift_for_p(p))


def test_exact_tie_is_not_zero_error():
    # rho = (0.2, 1.8) averages to exactly 1 at p = 1 with eps = 0
    params = MsbmParams(2, 10, (0.09, 0.01), (0.01, 0.09))
    assert not predict_zero_error(params, 1)
    truth = params.ground_truth()
    mask = first_nodes_mask(params, LabelBudget((3, 3)))
    res = dense_ssl_solve(dense_power_mean_laplacian(expected_graph(params), 1),
                          LabelingProblem.from_labels(truth, mask, 1.0, 1))
    assert res.test_error > 0
