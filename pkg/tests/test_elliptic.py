import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powermean_ssl.elliptic import (contour_coefficients, ellipjc, ellipkkp, num_contour_points,
                                    quadrature_scalar_error, select_contour_points)
from powermean_ssl.errors import DomainError

# 50-digit references from an independent arbitrary-precision library, frozen
K_REF = {
    0.1: (1.5747455615173559531, 3.6956373629898746229),
    0.5: (1.6857503548125960429, 2.1565156474996432354),
    0.9: (2.2805491384227703005, 1.6546166675225269145),
}
SNCNDN_REF = [
    (0.3 + 0.2j, 0.5, (0.301651928237623989 + 0.190468510400391789j,
                       0.974045038367929859 - 0.0589861774021206464j,
                       0.993242280425519867 - 0.014461525290237206j)),
    (1.1 - 0.7j, 0.8, (0.991231048412432627 - 0.255969407788411287j,
                       0.546429798207353552 + 0.464331969588773294j,
                       0.685051478769127666 + 0.237038956452848213j)),
    (0.4 + 1.3j, 0.3, (0.867925714110767653 + 1.57223014639351484j,
                       1.81256383216728176 - 0.752844643779216135j,
                       1.0805521746706101 - 0.113656804741884423j)),
    (-0.9 + 0.5j, 0.95, (-0.812960559219005999 + 0.239576189307656677j,
                         0.690042199036737703 + 0.282252292840921917j,
                         0.717840107882352764 + 0.244868330152563389j)),
]


def test_ellipk_degenerate_modulus():
    K, Kp = ellipkkp(0.0)
    assert K == pytest.approx(math.pi / 2, rel=1e-15)
    assert math.isinf(Kp)


@pytest.mark.parametrize("k", sorted(K_REF))
def test_ellipk_reference(k):
    K, Kp = ellipkkp(k)
    assert abs(K - K_REF[k][0]) <= 1e-14 * K_REF[k][0]
    assert abs(Kp - K_REF[k][1]) <= 1e-14 * K_REF[k][1]


def test_ellipk_complementary_symmetry():
    k = 0.5
    assert ellipkkp(k)[1] == pytest.approx(ellipkkp(math.sqrt(1 - k * k))[0], rel=1e-14)


def test_ellipk_small_modulus_no_cancellation():
    K, Kp = ellipkkp(1e-6)
    # K'(k) ~ ln(4/k) for small k
    assert Kp == pytest.approx(math.log(4e6), rel=1e-10)
    assert K == pytest.approx(math.pi / 2, rel=1e-11)


@pytest.mark.parametrize("k", [1.0, 1.5, -0.1])
def test_ellipk_domain(k):
    with pytest.raises(DomainError):
        ellipkkp(k)


def test_ellipj_origin():
    for k in (0.0, 0.3, 0.99):
        sn, cn, dn = ellipjc(0.0, k)
        assert (sn, cn, dn) == (0, 1, 1)


def test_ellipj_trigonometric_limit(rng):
    u = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    sn, cn, dn = ellipjc(u, 0.0)
    np.testing.assert_allclose(sn, np.sin(u), rtol=1e-13)
    np.testing.assert_allclose(cn, np.cos(u), rtol=1e-13)
    np.testing.assert_allclose(dn, 1.0, rtol=0, atol=1e-15)


@pytest.mark.parametrize("u,k,ref", SNCNDN_REF)
def test_ellipj_reference(u, k, ref):
    got = ellipjc(u, k)
    for g, r in zip(got, ref):
        assert abs(g - r) <= 1e-13 * max(1.0, abs(r))


def test_ellipj_identities_100_points(rng):
    for k in np.arange(0.1, 1.0, 0.1):
        _, Kp = ellipkkp(k)
        u = rng.uniform(-2, 2, 100) + 1j * rng.uniform(-0.95 * Kp, 0.95 * Kp, 100)
        sn, cn, dn = ellipjc(u, k)
        assert np.max(np.abs(sn ** 2 + cn ** 2 - 1)) <= 1e-12
        assert np.max(np.abs(dn ** 2 + k ** 2 * sn ** 2 - 1)) <= 1e-12


def test_ellipj_rejects_nonfinite():
    with pytest.raises(DomainError):
        ellipjc(complex(np.inf, 0), 0.5)
    with pytest.raises(DomainError):
        ellipjc(0.1, 1.0)


def test_num_points_examples():
    assert num_contour_points(0.1, 10, 1e-8) == 10
    assert (math.log(100) + 6) * abs(math.log(1e-8)) / (2 * math.pi ** 2) == pytest.approx(9.897,
                                                                                           abs=1e-3)
    assert num_contour_points(1.0, 1.0, 1e-8) == 6
    assert num_contour_points(1.0, 1.0 + 1e-12, 1e-8) == 6
    assert num_contour_points(0.1, 10, 1 - 1e-12) == 1


@pytest.mark.parametrize("m,M,tau", [(0.0, 1.0, 1e-8), (2.0, 1.0, 1e-8), (1.0, 2.0, 1.0),
                                     (1.0, math.inf, 1e-8)])
def test_num_points_domain(m, M, tau):
    with pytest.raises(DomainError):
        num_contour_points(m, M, tau)


def test_modulus_from_bounds():
    q = contour_coefficients(1.0, 16.0, 8, -1)
    assert q.k_modulus == pytest.approx(1 / 3, rel=1e-15)
    assert 0 < q.k_modulus < 1
    assert np.all(np.abs(q.nodes) > 0) and np.all(np.isfinite(q.weights))
    K = ellipkkp(1 / 3)[0]
    assert q.prefactor == pytest.approx(-8 * K * 16 ** 0.25 / (math.pi * 8 / 3), rel=1e-14)


def test_modulus_monotone_in_ratio():
    ks = [contour_coefficients(1.0, M, 4, -1).k_modulus for M in (1.5, 4, 16, 100, 1e4)]
    assert all(a < b for a, b in zip(ks, ks[1:]))


@pytest.mark.parametrize("args", [(1.0, 1.0, 8, -1), (1.0, 2.0, 0, -1), (1.0, 2.0, 4, 1),
                                  (1.0, 2.0, 4, -1.5), (-1.0, 2.0, 4, -1)])
def test_coefficients_domain(args):
    with pytest.raises(DomainError):
        contour_coefficients(*args)


@pytest.mark.parametrize("p", [-2, -3, -10])
def test_scalar_validation_at_formula_count(p):
    # the a-priori count lands within a small factor of tau for |p| >= 2
    m, M = 0.1, 10.0
    q = contour_coefficients(m, M, num_contour_points(m, M, 1e-8), p)
    assert quadrature_scalar_error(q) <= 5e-5


def test_formula_count_undershoots_at_p_minus_one():
    # frozen: the a-priori count leaves ~1.7e-2 relative error for p=-1 on [0.1, 10]
    m, M = 0.1, 10.0
    q = contour_coefficients(m, M, num_contour_points(m, M, 1e-8), -1)
    assert 1e-2 < quadrature_scalar_error(q) < 3e-2


@pytest.mark.parametrize("p", [-1, -2, -3, -10])
@pytest.mark.parametrize("m,M", [(0.1, 10.0), (0.5, 4.0), (1e-3, 2.0)])
def test_selected_count_reaches_tau(p, m, M):
    q = select_contour_points(m, M, p, 1e-8)
    assert q.N >= num_contour_points(m, M, 1e-8)
    s = np.geomspace(m, M, 1000)
    err = np.abs(q.apply_scalar(s) - s ** (1.0 / p)) / s ** (1.0 / p)
    assert err.max() <= 1e-8


@pytest.mark.parametrize("p", [-1, -2, -10])
@pytest.mark.parametrize("m,M", [(0.1, 10.0), (1e-3, 2.0)])
def test_geometric_decay_rate(p, m, M):
    Ns = np.arange(4, 40)
    errs = np.array([quadrature_scalar_error(contour_coefficients(m, M, N, p)) for N in Ns])
    keep = (errs > 1e-13) & (errs < 1e-2)
    slope = np.polyfit(Ns[keep], np.log(errs[keep]), 1)[0]
    theory = -2 * math.pi ** 2 / (math.log(M / m) + 6)
    assert 0.5 <= slope / theory <= 2.0


@settings(max_examples=25, deadline=None)
@given(m=st.floats(1e-3, 1.0), ratio=st.floats(1.5, 1e3), p=st.integers(-6, -1))
def test_scalar_rule_output_real_and_accurate(m, ratio, p):
    M = m * ratio
    q = select_contour_points(m, M, p, 1e-8)
    s = np.linspace(m, M, 50)
    acc = sum(w / (z2 - s) for z2, w in zip(q.shifts, q.weights))
    assert np.all(np.isfinite(acc))
    np.testing.assert_allclose(q.apply_scalar(s), s ** (1.0 / p), rtol=1e-8)
