"""Elliptic functions and the conformal-map quadrature for ``z**(1/p)``.

The quadrature approximates ``f(S) y`` for a symmetric positive definite
``S`` with spectrum in ``[m, M]`` and ``f(z) = z**(1/p)``, using the
substitution ``z = w**2`` and a Jacobi-elliptic conformal map of the slit
annulus onto a rectangle, where the trapezoidal (midpoint) rule converges
geometrically.  Only N shifted solves ``(z_i**2 I - S)^{-1} y`` are needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError

_EPS = np.finfo(float).eps


def _agm(a, b):
    for _ in range(64):
        if abs(a - b) <= 2 * _EPS * abs(a):
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def ellipkkp(k):
    """Complete elliptic integrals ``(K(k), K(k'))`` with ``k' = sqrt(1 - k**2)``.

    Both are computed by the arithmetic-geometric mean,
    ``K(k) = pi / (2 AGM(1, k'))`` and ``K(k') = pi / (2 AGM(1, k))``, so no
    complementary modulus is ever formed by subtraction.  ``K(k')`` is
    infinite at ``k = 0``.
    """
    k = float(k)
    if not (0.0 <= k < 1.0):
        raise DomainError(f"modulus must lie in [0, 1), got {k}")
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    K = math.pi / (2.0 * _agm(1.0, kp))
    Kp = math.inf if k == 0.0 else math.pi / (2.0 * _agm(1.0, k))
    return K, Kp


def _landen_kappa(m):
    if m > 1e-3:
        r = math.sqrt(1.0 - m)
        return (1.0 - r) / (1.0 + r)
    q = m / 4.0
    # Catalan-number series of (1 - sqrt(1-m)) / (1 + sqrt(1-m)) in m/4
    return q * (1 + q * (2 + q * (5 + q * (14 + q * (42 + q * 132)))))


def _sncndn(u, m):
    if m < 4 * _EPS:
        s, c = np.sin(u), np.cos(u)
        sn = s + m / 4 * (s * c - u) * c
        cn = c + m / 4 * (-s * c + u) * s
        dn = 1 + m / 4 * (c * c - s * s - 1)
        return sn, cn, dn
    kappa = _landen_kappa(m)
    sn1, cn1, dn1 = _sncndn(u / (1 + kappa), kappa * kappa)
    denom = 1 + kappa * sn1 * sn1
    return (1 + kappa) * sn1 / denom, cn1 * dn1 / denom, (1 - kappa * sn1 * sn1) / denom


def ellipjc(u, k):
    """Jacobi elliptic functions ``sn, cn, dn`` at complex argument(s) ``u``.

    Uses descending Landen transformations down to a modulus where the
    trigonometric limit (with its first-order correction) is exact to
    rounding.  Arguments with ``Im u > K'/2`` are first reflected through
    ``u -> i K' - u`` so that the recursion never approaches the pole at
    ``i K'``.
    """
    k = float(k)
    if not (0.0 <= k < 1.0):
        raise DomainError(f"modulus must lie in [0, 1), got {k}")
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=np.complex128)).copy()
    if not np.all(np.isfinite(u)):
        raise DomainError("ellipjc needs finite arguments")
    m = k * k
    high = np.zeros(u.shape, dtype=bool)
    if k > 0.0:
        _, Kp = ellipkkp(k)
        high = u.imag > Kp / 2
        u[high] = 1j * Kp - u[high]
    sn, cn, dn = _sncndn(u, m)
    if np.any(high):
        sh, ch, dh = sn[high], cn[high], dn[high]
        sn[high] = -1.0 / (k * sh)
        cn[high] = 1j * dh / (k * sh)
        dn[high] = 1j * ch / sh
    if scalar:
        return sn[0], cn[0], dn[0]
    return sn, cn, dn


def num_contour_points(m, M, tau=1e-8):
    """Number of nodes reaching accuracy ``tau``: ``ceil((ln(M/m)+6) |ln tau| / (2 pi^2))``, at least 1."""
    if not (0.0 < m <= M) or not math.isfinite(M):
        raise DomainError(f"need 0 < m <= M, got m={m}, M={M}")
    if not (0.0 < tau < 1.0):
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    n = (math.log(M / m) + 6.0) * abs(math.log(tau)) / (2.0 * math.pi ** 2)
    return max(1, math.ceil(n))


@dataclass(frozen=True)
class ContourQuadrature:
    """Nodes and weights of the midpoint rule on the mapped contour.

    ``phi(S) y ~= prefactor * S * Im(sum_i weights[i] * (nodes[i]**2 I - S)^{-1} y)``
    with ``phi(z) = z**(1/p)``.
    """

    N: int
    p: int
    nodes: np.ndarray
    weights: np.ndarray
    prefactor: float
    m: float
    M: float
    k_modulus: float
    K: float
    K_prime: float

    @property
    def shifts(self):
        """The complex shifts ``z_i**2`` of the linear systems."""
        return self.nodes ** 2

    def apply_scalar(self, s):
        """The quadrature evaluated on scalars (or elementwise on an array)."""
        s = np.asarray(s, dtype=float)
        acc = np.zeros(s.shape, dtype=np.complex128)
        for z2, w in zip(self.shifts, self.weights):
            acc += w / (z2 - s)
        return self.prefactor * s * acc.imag


def contour_coefficients(m, M, N, p):
    """Build the N-point quadrature for ``z**(1/p)`` on a spectrum inside ``[m, M]``.

    ``p`` must be a negative integer.  Nodes ``t_j = -K + (j - 1/2) 2K/N + i K'/2``
    are mapped through ``s = sn(t, k)`` to ``z = (mM)^(1/4) (1/k + s) / (1/k - s)``.
    """
    if not (0.0 < m < M) or not math.isfinite(M):
        raise DomainError(f"need 0 < m < M, got m={m}, M={M}")
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N}")
    if int(p) != p or p >= 0:
        raise DomainError(f"p must be a negative integer, got {p}")
    N, p = int(N), int(p)
    r = (M / m) ** 0.25
    k = (r - 1.0) / (r + 1.0)
    K, Kp = ellipkkp(k)
    j = np.arange(1, N + 1)
    t = -K + (j - 0.5) * 2.0 * K / N + 0.5j * Kp
    s, _, _ = ellipjc(t, k)
    c = np.sqrt(1.0 - s * s)
    d = np.sqrt(1.0 - k * k * s * s)
    scale = (m * M) ** 0.25
    z = scale * (1.0 / k + s) / (1.0 / k - s)
    phi = (z * z) ** (1.0 / p)
    w = phi * c * d / (z * (1.0 / k - s) ** 2)
    prefactor = -8.0 * K * scale / (math.pi * N * k)
    for i in range(N):
        if not (np.isfinite(z[i]) and np.isfinite(w[i]) and z[i] != 0):
            raise NumericalError(f"non-finite contour coefficient at node {i}")
    return ContourQuadrature(N, p, z, w, prefactor, float(m), float(M), float(k), K, Kp)


def quadrature_scalar_error(quad, samples=200):
    """Max relative error of ``quad`` against ``s**(1/p)`` on a log-spaced grid over ``[m, M]``."""
    s = np.geomspace(quad.m, quad.M, samples)
    exact = s ** (1.0 / quad.p)
    return float(np.max(np.abs(quad.apply_scalar(s) - exact) / exact))


def select_contour_points(m, M, p, tau=1e-8, max_extra=60, samples=200):
    """Smallest N at or above :func:`num_contour_points` whose scalar error is ``<= tau``.

    The a-priori count fixes the geometric rate but not the constant in
    front of it, which grows as ``1/p`` approaches ``-1``.  Since the
    quadrature acts on ``S`` through its eigenvalues, checking the scalar
    rule on ``[m, M]`` bounds the matrix error as well (for exact shifted
    solves), and costs no linear solves.
    """
    N = num_contour_points(m, M, tau)
    for extra in range(max_extra + 1):
        quad = contour_coefficients(m, M, N + extra, p)
        if quadrature_scalar_error(quad, samples) <= tau:
            return quad
    raise NumericalError(f"quadrature did not reach tau={tau:g} within N={N + max_extra} nodes")
