"""Normalized probabilist's Hermite polynomials.

``h_k`` is orthonormal under the standard Gaussian measure:
``E[h_k(z) h_l(z)] = delta_kl`` for ``z ~ N(0, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

MAX_MONOMIAL_ORDER = 30


@dataclass(frozen=True)
class HermiteSeries:
    """phi(z) = sum_k coeffs[k] * h_k(z)."""

    coeffs: tuple

    def __init__(self, coeffs: Sequence[float]):
        c = tuple(float(b) for b in np.ravel(np.asarray(coeffs, dtype=float)))
        if not c:
            raise ValueError("a Hermite series needs at least one coefficient")
        object.__setattr__(self, "coeffs", c)

    @property
    def truncation_order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    def __call__(self, z):
        return series_eval(self, z)

    def __len__(self):
        return len(self.coeffs)


def _check_finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("Hermite evaluation requires finite arguments")
    return z


def hermite_eval(k: int, z):
    """h_k(z) by forward three-term recurrence."""
    if k < 0:
        raise ValueError(f"order must be nonnegative, got {k}")
    z = _check_finite(z)
    h_prev = np.ones_like(z)
    if k == 0:
        return h_prev if z.ndim else float(h_prev)
    h = z.copy()
    for j in range(2, k + 1):
        h, h_prev = z * h / math.sqrt(j) - math.sqrt((j - 1) / j) * h_prev, h
    return h if z.ndim else float(h)


def hermite_basis(K: int, z) -> np.ndarray:
    """Matrix of h_0..h_K evaluated at z, shape (K+1,) + z.shape."""
    z = _check_finite(z)
    out = np.empty((K + 1,) + z.shape)
    out[0] = 1.0
    if K >= 1:
        out[1] = z
    for j in range(2, K + 1):
        out[j] = z * out[j - 1] / math.sqrt(j) - math.sqrt((j - 1) / j) * out[j - 2]
    return out


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def hermite_coeffs_monomial(k: int) -> list[float]:
    """Ascending monomial coefficients of h_k.

    Raises ValueError for k > 30; use the recurrence for higher orders.
    """
    if k < 0:
        raise ValueError(f"order must be nonnegative, got {k}")
    if k > MAX_MONOMIAL_ORDER:
        raise ValueError(
            f"monomial expansion limited to k <= {MAX_MONOMIAL_ORDER}, got {k}"
        )
    root = math.sqrt(math.factorial(k))
    coeffs = [0.0] * (k + 1)
    for ell in range(k % 2, k + 1, 2):
        sign = -1 if ((k - ell) // 2) % 2 else 1
        denom = _double_factorial(k - ell) * math.factorial(ell)
        coeffs[ell] = sign * root / denom
    return coeffs


@lru_cache(maxsize=64)
def _gauss_hermite(Q: int):
    # Golub-Welsch on the Jacobi matrix of the probabilist's Hermite family.
    off = np.sqrt(np.arange(1, Q, dtype=float))
    nodes, vecs = eigh_tridiagonal(np.zeros(Q), off)
    weights = vecs[0] ** 2
    weights /= weights.sum()
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite(Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with sum(w * f(x)) ~ E[f(z)], z ~ N(0, 1).

    Exact for polynomials of degree <= 2Q - 1.
    """
    if Q < 1:
        raise ValueError("quadrature size must be positive")
    return _gauss_hermite(int(Q))


def default_quadrature_size(K: int) -> int:
    return max(2 * K + 2, 64)


def decompose(f: Callable, K: int, Q: int | None = None) -> HermiteSeries:
    """Hermite coefficients b_0..b_K of a pointwise function f."""
    if Q is None:
        Q = default_quadrature_size(K)
    x, w = gauss_hermite(Q)
    fx = np.asarray(f(x), dtype=float)
    coeffs = hermite_basis(K, x) @ (w * fx)
    if not np.all(np.isfinite(coeffs)):
        raise FloatingPointError(
            "non-finite Hermite projection; f is not square-integrable "
            "or overflows at the quadrature nodes"
        )
    return HermiteSeries(coeffs)


def series_eval(s: HermiteSeries, z):
    """Evaluate sum_k b_k h_k(z) in a single recurrence sweep."""
    z = _check_finite(z)
    b = s.coeffs
    total = np.full(z.shape, b[0])
    if len(b) > 1:
        h_prev, h = np.ones_like(z), z.copy()
        total = total + b[1] * h
        for j in range(2, len(b)):
            h, h_prev = z * h / math.sqrt(j) - math.sqrt((j - 1) / j) * h_prev, h
            total = total + b[j] * h
    return total if z.ndim else float(total)


def series_derivative(s: HermiteSeries) -> HermiteSeries:
    """Uses h_k' = sqrt(k) h_{k-1}."""
    b = s.array
    if len(b) == 1:
        return HermiteSeries([0.0])
    k = np.arange(1, len(b))
    return HermiteSeries(np.sqrt(k) * b[1:])


def series_reflect(s: HermiteSeries) -> HermiteSeries:
    """Coefficients of z -> phi(-z); h_k(-z) = (-1)^k h_k(z)."""
    b = s.array
    return HermiteSeries(b * (-1.0) ** np.arange(len(b)))


def series_to_monomial(s: HermiteSeries) -> np.ndarray:
    """Ascending monomial coefficients of a series with K <= 30."""
    out = np.zeros(len(s))
    for k, b in enumerate(s.coeffs):
        if b:
            out[: k + 1] += b * np.asarray(hermite_coeffs_monomial(k))
    return out
