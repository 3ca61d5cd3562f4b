"""The tau-transform tau_phi(c; s2) = E[phi(z1) phi(z2)], (z1, z2) ~ N_c^{s2}.

Two numerical routes are provided. Tensor Gauss-Hermite is the default and is
spectrally accurate for smooth activations. For activations with kinks or
jumps (ReLU, step, the mimic ansatz) Gauss-Hermite converges only like 1/Q,
so ``breakpoints`` switches to piecewise Gauss-Legendre on a truncated range
with the pieces split where the integrand loses smoothness.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtri
from scipy.stats import qmc

from .hermite import gauss_hermite

ACOS_TOL = 1e-12
DEFAULT_Q = 100
TRUNCATION = 12.0

NAMED = ("exp", "sin", "cos", "relu", "erf")


def clamp_correlation(c, tol: float = ACOS_TOL):
    """Clip c into [-1, 1], refusing values further out than ``tol``."""
    c = np.asarray(c, dtype=float)
    if np.any(np.abs(c) > 1 + tol):
        raise ValueError(f"correlation outside [-1, 1]: {c[np.abs(c) > 1 + tol]}")
    return np.clip(c, -1.0, 1.0)


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


# -- closed forms -----------------------------------------------------------


def tau_closed_form(name: str, c, a: float = 1.0, sigma2: float = 1.0):
    """tau of exp(az), sin(az), cos(az), relu(az), erf(az) at variance sigma2.

    For exp the result is exp(a^2 s2 (c + 1)); that is the value implied by
    the exp-activation NTK exp(a^2(1+c))(1 + a^2 c) and by its Hermite
    expansion. The c^2 variant sometimes quoted for it is not.
    """
    cc = clamp_correlation(c)
    s = a * a * sigma2
    if name == "exp":
        out = np.exp(s * (cc + 1.0))
    elif name == "sin":
        out = np.exp(-s) * np.sinh(s * cc)
    elif name == "cos":
        out = np.exp(-s) * np.cosh(s * cc)
    elif name == "relu":
        out = s * ((np.pi - np.arccos(cc)) * cc + np.sqrt(1.0 - cc * cc)) / (2 * np.pi)
    elif name == "erf":
        out = (2 / np.pi) * np.arcsin(2 * s * cc / (1 + 2 * s))
    else:
        raise ValueError(f"unknown named activation {name!r}")
    return _scalar_or_array(out, c)


def tau_deriv_closed_form(name: str, c, a: float = 1.0, sigma2: float = 1.0):
    """tau of the derivative phi' for the named activations."""
    cc = clamp_correlation(c)
    s = a * a * sigma2
    if name == "exp":
        out = a * a * np.exp(s * (cc + 1.0))
    elif name == "sin":
        out = a * a * np.exp(-s) * np.cosh(s * cc)
    elif name == "cos":
        out = a * a * np.exp(-s) * np.sinh(s * cc)
    elif name == "relu":
        out = a * a * (np.pi - np.arccos(cc)) / (2 * np.pi)
    elif name == "erf":
        out = a * a * (4 / np.pi) / np.sqrt((1 + 2 * s) ** 2 - (2 * s * cc) ** 2)
    else:
        raise ValueError(f"unknown named activation {name!r}")
    return _scalar_or_array(out, c)


def ntk_closed_form(name: str, c, a: float = 1.0):
    """1HL NTK (sigma_w=1, sigma_b=0) of exp/sin/cos(az) and relu(z)."""
    cc = clamp_correlation(c)
    s = a * a
    if name == "exp":
        out = np.exp(s * (1 + cc)) * (1 + s * cc)
    elif name == "sin":
        out = np.exp(-s) * (np.sinh(s * cc) + s * cc * np.cosh(s * cc))
    elif name == "cos":
        out = np.exp(-s) * (np.cosh(s * cc) + s * cc * np.sinh(s * cc))
    elif name == "relu":
        out = (np.sqrt(1 - cc * cc) + 2 * cc * (np.pi - np.arccos(cc))) / (2 * np.pi)
    else:
        raise ValueError(f"no closed-form NTK for {name!r}")
    return _scalar_or_array(out, c)


# -- quadrature --------------------------------------------------------------


@lru_cache(maxsize=16)
def _legendre(m: int):
    return leggauss(m)


def _gl_nodes(edges: np.ndarray, m: int):
    """Gauss-Legendre nodes/weights on consecutive intervals along the last axis."""
    x, w = _legendre(m)
    lo, hi = edges[..., :-1, None], edges[..., 1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * x
    weights = half * w
    shape = edges.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def _normal_pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)


def _edges(points, L: float):
    pts = [p for p in points if np.isfinite(p) and -L < p < L]
    return np.array(sorted({-L, L, *pts}))


def _tau_gh(f, c, sigma, s, Q):
    x, w = gauss_hermite(Q)
    z1 = sigma * x
    f1 = np.asarray(f(z1), dtype=float)
    z2 = sigma * (c * x[:, None] + s * x[None, :])
    f2 = np.asarray(f(z2), dtype=float)
    return float(np.einsum("i,j,i,ij->", w, w, f1, f2))


def _tau_piecewise(f, c, sigma, s, m, breakpoints, L):
    kinks = np.asarray(breakpoints, dtype=float) / sigma
    outer_pts = list(kinks)
    if c != 0:
        outer_pts += list(kinks / c)
    u, wu = _gl_nodes(_edges(outer_pts, L), m)
    wu = wu * _normal_pdf(u)
    f1 = np.asarray(f(sigma * u), dtype=float)
    if s == 0.0:
        f2 = np.asarray(f(sigma * c * u), dtype=float)
        return float(np.sum(wu * f1 * f2))
    # inner breakpoints depend on u: v = (k - c u) / s
    vb = (kinks[None, :] - c * u[:, None]) / s
    vb = np.clip(vb, -L, L)
    edges = np.concatenate(
        [np.full((len(u), 1), -L), np.sort(vb, axis=1), np.full((len(u), 1), L)],
        axis=1,
    )
    v, wv = _gl_nodes(edges, m)
    wv = wv * _normal_pdf(v)
    f2 = np.asarray(f(sigma * (c * u[:, None] + s * v)), dtype=float)
    inner = np.sum(wv * f2, axis=1)
    return float(np.sum(wu * f1 * inner))


def tau_quadrature(
    f: Callable,
    c,
    sigma2: float = 1.0,
    Q: int | None = None,
    breakpoints: Sequence[float] | None = None,
    truncation: float = TRUNCATION,
):
    """E[f(z1) f(z2)] with z1 = s u, z2 = s (c u + sqrt(1-c^2) v), u, v iid N(0,1).

    Q is the 1D rule size (Gauss-Hermite) or the nodes per piece (piecewise
    Gauss-Legendre, used when ``breakpoints`` is given).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    Q = DEFAULT_Q if Q is None else int(Q)
    sigma = float(np.sqrt(sigma2))
    cc = np.atleast_1d(clamp_correlation(c)).ravel()
    out = np.empty(cc.shape)
    for i, ci in enumerate(cc):
        ci = float(ci)
        si = float(np.sqrt(max(0.0, 1.0 - ci * ci)))
        if breakpoints is None:
            out[i] = _tau_gh(f, ci, sigma, si, Q)
        else:
            out[i] = _tau_piecewise(f, ci, sigma, si, Q, breakpoints, truncation)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(
            "non-finite tau quadrature; activation is not square-integrable"
        )
    return float(out[0]) if np.ndim(c) == 0 else out.reshape(np.shape(c))


def tau_monte_carlo(f: Callable, c, sigma2: float = 1.0, n: int = 2**20, seed: int = 0,
                    method: str = "sobol", chunk: int = 2**18):
    """Sampling estimate of tau, returning (mean, standard error).

    ``method='plain'`` draws iid normals; ``'sobol'`` uses a scrambled Sobol
    sequence (n rounded up to a power of two) mapped through the normal
    quantile, and the reported error is the spread over 8 scramblings.
    """
    cc = np.atleast_1d(clamp_correlation(c))
    sigma = np.sqrt(sigma2)
    s = np.sqrt(1 - cc * cc)

    def block_sums(u, v):
        f1 = f(sigma * u)
        prod = f1[None, :] * f(sigma * (cc[:, None] * u + s[:, None] * v))
        return prod.sum(axis=1), (prod * prod).sum(axis=1)

    if method == "sobol":
        m = int(np.ceil(np.log2(n)))
        estimates = []
        for rep in range(8):
            pts = qmc.Sobol(2, scramble=True, seed=seed + rep).random_base2(m)
            pts = np.clip(pts, 1e-16, 1 - 1e-16)
            u, v = ndtri(pts[:, 0]), ndtri(pts[:, 1])
            estimates.append(block_sums(u, v)[0] / len(u))
        est = np.array(estimates)
        mean = est[0]
        se = est.std(axis=0, ddof=1)
    elif method == "plain":
        rng = np.random.default_rng(seed)
        total = np.zeros(cc.shape)
        total_sq = np.zeros(cc.shape)
        done = 0
        while done < n:
            k = min(chunk, n - done)
            t, t2 = block_sums(rng.standard_normal(k), rng.standard_normal(k))
            total += t
            total_sq += t2
            done += k
        mean = total / n
        se = np.sqrt(np.maximum(total_sq / n - mean**2, 0.0) / n)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    if np.ndim(c) == 0:
        return float(mean[0]), float(se[0])
    return mean, se
