"""Build activations whose 1HL kernel is a prescribed dot-product kernel.

With sigma_w=1, sigma_b=0 a Hermite activation sum_k b_k h_k has
NNGP kernel sum_k b_k^2 c^k and NTK sum_k (1+k) b_k^2 c^k, so a target
series a_k is realized by |b_k| = sqrt(a_k) or sqrt(a_k / (1+k)). Signs are
free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog, nnls

from .hermite import HermiteSeries, series_derivative, series_reflect
from .kernels import check_psd

TARGETS = ("ntk", "nngp")
SIGN_PRESETS = ("all_positive", "flip_h2_h3")


class NotPSDError(ValueError):
    """A kernel series with a negative coefficient."""

    def __init__(self, index: int | None, value: float | None = None):
        self.index = index
        self.value = value
        where = "a non-finite sum" if index is None else f"coefficient {index} = {value:.6g}"
        super().__init__(f"kernel is not positive-semidefinite: {where}")


def sign_vector(signs, n: int) -> np.ndarray:
    """Resolve a sign policy to n entries of +1/-1."""
    if isinstance(signs, str):
        if signs not in SIGN_PRESETS:
            raise ValueError(f"unknown sign preset {signs!r}")
        out = np.ones(n)
        if signs == "flip_h2_h3":
            out[2:4] = -1.0
        return out
    out = np.asarray(signs, dtype=float)
    if out.ndim != 1 or len(out) < n:
        raise ValueError(f"explicit signs need at least {n} entries")
    if not np.all(np.isin(out, (-1.0, 1.0))):
        raise ValueError("explicit signs must be +1 or -1")
    return out[:n]


def synthesize_activation(kernel_series: Sequence[float], target: str = "ntk",
                          signs="all_positive") -> HermiteSeries:
    """Hermite coefficients of a 1HL activation realizing the kernel."""
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    a = np.asarray(kernel_series, dtype=float)
    ok, idx = check_psd(a)
    if not ok:
        raise NotPSDError(idx, None if idx is None else float(a[idx]))
    a = np.maximum(a, 0.0)
    if target == "ntk":
        a = a / (1.0 + np.arange(len(a)))
    return HermiteSeries(sign_vector(signs, len(a)) * np.sqrt(a) + 0.0)


class PolyFit(NamedTuple):
    coeffs: np.ndarray
    residual: float


@dataclass
class FitConfig:
    degree: int = 5
    c_grid: np.ndarray = field(default_factory=lambda: np.linspace(-1.0, 1.0, 41))
    endpoint_weight_fraction: float = 0.1
    exploit_parity: bool = True
    nonnegative: bool = True

    def __post_init__(self):
        self.c_grid = np.asarray(self.c_grid, dtype=float)
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if not 0.0 <= self.endpoint_weight_fraction < 1.0:
            raise ValueError("endpoint_weight_fraction must lie in [0, 1)")
        if np.any(np.abs(self.c_grid) > 1.0):
            raise ValueError("fit grid must lie in [-1, 1]")
        if self.endpoint_weight_fraction > 0 and not np.any(self.c_grid == 1.0):
            raise ValueError("endpoint weighting needs c = 1 on the grid")


def fit_weights(cfg: FitConfig) -> np.ndarray:
    """c = 1 carries ``endpoint_weight_fraction`` of the total; the rest share the remainder."""
    n = len(cfg.c_grid)
    f = cfg.endpoint_weight_fraction
    if f == 0:
        return np.full(n, 1.0 / n)
    end = cfg.c_grid == 1.0
    w = np.full(n, (1.0 - f) / (n - end.sum()))
    w[end] = f / end.sum()
    return w


def kernel_parity(c, y, tol: float = 1e-12) -> int | None:
    """0 for an even, 1 for an odd sample on a symmetric grid, else None."""
    order = np.argsort(c)
    cs, ys = c[order], y[order]
    if not np.allclose(cs, -cs[::-1], rtol=0, atol=1e-14):
        return None
    scale = tol * max(np.max(np.abs(y)), 1e-300)
    if np.max(np.abs(ys - ys[::-1])) <= scale:
        return 0
    if np.max(np.abs(ys + ys[::-1])) <= scale:
        return 1
    return None


def fit_polynomial(kernel: Callable, cfg: FitConfig | None = None) -> PolyFit:
    """Weighted least-squares polynomial fit; returns coefficients and sup residual.

    By default the coefficients are constrained to be nonnegative (the PSD
    cone), since an unconstrained fit of a kinked kernel such as the deep
    ReLU NTK has large negative terms that no clipping tolerance can absorb.
    ``nonnegative=False`` gives the plain fit. With ``cfg.exploit_parity`` an exactly odd or even target on a symmetric
    grid is fit with monomials of its own parity only, so the one-sided
    endpoint weight cannot leak spurious (possibly negative) terms.
    """
    cfg = cfg or FitConfig()
    c = cfg.c_grid
    y = np.asarray(kernel(c), dtype=float)
    V = np.vander(c, cfg.degree + 1, increasing=True)
    cols = np.arange(cfg.degree + 1)
    parity = kernel_parity(c, y) if cfg.exploit_parity else None
    if parity is not None:
        cols = cols[cols % 2 == parity]
    sw = np.sqrt(fit_weights(cfg))
    A, b = V[:, cols] * sw[:, None], y * sw
    rank = np.linalg.matrix_rank(A)
    if rank < len(cols):
        raise np.linalg.LinAlgError(
            f"fit is rank deficient ({rank} < {len(cols)}); use more grid points"
        )
    if cfg.nonnegative:
        sub, _ = nnls(A, b)
    else:
        sub = np.linalg.lstsq(A, b, rcond=None)[0]
    coeffs = np.zeros(cfg.degree + 1)
    coeffs[cols] = sub
    residual = float(np.max(np.abs(V @ coeffs - y)))
    return PolyFit(coeffs, residual)


def best_psd_polynomial(kernel: Callable, degree: int = 5, c_grid=None) -> PolyFit:
    """Minimax fit with nonnegative coefficients: the best any degree-``degree``
    PSD series can do in sup norm on the grid (a linear program)."""
    c = np.linspace(-1.0, 1.0, 41) if c_grid is None else np.asarray(c_grid, dtype=float)
    y = np.asarray(kernel(c), dtype=float)
    V = np.vander(c, degree + 1, increasing=True)
    n, m = V.shape
    ones = np.ones((n, 1))
    # variables (a_0..a_d, t): minimize t with |V a - y| <= t, a >= 0
    A = np.vstack([np.hstack([V, -ones]), np.hstack([-V, -ones])])
    b = np.concatenate([y, -y])
    cost = np.zeros(m + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A, b_ub=b, bounds=[(0, None)] * (m + 1), method="highs")
    if not res.success:
        raise FloatingPointError(f"minimax fit failed: {res.message}")
    a = res.x[:m]
    return PolyFit(a, float(np.max(np.abs(V @ a - y))))


def clip_to_psd(series: Sequence[float], tol: float = 1e-8, relative: bool = True) -> np.ndarray:
    """Zero out negative coefficients no larger than tol (times max |a_k| if relative)."""
    a = np.array(series, dtype=float)
    scale = np.max(np.abs(a)) if relative and a.size else 1.0
    limit = tol * scale
    bad = np.flatnonzero(a < -limit)
    if bad.size:
        raise NotPSDError(int(bad[0]), float(a[bad[0]]))
    a[a < 0] = 0.0
    return a


def transform_activation(phi: HermiteSeries, which: str, alpha: float | None = None) -> HermiteSeries:
    """'derivative', 'scale' (by alpha) or 'reflect' (z -> -z)."""
    if which == "derivative":
        return series_derivative(phi)
    if which == "scale":
        if alpha is None:
            raise ValueError("scale needs alpha")
        return HermiteSeries(alpha * phi.array)
    if which == "reflect":
        return series_reflect(phi)
    raise ValueError(f"unknown transform {which!r}")


def activation_json(phi: HermiteSeries, target: str, signs) -> str:
    s = sign_vector(signs, len(phi)) if isinstance(signs, str) else np.asarray(signs)[: len(phi)]
    return json.dumps({"hermite_coeffs": list(phi.coeffs), "target": target,
                       "signs": [int(x) for x in s]})


def format_hermite(phi: HermiteSeries, digits: int = 3, tol: float = 0.0) -> str:
    """Render as '0.837 h_0 + 0.271 h_1 - 0.151 h_2 ...'."""
    parts = []
    for k, b in enumerate(phi.coeffs):
        if abs(b) <= tol or (tol == 0.0 and b == 0.0):
            continue
        mag = f"{abs(b):.{digits}f} h_{k}"
        if not parts:
            parts.append(("-" if b < 0 else "") + mag)
        else:
            parts.append(("- " if b < 0 else "+ ") + mag)
    return " ".join(parts) if parts else "0"
