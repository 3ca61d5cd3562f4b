"""Dot-product kernels and the infinite-width kernels of fully-connected nets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .activations import Activation, Hermite, Named, tau_series
from .hermite import HermiteSeries
from .tau import (
    clamp_correlation,
    ntk_closed_form,
    tau_closed_form,
    tau_deriv_closed_form,
    tau_quadrature,
)

__all__ = [
    "LayerScales",
    "DotProductKernel",
    "PSDCheck",
    "check_psd",
    "tau_series",
    "tau_quadrature",
    "tau_closed_form",
    "tau_deriv_closed_form",
    "ntk_closed_form",
    "nngp_1hl",
    "ntk_1hl",
    "deep_kernels",
    "hermite_kernel_series",
    "taylor_coefficients",
    "relu_preset_scales",
    "C_GRID_41",
]

PSD_TOL = 1e-12
C_GRID_41 = np.linspace(-1.0, 1.0, 41)


@dataclass(frozen=True)
class LayerScales:
    sigma_w: float = 1.0
    sigma_b: float = 0.0

    def __post_init__(self):
        if not self.sigma_w > 0:
            raise ValueError(f"sigma_w must be positive, got {self.sigma_w}")
        if self.sigma_b < 0:
            raise ValueError(f"sigma_b must be nonnegative, got {self.sigma_b}")


def relu_preset_scales(depth: int) -> list[LayerScales]:
    """sigma_w=sqrt(2), sigma_b=0.1 on hidden layers; (1, 0) readout."""
    return [LayerScales(math.sqrt(2.0), 0.1)] * depth + [LayerScales(1.0, 0.0)]


class PSDCheck(NamedTuple):
    ok: bool
    index: int | None


def check_psd(series: Sequence[float], tol: float = PSD_TOL) -> PSDCheck:
    """Nonnegative, summable power-series coefficients."""
    a = np.asarray(series, dtype=float)
    bad = np.flatnonzero(~(a >= -tol))  # also catches NaN
    if bad.size:
        return PSDCheck(False, int(bad[0]))
    if not np.isfinite(a.sum()):
        return PSDCheck(False, None)
    return PSDCheck(True, None)


@dataclass
class DotProductKernel:
    """K(c) as a power series sum_k a_k c^k, an evaluable closed form, or both."""

    series: tuple | None = None
    closed_form: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.series is None and self.closed_form is None:
            raise ValueError("a kernel needs a series or a closed form")
        if self.series is not None:
            self.series = tuple(float(a) for a in self.series)
            ok, idx = check_psd(self.series)
            if not ok:
                raise ValueError(f"kernel series is not PSD (coefficient {idx})")
        if self.series is not None and self.closed_form is not None:
            grid = C_GRID_41
            gap = np.max(np.abs(self._eval_series(grid) - self.closed_form(grid)))
            if gap > 1e-8:
                raise ValueError(f"series and closed form disagree by {gap:.3g}")

    def _eval_series(self, c):
        return np.polynomial.polynomial.polyval(c, np.asarray(self.series))

    def __call__(self, c):
        cc = clamp_correlation(c)
        out = self.closed_form(cc) if self.closed_form is not None else self._eval_series(cc)
        return float(out) if np.ndim(c) == 0 else np.asarray(out, dtype=float)

    def to_json(self) -> str:
        meta = {"truncation": None if self.series is None else len(self.series) - 1}
        meta.update(self.meta)
        return json.dumps({"series": None if self.series is None else list(self.series),
                           "meta": meta})

    @classmethod
    def from_json(cls, text: str) -> "DotProductKernel":
        d = json.loads(text)
        return cls(series=d["series"], meta=d.get("meta", {}))


def _as_activation(phi) -> Activation:
    if isinstance(phi, Activation):
        return phi
    if isinstance(phi, HermiteSeries):
        return Hermite(phi)
    if isinstance(phi, str):
        return Named(phi)
    raise TypeError(f"cannot interpret {phi!r} as an activation")


def nngp_1hl(phi, scales: LayerScales, c):
    """sw^2 tau_phi((sw^2 c + sb^2)/q; q) + sb^2, q = sw^2 + sb^2."""
    phi = _as_activation(phi)
    sw2, sb2 = scales.sigma_w**2, scales.sigma_b**2
    q = sw2 + sb2
    rho = clamp_correlation((sw2 * np.asarray(c, dtype=float) + sb2) / q)
    return sw2 * phi.tau(rho, q) + sb2


def ntk_1hl(phi, scales: LayerScales, c):
    """NNGP + (sw^2 c + sb^2) * sw^2 * tau_phi'(rho; q).

    The sw^2 in the second term comes from the readout weights multiplying
    the backpropagated signal; it is invisible at sigma_w = 1.
    """
    phi = _as_activation(phi)
    sw2, sb2 = scales.sigma_w**2, scales.sigma_b**2
    q = sw2 + sb2
    cc = np.asarray(c, dtype=float)
    rho = clamp_correlation((sw2 * cc + sb2) / q)
    nngp = sw2 * phi.tau(rho, q) + sb2
    return nngp + (sw2 * cc + sb2) * sw2 * phi.tau_deriv(rho, q)


def deep_kernels(phi, scales: Sequence[LayerScales] | LayerScales, depth: int, c):
    """NNGP and NTK of a depth-L fully-connected net with L hidden layers.

    ``scales`` has L+1 entries (hidden layers, then readout) or is a single
    LayerScales used everywhere.
    """
    phi = _as_activation(phi)
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if isinstance(scales, LayerScales):
        scales = [scales] * (depth + 1)
    if len(scales) != depth + 1:
        raise ValueError(f"need {depth + 1} layer scales, got {len(scales)}")
    cc = np.asarray(c, dtype=float)
    # carry c = 1 alongside the requested points to track the diagonal K(1)
    x = np.append(np.ravel(clamp_correlation(cc)), 1.0)
    s0 = scales[0]
    K = s0.sigma_w**2 * x + s0.sigma_b**2
    theta = K.copy()
    for layer in range(depth):
        q = K[-1]
        if not q > 0:
            raise ValueError(f"degenerate kernel: K({layer})(1) = {q}")
        s = scales[layer + 1]
        sw2, sb2 = s.sigma_w**2, s.sigma_b**2
        rho = np.clip(K / q, -1.0, 1.0)
        K_next = sw2 * phi.tau(rho, q) + sb2
        theta = K_next + theta * sw2 * phi.tau_deriv(rho, q)
        K = K_next
    nngp, ntk = K[:-1].reshape(cc.shape), theta[:-1].reshape(cc.shape)
    if cc.ndim == 0:
        return float(nngp), float(ntk)
    return nngp, ntk


def hermite_kernel_series(phi: HermiteSeries, target: str = "ntk") -> np.ndarray:
    """Power-series coefficients of the 1HL kernel at sigma_w=1, sigma_b=0."""
    b2 = phi.array**2
    if target == "nngp":
        return b2
    if target == "ntk":
        return b2 * (1 + np.arange(len(b2)))
    raise ValueError(f"target must be 'ntk' or 'nngp', got {target!r}")


def taylor_coefficients(f: Callable, M: int, radius: float = 0.5, n: int | None = None):
    """Taylor coefficients a_0..a_M of f at 0 from a trapezoid Cauchy integral.

    f must accept complex arrays and be analytic on the disc of ``radius``.
    """
    n = n or max(4 * (M + 1), 256)
    z = radius * np.exp(2j * np.pi * np.arange(n) / n)
    coeffs = np.fft.fft(f(z)) / n
    return (coeffs[: M + 1] / radius ** np.arange(M + 1)).real
