"""Activation functions that know their own tau-transforms.

Every activation exposes ``__call__`` and ``deriv`` for the finite network,
and ``tau(c, sigma2)`` / ``tau_deriv(c, sigma2)`` (the tau-transform of phi
and of phi') for the analytic kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from . import tau as _tau
from .hermite import (
    HermiteSeries,
    decompose,
    default_quadrature_size,
    series_derivative,
    series_eval,
)


class Activation:
    """Base class; subclasses override what they can do in closed form."""

    breakpoints: Sequence[float] | None = None
    deriv_breakpoints: Sequence[float] | None = None

    def __call__(self, z):
        raise NotImplementedError

    def deriv(self, z):
        raise NotImplementedError

    def tau(self, c, sigma2: float = 1.0):
        return _tau.tau_quadrature(self, c, sigma2, breakpoints=self.breakpoints)

    def tau_deriv(self, c, sigma2: float = 1.0):
        return _tau.tau_quadrature(
            self.deriv, c, sigma2, breakpoints=self.deriv_breakpoints
        )

    def to_dict(self) -> dict:
        raise NotImplementedError


def tau_series(phi: HermiteSeries, c):
    """sum_k b_k^2 c^k."""
    b2 = phi.array**2
    cc = np.asarray(c, dtype=float)
    out = np.polynomial.polynomial.polyval(cc, b2)
    return float(out) if cc.ndim == 0 else out


@dataclass(frozen=True)
class Hermite(Activation):
    series: HermiteSeries

    def __post_init__(self):
        if not isinstance(self.series, HermiteSeries):
            object.__setattr__(self, "series", HermiteSeries(self.series))

    def __call__(self, z):
        return series_eval(self.series, z)

    def deriv(self, z):
        return series_eval(series_derivative(self.series), z)

    def _rescaled(self, series: HermiteSeries, sigma2: float) -> HermiteSeries:
        if sigma2 == 1.0:
            return series
        sigma = np.sqrt(sigma2)
        K = series.truncation_order
        # z -> phi(sigma z) is again a degree-K polynomial: the projection is exact
        return decompose(lambda z: series_eval(series, sigma * z), K,
                         default_quadrature_size(K))

    def tau(self, c, sigma2: float = 1.0):
        return tau_series(self._rescaled(self.series, sigma2), c)

    def tau_deriv(self, c, sigma2: float = 1.0):
        return tau_series(self._rescaled(series_derivative(self.series), sigma2), c)

    def to_dict(self):
        return {"kind": "hermite", "coeffs": list(self.series.coeffs)}


@dataclass(frozen=True)
class Named(Activation):
    """amplitude * g(a z) for g in exp, sin, cos, relu, erf."""

    name: str
    a: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.name not in _tau.NAMED:
            raise ValueError(f"unknown activation {self.name!r}; expected one of {_tau.NAMED}")
        if self.a <= 0:
            raise ValueError("named activations take a > 0")

    @property
    def breakpoints(self):
        return (0.0,) if self.name == "relu" else None

    @property
    def deriv_breakpoints(self):
        return self.breakpoints

    def __call__(self, z):
        z = np.asarray(z, dtype=float) * self.a
        g = {
            "exp": np.exp,
            "sin": np.sin,
            "cos": np.cos,
            "relu": lambda x: np.maximum(x, 0.0),
            "erf": erf,
        }[self.name]
        return self.amplitude * g(z)

    def deriv(self, z):
        z = np.asarray(z, dtype=float) * self.a
        if self.name == "exp":
            g = np.exp(z)
        elif self.name == "sin":
            g = np.cos(z)
        elif self.name == "cos":
            g = -np.sin(z)
        elif self.name == "relu":
            g = (z > 0).astype(float)
        else:
            g = 2 / np.sqrt(np.pi) * np.exp(-z * z)
        return self.amplitude * self.a * g

    def tau(self, c, sigma2: float = 1.0):
        return self.amplitude**2 * _tau.tau_closed_form(self.name, c, self.a, sigma2)

    def tau_deriv(self, c, sigma2: float = 1.0):
        return self.amplitude**2 * _tau.tau_deriv_closed_form(self.name, c, self.a, sigma2)

    def to_dict(self):
        return {"kind": "named", "name": self.name, "a": self.a, "amplitude": self.amplitude}


@dataclass(frozen=True)
class Custom(Activation):
    """A pointwise function with its analytic derivative; tau by quadrature."""

    f: Callable
    fprime: Callable
    breakpoints: Sequence[float] | None = None
    deriv_breakpoints: Sequence[float] | None = None
    label: str = field(default="custom")

    def __call__(self, z):
        return self.f(np.asarray(z, dtype=float))

    def deriv(self, z):
        return self.fprime(np.asarray(z, dtype=float))

    def to_dict(self):
        return {"kind": "custom", "label": self.label}


def relu() -> Named:
    return Named("relu")


def linear() -> Hermite:
    return Hermite(HermiteSeries([0.0, 1.0]))


def from_dict(d: dict) -> Activation:
    kind = d["kind"]
    if kind == "hermite":
        return Hermite(HermiteSeries(d["coeffs"]))
    if kind == "named":
        return Named(d["name"], d.get("a", 1.0), d.get("amplitude", 1.0))
    if kind == "ansatz":
        from .ansatz import Ansatz, AnsatzParams

        return Ansatz(AnsatzParams.from_dict(d))
    raise ValueError(f"cannot rebuild activation of kind {kind!r}")
