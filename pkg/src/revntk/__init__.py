"""Hermite-series kernel engineering for wide fully-connected networks.

The package maps activations to their infinite-width NNGP/NTK kernels and
back, trains finite networks in the NTK parameterization, and fits a
one-hidden-layer activation whose NTK imitates a deep ReLU network.
"""

from .activations import Custom, Hermite, Named
from .ansatz import Ansatz, AnsatzParams, ansatz_kernel, fit_mimic, nelder_mead
from .hermite import HermiteSeries, decompose, hermite_eval, series_derivative, series_eval
from .kernels import (
    DotProductKernel,
    LayerScales,
    check_psd,
    deep_kernels,
    nngp_1hl,
    ntk_1hl,
    relu_preset_scales,
)
from .net import Network, NetworkConfig, train
from .synthesis import clip_to_psd, fit_polynomial, synthesize_activation
from .tau import ntk_closed_form, tau_closed_form, tau_quadrature

__all__ = [
    "Ansatz", "AnsatzParams", "Custom", "DotProductKernel", "Hermite", "HermiteSeries",
    "LayerScales", "Named", "Network", "NetworkConfig", "ansatz_kernel", "check_psd",
    "clip_to_psd", "decompose", "deep_kernels", "fit_mimic", "fit_polynomial", "hermite_eval",
    "nelder_mead", "nngp_1hl", "ntk_1hl", "ntk_closed_form",
    "relu_preset_scales", "series_derivative", "series_eval", "synthesize_activation",
    "tau_closed_form", "tau_quadrature", "train",
]
