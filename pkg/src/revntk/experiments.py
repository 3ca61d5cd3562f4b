"""Desk-scale versions of the kernel-grid, parity and mimic experiments."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .activations import Activation, Hermite, Named
from .ansatz import (
    DEFAULT_MIMIC_START,
    Ansatz,
    AnsatzParams,
    KernelObjective,
    MimicFit,
    fit_mimic,
)
from .data import Dataset, circle_inputs, parity_split, synthetic_regression
from .hermite import HermiteSeries
from .kernels import C_GRID_41, LayerScales, deep_kernels, relu_preset_scales
from .net import DivergenceError, Network, NetworkConfig, TrainRecord, train
from .synthesis import FitConfig, clip_to_psd, fit_polynomial, synthesize_activation

log = logging.getLogger(__name__)


# -- kernel targets ------------------------------------------------------------


@dataclass
class Target:
    """A kernel to realize: evaluable, optionally with an exact power series."""

    name: str
    kernel: Callable
    series: Sequence[float] | None = None


def relu_ntk(depth: int) -> Callable:
    scales = relu_preset_scales(depth)
    return lambda c: deep_kernels(Named("relu"), scales, depth, c)[1]


def erf_ntk(depth: int = 1) -> Callable:
    scales = relu_preset_scales(depth)
    return lambda c: deep_kernels(Named("erf"), scales, depth, c)[1]


def builtin_target(name: str) -> Target:
    """Named targets: 'linear', 'c2+c', 'erf_ntk', 'reluN_ntk', 'series:a0,a1,...'."""
    if name == "linear":
        return Target(name, lambda c: 2.0 * np.asarray(c), [0.0, 2.0])
    if name == "c2+c":
        return Target(name, lambda c: np.asarray(c) ** 2 + np.asarray(c), [0.0, 1.0, 1.0])
    if name == "erf_ntk":
        return Target(name, erf_ntk(1))
    if name.startswith("relu") and name.endswith("_ntk"):
        depth = int(name[4:-4] or 1)
        return Target(name, relu_ntk(depth))
    if name.startswith("series:"):
        a = [float(v) for v in name[7:].split(",")]
        return Target(name, lambda c: np.polynomial.polynomial.polyval(c, a), a)
    raise ValueError(f"unknown kernel target {name!r}")


def realize(target: Target, fit: FitConfig | None = None, signs="all_positive",
            kind: str = "ntk"):
    """Activation series realizing the target; fits a polynomial when no series is known."""
    if target.series is not None:
        a = np.asarray(target.series, dtype=float)
        residual = 0.0
    else:
        coeffs, _ = fit_polynomial(target.kernel, fit or FitConfig())
        a = clip_to_psd(coeffs)
        grid = (fit or FitConfig()).c_grid
        residual = float(np.max(np.abs(np.polynomial.polynomial.polyval(grid, a)
                                       - target.kernel(grid))))
    return synthesize_activation(a, kind, signs), a, residual


def empirical_circle_ntk(phi: Activation, width: int, n_seeds: int, n_points: int = 64,
                         seed: int = 0, scales=None):
    """Seed-averaged empirical NTK row K(x_0, x_j) of 1HL nets on the circle data."""
    X, c = circle_inputs(n_points)
    rows = []
    for s in range(n_seeds):
        net = Network(NetworkConfig(2, [width], phi, scales or LayerScales(), seed=seed + s))
        rows.append(net.empirical_ntk(X[:1], X)[0])
    rows = np.array(rows)
    return c, rows.mean(axis=0), rows.std(axis=0, ddof=1) if n_seeds > 1 else np.zeros(len(c))


@dataclass
class GridResult:
    name: str
    c: np.ndarray
    target: np.ndarray
    empirical: np.ndarray
    stdev: np.ndarray
    activation: HermiteSeries
    series: np.ndarray
    fit_residual: float
    error: str | None = None

    @property
    def sup_error(self) -> float:
        """sup |empirical - target| relative to sup |target|."""
        return float(np.max(np.abs(self.empirical - self.target)) / np.max(np.abs(self.target)))


def kernel_grid(targets: Sequence[str | Target], width: int = 2**13, n_seeds: int = 8,
                n_points: int = 64, seed: int = 0, signs="all_positive",
                fit: FitConfig | None = None) -> list[GridResult]:
    """Synthesize each target, then measure the empirical NTK on the circle."""
    out = []
    for t in targets:
        target = builtin_target(t) if isinstance(t, str) else t
        try:
            series, a, residual = realize(target, fit, signs)
            c, emp, sd = empirical_circle_ntk(Hermite(series), width, n_seeds, n_points, seed)
            out.append(GridResult(target.name, c, np.asarray(target.kernel(c)), emp, sd,
                                  series, a, residual))
        except (ValueError, FloatingPointError, MemoryError) as exc:
            log.warning("kernel-grid target %s failed: %s", target.name, exc)
            empty = np.array([])
            out.append(GridResult(target.name, empty, empty, empty, empty,
                                  HermiteSeries([0.0]), empty, math.nan, error=str(exc)))
    return out


def grid_rows(results: Sequence[GridResult]):
    yield ("target", "c", "K_target", "K_empirical", "stdev")
    for r in results:
        for row in zip(r.c, r.target, r.empirical, r.stdev):
            yield (r.name, *(repr(float(v)) for v in row))


# -- parity ---------------------------------------------------------------------


@dataclass(frozen=True)
class Arch:
    label: str
    activation: Activation
    hidden: int
    depth: int
    scales: tuple

    def config(self, input_dim: int, width: int | None = None, seed: int = 0,
               output_dim: int = 1) -> NetworkConfig:
        w = width or self.hidden
        return NetworkConfig(input_dim, [w] * self.depth, self.activation, list(self.scales),
                             output_dim=output_dim, seed=seed)


def parity_presets(width: int = 128) -> list[Arch]:
    return [
        Arch("4HL ReLU", Named("relu"), width, 4, tuple(relu_preset_scales(4))),
        Arch("1HL 10 sin(6z)", Named("sin", 6.0, 10.0), width, 1, (LayerScales(),) * 2),
        Arch("1HL 0.5 sin(6z)", Named("sin", 6.0, 0.5), width, 1, (LayerScales(),) * 2),
    ]


@dataclass
class ParityConfig:
    n_bits: int = 11
    train_fraction: float = 0.5
    seed: int = 0
    trials: int = 10
    width: int = 128
    lr: float = 0.1
    max_epochs: int = 10_000
    stop_mse: float = 1e-3


@dataclass
class TrialResult:
    arch: str
    trial: int
    test_mse: float
    test_acc: float
    train_mse: float
    train_acc: float
    epochs_run: int
    stop_reason: str


def run_parity(cfg: ParityConfig, archs: Sequence[Arch] | None = None,
               progress: Callable | None = None) -> list[TrialResult]:
    """Each trial draws a fresh split and initialization from seed + trial."""
    archs = archs or parity_presets(cfg.width)
    results = []
    for arch in archs:
        for t in range(cfg.trials):
            s = cfg.seed + t
            tr, te = parity_split(cfg.n_bits, cfg.train_fraction, seed=s)
            net = Network(arch.config(cfg.n_bits, seed=s))
            try:
                rec = train(net, tr, te, lr=cfg.lr, max_epochs=cfg.max_epochs,
                            stop_mse=cfg.stop_mse, record=lambda e: e % 1000 == 0)
                f = rec.final()
                res = TrialResult(arch.label, t, f["test_mse"], f["test_acc"], f["train_mse"],
                                  f["train_acc"], f["epochs_run"], f["stop_reason"])
            except DivergenceError as exc:
                res = TrialResult(arch.label, t, math.nan, math.nan, math.nan, math.nan,
                                  exc.epoch or 0, "diverged")
            results.append(res)
            if progress:
                progress(res)
    return results


def parity_summary(results: Sequence[TrialResult]):
    """(label, mean/std test MSE, mean/std test accuracy in %, failures) per architecture."""
    rows = []
    for label in dict.fromkeys(r.arch for r in results):
        rs = [r for r in results if r.arch == label]
        ok = [r for r in rs if r.stop_reason != "diverged"]
        m = np.array([r.test_mse for r in ok])
        a = 100 * np.array([r.test_acc for r in ok])
        sd = (lambda x: float(x.std(ddof=1)) if len(x) > 1 else 0.0)
        rows.append((label, float(m.mean()) if ok else math.nan, sd(m) if ok else math.nan,
                     float(a.mean()) if ok else math.nan, sd(a) if ok else math.nan,
                     len(rs) - len(ok)))
    rows.append(("chance", 1.0, 0.0, 50.0, 0.0, 0))
    rows.append(("ideal odd kernel", 0.5, 0.0, 75.0, 0.0, 0))
    return rows


# -- mimic ------------------------------------------------------------------------


def mimic_archs(params: AnsatzParams) -> list[Arch]:
    return [
        Arch("1HL ReLU", Named("relu"), 0, 1, tuple(relu_preset_scales(1))),
        Arch("4HL ReLU", Named("relu"), 0, 4, tuple(relu_preset_scales(4))),
        Arch("1HL mimic", Ansatz(params), 0, 1, (LayerScales(),) * 2),
    ]


def parameter_count(input_dim: int, hidden: Sequence[int], output_dim: int) -> int:
    w = [input_dim, *hidden, output_dim]
    return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))


@dataclass
class MimicConfig:
    widths: Sequence[int] = (64, 128, 256, 512, 1024)
    max_epochs: int = 2**12
    lr: float = 0.1
    stop_mse: float = 0.0
    threshold: float = 0.05
    seed: int = 0
    x0: AnsatzParams = DEFAULT_MIMIC_START
    restarts: int = 0


@dataclass
class MimicRun:
    arch: str
    width: int
    n_params: int
    record: TrainRecord | None
    epochs_to_threshold: int | None
    error: str | None = None


def fit_relu4_mimic(cfg: MimicConfig | None = None) -> MimicFit:
    cfg = cfg or MimicConfig()
    target = relu_ntk(4)
    return fit_mimic(target, KernelObjective(target, C_GRID_41), x0=cfg.x0,
                     restarts=cfg.restarts, seed=cfg.seed)


def run_mimic(train_set: Dataset, test_set: Dataset, cfg: MimicConfig,
              params: AnsatzParams, progress: Callable | None = None) -> list[MimicRun]:
    runs = []
    for width in cfg.widths:
        for arch in mimic_archs(params):
            netcfg = arch.config(train_set.input_dim, width, cfg.seed, train_set.output_dim)
            n_params = parameter_count(train_set.input_dim, netcfg.hidden_widths,
                                       train_set.output_dim)
            try:
                rec = train(Network(netcfg), train_set, test_set, lr=cfg.lr,
                            max_epochs=cfg.max_epochs, stop_mse=cfg.stop_mse)
                run = MimicRun(arch.label, width, n_params, rec, rec.epochs_to(cfg.threshold))
            except DivergenceError as exc:
                run = MimicRun(arch.label, width, n_params, None, None, error=str(exc))
            runs.append(run)
            if progress:
                progress(run)
    return runs


def mimic_rows(runs: Sequence[MimicRun]):
    yield ("arch", "width", "n_params", "epochs_run", "train_mse", "test_mse", "train_acc",
           "test_acc", "epochs_to_threshold")
    for r in runs:
        if r.record is None:
            yield (r.arch, r.width, r.n_params, "", "nan", "nan", "nan", "nan", "")
            continue
        f = r.record.final()
        yield (r.arch, r.width, r.n_params, f["epochs_run"],
               *(repr(float(f[k])) for k in ("train_mse", "test_mse", "train_acc", "test_acc")),
               "" if r.epochs_to_threshold is None else r.epochs_to_threshold)


def default_mimic_data(seed: int = 0):
    return synthetic_regression(256, 256, 11, 0.3, seed=seed)


# -- analytic tables ---------------------------------------------------------------


def eval_kernel_rows(phi: Activation, scales, depth: int, c_grid):
    nngp, ntk = deep_kernels(phi, scales, depth, np.asarray(c_grid, dtype=float))
    yield ("c", "nngp", "ntk")
    for row in zip(c_grid, nngp, ntk):
        yield tuple(repr(float(v)) for v in row)
