"""Finite fully-connected networks in the NTK parameterization.

Layer l computes z = (sigma_w / sqrt(n_{l-1})) * omega @ x + sigma_b * beta, and
the trainable parameters are omega and beta (both initialized N(0, 1)).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .activations import Activation
from .kernels import LayerScales

DEFAULT_NTK_BUDGET = 2 * 1024**3  # bytes


class DivergenceError(FloatingPointError):
    def __init__(self, msg, layer=None, epoch=None):
        super().__init__(msg)
        self.layer = layer
        self.epoch = epoch


@dataclass
class NetworkConfig:
    input_dim: int
    hidden_widths: Sequence[int]
    activation: Activation
    scales: Sequence[LayerScales] | LayerScales = field(default_factory=LayerScales)
    output_dim: int = 1
    seed: int = 0

    def __post_init__(self):
        self.hidden_widths = [int(n) for n in self.hidden_widths]
        if self.input_dim < 1 or self.output_dim < 1 or min(self.hidden_widths, default=1) < 1:
            raise ValueError("all widths must be positive")
        if isinstance(self.scales, LayerScales):
            self.scales = [self.scales] * (self.depth + 1)
        self.scales = list(self.scales)
        if len(self.scales) != self.depth + 1:
            raise ValueError(f"need {self.depth + 1} layer scales, got {len(self.scales)}")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *self.hidden_widths, self.output_dim]

    def n_params(self) -> int:
        w = self.widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))


class Network:
    """Parameters, an initial snapshot (for centering) and the network maps."""

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        w = cfg.widths
        self.omegas = []
        self.betas = []
        for i in range(len(w) - 1):
            self.omegas.append(rng.standard_normal((w[i + 1], w[i])))
            self.betas.append(rng.standard_normal(w[i + 1]))
        self._initial = None

    @property
    def initial(self):
        """Parameters at initialization; copied lazily on the first update."""
        if self._initial is None:
            return self.omegas, self.betas
        return self._initial

    # factors sigma_w / sqrt(fan_in) per layer
    def _wscale(self, i):
        return self.cfg.scales[i].sigma_w / math.sqrt(self.cfg.widths[i])

    def forward(self, X, params=None):
        """Returns (outputs, cache); cache holds (inputs, preactivations) per layer."""
        omegas, betas = params if params is not None else (self.omegas, self.betas)
        x = np.atleast_2d(np.asarray(X, dtype=float))
        if x.shape[1] != self.cfg.input_dim:
            raise ValueError(f"expected {self.cfg.input_dim} input features, got {x.shape[1]}")
        phi = self.cfg.activation
        cache = []
        n_layers = len(omegas)
        for i in range(n_layers):
            z = (x @ omegas[i].T) * self._wscale(i)
            sb = self.cfg.scales[i].sigma_b
            if sb:
                z += sb * betas[i]
            cache.append((x, z))
            if i == n_layers - 1:
                return z, cache
            x = phi(z)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite activation in hidden layer {i + 1}", layer=i + 1)

    def predict(self, X, centered: bool = False):
        out, _ = self.forward(X)
        if centered:
            out = out - self.forward(X, self.initial)[0]
        return out

    def backward(self, cache, grad_out):
        """Gradients of sum(grad_out * outputs) w.r.t. (omegas, betas)."""
        phi = self.cfg.activation
        g = np.asarray(grad_out, dtype=float)
        d_omegas = [None] * len(cache)
        d_betas = [None] * len(cache)
        for i in range(len(cache) - 1, -1, -1):
            x, _ = cache[i]
            ws = self._wscale(i)
            d_omegas[i] = ws * (g.T @ x)
            d_betas[i] = self.cfg.scales[i].sigma_b * g.sum(axis=0)
            if i:
                g = (g @ self.omegas[i]) * ws * phi.deriv(cache[i - 1][1])
        return d_omegas, d_betas

    def grad(self, x, residual):
        """Parameter gradient of sum(residual * f(x)) for inputs x."""
        _, cache = self.forward(x)
        return self.backward(cache, np.atleast_2d(residual))

    def empirical_ntk(self, X1, X2=None, output: int = 0, budget: int = DEFAULT_NTK_BUDGET):
        """grad_theta f(x1) . grad_theta f(x2), assembled layer by layer."""
        X1 = np.atleast_2d(np.asarray(X1, dtype=float))
        same = X2 is None
        X2 = X1 if same else np.atleast_2d(np.asarray(X2, dtype=float))
        need = 8 * 3 * (len(X1) + len(X2)) * sum(self.cfg.widths)
        if need > budget:
            raise MemoryError(
                f"empirical NTK needs ~{need / 2**20:.0f} MiB (> budget); "
                "average several narrower networks instead"
            )
        _, c1 = self.forward(X1)
        _, c2 = (None, c1) if same else self.forward(X2)
        phi = self.cfg.activation
        d1 = np.zeros((len(X1), self.cfg.output_dim))
        d1[:, output] = 1.0
        d2 = np.zeros((len(X2), self.cfg.output_dim))
        d2[:, output] = 1.0
        K = np.zeros((len(X1), len(X2)))
        for i in range(len(c1) - 1, -1, -1):
            x1, x2 = c1[i][0], c2[i][0]
            s = self.cfg.scales[i]
            feat = (s.sigma_w**2 / self.cfg.widths[i]) * (x1 @ x2.T) + s.sigma_b**2
            K += (d1 @ d2.T) * feat
            if i:
                ws = self._wscale(i)
                d1 = (d1 @ self.omegas[i]) * ws * phi.deriv(c1[i - 1][1])
                d2 = d1 if same else (d2 @ self.omegas[i]) * ws * phi.deriv(c2[i - 1][1])
        return K

    def apply_update(self, grads, lr):
        d_omegas, d_betas = grads
        if self._initial is None:
            self._initial = ([o.copy() for o in self.omegas], [b.copy() for b in self.betas])
        for i in range(len(self.omegas)):
            self.omegas[i] -= lr * d_omegas[i]
            self.betas[i] -= lr * d_betas[i]


# -- training ----------------------------------------------------------------


@dataclass
class TrainRecord:
    epochs: list = field(default_factory=list)
    train_mse: list = field(default_factory=list)
    test_mse: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    stop_reason: str = ""
    epochs_run: int = 0

    def final(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "stop_reason": self.stop_reason,
            "train_mse": self.train_mse[-1],
            "test_mse": self.test_mse[-1],
            "train_acc": self.train_acc[-1],
            "test_acc": self.test_acc[-1],
        }

    def epochs_to(self, threshold: float) -> int | None:
        """First recorded epoch with train MSE below threshold."""
        for e, m in zip(self.epochs, self.train_mse):
            if m < threshold:
                return e
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "test_mse", "train_acc", "test_acc"])
        for row in zip(self.epochs, self.train_mse, self.test_mse, self.train_acc, self.test_acc):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def mse(pred, y) -> float:
    """Mean over samples of the squared error summed over outputs (no 1/2)."""
    d = np.asarray(pred) - np.asarray(y)
    return float(np.mean(np.sum(d * d, axis=1)))


def accuracy(pred, y, kind: str) -> float:
    if kind == "classification":
        return float(np.mean(np.argmax(pred, axis=1) == np.argmax(y, axis=1)))
    if kind == "signed":
        return float(np.mean(np.sign(pred[:, 0]) == np.sign(y[:, 0])))
    return float("nan")


def default_record_interval(epoch: int) -> bool:
    return epoch <= 1000 or epoch % 10 == 0


def train(net: Network, data, test=None, lr: float = 0.1, max_epochs: int = 1000,
          stop_mse: float = 0.0, centered: bool = True, record=default_record_interval,
          loss_factor: float = 0.5):
    """Full-batch gradient descent on ``loss_factor * MSE``.

    The default descends on the conventional half-MSE; recorded MSEs never
    carry the factor.

    Metrics at epoch t are those of the parameters after t updates. Stops
    when the train MSE drops below ``stop_mse`` or after ``max_epochs``
    updates. Raises DivergenceError on a non-finite loss.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    X, Y = data.inputs, data.targets
    kind = data.kind
    f0 = net.predict(X) if centered else 0.0
    f0_test = net.predict(test.inputs) if (centered and test is not None) else 0.0
    rec = TrainRecord()
    n = len(X)
    epoch = 0
    while True:
        out, cache = net.forward(X)
        pred = out - f0
        with np.errstate(over="ignore", invalid="ignore"):  # caught just below
            loss = mse(pred, Y)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
        done = loss < stop_mse
        last = done or epoch >= max_epochs
        if record(epoch) or last:
            rec.epochs.append(epoch)
            rec.train_mse.append(loss)
            rec.train_acc.append(accuracy(pred, Y, kind))
            if test is not None:
                tp = net.predict(test.inputs) - f0_test
                rec.test_mse.append(mse(tp, test.targets))
                rec.test_acc.append(accuracy(tp, test.targets, kind))
            else:
                rec.test_mse.append(float("nan"))
                rec.test_acc.append(float("nan"))
        if last:
            rec.stop_reason = "train_mse" if done else "max_epochs"
            rec.epochs_run = epoch
            return rec
        grads = net.backward(cache, (2.0 * loss_factor / n) * (pred - Y))
        net.apply_update(grads, lr)
        epoch += 1
