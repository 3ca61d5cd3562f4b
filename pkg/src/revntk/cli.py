"""Command-line entry point: ``revntk <command> [options]``.

Exit codes: 0 on success, 2 on a configuration error, 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import experiments as ex
from .activations import Hermite, Named, from_dict
from .ansatz import AnsatzParams, mimic_json
from .data import NORMALIZE_MODES, load_csv, normalize, synthetic_regression
from .hermite import HermiteSeries
from .kernels import C_GRID_41, LayerScales, deep_kernels, relu_preset_scales
from .net import Network, NetworkConfig, train
from .synthesis import (
    FitConfig,
    activation_json,
    clip_to_psd,
    fit_polynomial,
    format_hermite,
    synthesize_activation,
)

log = logging.getLogger("revntk")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


# -- argument helpers ------------------------------------------------------------


def floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def parse_signs(text: str):
    if text in ("all_positive", "flip_h2_h3"):
        return text
    return floats(text)


def activation_from_args(args):
    """--activation NAME | hermite:b0,b1,... | path/to/activation.json."""
    spec = args.activation
    if spec.startswith("hermite:"):
        return Hermite(HermiteSeries(floats(spec[8:])))
    if spec.endswith(".json"):
        with open(spec) as fh:
            d = json.load(fh)
        if "hermite_coeffs" in d:
            return Hermite(HermiteSeries(d["hermite_coeffs"]))
        if "alpha" in d and "kind" not in d:
            d = {"kind": "ansatz", **d}
        return from_dict(d)
    return Named(spec, args.a, args.amplitude)


def scales_from_args(args) -> list[LayerScales]:
    if args.scales == "relu":
        return relu_preset_scales(args.depth)
    if args.scales == "unit":
        return [LayerScales()] * (args.depth + 1)
    sw, sb = floats(args.scales)
    return [LayerScales(sw, sb)] * (args.depth + 1)


def add_activation_args(p, default="relu"):
    p.add_argument("--activation", default=default,
                   help="exp|sin|cos|relu|erf, hermite:b0,b1,..., or an activation JSON file")
    p.add_argument("--a", type=float, default=1.0, help="input scale of a named activation")
    p.add_argument("--amplitude", type=float, default=1.0, help="output scale of a named activation")
    p.add_argument("--depth", type=int, default=1, help="number of hidden layers")
    p.add_argument("--scales", default="unit",
                   help="'unit' (1, 0), 'relu' (sqrt2, 0.1 hidden; 1, 0 readout) or 'sw,sb'")


def add_data_args(p):
    p.add_argument("--data", help="training CSV (header row)")
    p.add_argument("--test-data", help="test CSV with the same columns")
    p.add_argument("--target-column", help="name of the scalar target column")
    p.add_argument("--onehot", type=int, default=0, help="size of a trailing one-hot target block")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--n-train", type=int, default=256, help="synthetic training set size")
    p.add_argument("--n-test", type=int, default=256, help="synthetic test set size")
    p.add_argument("--dim", type=int, default=11, help="synthetic input dimension")
    p.add_argument("--noise", type=float, default=0.3, help="synthetic label noise")


# -- output --------------------------------------------------------------------------


class Output:
    """Files under --out plus a manifest, or the main table on stdout."""

    def __init__(self, args, command: str):
        self.dir = Path(args.out) if args.out else None
        self.args = args
        self.command = command
        self.files: list[str] = []
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, rows, main: bool = False):
        if self.dir is None:
            if main:
                w = csv.writer(sys.stdout, lineterminator="\n")
                for r in rows:
                    w.writerow(r)
            return
        path = self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for r in rows:
                w.writerow(r)
        self.files.append(name)

    def text(self, name: str, content: str):
        if self.dir is None:
            return
        (self.dir / name).write_text(content)
        self.files.append(name)

    def manifest(self):
        if self.dir is None:
            return
        config = {k: v for k, v in sorted(vars(self.args).items()) if k != "func"}
        blob = json.dumps(config, sort_keys=True, default=str)
        manifest = {
            "command": self.command,
            "config": json.loads(blob),
            "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
            "seed": self.args.seed,
            "files": self.files,
            "versions": versions(),
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "artifact": pkg}


# -- commands -------------------------------------------------------------------------


def kernel_source(args):
    """(series or None, evaluable kernel, label) from the synthesize options."""
    if args.series is not None:
        a = np.asarray(args.series, dtype=float)
        return a, (lambda c: np.polynomial.polynomial.polyval(c, a)), "series"
    phi = activation_from_args(args)
    scales = scales_from_args(args)
    idx = 0 if args.kernel == "nngp" else 1
    return None, (lambda c: deep_kernels(phi, scales, args.depth, c)[idx]), args.activation


def cmd_synthesize(args):
    series, kernel, label = kernel_source(args)
    if series is None:
        cfg = FitConfig(degree=args.degree, c_grid=np.linspace(-1, 1, args.grid),
                        endpoint_weight_fraction=args.endpoint_weight)
        coeffs, residual = fit_polynomial(kernel, cfg)
        log.info("degree-%d fit of %s: sup residual %.3g", args.degree, label, residual)
        series = clip_to_psd(coeffs)
    phi = synthesize_activation(series, args.target, args.signs)
    print(format_hermite(phi, digits=args.digits))
    out = Output(args, "synthesize")
    doc = activation_json(phi, args.target, args.signs)
    if out.dir is None:
        print(doc)
    out.text("activation.json", doc)
    out.text("kernel_series.json", json.dumps({"series": [float(v) for v in series]}))
    out.manifest()


def cmd_eval_kernel(args):
    phi = activation_from_args(args)
    scales = scales_from_args(args)
    grid = np.linspace(-1.0, 1.0, args.grid)
    out = Output(args, "eval-kernel")
    out.table("eval_kernel.csv", ex.eval_kernel_rows(phi, scales, args.depth, grid), main=True)
    out.manifest()


def cmd_kernel_grid(args):
    width, seeds = args.width, args.seeds
    if args.extended:
        seeds = max(seeds, 20)
    results = ex.kernel_grid(args.targets, width=width, n_seeds=seeds, n_points=args.points,
                             seed=args.seed, signs=args.signs)
    out = Output(args, "kernel-grid")
    out.table("kernel_grid.csv", ex.grid_rows(results), main=True)
    summary = [("target", "sup_error", "fit_residual", "hermite_coeffs", "error")]
    for r in results:
        summary.append((r.name, "" if r.error else repr(r.sup_error), repr(r.fit_residual),
                        " ".join(repr(float(b)) for b in r.activation.coeffs), r.error or ""))
        if not r.error:
            log.info("%s: sup error %.4f  [%s]", r.name, r.sup_error, format_hermite(r.activation))
    out.table("kernel_grid_summary.csv", summary)
    out.manifest()
    if all(r.error for r in results):
        raise FloatingPointError("every kernel-grid target failed")


def cmd_parity(args):
    cfg = ex.ParityConfig(n_bits=args.bits, train_fraction=args.train_fraction, seed=args.seed,
                          trials=30 if args.extended else args.trials, width=args.width,
                          lr=args.lr, max_epochs=args.max_epochs, stop_mse=args.stop_mse)
    archs = ex.parity_presets(cfg.width)
    if args.presets:
        wanted = set(args.presets)
        archs = [a for a in archs if _slug(a.label) in wanted]
        if not archs:
            raise ConfigError(f"no preset matches {sorted(wanted)}")
    results = ex.run_parity(cfg, archs, progress=lambda r: log.info(
        "%s trial %d: test mse %.4f acc %.3f (%s after %d epochs)",
        r.arch, r.trial, r.test_mse, r.test_acc, r.stop_reason, r.epochs_run))
    out = Output(args, "parity")
    trials = [("arch", "trial", "test_mse", "test_acc", "train_mse", "train_acc", "epochs_run",
               "stop_reason")]
    trials += [(r.arch, r.trial, repr(r.test_mse), repr(r.test_acc), repr(r.train_mse),
                repr(r.train_acc), r.epochs_run, r.stop_reason) for r in results]
    out.table("parity_trials.csv", trials)
    summary = [("arch", "test_mse_mean", "test_mse_std", "test_acc_mean", "test_acc_std",
                "failed_trials")]
    summary += [(row[0], *(repr(float(v)) for v in row[1:5]), row[5])
                for row in ex.parity_summary(results)]
    out.table("parity_summary.csv", summary, main=True)
    out.manifest()


def _slug(label: str) -> str:
    return {"4HL ReLU": "relu4", "1HL 10 sin(6z)": "sin10", "1HL 0.5 sin(6z)": "sin_half"}.get(
        label, label)


def load_datasets(args):
    if args.data:
        kw = dict(target=args.target_column, onehot=args.onehot, delimiter=args.delimiter)
        train_set = load_csv(args.data, **kw)
        test_set = load_csv(args.test_data, **kw) if args.test_data else None
    else:
        train_set, test_set = synthetic_regression(args.n_train, args.n_test, args.dim,
                                                      args.noise, seed=args.seed)
    train_set = normalize(train_set, args.normalize, args.dummy_index)
    if test_set is not None:
        test_set = normalize(test_set, args.normalize, args.dummy_index, train_set.dummy_value)
    return train_set, test_set


def cmd_mimic(args):
    train_set, test_set = load_datasets(args)
    if test_set is None:
        raise ConfigError("mimic needs held-out data (--test-data)")
    cfg = ex.MimicConfig(widths=args.widths, max_epochs=args.max_epochs, lr=args.lr,
                         stop_mse=args.stop_mse, threshold=args.threshold, seed=args.seed,
                         restarts=args.restarts)
    if args.extended:
        cfg.widths = sorted(set(cfg.widths) | {2048, 4096})
        cfg.max_epochs = 2**16
    out = Output(args, "mimic")
    if args.params:
        with open(args.params) as fh:
            params = AnsatzParams.from_dict(json.load(fh))
        log.info("using ansatz parameters from %s", args.params)
    else:
        fit = ex.fit_relu4_mimic(cfg)
        params = fit.params
        log.info("ansatz fit: sse %.4g, sup mismatch %.4g", fit.residual, fit.sup_mismatch)
        out.text("mimic_ansatz.json", mimic_json(fit, C_GRID_41))
        if out.dir is None:
            print(mimic_json(fit, C_GRID_41), file=sys.stderr)
    runs = ex.run_mimic(train_set, test_set, cfg, params, progress=lambda r: log.info(
        "%s width %d: epochs to %.3g = %s", r.arch, r.width, cfg.threshold,
        r.epochs_to_threshold))
    out.table("mimic_widths.csv", ex.mimic_rows(runs), main=True)
    if out.dir is not None:
        (out.dir / "curves").mkdir(exist_ok=True)
        for r in runs:
            if r.record is not None:
                slug = r.arch.replace(" ", "_").lower()
                out.text(f"curves/{slug}_w{r.width}.csv", r.record.to_csv())
    out.manifest()


def cmd_train(args):
    train_set, test_set = load_datasets(args)
    phi = activation_from_args(args)
    hidden = args.widths if len(args.widths) > 1 else args.widths * args.depth
    args.depth = len(hidden)
    net = Network(NetworkConfig(train_set.input_dim, hidden, phi, scales_from_args(args),
                                output_dim=train_set.output_dim, seed=args.seed))
    rec = train(net, train_set, test_set, lr=args.lr, max_epochs=args.max_epochs,
                stop_mse=args.stop_mse, centered=not args.no_center)
    out = Output(args, "train")
    if out.dir is None:
        sys.stdout.write(rec.to_csv())
    out.text("train_record.csv", rec.to_csv())
    out.manifest()
    log.info("stopped (%s) after %d epochs: %s", rec.stop_reason, rec.epochs_run, rec.final())


# -- parser ------------------------------------------------------------------------


def global_flags(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--out", default=d(None), help="output directory (default: stdout)")
    p.add_argument("--config", default=d(None), help="JSON file of option defaults")
    p.add_argument("--normalize", choices=NORMALIZE_MODES, default=d("per_sample"))
    p.add_argument("--dummy-index", action="store_true", default=d(False))
    p.add_argument("--extended", action="store_true", default=d(False),
                   help="full-scale trial counts, widths and epochs")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser():
    parser = argparse.ArgumentParser(prog="revntk", description=__doc__.splitlines()[0])
    global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        global_flags(p, suppress=True)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("synthesize", cmd_synthesize, "activation realizing a dot-product kernel")
    p.add_argument("--series", type=floats, help="kernel power series a0,a1,...")
    add_activation_args(p)
    p.add_argument("--kernel", choices=("nngp", "ntk"), default="ntk",
                   help="which kernel of --activation to realize")
    p.add_argument("--target", choices=("nngp", "ntk"), default="ntk")
    p.add_argument("--degree", type=int, default=5)
    p.add_argument("--grid", type=int, default=41)
    p.add_argument("--endpoint-weight", type=float, default=0.1)
    p.add_argument("--signs", type=parse_signs, default="all_positive")
    p.add_argument("--digits", type=int, default=5)

    p = add("eval-kernel", cmd_eval_kernel, "tabulate NNGP and NTK on a c-grid")
    add_activation_args(p)
    p.add_argument("--grid", type=int, default=64)

    p = add("kernel-grid", cmd_kernel_grid, "empirical NTKs of synthesized activations")
    p.add_argument("--targets", nargs="+", default=["linear", "c2+c", "erf_ntk", "relu4_ntk"])
    p.add_argument("--width", type=int, default=2**13)
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--signs", type=parse_signs, default="all_positive")

    p = add("parity", cmd_parity, "parity on the boolean cube")
    p.add_argument("--bits", type=int, default=11)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--max-epochs", type=int, default=10_000)
    p.add_argument("--stop-mse", type=float, default=1e-3)
    p.add_argument("--presets", nargs="+", choices=("relu4", "sin10", "sin_half"))

    p = add("mimic", cmd_mimic, "fit the ansatz to the 4HL ReLU NTK and train across widths")
    add_data_args(p)
    p.add_argument("--widths", type=ints, default=[64, 128, 256, 512, 1024])
    p.add_argument("--max-epochs", type=int, default=2**12)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--stop-mse", type=float, default=0.0)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--params", help="ansatz parameter JSON; skips the fit")

    p = add("train", cmd_train, "train a single network")
    add_data_args(p)
    add_activation_args(p)
    p.add_argument("--widths", type=ints, default=[512],
                   help="hidden widths; a single value is repeated --depth times")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--stop-mse", type=float, default=0.0)
    p.add_argument("--no-center", action="store_true")
    return parser, subs


def apply_config(argv, parser, subs):
    """Re-parse with defaults taken from --config (command-line flags still win)."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            conf = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}")
    if not isinstance(conf, dict):
        raise ConfigError("config file must hold a JSON object")
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    known = set(vars(args))
    unknown = sorted(set(conf) - known - {"command"})
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    conf.pop("command", None)
    sub = subs[args.command]
    sub_keys = {a.dest for a in sub._actions}
    sub.set_defaults(**{k: v for k, v in conf.items() if k in sub_keys})
    parser.set_defaults(**{k: v for k, v in conf.items() if k not in sub_keys})
    return parser.parse_args(argv)


def validate(args):
    for name in ("width", "trials", "bits", "seeds", "points", "grid", "depth"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise ConfigError(f"--{name} must be positive")
    for name in ("widths",):
        v = getattr(args, name, None)
        if v is not None and (not v or min(v) < 1):
            raise ConfigError("widths must be positive")
    for name in ("data", "test_data", "params"):
        v = getattr(args, name, None)
        if v and not Path(v).exists():
            raise ConfigError(f"no such file: {v}")
    if getattr(args, "command", None) == "parity" and not 1 <= args.bits <= 20:
        raise ConfigError("--bits must lie in [1, 20]")
    tf = getattr(args, "train_fraction", None)
    if tf is not None and not 0 < tf <= 1:
        raise ConfigError("--train-fraction must lie in (0, 1]")


def main(argv=None) -> int:
    parser, subs = build_parser()
    try:
        args = apply_config(argv, parser, subs)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        validate(args)
        args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) and EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, MemoryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
