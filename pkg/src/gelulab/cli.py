"""``gelulab`` command line: verify | plot-data | bench | train | compare.

Settings resolve in four layers, later ones winning: built-in defaults, the
``--synthetic`` preset (a small network on 8x8 images), the ``--config`` file,
then explicit flags.  Config files hold ``key = value`` lines (``#`` starts a
comment) or a single JSON object; keys are the long flag names with dashes or
underscores.  An unknown key is a usage error.

Exit codes: 0 success, 1 a claim failed, 2 usage or configuration error,
3 I/O or data-format error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import special

from . import analysis
from .activations import ACTIVATION_NAMES, Activation, derivative_values, forward_values, make_activation
from .errors import ConfigurationError, ContractError, FormatError, ParameterError
from .experiments import ExperimentConfig, compare_activations, metrics_csv, train, write_text
from .tensor import precision_dtype

EXIT_OK, EXIT_CLAIM, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

ACTIVATION_HELP = "known activations: " + ", ".join(ACTIVATION_NAMES)


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _csv_list(v) -> list[str]:
    if isinstance(v, (list, tuple)):
        return [str(x).strip() for x in v]
    return [s.strip() for s in str(v).split(",") if s.strip()]


def _int_tuple(v) -> tuple[int, ...]:
    return tuple(int(x) for x in _csv_list(v))


def _optional_int(v):
    return None if v in (None, "", "none", "None") else int(v)


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable[[Any], Any]
    default: Any
    help: str
    flag: bool = False


COMMON = [
    Opt("seed", int, 0, "random seed"),
    Opt("precision", str, None, "analysis (float64) or training (float32)"),
    Opt("out_dir", str, ".", "directory for every output file"),
]

VERIFY = [
    Opt("grid_step", float, 1e-4, "grid spacing for derivative sweeps"),
    Opt("n_pairs", int, 10**6, "random pairs for the Lipschitz check"),
]

PLOT = [
    Opt("figure", int, None, "1: GELU; 2: GELU and derivative; 3: twelve-function comparison"),
    Opt("functions", _csv_list, None, "comma-separated function names (overrides --figure)"),
    Opt("lo", float, None, "left end of the x range"),
    Opt("hi", float, None, "right end of the x range"),
    Opt("step", float, None, "x spacing (alternative to --samples)"),
    Opt("samples", int, None, "number of x values"),
]

BENCH = [
    Opt("size", int, 1 << 20, "elements in the benchmark tensor"),
    Opt("repeats", int, 5, "repetitions; the median is reported"),
]

TRAIN = [
    Opt("dataset", str, "cifar10", "cifar10, cifar100, stl10 or synthetic"),
    Opt("data_root", str, None, "directory holding the dataset binaries"),
    Opt("activation", str, "gelu", ACTIVATION_HELP),
    Opt("epochs", int, 20, "training epochs"),
    Opt("batch_size", int, 128, "minibatch size"),
    Opt("lr", float, 1e-3, "Adam learning rate"),
    Opt("subset_size", _optional_int, None, "train on a seeded subset of this size"),
    Opt("test_subset_size", _optional_int, None, "evaluate on a seeded subset of this size"),
    Opt("norm", str, "batch", "batch, layer or group"),
    Opt("num_classes", _optional_int, None, "class count (synthetic data)"),
    Opt("synthetic_size", int, 1000, "synthetic training images"),
    Opt("synthetic_test_size", int, 500, "synthetic test images"),
    Opt("image_size", int, 32, "synthetic image side"),
    Opt("stem_width", int, 64, "stem channels"),
    Opt("widths", _int_tuple, (64, 64, 128, 128, 256, 256), "six residual block widths"),
    Opt("timing", _bool, False, "record wall-clock seconds per epoch (makes CSVs nondeterministic)", True),
    Opt("synthetic", _bool, False, "use the built-in synthetic dataset", True),
    Opt("desk_scale", _bool, False, "3 epochs on a 5000/1000 subset", True),
    Opt("full_protocol", _bool, False, "20 epochs on the full dataset", True),
]

COMPARE = TRAIN + [
    Opt("activations", _csv_list, ["gelu", "relu", "sigmoid"], "comma-separated list; " + ACTIVATION_HELP),
]

COMMANDS = {
    "verify": (VERIFY, "check the analytic GELU properties and write claims.csv / claims.txt"),
    "plot-data": (PLOT, "write the data behind the GELU figures as CSV"),
    "bench": (BENCH, "activation forward/derivative throughput to bench.csv"),
    "train": (TRAIN, "train one network, writing metrics.csv"),
    "compare": (COMPARE, "paired activation sweep, writing comparison.csv and metrics.csv"),
}

SYNTHETIC_PRESET = dict(
    dataset="synthetic", epochs=3, batch_size=32, image_size=8, stem_width=8, widths=(8, 8, 16, 16, 32, 32),
    synthetic_size=256, synthetic_test_size=128,
)


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gelulab",
        description="GELU analysis, activation benchmarks and residual-network training.",
        epilog=ACTIVATION_HELP,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (opts, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text, epilog=ACTIVATION_HELP)
        p.add_argument("--config", default=None, help="key=value or JSON settings file")
        for o in COMMON + opts:
            flag = "--" + o.name.replace("_", "-")
            if o.flag:
                p.add_argument(flag, action="store_const", const=True, default=None, help=o.help)
            else:
                p.add_argument(flag, type=o.type, default=None, help=f"{o.help} (default: {o.default})")
    return parser


def read_config(path) -> dict[str, str | Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise UsageError(f"config {path}: JSON must be an object")
        return {str(k).replace("-", "_"): v for k, v in data.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    opts = {o.name: o for o in COMMON + COMMANDS[command][0]}
    settings = {name: o.default for name, o in opts.items()}
    flags = {k: v for k, v in vars(ns).items() if k in opts and v is not None}
    filed = {}
    if ns.config:
        raw = read_config(ns.config)
        unknown = sorted(set(raw) - set(opts))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        for k, v in raw.items():
            try:
                filed[k] = opts[k].type(v) if v is not None else None
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {k}: {exc}") from None
    if "synthetic" in opts and (filed.get("synthetic") or flags.get("synthetic")):
        settings.update(SYNTHETIC_PRESET)
    settings.update(filed)
    settings.update(flags)
    return settings


# -- subcommands ------------------------------------------------------------

def cmd_verify(s: dict) -> int:
    if s["precision"] not in (None, "analysis"):
        raise UsageError("verify always runs in analysis precision")
    claims = analysis.run_claims(grid_step=s["grid_step"], seed=s["seed"], n_pairs=s["n_pairs"])
    out = Path(s["out_dir"])
    text = analysis.claims_text(claims)
    write_text(out / "claims.csv", analysis.claims_csv(claims))
    write_text(out / "claims.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if analysis.all_passed(claims) else EXIT_CLAIM


@dataclass(frozen=True)
class Curve:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]


def _zoo_curve(name: str, label: str | None = None, **params) -> Curve:
    act = make_activation(name, **params)
    return Curve(label or act.kind.value,
                 lambda x: forward_values(act.kind, x, act.params, act._slope(x, False, None)),
                 lambda x: derivative_values(act.kind, x, act.params, act._slope(x, False, None)))


def _softplus_difference() -> Curve:
    # log(1 + e^x) - log(1 + e^-x), drawn literally; it reduces to x
    return Curve("softplus_difference",
                 lambda x: np.logaddexp(0.0, x) - np.logaddexp(0.0, -x),
                 lambda x: special.expit(x) + special.expit(-x))


def figure_curves(figure: int) -> list[Curve]:
    if figure in (1, 2):
        return [_zoo_curve("gelu")]
    if figure == 3:
        return [
            _zoo_curve("sigmoid"), _zoo_curve("tanh"), _zoo_curve("leaky_relu"), _zoo_curve("softplus"),
            _zoo_curve("softsign"), _zoo_curve("gelu"),
            _zoo_curve("leaky_relu", "leaky_relu_0.1", negative_slope=0.1),
            _zoo_curve("leaky_relu", "leaky_relu_0.2", negative_slope=0.2),
            _zoo_curve("leaky_relu", "leaky_relu_0.3", negative_slope=0.3),
            _zoo_curve("elu"), _zoo_curve("elu", "elu_1.67326", alpha=1.67326),
            _softplus_difference(),
        ]
    raise UsageError(f"--figure must be 1, 2 or 3, got {figure}")


FIGURE_RANGES = {1: (-2.5, 2.5, 201), 2: (-3.0, 3.0, 200), 3: (-3.0, 3.0, 200)}
PLOT_NAMES = ACTIVATION_NAMES + ("softplus_difference",)


def named_curves(names) -> list[Curve]:
    unknown = [n for n in names if n not in PLOT_NAMES]
    if unknown:
        raise UsageError(f"unknown function(s) {', '.join(unknown)}; known: {', '.join(PLOT_NAMES)}")
    return [_softplus_difference() if n == "softplus_difference" else _zoo_curve(n) for n in names]


def plot_table(curves, x: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["x"]
    for c in curves:
        header += [c.name, f"d_{c.name}"]
    w.writerow(header)
    cols = [x]
    for c in curves:
        cols += [np.asarray(c.f(x), dtype=float), np.asarray(c.df(x), dtype=float)]
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def cmd_plot_data(s: dict) -> int:
    figure = s["figure"] or (None if s["functions"] else 2)
    curves = named_curves(s["functions"]) if s["functions"] else figure_curves(figure)
    lo, hi, samples = FIGURE_RANGES.get(figure or 2, FIGURE_RANGES[2])
    lo = s["lo"] if s["lo"] is not None else lo
    hi = s["hi"] if s["hi"] is not None else hi
    if not hi > lo:
        raise UsageError(f"empty range [{lo}, {hi}]")
    if s["step"] is not None:
        x = analysis.grid(lo, hi, s["step"])
    else:
        n = s["samples"] or samples
        if n < 2:
            raise UsageError("--samples must be at least 2")
        x = np.linspace(lo, hi, n)
    x = x.astype(precision_dtype(s["precision"] or "analysis"))
    name = f"figure{figure}.csv" if not s["functions"] else "plot_data.csv"
    write_text(Path(s["out_dir"]) / name, plot_table(curves, x))
    return EXIT_OK


def bench_rows(size: int, repeats: int, dtype, seed: int = 0) -> list[tuple[str, float, float]]:
    if size < 1 or repeats < 1:
        raise UsageError("bench needs size >= 1 and repeats >= 1")
    x = np.random.default_rng(seed).normal(0.0, 3.0, size).astype(dtype)
    rows = []
    for name in ACTIVATION_NAMES:
        act = Activation(name)
        slope = act._slope(x, False, None)
        timings = []
        for fn in (forward_values, derivative_values):
            ts = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn(act.kind, x, act.params, slope)
                ts.append(time.perf_counter() - t0)
            timings.append(size / max(float(np.median(ts)), 1e-12))
        rows.append((name, timings[0], timings[1]))
    return rows


def cmd_bench(s: dict) -> int:
    rows = bench_rows(s["size"], s["repeats"], precision_dtype(s["precision"] or "training"), s["seed"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["activation", "forward_elems_per_s", "derivative_elems_per_s"])
    for name, fwd, der in rows:
        w.writerow([name, f"{fwd:.6g}", f"{der:.6g}"])
    write_text(Path(s["out_dir"]) / "bench.csv", buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def experiment_config(s: dict) -> ExperimentConfig:
    if s["desk_scale"] and s["full_protocol"]:
        raise UsageError("--desk-scale and --full-protocol are mutually exclusive")
    scale = {}
    if s["desk_scale"]:
        scale = dict(epochs=3, subset_size=5000, test_subset_size=1000)
    elif s["full_protocol"]:
        scale = dict(epochs=20, subset_size=None, test_subset_size=None)
    fields = {k: s[k] for k in ("dataset", "data_root", "activation", "epochs", "batch_size", "lr", "subset_size",
                                "test_subset_size", "norm", "num_classes", "synthetic_size", "synthetic_test_size",
                                "image_size", "stem_width", "widths", "timing", "seed")}
    fields.update(scale)
    if s["synthetic"]:
        fields["dataset"] = "synthetic"
    cfg = ExperimentConfig(precision=s["precision"] or "training", out_dir=s["out_dir"], **fields)
    cfg.validate()
    return cfg


def cmd_train(s: dict) -> int:
    cfg = experiment_config(s)
    records = train(cfg)
    sys.stdout.write(metrics_csv(records))
    return EXIT_OK


def cmd_compare(s: dict) -> int:
    if not s["activations"]:
        raise UsageError("--activations must name at least one activation")
    cfg = experiment_config({**s, "activation": s["activations"][0]})
    for name in s["activations"]:
        cfg.replace(activation=name).validate()
    rows, _ = compare_activations(cfg, s["activations"])
    for r in rows:
        sys.stdout.write(f"{r.activation:12s} loss {r.test_loss:.4f}  acc {r.test_acc:6.2f}  {r.status}\n")
    return EXIT_OK


HANDLERS = {"verify": cmd_verify, "plot-data": cmd_plot_data, "bench": cmd_bench, "train": cmd_train,
            "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = resolve(ns.command, ns)
        return HANDLERS[ns.command](settings)
    except (UsageError, ConfigurationError, ContractError, ParameterError) as exc:
        print(f"gelulab {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"gelulab {ns.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
