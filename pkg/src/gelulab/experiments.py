"""Training, evaluation and paired activation sweeps.

Protocol: cross-entropy loss, Adam, fixed epochs and batch size, no data
augmentation.  Inputs are scaled to [0, 1] and standardized per channel with
training-split statistics.

A sweep over activations is *paired*: every run shares the seed, so the data
subset, the shuffled batch order and the initial weights are identical and
only the activation differs.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .activations import ACTIVATION_NAMES, parse_kind
from .data import DATASETS, DatasetSpec, Standardizer, load_raw
from .errors import ConfigurationError, ContractError, NonFiniteError
from .losses import cross_entropy
from .optim import Adam
from .resnet import NetworkConfig, build_network
from .tensor import Tensor, backward, no_grad, precision_dtype

METRICS_HEADER = ("activation", "epoch", "train_loss", "test_loss", "test_acc", "seconds")
COMPARISON_HEADER = ("activation", "test_loss", "test_acc", "status")


@dataclass
class ExperimentConfig:
    dataset: str = "cifar10"
    data_root: str | None = None
    activation: str = "gelu"
    epochs: int = 20
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0
    subset_size: int | None = None
    test_subset_size: int | None = None
    norm: str = "batch"
    precision: str = "training"
    synthetic_size: int = 1000
    synthetic_test_size: int = 500
    num_classes: int | None = None
    image_size: int = 32
    stem_width: int = 64
    widths: tuple[int, ...] = (64, 64, 128, 128, 256, 256)
    timing: bool = False
    out_dir: str | None = None

    def validate(self) -> None:
        problems = []
        if self.dataset not in DATASETS:
            problems.append(f"unknown dataset {self.dataset!r} (known: {', '.join(DATASETS)})")
        elif self.dataset != "synthetic" and not self.data_root:
            problems.append(f"dataset {self.dataset} needs data_root")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            problems.append(f"lr must be positive, got {self.lr}")
        for name in ("subset_size", "test_subset_size"):
            v = getattr(self, name)
            if v is not None and v < 1:
                problems.append(f"{name} must be >= 1, got {v}")
        if self.precision not in ("training", "analysis"):
            problems.append(f"precision must be training or analysis, got {self.precision!r}")
        try:
            parse_kind(self.activation)
        except ContractError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigurationError("invalid experiment config: " + "; ".join(problems))
        self.network_config().validate()

    @property
    def classes(self) -> int:
        if self.num_classes:
            return self.num_classes
        return DATASETS[self.dataset][0] or 10

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(activation=self.activation, norm=self.norm, stem_width=self.stem_width,
                             widths=tuple(self.widths), num_classes=self.classes)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def desk_scale(cls, **kw) -> "ExperimentConfig":
        base = dict(epochs=3, subset_size=5000, test_subset_size=1000)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class MetricsRecord:
    activation: str
    epoch: int
    train_loss: float
    test_loss: float
    test_acc: float
    seconds: float = 0.0


@dataclass
class RunResult:
    records: list[MetricsRecord]
    initial_loss: float
    step_losses: list[float] = field(default_factory=list)
    net: object = None


@dataclass(frozen=True)
class ComparisonRow:
    activation: str
    test_loss: float
    test_acc: float
    status: str
    error: str = ""


# -- data -------------------------------------------------------------------

def _subset(images, labels, size, rng):
    if size is None or size >= len(labels):
        return images, labels
    idx = np.sort(rng.choice(len(labels), size=size, replace=False))
    return images[idx], labels[idx]


def prepare_data(config: ExperimentConfig):
    """``(x_train, y_train, x_test, y_test)`` as standardized float arrays."""
    dtype = precision_dtype(config.precision)
    common = dict(num_classes=config.num_classes)
    if config.dataset == "synthetic":
        from .data import synthetic_blobs

        xtr, ytr = synthetic_blobs(config.synthetic_size, config.classes, config.seed, config.image_size)
        xte, yte = synthetic_blobs(config.synthetic_test_size, config.classes, config.seed + 1_000_003,
                                   config.image_size)
    else:
        xtr, ytr = load_raw(DatasetSpec(config.dataset, config.data_root, "train", **common))
        xte, yte = load_raw(DatasetSpec(config.dataset, config.data_root, "test", **common))
    rng = np.random.default_rng([config.seed, 7])
    xtr, ytr = _subset(xtr, ytr, config.subset_size, rng)
    xte, yte = _subset(xte, yte, config.test_subset_size, rng)
    std = Standardizer(xtr)
    return std(xtr, dtype), ytr, std(xte, dtype), yte


# -- evaluation -------------------------------------------------------------

def _logits(net, images) -> np.ndarray:
    out = net(images, "eval")
    return np.asarray(out.data if isinstance(out, Tensor) else out)


def evaluate(net, images, labels, batch_size: int = 256) -> tuple[float, float]:
    """Mean cross-entropy and top-1 accuracy (%) in eval mode.

    Per-sample losses are accumulated in float64 so the result does not
    depend on ``batch_size`` beyond the network's own rounding.
    """
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ContractError("evaluate: empty split")
    if batch_size < 1:
        raise ContractError(f"evaluate: batch_size must be >= 1, got {batch_size}")
    total = 0.0
    correct = 0
    with no_grad():
        for i in range(0, len(labels), batch_size):
            z = _logits(net, images[i:i + batch_size]).astype(np.float64)
            y = labels[i:i + batch_size]
            zmax = z.max(axis=1, keepdims=True)
            lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
            total += float((lse - z[np.arange(len(y)), y]).sum())
            correct += int((z.argmax(axis=1) == y).sum())
    return total / len(labels), 100.0 * correct / len(labels)


# -- training ---------------------------------------------------------------

StepCallback = Callable[[int, int, float], None]


def train_run(config: ExperimentConfig, data=None, on_step: StepCallback | None = None) -> RunResult:
    """Train one network and return per-epoch metrics plus the step-0 loss.

    ``data`` may pass pre-loaded ``(x_train, y_train, x_test, y_test)`` arrays.
    A non-finite loss raises :class:`NonFiniteError` naming epoch and step.
    """
    config.validate()
    xtr, ytr, xte, yte = data if data is not None else prepare_data(config)
    if len(ytr) == 0:
        raise ContractError("training split is empty")
    dtype = precision_dtype(config.precision)
    net = build_network(config.network_config(), seed=config.seed, dtype=dtype)
    opt = Adam(net.parameters(), lr=config.lr)
    shuffle = np.random.default_rng([config.seed, 11])
    name = parse_kind(config.activation).value
    records, steps = [], []
    initial = math.nan
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle.permutation(len(ytr))
        total, seen = 0.0, 0
        for step, i in enumerate(range(0, len(order), config.batch_size)):
            idx = order[i:i + config.batch_size]
            try:
                loss = cross_entropy(ytr[idx], net(xtr[idx], "train"))
            except NonFiniteError as exc:
                raise NonFiniteError(f"{name}: epoch {epoch} step {step}: {exc}") from exc
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteError(f"{name}: epoch {epoch} step {step}: loss is {value}")
            if epoch == 1 and step == 0:
                initial = value
            steps.append(value)
            if on_step is not None:
                on_step(epoch, step, value)
            opt.zero_grad()
            backward(loss)
            opt.step()
            total += value * len(idx)
            seen += len(idx)
        test_loss, test_acc = evaluate(net, xte, yte)
        seconds = time.perf_counter() - t0 if config.timing else 0.0
        records.append(MetricsRecord(name, epoch, total / seen, test_loss, test_acc, seconds))
    return RunResult(records, initial, steps, net)


def report_header(config: ExperimentConfig) -> str:
    """Settings of the run, marking the ones chosen here rather than fixed by
    the protocol, so desk-scale numbers are not read as exact reproductions."""
    scale = ("full dataset" if config.subset_size is None and config.test_subset_size is None
             else f"subset {config.subset_size or 'all'} train / {config.test_subset_size or 'all'} test")
    lines = [
        f"dataset: {config.dataset} ({scale}), {config.epochs} epochs, batch {config.batch_size}, "
        f"Adam lr {config.lr}, cross-entropy, seed {config.seed}",
        "fill-in settings (not fixed by the protocol):",
        f"  widths: stem {config.stem_width}, blocks {','.join(map(str, config.widths))}; {config.norm} norm",
        "  init: He-normal convolutions (gain sqrt 2), zero biases, gamma 1, beta 0, zero final dense layer",
        "  no weight decay, no augmentation; pixels scaled to [0, 1] then standardized per channel",
        f"  precision: {config.precision}",
    ]
    return "".join(f"# {line}\n" for line in lines)


def write_report(out_dir, config: ExperimentConfig, table: str) -> None:
    write_text(Path(out_dir) / "report.txt", report_header(config) + table)


def train(config: ExperimentConfig, data=None, on_step: StepCallback | None = None) -> list[MetricsRecord]:
    """Train and, if ``config.out_dir`` is set, write ``metrics.csv`` and
    ``report.txt`` there."""
    records = train_run(config, data, on_step).records
    if config.out_dir:
        text = metrics_csv(records)
        write_text(Path(config.out_dir) / "metrics.csv", text)
        write_report(config.out_dir, config, text)
    return records


def rank_rows(rows: list[ComparisonRow]) -> list[ComparisonRow]:
    """Mark the best and second-best successful runs by accuracy (ties broken
    by lower test loss, then input order); order is preserved."""
    ok = [i for i, r in enumerate(rows) if r.status != "failed"]
    ranked = sorted(ok, key=lambda i: (-rows[i].test_acc, rows[i].test_loss, i))
    out = list(rows)
    for place, i in enumerate(ranked):
        status = "best" if place == 0 else "second" if place == 1 else "ok"
        out[i] = dataclasses.replace(rows[i], status=status)
    return out


def compare_activations(base: ExperimentConfig, kinds, out_dir=None) -> tuple[list[ComparisonRow], list[MetricsRecord]]:
    """Paired sweep over ``kinds``; rows keep the given order.

    A run that fails with a non-finite value becomes a ``failed`` row and the
    sweep moves on.  Writes ``comparison.csv``, ``metrics.csv`` and
    ``report.txt`` to ``out_dir`` (default ``base.out_dir``) when one is given.
    """
    kinds = list(kinds)
    if not kinds:
        raise ContractError("compare_activations needs at least one activation")
    names = [parse_kind(k).value for k in kinds]
    base.replace(activation=names[0]).validate()
    data = prepare_data(base)
    rows, metrics = [], []
    for name in names:
        cfg = base.replace(activation=name, out_dir=None)
        try:
            recs = train_run(cfg, data).records
        except NonFiniteError as exc:
            rows.append(ComparisonRow(name, math.nan, math.nan, "failed", str(exc)))
            continue
        metrics.extend(recs)
        rows.append(ComparisonRow(name, recs[-1].test_loss, recs[-1].test_acc, "ok"))
    rows = rank_rows(rows)
    out_dir = out_dir or base.out_dir
    if out_dir:
        table = comparison_csv(rows)
        write_text(Path(out_dir) / "comparison.csv", table)
        write_text(Path(out_dir) / "metrics.csv", metrics_csv(metrics))
        write_report(out_dir, base, table)
    return rows, metrics


# -- CSV --------------------------------------------------------------------

def _num(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def metrics_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in records:
        w.writerow([r.activation, r.epoch, _num(r.train_loss), _num(r.test_loss), _num(r.test_acc), _num(r.seconds)])
    return buf.getvalue()


def parse_metrics_csv(text: str) -> list[MetricsRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise ContractError(f"metrics CSV header must be {','.join(METRICS_HEADER)}")
    return [MetricsRecord(r[0], int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5])) for r in rows[1:]]


def comparison_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_HEADER)
    for r in rows:
        w.writerow([r.activation, _num(r.test_loss), _num(r.test_acc), r.status])
    return buf.getvalue()


def parse_comparison_csv(text: str) -> list[ComparisonRow]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COMPARISON_HEADER:
        raise ContractError(f"comparison CSV header must be {','.join(COMPARISON_HEADER)}")
    return [ComparisonRow(r[0], float(r[1]), float(r[2]), r[3]) for r in rows[1:]]


def write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


__all__ = [
    "ACTIVATION_NAMES", "ComparisonRow", "ExperimentConfig", "MetricsRecord", "RunResult",
    "compare_activations", "comparison_csv", "evaluate", "metrics_csv", "parse_comparison_csv", "report_header",
    "parse_metrics_csv", "prepare_data", "rank_rows", "train", "train_run",
]
