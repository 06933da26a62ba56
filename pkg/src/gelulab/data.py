"""Image dataset ingestion: CIFAR-10/100 and STL-10 binaries plus a synthetic set.

Binary layouts handled here:

* CIFAR-10: records of ``1 label byte + 3072 pixel bytes`` (1024 R, 1024 G,
  1024 B, each row-major 32x32); ``data_batch_1..5.bin`` and ``test_batch.bin``.
* CIFAR-100: ``1 coarse + 1 fine label byte + 3072 pixel bytes``; ``train.bin``
  and ``test.bin``.  Only the fine labels are returned.
* STL-10: ``{train,test}_X.bin`` with 96x96 images stored column-major per
  channel and ``{train,test}_y.bin`` with one label byte per image in 1..10.

Files may sit directly under ``root`` or inside the directory name of the
official archive (``cifar-10-batches-bin``, ``cifar-100-binary``,
``stl10_binary``).

Loaders return ``(raw, labels)`` with ``raw`` as uint8 ``(N, 3, H, W)``;
:func:`Standardizer` maps them to float by scaling to [0, 1] and subtracting
per-channel mean and dividing by std, both estimated on the training split.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, IngestionError

CIFAR_PIXELS = 3 * 32 * 32
STL_PIXELS = 3 * 96 * 96

DATASETS = {
    # name: (num_classes, image shape, official train/test sizes)
    "cifar10": (10, (3, 32, 32), (50000, 10000)),
    "cifar100": (100, (3, 32, 32), (50000, 10000)),
    "stl10": (10, (3, 96, 96), (5000, 8000)),
    "synthetic": (None, (3, 32, 32), None),
}

_SUBDIRS = {"cifar10": "cifar-10-batches-bin", "cifar100": "cifar-100-binary", "stl10": "stl10_binary"}


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    root: str | None = None
    split: str = "train"
    num_classes: int | None = None

    def __post_init__(self):
        if self.name not in DATASETS:
            raise ConfigurationError(f"unknown dataset {self.name!r}; known: {', '.join(DATASETS)}")
        if self.split not in ("train", "test"):
            raise ConfigurationError(f"split must be train or test, got {self.split!r}")
        if self.name != "synthetic" and not self.root:
            raise ConfigurationError(f"dataset {self.name} needs a root directory")

    @property
    def classes(self) -> int:
        return self.num_classes or DATASETS[self.name][0] or 10

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return DATASETS[self.name][1]


def _resolve(root, name: str) -> Path:
    root = Path(root)
    sub = root / _SUBDIRS[name]
    return sub if sub.is_dir() else root


def _read_records(path: Path, label_bytes: int, pixels: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"{path}: cannot read ({exc.strerror or exc}) at byte offset 0") from exc
    rec = label_bytes + pixels
    if len(raw) == 0:
        raise IngestionError(f"{path}: empty file, truncated at byte offset 0")
    if len(raw) % rec:
        whole = len(raw) // rec
        raise IngestionError(
            f"{path}: truncated record {whole} at byte offset {whole * rec} "
            f"(file has {len(raw)} bytes, records are {rec} bytes)"
        )
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec)
    return arr[:, :label_bytes], arr[:, label_bytes:]


def _check_labels(path: Path, labels: np.ndarray, num_classes: int, record_size: int, column: int = 0):
    bad = np.flatnonzero(labels >= num_classes)
    if bad.size:
        i = int(bad[0])
        raise FormatError(
            f"{path}: label {int(labels[i])} out of range [0, {num_classes}) in record {i} "
            f"at byte offset {i * record_size + column}"
        )


def read_cifar_file(path, fine: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """One CIFAR binary batch file as ``(uint8 images (N,3,32,32), int64 labels)``.

    ``fine=True`` selects the CIFAR-100 layout and returns its fine labels.
    """
    path = Path(path)
    nlab = 2 if fine else 1
    labels, pixels = _read_records(path, nlab, CIFAR_PIXELS)
    lab = labels[:, nlab - 1].astype(np.int64)
    _check_labels(path, lab, 100 if fine else 10, nlab + CIFAR_PIXELS, nlab - 1)
    if fine:
        _check_labels(path, labels[:, 0].astype(np.int64), 20, nlab + CIFAR_PIXELS, 0)
    return pixels.reshape(-1, 3, 32, 32), lab


def write_cifar_file(path, images: np.ndarray, labels: np.ndarray, coarse: np.ndarray | None = None) -> None:
    """Inverse of :func:`read_cifar_file`; ``coarse`` given means CIFAR-100 layout."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), CIFAR_PIXELS)
    cols = [] if coarse is None else [np.asarray(coarse, dtype=np.uint8)[:, None]]
    cols.append(np.asarray(labels, dtype=np.uint8)[:, None])
    Path(path).write_bytes(np.concatenate(cols + [images], axis=1).tobytes())


def load_cifar10(root, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    base = _resolve(root, "cifar10")
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train" else ["test_batch.bin"]
    parts = [read_cifar_file(base / n) for n in names]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def load_cifar100(root, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    base = _resolve(root, "cifar100")
    return read_cifar_file(base / ("train.bin" if split == "train" else "test.bin"), fine=True)


def read_stl10_files(x_path, y_path) -> tuple[np.ndarray, np.ndarray]:
    x_path, y_path = Path(x_path), Path(y_path)
    try:
        xraw = x_path.read_bytes()
        yraw = y_path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"{exc.filename}: cannot read ({exc.strerror}) at byte offset 0") from exc
    if len(xraw) % STL_PIXELS:
        whole = len(xraw) // STL_PIXELS
        raise IngestionError(f"{x_path}: truncated image {whole} at byte offset {whole * STL_PIXELS}")
    n = len(xraw) // STL_PIXELS
    if len(yraw) != n:
        raise FormatError(f"{y_path}: {len(yraw)} labels for {n} images in {x_path} "
                          f"(mismatch at byte offset {min(n, len(yraw))})")
    labels = np.frombuffer(yraw, dtype=np.uint8).astype(np.int64)
    bad = np.flatnonzero((labels < 1) | (labels > 10))
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"{y_path}: label {labels[i]} outside 1..10 at byte offset {i}")
    # stored as (N, C, W, H) in C order, i.e. column-major per channel
    images = np.frombuffer(xraw, dtype=np.uint8).reshape(n, 3, 96, 96).transpose(0, 1, 3, 2)
    return np.ascontiguousarray(images), labels - 1


def write_stl10_files(x_path, y_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of :func:`read_stl10_files`; ``labels`` are 0-based."""
    images = np.asarray(images, dtype=np.uint8).transpose(0, 1, 3, 2)
    Path(x_path).write_bytes(np.ascontiguousarray(images).tobytes())
    Path(y_path).write_bytes((np.asarray(labels) + 1).astype(np.uint8).tobytes())


def load_stl10(root, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    base = _resolve(root, "stl10")
    return read_stl10_files(base / f"{split}_X.bin", base / f"{split}_y.bin")


def synthetic_blobs(n: int, num_classes: int = 10, seed=0, image_size: int = 32, noise: float = 0.6,
                    separation: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian class blobs rendered as uint8 images.

    Each class owns a fixed random low-frequency pattern (the class centre);
    a sample is its centre plus per-pixel Gaussian noise.  The centres depend
    only on ``num_classes`` and ``image_size``, so train and test splits drawn
    with different seeds share them.
    """
    if n < 1 or num_classes < 2:
        raise ConfigurationError("synthetic_blobs needs n >= 1 and num_classes >= 2")
    crng = np.random.default_rng([num_classes, image_size, 1234])
    coarse = crng.normal(0.0, 1.0, (num_classes, 3, 4, 4))
    centres = np.kron(coarse, np.ones((1, 1, image_size // 4, image_size // 4)))
    rng = np.random.default_rng(seed)
    labels = np.sort(np.arange(n) % num_classes)
    labels = rng.permutation(labels)
    x = separation * centres[labels] + noise * rng.normal(size=(n, 3, image_size, image_size))
    images = np.clip(np.round(127.5 + 40.0 * x), 0, 255).astype(np.uint8)
    return images, labels.astype(np.int64)


class Standardizer:
    """Per-channel standardization with statistics from the training images."""

    def __init__(self, train_images: np.ndarray):
        x = np.asarray(train_images, dtype=np.float64) / 255.0
        self.mean = x.mean(axis=(0, 2, 3))
        self.std = x.std(axis=(0, 2, 3))
        self.std[self.std == 0] = 1.0

    def __call__(self, images: np.ndarray, dtype=np.float32) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64) / 255.0
        x = (x - self.mean[None, :, None, None]) / self.std[None, :, None, None]
        return x.astype(dtype)


def load_raw(spec: DatasetSpec, synthetic_size: int = 1000, seed: int = 0):
    if spec.name == "synthetic":
        split_seed = seed if spec.split == "train" else seed + 1_000_003
        return synthetic_blobs(synthetic_size, spec.classes, split_seed)
    loader = {"cifar10": load_cifar10, "cifar100": load_cifar100, "stl10": load_stl10}[spec.name]
    if not os.path.isdir(spec.root):
        raise IngestionError(f"{spec.root}: dataset directory not found (byte offset 0)")
    return loader(spec.root, spec.split)
