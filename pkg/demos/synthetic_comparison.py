"""
Comparing activations on synthetic images
=========================================

Trains the same small pre-activation residual network with several
activations on Gaussian class blobs.  Every run sees the same batches in the
same order and starts from the same weights, so differences come from the
activation alone.  Takes a couple of seconds per activation.
"""

import tempfile
from pathlib import Path

from gelulab.experiments import ExperimentConfig, compare_activations

config = ExperimentConfig(
    dataset="synthetic", num_classes=10, image_size=8, stem_width=8, widths=(8, 8, 16, 16, 32, 32),
    synthetic_size=512, synthetic_test_size=256, batch_size=32, epochs=3, seed=0,
)

kinds = ["gelu", "relu", "elu", "sigmoid", "softsign"]

with tempfile.TemporaryDirectory() as tmp:
    rows, metrics = compare_activations(config, kinds, tmp)

    # the per-epoch trace for each run
    for m in metrics:
        print(f"{m.activation:9s} epoch {m.epoch}  train {m.train_loss:.4f}  test {m.test_loss:.4f}  "
              f"acc {m.test_acc:6.2f}")

    print()
    for r in rows:
        print(f"{r.activation:9s} test loss {r.test_loss:.4f}  accuracy {r.test_acc:6.2f}%  {r.status}")

    # the same table as written to disk
    print()
    print((Path(tmp) / "comparison.csv").read_text())
