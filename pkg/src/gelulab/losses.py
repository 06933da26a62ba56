"""Loss functions reduced to a scalar by averaging over samples."""

from __future__ import annotations

import enum

import numpy as np

from .errors import ContractError, DimensionError, ParameterError
from .tensor import (
    Tensor,
    absolute,
    as_tensor,
    clamp_min,
    l2norm,
    log,
    log_softmax,
    mean,
    tsum,
    where,
)


class LossKind(enum.Enum):
    MSE = "mse"
    MAE = "mae"
    HUBER = "huber"
    CROSS_ENTROPY = "cross_entropy"
    HINGE = "hinge"
    TRIPLET = "triplet"


def _pair(y, yhat) -> tuple[Tensor, Tensor]:
    yhat = as_tensor(yhat)
    y = as_tensor(y, dtype=yhat.dtype)
    if y.shape != yhat.shape:
        raise DimensionError(f"target shape {y.shape} does not match prediction shape {yhat.shape}")
    if y.size == 0:
        raise ContractError("loss over an empty batch")
    return y, yhat


def mse(y, yhat) -> Tensor:
    y, yhat = _pair(y, yhat)
    r = yhat - y
    return mean(r * r)


def mae(y, yhat) -> Tensor:
    y, yhat = _pair(y, yhat)
    return mean(absolute(yhat - y))


def huber(y, yhat, delta: float = 1.0) -> Tensor:
    if not delta > 0:
        raise ParameterError(f"huber: delta must be positive, got {delta}")
    y, yhat = _pair(y, yhat)
    r = absolute(yhat - y)
    quad = 0.5 * (r * r)
    lin = delta * (r - 0.5 * delta)
    return mean(where(r.data <= delta, quad, lin))


def _check_labels(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        if np.any(labels != np.round(labels)):
            raise ContractError("class labels must be integers")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractError(f"class labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    return labels


def cross_entropy(labels, logits) -> Tensor:
    """Mean negative log-likelihood of ``softmax(logits)``.

    ``labels`` is either an integer vector of class indices or a one-hot /
    probability matrix shaped like ``logits``.  Softmax is fused with the log
    through a shifted log-sum-exp.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects (n, K) logits, got {logits.shape}")
    n, k = logits.shape
    if n == 0:
        raise ContractError("loss over an empty batch")
    logp = log_softmax(logits, axis=1)
    labels_arr = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    if labels_arr.ndim == 2:
        if labels_arr.shape != logits.shape:
            raise DimensionError(f"one-hot labels {labels_arr.shape} do not match logits {logits.shape}")
        return -mean(tsum(logp * labels_arr.astype(logits.dtype), axis=1))
    labels_arr = _check_labels(labels_arr, k)
    if labels_arr.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels_arr.shape}")
    return -mean(logp[np.arange(n), labels_arr])


def cross_entropy_probs(labels, probs) -> Tensor:
    """``-(1/n) sum_i y_i log p_i`` on explicit probabilities (reference form)."""
    probs = as_tensor(probs)
    n, k = probs.shape
    labels_arr = np.asarray(labels)
    if labels_arr.ndim == 1:
        labels_arr = np.eye(k, dtype=probs.dtype)[_check_labels(labels_arr, k)]
    return -mean(tsum(log(probs) * labels_arr.astype(probs.dtype), axis=1))


def hinge(y, yhat) -> Tensor:
    """Mean of ``max(0, 1 - y * yhat)`` for labels in {-1, +1}."""
    y, yhat = _pair(y, yhat)
    if not np.all(np.isin(y.data, (-1.0, 1.0))):
        raise ContractError("hinge labels must be -1 or +1")
    return mean(clamp_min(1.0 - y * yhat, 0.0))


def triplet(anchor, positive, negative, margin: float = 1.0) -> Tensor:
    """``max(0, d(a, p) - d(a, n) + margin)`` with Euclidean ``d``.

    Rows are separate triplets when the inputs are 2-D; the result is their mean.
    """
    if margin < 0:
        raise ParameterError(f"triplet margin must be nonnegative, got {margin}")
    a = as_tensor(anchor)
    p = as_tensor(positive, dtype=a.dtype)
    n = as_tensor(negative, dtype=a.dtype)
    if not a.shape == p.shape == n.shape:
        raise DimensionError(f"triplet inputs differ in shape: {a.shape}, {p.shape}, {n.shape}")
    d_ap = l2norm(a - p, axis=-1)
    d_an = l2norm(a - n, axis=-1)
    return mean(clamp_min(d_ap - d_an + margin, 0.0))


_LOSSES = {
    LossKind.MSE: mse,
    LossKind.MAE: mae,
    LossKind.HUBER: huber,
    LossKind.CROSS_ENTROPY: cross_entropy,
    LossKind.HINGE: hinge,
    LossKind.TRIPLET: triplet,
}


def get_loss(name):
    try:
        return _LOSSES[LossKind(name) if not isinstance(name, LossKind) else name]
    except ValueError:
        raise ContractError(f"unknown loss {name!r}; known: {[k.value for k in LossKind]}") from None
