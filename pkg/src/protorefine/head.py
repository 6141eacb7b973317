"""Regularized softmax-regression head trained on (possibly noisy) embeddings.

Objective: mean cross-entropy + l2_weight * ||W||_F^2, minimized by mini-batch
gradient descent with a cosine learning-rate decay from the initial rate to 0.
Batch order is a seeded shuffle per epoch, so training is deterministic given
(data, config). Parameters start at zero unless a warm start is provided.

Head file format LH01 (little-endian):
  magic ``LH01`` | u32 C | u32 D | C*D f32 W row-major | C f32 b
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data import ConfidenceMatrix, Dataset, EmbeddingMatrix, require_same_dim
from .errors import (
    BAD_MAGIC,
    DIM_MISMATCH,
    DIVERGED,
    EMPTY,
    NON_FINITE,
    TRUNCATED,
    FormatError,
    TrainingError,
    ValidationError,
)

_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; fine_tune=True switches to the short warm-start schedule
    (50 epochs at learning rate 0.001) unless overridden explicitly."""

    epochs: int | None = None
    batch_size: int = 128
    learning_rate: float | None = None
    l2_weight: float = 1e-4
    seed: int = 0
    fine_tune: bool = False

    def __post_init__(self):
        if self.epochs is None:
            object.__setattr__(self, "epochs", 50 if self.fine_tune else 200)
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", 0.001 if self.fine_tune else 0.1)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.l2_weight < 0:
            raise ValidationError("learning_rate must be > 0 and l2_weight >= 0")


@dataclass(frozen=True)
class LinearHead:
    """Per-class weights W (C x D) and biases b (C)."""

    weights: np.ndarray
    biases: np.ndarray
    trained_on: str = ""

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        b = np.ascontiguousarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValidationError("head shapes must be W: C x D, b: C")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("head parameters must be finite", NON_FINITE)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        self.weights.setflags(write=False)
        self.biases.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_gradients(
    weights: np.ndarray,
    biases: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    l2_weight: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective value and analytic gradients on the given sample set."""
    n = x.shape[0]
    logits = x @ weights.T + biases
    logp = _log_softmax(logits)
    ce = -float(logp[np.arange(n), labels].mean())
    loss = ce + l2_weight * float((weights**2).sum())
    p = np.exp(logp)
    p[np.arange(n), labels] -= 1.0
    g = p / n
    grad_w = g.T @ x + 2.0 * l2_weight * weights
    grad_b = g.sum(axis=0)
    return loss, grad_w, grad_b


def train_head(
    ds: Dataset,
    cfg: TrainConfig,
    warm_start: LinearHead | None = None,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> LinearHead:
    """Fit the head to ds by mini-batch gradient descent.

    on_epoch, when given, receives (epoch, learning_rate, full-dataset loss)
    after each epoch.
    """
    if len(ds) < 1:
        raise ValidationError("dataset must be non-empty", EMPTY)
    c = ds.labels.num_classes
    d = ds.embeddings.dim
    if warm_start is not None:
        if warm_start.num_classes != c or warm_start.dim != d:
            raise ValidationError(
                f"warm start shape ({warm_start.num_classes}, {warm_start.dim}) does "
                f"not match data ({c}, {d})",
                DIM_MISMATCH,
            )
        w = warm_start.weights.copy()
        b = warm_start.biases.copy()
    else:
        w = np.zeros((c, d))
        b = np.zeros(c)

    x = ds.embeddings.rows.astype(np.float64)
    y = ds.labels.labels
    m = len(ds)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    for epoch in range(cfg.epochs):
        if cfg.epochs > 1:
            lr = cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * epoch / (cfg.epochs - 1)))
        else:
            lr = cfg.learning_rate
        perm = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _, grad_w, grad_b = loss_and_gradients(w, b, x[idx], y[idx], cfg.l2_weight)
            w -= lr * grad_w
            b -= lr * grad_b
        loss, _, _ = loss_and_gradients(w, b, x, y, cfg.l2_weight)
        if not np.isfinite(loss):
            raise TrainingError(
                f"diverged; lower learning_rate (loss became non-finite at epoch {epoch})",
                DIVERGED,
            )
        if on_epoch is not None:
            on_epoch(epoch, float(lr), loss)
    return LinearHead(w, b, trained_on=ds.fingerprint())


def confidences(head: LinearHead, emb: EmbeddingMatrix) -> ConfidenceMatrix:
    """Per-sample class confidences softmax(W x + b); rows sum to 1."""
    require_same_dim(head.dim, emb.dim, "head vs embeddings")
    logits = emb.rows.astype(np.float64) @ head.weights.T + head.biases
    return ConfidenceMatrix(softmax_rows(logits))


def write_head(head: LinearHead, path) -> None:
    buf = io.BytesIO()
    buf.write(_HEADER.pack(b"LH01", head.num_classes, head.dim))
    buf.write(np.ascontiguousarray(head.weights, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(head.biases, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_head(path) -> LinearHead:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated payload: missing header", TRUNCATED)
    magic, c, d = _HEADER.unpack_from(raw)
    if magic != b"LH01":
        raise FormatError(f"bad magic: expected b'LH01', got {magic!r}", BAD_MAGIC)
    need = _HEADER.size + 4 * c * d + 4 * c
    if len(raw) != need:
        raise FormatError(f"truncated payload: need {need} bytes, got {len(raw)}", TRUNCATED)
    w = np.frombuffer(raw, dtype="<f4", count=c * d, offset=_HEADER.size).reshape(c, d)
    b = np.frombuffer(raw, dtype="<f4", count=c, offset=_HEADER.size + 4 * c * d)
    return LinearHead(w, b)
