"""Domain types, validation, and bit-exact file I/O.

Binary layouts (little-endian throughout):

  EMB1: magic ``EMB1`` | u32 M | u32 D | M*D f32 row-major | M u32 ids
  CNF1: magic ``CNF1`` | u32 M | u32 C | M*C f32 row-major | M u32 ids

Labels are CSV with header ``id,label``. Row order, not ids, defines sample
correspondence across files; ids are a consistency check only.
"""

from __future__ import annotations

import csv
import hashlib
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BAD_MAGIC,
    CARDINALITY,
    DIM_MISMATCH,
    DIM_OVERFLOW,
    DUPLICATE_ID,
    EMPTY,
    FormatError,
    ID_MISMATCH,
    LABEL_RANGE,
    NON_FINITE,
    TRUNCATED,
    ValidationError,
)

_U32_MAX = 2**32 - 1
_HEADER = struct.Struct("<4sII")

LABEL_KINDS = ("noisy", "refined", "truth")


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite entries", NON_FINITE)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """M x D dense float32 feature matrix with per-row sample ids."""

    rows: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValidationError("M >= 1 and D >= 1 violated", EMPTY)
        _check_finite(rows, "embedding matrix")
        if ids.shape != (rows.shape[0],):
            raise ValidationError("ids length must equal M", CARDINALITY)
        if np.any(ids < 0) or np.any(ids > _U32_MAX):
            raise ValidationError("ids must be u32-representable", DIM_OVERFLOW)
        if np.any(np.diff(ids) <= 0):
            raise ValidationError("ids must be unique and sorted ascending", DUPLICATE_ID)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", ids)
        self.rows.setflags(write=False)
        self.ids.setflags(write=False)

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class LabelSet:
    """Per-sample integer labels in [0, num_classes)."""

    labels: np.ndarray
    num_classes: int
    kind: str = "noisy"
    ids: np.ndarray | None = None

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1", EMPTY)
        if labels.ndim != 1 or labels.shape[0] < 1:
            raise ValidationError("M >= 1 violated", EMPTY)
        if self.kind not in LABEL_KINDS:
            raise ValidationError(f"unknown label kind {self.kind!r}")
        if np.any(labels < 0) or np.any(labels >= self.num_classes):
            bad = int(labels[(labels < 0) | (labels >= self.num_classes)][0])
            raise ValidationError(
                f"label out of range: {bad} not in [0, {self.num_classes})", LABEL_RANGE
            )
        object.__setattr__(self, "labels", labels)
        self.labels.setflags(write=False)
        if self.ids is not None:
            ids = np.ascontiguousarray(self.ids, dtype=np.int64)
            if ids.shape != labels.shape:
                raise ValidationError("ids length must equal label count", CARDINALITY)
            if len(np.unique(ids)) != len(ids):
                raise ValidationError("duplicate id", DUPLICATE_ID)
            object.__setattr__(self, "ids", ids)
            self.ids.setflags(write=False)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def replace(self, labels: np.ndarray, kind: str) -> "LabelSet":
        return LabelSet(labels, self.num_classes, kind, self.ids)


@dataclass(frozen=True)
class ConfidenceMatrix:
    """M x C row-stochastic matrix of class confidences in [0, 1]."""

    rows: np.ndarray

    ROW_SUM_TOL = 1e-5

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValidationError("confidence matrix must be M x C with M, C >= 1", EMPTY)
        _check_finite(rows, "confidence matrix")
        if np.any(rows < 0.0) or np.any(rows > 1.0):
            raise ValidationError("confidences must lie in [0, 1]", LABEL_RANGE)
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > self.ROW_SUM_TOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise ValidationError(f"confidence rows must sum to 1 (off by {worst:.2e})")
        object.__setattr__(self, "rows", rows)
        self.rows.setflags(write=False)

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def num_classes(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class AnchorSet:
    """Per-class anchor embeddings: vectors plus a parallel class index."""

    vectors: np.ndarray
    classes: np.ndarray
    num_classes: int

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        classes = np.ascontiguousarray(self.classes, dtype=np.int64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValidationError("anchor set must be non-empty", EMPTY)
        _check_finite(vectors, "anchor set")
        if classes.shape != (vectors.shape[0],):
            raise ValidationError("class index length must match vectors", CARDINALITY)
        if np.any(classes < 0) or np.any(classes >= self.num_classes):
            raise ValidationError("anchor class out of range", LABEL_RANGE)
        counts = np.bincount(classes, minlength=self.num_classes)
        if np.any(counts < 1):
            missing = int(np.argmin(counts))
            raise ValidationError(f"class {missing} has no anchors", EMPTY)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "classes", classes)
        self.vectors.setflags(write=False)
        self.classes.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def per_class_counts(self) -> np.ndarray:
        return np.bincount(self.classes, minlength=self.num_classes)

    def class_vectors(self, c: int) -> np.ndarray:
        return self.vectors[self.classes == c]


@dataclass(frozen=True)
class Dataset:
    """A validated (embeddings, labels) pair; row i of each refers to sample i."""

    embeddings: EmbeddingMatrix
    labels: LabelSet

    def __post_init__(self):
        if self.embeddings.count != len(self.labels):
            raise ValidationError(
                f"cardinality mismatch: {self.embeddings.count} embeddings vs "
                f"{len(self.labels)} labels",
                CARDINALITY,
            )
        if self.labels.ids is not None and not np.array_equal(
            self.labels.ids, self.embeddings.ids
        ):
            raise ValidationError("label ids do not match embedding ids", ID_MISMATCH)

    def __len__(self) -> int:
        return self.embeddings.count

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.embeddings.rows.tobytes())
        h.update(self.embeddings.ids.tobytes())
        h.update(self.labels.labels.tobytes())
        h.update(str(self.labels.num_classes).encode())
        return h.hexdigest()

    def with_labels(self, labels: np.ndarray, kind: str) -> "Dataset":
        return Dataset(self.embeddings, self.labels.replace(labels, kind))


def bind_dataset(emb: EmbeddingMatrix, labels: LabelSet) -> Dataset:
    """Pair embeddings with labels, validating cardinality and ids."""
    return Dataset(emb, labels)


# ---------------------------------------------------------------------------
# binary matrix formats (EMB1 / CNF1)
# ---------------------------------------------------------------------------


def _write_matrix(path, magic: bytes, values: np.ndarray, ids: np.ndarray) -> None:
    m, d = values.shape
    if m > _U32_MAX or d > _U32_MAX:
        raise ValidationError("matrix dimensions exceed u32", DIM_OVERFLOW)
    if np.any(ids < 0) or np.any(ids > _U32_MAX):
        raise ValidationError("ids exceed u32", DIM_OVERFLOW)
    buf = io.BytesIO()
    buf.write(_HEADER.pack(magic, m, d))
    buf.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(ids, dtype="<u4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def _read_matrix(path, magic: bytes) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated payload: missing header", TRUNCATED)
    got, m, d = _HEADER.unpack_from(raw)
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}", BAD_MAGIC)
    if m < 1 or d < 1:
        raise FormatError("M >= 1 and D >= 1 violated", EMPTY)
    need = _HEADER.size + 4 * m * d + 4 * m
    if len(raw) < need:
        raise FormatError(
            f"truncated payload: need {need} bytes, file has {len(raw)}", TRUNCATED
        )
    if len(raw) > need:
        raise FormatError(
            f"file longer than payload: expected {need} bytes, got {len(raw)}", TRUNCATED
        )
    values = np.frombuffer(raw, dtype="<f4", count=m * d, offset=_HEADER.size)
    values = values.reshape(m, d)
    ids = np.frombuffer(raw, dtype="<u4", count=m, offset=_HEADER.size + 4 * m * d)
    if not np.all(np.isfinite(values)):
        raise FormatError("payload contains non-finite entries", NON_FINITE)
    return values, ids.astype(np.int64)


def write_embeddings(m: EmbeddingMatrix, path) -> None:
    _write_matrix(path, b"EMB1", m.rows, m.ids)


def read_embeddings(path) -> EmbeddingMatrix:
    values, ids = _read_matrix(path, b"EMB1")
    return EmbeddingMatrix(values, ids)


def write_confidences(c: ConfidenceMatrix, path, ids: np.ndarray | None = None) -> None:
    if ids is None:
        ids = np.arange(c.count, dtype=np.int64)
    _write_matrix(path, b"CNF1", c.rows, np.asarray(ids))


def read_confidences(path) -> tuple[ConfidenceMatrix, np.ndarray]:
    values, ids = _read_matrix(path, b"CNF1")
    return ConfidenceMatrix(values), ids


# ---------------------------------------------------------------------------
# labels CSV
# ---------------------------------------------------------------------------


def write_labels(l: LabelSet, path) -> None:
    ids = l.ids if l.ids is not None else np.arange(len(l), dtype=np.int64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"])
        for i, lab in zip(ids, l.labels):
            w.writerow([int(i), int(lab)])


def read_labels(path, num_classes: int, kind: str = "noisy") -> LabelSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "label"]:
            raise FormatError(f"bad header: expected id,label, got {header}", BAD_MAGIC)
        ids: list[int] = []
        labels: list[int] = []
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"bad row: {row}")
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
            except ValueError as exc:
                raise FormatError(f"bad row: {row}") from exc
    if not labels:
        raise ValidationError("M >= 1 violated: empty labels file", EMPTY)
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"duplicate id: {i}", DUPLICATE_ID)
        seen.add(i)
    return LabelSet(np.asarray(labels), num_classes, kind, np.asarray(ids))


# ---------------------------------------------------------------------------
# anchors = one EMB1 file + class-index sidecar CSV
# ---------------------------------------------------------------------------


def write_anchors(aset: AnchorSet, emb_path, sidecar_path) -> None:
    ids = np.arange(aset.vectors.shape[0], dtype=np.int64)
    _write_matrix(emb_path, b"EMB1", aset.vectors, ids)
    write_labels(LabelSet(aset.classes, aset.num_classes, "truth", ids), sidecar_path)


def read_anchors(emb_path, sidecar_path, num_classes: int) -> AnchorSet:
    emb = read_embeddings(emb_path)
    cls = read_labels(sidecar_path, num_classes, "truth")
    if len(cls) != emb.count:
        raise ValidationError(
            f"cardinality mismatch: {emb.count} anchors vs {len(cls)} class rows",
            CARDINALITY,
        )
    if cls.ids is not None and not np.array_equal(cls.ids, emb.ids):
        raise ValidationError("sidecar ids do not match anchor ids", ID_MISMATCH)
    return AnchorSet(emb.rows, cls.labels, num_classes)


def require_same_dim(d1: int, d2: int, what: str) -> None:
    if d1 != d2:
        raise ValidationError(f"dimension mismatch in {what}: {d1} vs {d2}", DIM_MISMATCH)
