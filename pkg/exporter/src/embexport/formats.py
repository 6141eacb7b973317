"""Writers for the downstream toolkit's file interface.

EMB1 (little-endian): magic ``EMB1`` | u32 M | u32 D | M*D f32 row-major | M u32 ids.
Labels / class sidecars: CSV with header ``id,label``. Row order carries sample
correspondence; ids are a consistency check.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sII")


def write_emb1(path, rows: np.ndarray, ids: np.ndarray) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    ids = np.ascontiguousarray(ids, dtype="<u4")
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise ValueError("embedding matrix must be M x D with M, D >= 1")
    if not np.all(np.isfinite(rows)):
        raise ValueError("embeddings contain non-finite values")
    if ids.shape != (rows.shape[0],):
        raise ValueError("ids length must equal row count")
    buf = io.BytesIO()
    buf.write(_HEADER.pack(b"EMB1", rows.shape[0], rows.shape[1]))
    buf.write(rows.tobytes())
    buf.write(ids.tobytes())
    Path(path).write_bytes(buf.getvalue())


def write_label_csv(path, ids, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"])
        for i, lab in zip(ids, labels):
            w.writerow([int(i), int(lab)])
