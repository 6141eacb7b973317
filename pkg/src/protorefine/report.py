"""Label-quality accounting against ground truth, downstream retraining, and
machine-readable report emission.

Counter definitions (refined vs noisy vs truth, all length M):
  changed        refined != noisy
  corrected      changed and refined == truth            (noisy was wrong)
  corrupted      noisy == truth and refined != truth
  wrong_to_wrong changed, noisy != truth, refined != truth
  unchanged_wrong refined == noisy and refined != truth

changed == corrected + corrupted + wrong_to_wrong, and the before/after
accuracies are reconstructible from the counters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, LabelSet
from .errors import CARDINALITY, ValidationError
from .head import LinearHead, TrainConfig, train_head
from .relabel import SweepTable


@dataclass(frozen=True)
class RelabelReport:
    total: int
    changed: int
    corrected: int
    corrupted: int
    wrong_to_wrong: int
    unchanged_wrong: int
    label_accuracy_before: float
    label_accuracy_after: float
    num_classes: int
    confusion: tuple[tuple[int, ...], ...]  # rows: truth class, cols: refined class

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = [list(row) for row in self.confusion]
        return d


def label_metrics(refined: LabelSet, noisy: LabelSet, truth: LabelSet) -> RelabelReport:
    """Exact refinement-quality counters plus a truth-vs-refined confusion matrix."""
    if not (len(refined) == len(noisy) == len(truth)):
        raise ValidationError(
            f"length mismatch: refined {len(refined)}, noisy {len(noisy)}, "
            f"truth {len(truth)}",
            CARDINALITY,
        )
    if not (refined.num_classes == noisy.num_classes == truth.num_classes):
        raise ValidationError("class count mismatch between label sets")
    r, n, t = refined.labels, noisy.labels, truth.labels
    m = len(refined)
    c = refined.num_classes
    changed = r != n
    report = RelabelReport(
        total=m,
        changed=int(changed.sum()),
        corrected=int(np.sum(changed & (r == t))),
        corrupted=int(np.sum((n == t) & (r != t))),
        wrong_to_wrong=int(np.sum(changed & (n != t) & (r != t))),
        unchanged_wrong=int(np.sum(~changed & (r != t))),
        label_accuracy_before=float(np.mean(n == t)),
        label_accuracy_after=float(np.mean(r == t)),
        num_classes=c,
        confusion=tuple(
            tuple(int(v) for v in row)
            for row in np.histogram2d(t, r, bins=[np.arange(c + 1)] * 2)[0].astype(int)
        ),
    )
    return report


def evaluate_head(head: LinearHead, ds: Dataset) -> float:
    """Top-1 accuracy of the head on a truth-labeled dataset."""
    logits = ds.embeddings.rows.astype(np.float64) @ head.weights.T + head.biases
    return float(np.mean(logits.argmax(axis=1) == ds.labels.labels))


def downstream_eval(
    train: Dataset,
    heldout: Dataset,
    warm_start: LinearHead | None = None,
    seed: int = 0,
    cfg: TrainConfig | None = None,
) -> float:
    """Heldout top-1 accuracy of a head trained on `train`'s labels.

    With a warm start and no explicit config, the short fine-tune schedule is
    used; otherwise the full default schedule trains from zero.
    """
    if cfg is None:
        cfg = TrainConfig(seed=seed, fine_tune=warm_start is not None)
    head = train_head(train, cfg, warm_start=warm_start)
    return evaluate_head(head, heldout)


def _sweep_rows(table: SweepTable) -> list[dict]:
    return [
        {
            "alpha": c.alpha,
            "theta": c.theta,
            "changed": c.changed,
            "corrected": c.corrected,
            "corrupted": c.corrupted,
            "accuracy_after": c.accuracy_after,
        }
        for c in table.cells
    ]


def emit_report(report: RelabelReport | SweepTable, path, format: str = "json") -> None:
    """Write a refinement report or sweep table as JSON or CSV (stable field names)."""
    if format not in ("json", "csv"):
        raise ValidationError(f"unknown report format {format!r}")
    path = Path(path)
    if isinstance(report, SweepTable):
        rows = _sweep_rows(report)
        if format == "json":
            payload = {"alphas": list(report.alphas), "thetas": list(report.thetas), "cells": rows}
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        else:
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                w.writeheader()
                w.writerows(rows)
        return
    d = report.to_dict()
    if format == "json":
        path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    else:
        scalars = {k: v for k, v in d.items() if k != "confusion"}
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(scalars.keys()))
            w.writeheader()
            w.writerow(scalars)


def read_report_json(path) -> dict:
    return json.loads(Path(path).read_text())
