"""Single-pass label refinement against per-class anchor prototypes.

For each sample the engine computes cosine similarities to every class
prototype, blends them with the head's confidence row
(score = alpha * similarity + (1 - alpha) * confidence), and relabels to the
best-scoring class when that score reaches the threshold, otherwise keeps the
original label. Scoring is pure per sample: chunked/parallel execution returns
identical results. Ties in the argmax resolve to the lowest class index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import AnchorSet, Dataset, LabelSet, require_same_dim
from .errors import DEGENERATE_PROTOTYPE, EMPTY, ZERO_NORM, ValidationError
from .head import LinearHead, confidences

NORM_EPS = 1e-8


@dataclass(frozen=True)
class RelabelConfig:
    """Blend weight alpha in [0, 1] and decision threshold."""

    alpha: float = 0.5
    threshold: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Prototypes:
    """One mean anchor vector per class, plus the per-class source counts."""

    vectors: np.ndarray
    source_counts: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValidationError("prototypes must be a C x D matrix", EMPTY)
        norms = np.linalg.norm(v, axis=1)
        if np.any(norms < NORM_EPS):
            bad = int(np.argmin(norms))
            raise ValidationError(
                f"degenerate prototype for class {bad} (norm {norms[bad]:.2e})",
                DEGENERATE_PROTOTYPE,
            )
        object.__setattr__(self, "vectors", v)
        self.vectors.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class ScoredSample:
    """Per-sample score breakdown and the decision taken."""

    sample_id: int
    sim_scores: np.ndarray
    conf_scores: np.ndarray
    scores: np.ndarray
    best_score: float
    best_class: int
    decision: str  # "kept" | "relabeled"


def build_prototypes(anchors: AnchorSet) -> Prototypes:
    """Arithmetic mean of each class's raw anchor vectors (no normalization)."""
    c = anchors.num_classes
    vectors = np.empty((c, anchors.dim))
    for cls in range(c):
        vectors[cls] = anchors.class_vectors(cls).mean(axis=0, dtype=np.float64)
    return Prototypes(vectors, anchors.per_class_counts())


def cosine_similarity(x: np.ndarray, p: np.ndarray) -> float:
    """cos(x, p), clamped to [-1, 1] against rounding; zero-norm inputs error."""
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    nx, np_ = np.linalg.norm(x), np.linalg.norm(p)
    if nx < NORM_EPS or np_ < NORM_EPS:
        raise ValidationError("zero-norm input to cosine similarity", ZERO_NORM)
    return float(np.clip(np.dot(x, p) / (nx * np_), -1.0, 1.0))


def blend_scores(sim_scores: np.ndarray, conf_scores: np.ndarray, alpha: float) -> np.ndarray:
    """alpha * similarity + (1 - alpha) * confidence, elementwise."""
    sim_scores = np.asarray(sim_scores, dtype=np.float64)
    conf_scores = np.asarray(conf_scores, dtype=np.float64)
    if sim_scores.shape != conf_scores.shape:
        raise ValidationError(
            f"score length mismatch: {sim_scores.shape} vs {conf_scores.shape}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * sim_scores + (1.0 - alpha) * conf_scores


def _cosine_block(x: np.ndarray, unit_protos: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms < NORM_EPS):
        bad = int(np.argmin(norms))
        raise ValidationError(f"zero-norm sample at row {bad}", ZERO_NORM)
    return np.clip((x / norms) @ unit_protos.T, -1.0, 1.0)


def score_matrices(
    ds: Dataset, protos: Prototypes, head: LinearHead, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Cosine-similarity and confidence score matrices (M x C each)."""
    require_same_dim(protos.dim, ds.embeddings.dim, "prototypes vs embeddings")
    require_same_dim(head.dim, ds.embeddings.dim, "head vs embeddings")
    if protos.num_classes != ds.labels.num_classes or head.num_classes != ds.labels.num_classes:
        raise ValidationError(
            f"class count mismatch: prototypes {protos.num_classes}, head "
            f"{head.num_classes}, labels {ds.labels.num_classes}"
        )
    x = ds.embeddings.rows.astype(np.float64)
    unit_protos = protos.vectors / np.linalg.norm(protos.vectors, axis=1, keepdims=True)
    m = x.shape[0]
    sims = np.empty((m, protos.num_classes))
    if threads <= 1 or m < 2 * threads:
        sims[:] = _cosine_block(x, unit_protos)
    else:
        bounds = np.linspace(0, m, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_cosine_block, x[lo:hi], unit_protos)
                for lo, hi in zip(bounds[:-1], bounds[1:])
            ]
            for (lo, hi), fut in zip(zip(bounds[:-1], bounds[1:]), futures):
                sims[lo:hi] = fut.result()
    conf = confidences(head, ds.embeddings).rows
    return sims, conf


def relabel(
    ds: Dataset,
    protos: Prototypes,
    head: LinearHead,
    cfg: RelabelConfig,
    threads: int = 1,
) -> tuple[LabelSet, list[ScoredSample]]:
    """One refinement pass over the dataset; no iteration."""
    sims, conf = score_matrices(ds, protos, head, threads)
    scores = blend_scores(sims, conf, cfg.alpha)
    best_scores = scores.max(axis=1)
    best_classes = scores.argmax(axis=1)
    take = best_scores >= cfg.threshold
    refined = np.where(take, best_classes, ds.labels.labels)

    ids = ds.embeddings.ids
    report = [
        ScoredSample(
            sample_id=int(ids[i]),
            sim_scores=sims[i],
            conf_scores=conf[i],
            scores=scores[i],
            best_score=float(best_scores[i]),
            best_class=int(best_classes[i]),
            decision="relabeled" if take[i] else "kept",
        )
        for i in range(len(ds))
    ]
    return ds.labels.replace(refined, "refined"), report


@dataclass(frozen=True)
class SweepCell:
    alpha: float
    theta: float
    changed: int
    corrected: int | None
    corrupted: int | None
    accuracy_after: float | None


@dataclass(frozen=True)
class SweepTable:
    alphas: tuple[float, ...]
    thetas: tuple[float, ...]
    cells: tuple[SweepCell, ...]

    def cell(self, alpha: float, theta: float) -> SweepCell:
        for c in self.cells:
            if c.alpha == alpha and c.theta == theta:
                return c
        raise KeyError((alpha, theta))


def sweep(
    ds: Dataset,
    protos: Prototypes,
    head: LinearHead,
    alphas,
    thetas,
    truth: LabelSet | None = None,
    threads: int = 1,
) -> SweepTable:
    """Run the refinement rule over an (alpha, theta) grid; scores are computed
    once and re-blended per cell."""
    alphas = tuple(float(a) for a in alphas)
    thetas = tuple(float(t) for t in thetas)
    if not alphas or not thetas:
        raise ValidationError("sweep grids must be non-empty", EMPTY)
    if truth is not None and len(truth) != len(ds):
        raise ValidationError("truth length must match dataset")
    sims, conf = score_matrices(ds, protos, head, threads)
    noisy = ds.labels.labels
    cells = []
    for theta in thetas:
        for alpha in alphas:
            scores = blend_scores(sims, conf, alpha)
            take = scores.max(axis=1) >= theta
            refined = np.where(take, scores.argmax(axis=1), noisy)
            changed = int(np.sum(refined != noisy))
            corrected = corrupted = None
            accuracy = None
            if truth is not None:
                t = truth.labels
                corrected = int(np.sum((refined != noisy) & (refined == t) & (noisy != t)))
                corrupted = int(np.sum((noisy == t) & (refined != t)))
                accuracy = float(np.mean(refined == t))
            cells.append(SweepCell(alpha, theta, changed, corrected, corrupted, accuracy))
    return SweepTable(alphas, thetas, tuple(cells))
