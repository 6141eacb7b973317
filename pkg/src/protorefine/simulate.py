"""Synthetic desk-scale benchmarks: Gaussian class clusters as "real" embeddings,
shifted clusters as anchor embeddings, plus exact mixture posteriors.

All randomness comes from numpy's PCG64. A benchmark is a pure function of its
SimSpec: the top-level seed is split with SeedSequence.spawn into five fixed
substreams (class means, anchor shift directions, real samples, anchor samples,
heldout samples), so requesting a heldout split never perturbs the main draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import AnchorSet, ConfidenceMatrix, Dataset, EmbeddingMatrix, LabelSet
from .errors import ValidationError


@dataclass(frozen=True)
class SimSpec:
    """Parameters of the generating Gaussian mixture."""

    num_classes: int
    dim: int
    samples_per_class: int
    anchors_per_class: int = 100
    class_separation: float = 9.0
    intra_std: float = 1.0
    anchor_shift: float = 2.5
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.dim < 1:
            raise ValidationError("num_classes and dim must be >= 1")
        if self.samples_per_class < 1 or self.anchors_per_class < 1:
            raise ValidationError("samples_per_class and anchors_per_class must be >= 1")
        if self.class_separation < 0:
            raise ValidationError("class_separation must be >= 0")
        if self.intra_std <= 0:
            raise ValidationError("intra_std must be > 0")
        if self.anchor_shift < 0:
            raise ValidationError("anchor_shift must be >= 0")


@dataclass(frozen=True)
class Benchmark:
    """Generated benchmark plus the generating parameters (for oracles/tests)."""

    dataset: Dataset
    anchors: AnchorSet
    posteriors: ConfidenceMatrix
    heldout: Dataset | None
    means: np.ndarray
    anchor_offsets: np.ndarray
    spec: SimSpec


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return v / norms


def mixture_posteriors(x: np.ndarray, means: np.ndarray, std: float) -> np.ndarray:
    """Exact equal-prior posterior P(c | x) for isotropic Gaussians at `means`."""
    x = np.asarray(x, dtype=np.float64)
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    logp = -d2 / (2.0 * std * std)
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def generate_benchmark(spec: SimSpec, heldout_per_class: int = 0) -> Benchmark:
    """Draw a benchmark from `spec`; optionally draw a truth-labeled heldout split.

    Class means lie uniformly on a sphere of radius class_separation/2 around the
    origin. Real samples for class c are N(mu_c, intra_std^2 I); anchors are
    N(mu_c + delta_c, intra_std^2 I) with |delta_c| = anchor_shift in a seeded
    random direction. Posterior rows are the exact generating-mixture posteriors
    of the (float32-stored) real samples.
    """
    if heldout_per_class < 0:
        raise ValidationError("heldout_per_class must be >= 0")
    c, d = spec.num_classes, spec.dim
    ss = np.random.SeedSequence(spec.seed)
    s_means, s_dirs, s_samples, s_anchors, s_heldout = ss.spawn(5)

    rng = np.random.Generator(np.random.PCG64(s_means))
    means = _unit_rows(rng, c, d) * (spec.class_separation / 2.0)

    rng = np.random.Generator(np.random.PCG64(s_dirs))
    offsets = _unit_rows(rng, c, d) * spec.anchor_shift

    m = c * spec.samples_per_class
    truth = np.repeat(np.arange(c), spec.samples_per_class)
    rng = np.random.Generator(np.random.PCG64(s_samples))
    x = means[truth] + spec.intra_std * rng.standard_normal((m, d))
    x32 = x.astype(np.float32)

    rng = np.random.Generator(np.random.PCG64(s_anchors))
    n = spec.anchors_per_class
    anchor_cls = np.repeat(np.arange(c), n)
    av = means[anchor_cls] + offsets[anchor_cls] + spec.intra_std * rng.standard_normal(
        (c * n, d)
    )

    emb = EmbeddingMatrix(x32, np.arange(m))
    labels = LabelSet(truth, c, "truth", np.arange(m))
    anchors = AnchorSet(av.astype(np.float32), anchor_cls, c)
    posteriors = ConfidenceMatrix(mixture_posteriors(x32, means, spec.intra_std))

    heldout = None
    if heldout_per_class:
        mh = c * heldout_per_class
        ht = np.repeat(np.arange(c), heldout_per_class)
        rng = np.random.Generator(np.random.PCG64(s_heldout))
        hx = means[ht] + spec.intra_std * rng.standard_normal((mh, d))
        heldout = Dataset(
            EmbeddingMatrix(hx.astype(np.float32), np.arange(mh)),
            LabelSet(ht, c, "truth", np.arange(mh)),
        )

    return Benchmark(
        dataset=Dataset(emb, labels),
        anchors=anchors,
        posteriors=posteriors,
        heldout=heldout,
        means=means,
        anchor_offsets=offsets,
        spec=spec,
    )
