"""Prototype-anchored refinement of noisy classification labels in embedding space."""

from .data import (
    AnchorSet,
    ConfidenceMatrix,
    Dataset,
    EmbeddingMatrix,
    LabelSet,
    bind_dataset,
    read_anchors,
    read_confidences,
    read_embeddings,
    read_labels,
    write_anchors,
    write_confidences,
    write_embeddings,
    write_labels,
)
from .errors import CalibrationError, FormatError, RefineError, TrainingError, ValidationError
from .head import LinearHead, TrainConfig, confidences, read_head, train_head, write_head
from .noise import (
    NoiseSpec,
    inject,
    inject_asymmetric,
    inject_hybrid,
    inject_pmd,
    inject_uniform,
)
from .relabel import (
    Prototypes,
    RelabelConfig,
    ScoredSample,
    blend_scores,
    build_prototypes,
    cosine_similarity,
    relabel,
    sweep,
)
from .report import RelabelReport, downstream_eval, emit_report, evaluate_head, label_metrics
from .simulate import Benchmark, SimSpec, generate_benchmark, mixture_posteriors

__version__ = "0.1.0"
