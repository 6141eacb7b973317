"""Label corruption: uniform, asymmetric, margin-diminishing (feature-dependent),
and hybrid injectors.

Per-sample randomness is a single vectorized PCG64 draw indexed by sample
position, so results do not depend on iteration order. The feature-dependent
injector flips a sample toward the runner-up class of its posterior row with
probability tau(m) = min(tau_max, scale * (1 - m)^k), where m is the margin
between the top-1 and runner-up posteriors; `scale` is calibrated by bisection
so the mean of tau over the dataset hits the requested rate within 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ConfidenceMatrix, LabelSet
from .errors import CARDINALITY, RATE_UNREACHABLE, CalibrationError, ValidationError

NOISE_KINDS = ("uniform", "asymmetric", "pmd", "hybrid")
SECOND_KINDS = ("uniform", "asymmetric")

MEAN_RATE_TOL = 1e-4


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _check_rate(rate: float, what: str = "rate") -> None:
    if not 0.0 <= rate <= 1.0:
        raise ValidationError(f"{what} must lie in [0, 1], got {rate}")


def default_asym_mapping(num_classes: int) -> np.ndarray:
    """c -> (c + 1) mod C; the conventional fixed-point-free flip map."""
    if num_classes < 2:
        raise ValidationError("asymmetric mapping needs at least 2 classes")
    return (np.arange(num_classes) + 1) % num_classes


def _check_mapping(mapping: np.ndarray, num_classes: int) -> np.ndarray:
    mapping = np.asarray(mapping, dtype=np.int64)
    if mapping.shape != (num_classes,):
        raise ValidationError(
            f"mapping must list a target for each of {num_classes} classes", CARDINALITY
        )
    if np.any(mapping < 0) or np.any(mapping >= num_classes):
        raise ValidationError("mapping targets out of range")
    fixed = np.nonzero(mapping == np.arange(num_classes))[0]
    if fixed.size:
        raise ValidationError(f"mapping has fixed point at class {int(fixed[0])}")
    return mapping


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption recipe; `second_*` fields apply to hybrid noise only."""

    kind: str
    rate: float
    seed: int = 0
    second_kind: str = "uniform"
    second_rate: float = 0.0
    asym_mapping: np.ndarray | None = None
    pmd_exponent: int = 3
    pmd_tau_max: float = 0.9

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        _check_rate(self.rate)
        _check_rate(self.second_rate, "second_rate")
        if self.kind == "hybrid" and self.second_kind not in SECOND_KINDS:
            raise ValidationError(f"unknown hybrid second kind {self.second_kind!r}")
        if self.pmd_exponent < 1:
            raise ValidationError("pmd_exponent must be a positive integer")
        if not 0.0 < self.pmd_tau_max <= 1.0:
            raise ValidationError("pmd_tau_max must lie in (0, 1]")


def inject_uniform(truth: LabelSet, rate: float, seed: int) -> LabelSet:
    """Flip each label with probability `rate` to a uniform choice among the
    other C-1 classes (a selected sample always changes class)."""
    _check_rate(rate)
    c = truth.num_classes
    if c < 2:
        raise ValidationError("uniform noise needs at least 2 classes")
    m = len(truth)
    rng = _rng(seed)
    selected = rng.random(m) < rate
    offsets = rng.integers(1, c, size=m)
    flipped = (truth.labels + offsets) % c
    out = np.where(selected, flipped, truth.labels)
    return truth.replace(out, "noisy")


def inject_asymmetric(
    truth: LabelSet, rate: float, mapping: np.ndarray | None, seed: int
) -> LabelSet:
    """Flip each label with probability `rate` to mapping(label)."""
    _check_rate(rate)
    c = truth.num_classes
    mapping = _check_mapping(
        default_asym_mapping(c) if mapping is None else mapping, c
    )
    rng = _rng(seed)
    selected = rng.random(len(truth)) < rate
    out = np.where(selected, mapping[truth.labels], truth.labels)
    return truth.replace(out, "noisy")


def margins_and_runner_up(posteriors: ConfidenceMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-row margin (top-1 minus runner-up posterior) and the runner-up class.

    Ties resolve to the lowest class index first (stable sort), so the result is
    deterministic.
    """
    p = posteriors.rows
    order = np.argsort(-p, axis=1, kind="stable")
    top, second = order[:, 0], order[:, 1]
    idx = np.arange(p.shape[0])
    m = p[idx, top] - p[idx, second]
    return m, second


def pmd_flip_probabilities(
    posteriors: ConfidenceMatrix,
    target_rate: float,
    exponent: int = 3,
    tau_max: float = 0.9,
) -> tuple[np.ndarray, float]:
    """Calibrated per-sample flip probabilities tau(m) and the fitted scale.

    Raises CalibrationError when even a saturating scale cannot reach the
    target: tau <= tau_max and tau = 0 wherever (1-m)^k underflows to zero.
    """
    _check_rate(target_rate, "target_rate")
    if posteriors.num_classes < 2:
        raise ValidationError("margin noise needs at least 2 classes")
    m, _ = margins_and_runner_up(posteriors)
    base = (1.0 - m) ** exponent
    if target_rate == 0.0:
        return np.zeros_like(base), 0.0

    reachable = tau_max * float(np.mean(base > 0.0))
    if reachable < target_rate:
        raise CalibrationError(
            f"target rate unreachable; raise tau_max (max mean rate "
            f"{reachable:.4f} < {target_rate})",
            RATE_UNREACHABLE,
        )

    def mean_tau(log_scale: float) -> float:
        return float(np.minimum(tau_max, np.exp(log_scale) * base).mean())

    lo, hi = -80.0, 0.0
    while mean_tau(hi) < target_rate:
        hi += 40.0
        if hi > 700.0:
            raise CalibrationError(
                "target rate unreachable; raise tau_max (scale overflow)",
                RATE_UNREACHABLE,
            )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_tau(mid) < target_rate:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    log_scale = 0.5 * (lo + hi)
    achieved = mean_tau(log_scale)
    if abs(achieved - target_rate) > MEAN_RATE_TOL:
        raise CalibrationError(
            f"calibration failed: mean tau {achieved:.6f} vs target {target_rate}",
            RATE_UNREACHABLE,
        )
    scale = float(np.exp(log_scale))
    return np.minimum(tau_max, scale * base), scale


def inject_pmd(
    truth: LabelSet,
    posteriors: ConfidenceMatrix,
    target_rate: float,
    exponent: int = 3,
    tau_max: float = 0.9,
    seed: int = 0,
) -> LabelSet:
    """Margin-diminishing feature-dependent noise.

    Every selected sample is flipped toward the runner-up class of its posterior
    row, whether or not its current label is the row's argmax.
    """
    if posteriors.count != len(truth):
        raise ValidationError(
            f"cardinality mismatch: {posteriors.count} posterior rows vs "
            f"{len(truth)} labels",
            CARDINALITY,
        )
    tau, _ = pmd_flip_probabilities(posteriors, target_rate, exponent, tau_max)
    _, runner_up = margins_and_runner_up(posteriors)
    rng = _rng(seed)
    flip = rng.random(len(truth)) < tau
    out = np.where(flip, runner_up, truth.labels)
    return truth.replace(out, "noisy")


def inject_hybrid(
    truth: LabelSet, posteriors: ConfidenceMatrix, spec: NoiseSpec
) -> LabelSet:
    """Feature-dependent stage first, i.i.d. stage second (reading "X% PMD + Y% U"
    left to right). Stage one reuses spec.seed exactly as inject_pmd would, so
    second_rate=0 reproduces the pure feature-dependent output bit for bit."""
    if spec.kind != "hybrid":
        raise ValidationError(f"hybrid injector requires kind='hybrid', got {spec.kind!r}")
    stage1 = inject_pmd(
        truth, posteriors, spec.rate, spec.pmd_exponent, spec.pmd_tau_max, spec.seed
    )
    seed2 = np.random.SeedSequence([spec.seed, 1])
    if spec.second_kind == "uniform":
        return inject_uniform(stage1, spec.second_rate, seed2)
    return inject_asymmetric(stage1, spec.second_rate, spec.asym_mapping, seed2)


def inject(truth: LabelSet, spec: NoiseSpec, posteriors: ConfidenceMatrix | None = None) -> LabelSet:
    """Dispatch on spec.kind; posteriors are required for pmd/hybrid."""
    if spec.kind in ("pmd", "hybrid") and posteriors is None:
        raise ValidationError(f"{spec.kind} noise requires a posterior matrix")
    if spec.kind == "uniform":
        return inject_uniform(truth, spec.rate, spec.seed)
    if spec.kind == "asymmetric":
        return inject_asymmetric(truth, spec.rate, spec.asym_mapping, spec.seed)
    if spec.kind == "pmd":
        return inject_pmd(
            truth, posteriors, spec.rate, spec.pmd_exponent, spec.pmd_tau_max, spec.seed
        )
    return inject_hybrid(truth, posteriors, spec)
