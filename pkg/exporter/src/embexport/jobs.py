"""Export jobs: embed a labeled image folder (one subfolder per class) into the
EMB1/CSV interface, plus anchor export from pre-generated image folders.

Row order is the sorted relative path order, so re-running a job writes
byte-identical files. Unreadable images are skipped with a warning and recorded
in the manifest; a class with zero usable images is an error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import __version__
from .backbones import make_backbone, load_image
from .formats import write_emb1, write_label_csv

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}
DEFAULT_PROMPT = "A photo of {c}"


@dataclass(frozen=True)
class ExportJob:
    image_root: Path
    out_dir: Path
    classes: tuple[str, ...] = ()  # empty: discover sorted subfolder names
    backbone: str = "resnet18"
    weights_path: str | None = None
    prompt_template: str = DEFAULT_PROMPT
    anchors_per_class: int = 100
    seed: int = 0
    batch_size: int = 16

    def __post_init__(self):
        if self.anchors_per_class < 1:
            raise ValueError("anchors per class must be >= 1")
        object.__setattr__(self, "image_root", Path(self.image_root))
        object.__setattr__(self, "out_dir", Path(self.out_dir))


def resolve_classes(job: ExportJob, root: Path) -> list[str]:
    if job.classes:
        return list(job.classes)
    found = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not found:
        raise ValueError(f"no class subfolders under {root}")
    return found


def _class_images(root: Path, cls: str) -> list[Path]:
    folder = root / cls
    if not folder.is_dir():
        raise ValueError(f"class with zero samples: missing folder {folder}")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _embed_folder(job, root, classes, limit_per_class=None):
    """Returns (features, class_indices, relative_paths, skipped)."""
    backbone = make_backbone(job.backbone, job.seed, job.weights_path)
    feats, labels, paths, skipped = [], [], [], []
    for idx, cls in enumerate(classes):
        images, kept_paths = [], []
        for p in _class_images(root, cls):
            try:
                images.append(load_image(p))
                kept_paths.append(p)
            except (OSError, UnidentifiedImageError) as exc:
                print(f"warning: skipping unreadable image {p}: {exc}", file=sys.stderr)
                skipped.append(str(p.relative_to(root)))
            if limit_per_class is not None and len(images) >= limit_per_class:
                break
        if not images:
            raise ValueError(f"class with zero samples: {cls}")
        for start in range(0, len(images), job.batch_size):
            feats.append(backbone.embed_batch(images[start : start + job.batch_size]))
        labels.extend([idx] * len(images))
        paths.extend(str(p.relative_to(root)) for p in kept_paths)
    return np.concatenate(feats), np.asarray(labels), paths, skipped, backbone


def _write_manifest(path, job, backbone, classes, kind, counts, paths, skipped, prompts=None):
    manifest = {
        "kind": kind,
        "backbone": backbone.name,
        "backbone_dim": backbone.dim,
        "backbone_weights": backbone.weights,
        "embedding_layer": backbone.layer,
        "classes": list(classes),
        "per_class_counts": counts,
        "rows": paths,
        "skipped": skipped,
        "seed": job.seed,
        "versions": _versions(),
    }
    if prompts is not None:
        manifest["prompts"] = prompts
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _versions() -> dict:
    out = {"embexport": __version__, "numpy": np.__version__, "pillow": Image.__version__}
    try:
        import torch

        out["torch"] = torch.__version__
    except ImportError:
        pass
    return out


def export_real(job: ExportJob) -> dict:
    """Embed the labeled image folder; writes real.emb1, labels.csv, manifest."""
    classes = resolve_classes(job, job.image_root)
    feats, labels, paths, skipped, backbone = _embed_folder(job, job.image_root, classes)
    job.out_dir.mkdir(parents=True, exist_ok=True)
    ids = np.arange(len(labels))
    write_emb1(job.out_dir / "real.emb1", feats, ids)
    write_label_csv(job.out_dir / "labels.csv", ids, labels)
    counts = [int(c) for c in np.bincount(labels, minlength=len(classes))]
    _write_manifest(
        job.out_dir / "real_manifest.json", job, backbone, classes, "real", counts, paths, skipped
    )
    return {"count": len(labels), "dim": feats.shape[1], "classes": classes}


def export_anchors(job: ExportJob, from_folder: Path | None) -> dict:
    """Embed up to N pre-generated anchor images per class; writes anchors.emb1,
    anchor_classes.csv, manifest (with the generating prompt per class).

    A text-to-image backend is not bundled: without --from-folder this errors.
    """
    if from_folder is None:
        raise ValueError(
            "generation backend unavailable; provide --from-folder with pre-generated images"
        )
    root = Path(from_folder)
    classes = resolve_classes(job, root)
    feats, labels, paths, skipped, backbone = _embed_folder(
        job, root, classes, limit_per_class=job.anchors_per_class
    )
    counts = [int(c) for c in np.bincount(labels, minlength=len(classes))]
    for cls, n in zip(classes, counts):
        if n < job.anchors_per_class:
            print(
                f"warning: class {cls} has {n} anchors, fewer than the requested "
                f"{job.anchors_per_class}",
                file=sys.stderr,
            )
    job.out_dir.mkdir(parents=True, exist_ok=True)
    ids = np.arange(len(labels))
    write_emb1(job.out_dir / "anchors.emb1", feats, ids)
    write_label_csv(job.out_dir / "anchor_classes.csv", ids, labels)
    prompts = {cls: job.prompt_template.format(c=cls) for cls in classes}
    _write_manifest(
        job.out_dir / "anchors_manifest.json",
        job,
        backbone,
        classes,
        "anchors",
        counts,
        paths,
        skipped,
        prompts=prompts,
    )
    return {"count": len(labels), "dim": feats.shape[1], "per_class": counts}
