"""Vision backbone registry.

Every backbone is a deterministic eval-mode function image -> 1-D float32
feature vector. Pretrained weights are loaded from a local file when provided;
without one, torchvision models fall back to a seeded random initialization
(recorded in the manifest) so exports stay reproducible in offline
environments. `pixel-proj` is a torch-free seeded random projection of
downsampled pixels for quick smoke tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from PIL import Image

TORCHVISION_MODELS = ("resnet18", "resnet34", "resnet50")

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass(frozen=True)
class Backbone:
    name: str
    dim: int
    layer: str
    weights: str  # "file:<path>" | "seeded-random-init" | "n/a"
    embed_batch: Callable  # list[Image.Image] -> np.ndarray (B x dim)


def _pixel_proj(seed: int, dim: int = 64, side: int = 32) -> Backbone:
    rng = np.random.Generator(np.random.PCG64([seed, 1]))
    proj = rng.standard_normal((side * side, dim)).astype(np.float32) / np.sqrt(side * side)

    def embed_batch(images):
        feats = np.empty((len(images), dim), dtype=np.float32)
        for i, img in enumerate(images):
            gray = np.asarray(img.convert("L").resize((side, side)), dtype=np.float32)
            feats[i] = (gray.reshape(-1) / 255.0) @ proj
        return feats

    return Backbone("pixel-proj", dim, "projection", "n/a", embed_batch)


def _torchvision(name: str, seed: int, weights_path: str | None) -> Backbone:
    import torch
    import torchvision

    torch.set_num_threads(1)
    torch.manual_seed(seed)
    model = getattr(torchvision.models, name)(weights=None)
    if weights_path:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
        weights = f"file:{weights_path}"
    else:
        weights = "seeded-random-init"
    dim = model.fc.in_features
    model.fc = torch.nn.Identity()
    model.eval()

    def embed_batch(images):
        arrays = []
        for img in images:
            a = np.asarray(img.convert("RGB").resize((224, 224)), dtype=np.float32) / 255.0
            arrays.append((a - IMAGENET_MEAN) / IMAGENET_STD)
        batch = torch.from_numpy(np.stack(arrays).transpose(0, 3, 1, 2))
        with torch.no_grad():
            out = model(batch)
        return out.numpy().astype(np.float32)

    return Backbone(name, dim, "global_avgpool", weights, embed_batch)


def make_backbone(name: str, seed: int, weights_path: str | None = None) -> Backbone:
    if name == "pixel-proj":
        return _pixel_proj(seed)
    if name in TORCHVISION_MODELS:
        return _torchvision(name, seed, weights_path)
    raise ValueError(
        f"unknown backbone {name!r}; choose one of {('pixel-proj',) + TORCHVISION_MODELS}"
    )


def load_image(path) -> Image.Image:
    img = Image.open(path)
    img.load()
    return img
