"""Frozen pretrained vision backbones behind a token registry.

Embedding widths are read from the instantiated model rather than
hard-coded, so checkpoint revisions cannot silently drift the output
format. Heavy dependencies (torch, transformers) load lazily on first use;
``register`` lets tests and downstream tools plug in custom encoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Backbone:
    """A frozen image encoder: token name, output width, batch callable."""

    name: str
    width: int
    embed: Callable  # list of PIL images -> (batch, width) float32


_LOADERS: dict[str, Callable[[], Backbone]] = {}


def register(token: str, loader: Callable[[], Backbone]) -> None:
    _LOADERS[token] = loader


def available() -> list[str]:
    return sorted(_LOADERS)


def load_backbone(token: str) -> Backbone:
    if token not in _LOADERS:
        raise ValueError(
            f"unknown backbone {token!r}; available: {', '.join(available())}"
        )
    return _LOADERS[token]()


def _load_clip_vit_l14() -> Backbone:
    import torch
    from transformers import CLIPImageProcessor, CLIPVisionModelWithProjection

    checkpoint = "openai/clip-vit-large-patch14"
    model = CLIPVisionModelWithProjection.from_pretrained(checkpoint)
    model.eval()
    processor = CLIPImageProcessor.from_pretrained(checkpoint)
    width = int(model.config.projection_dim)

    def embed(images) -> np.ndarray:
        inputs = processor(images=images, return_tensors="pt")
        with torch.no_grad():
            out = model(**inputs)
        return out.image_embeds.cpu().numpy().astype(np.float32)

    return Backbone(f"clip-vit-l14:{checkpoint}", width, embed)


def _load_dinov2_vit_l14() -> Backbone:
    import torch
    from torchvision import transforms

    model = torch.hub.load("facebookresearch/dinov2", "dinov2_vitl14")
    model.eval()
    width = int(model.embed_dim)
    preprocess = transforms.Compose([
        transforms.Resize(256, interpolation=transforms.InterpolationMode.BICUBIC),
        transforms.CenterCrop(224),
        transforms.ToTensor(),
        transforms.Normalize(mean=(0.485, 0.456, 0.406),
                             std=(0.229, 0.224, 0.225)),
    ])

    def embed(images) -> np.ndarray:
        batch = torch.stack([preprocess(img.convert("RGB")) for img in images])
        with torch.no_grad():
            out = model(batch)
        return out.cpu().numpy().astype(np.float32)

    return Backbone("dinov2-vit-l14:facebookresearch/dinov2", width, embed)


register("clip-vit-l14", _load_clip_vit_l14)
register("dinov2-vit-l14", _load_dinov2_vit_l14)
