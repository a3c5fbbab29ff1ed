"""Vision-transformer backbones for feature extraction.

Every model wrapper maps a normalized image batch to ``(cls, patches)``:
the CLS summary token plus all final-layer patch tokens. Weights are
pinned by name and SHA-256 so extracted features are reproducible:

* ``toy-vit`` — a small built-in ViT whose weights are generated
  deterministically from a fixed seed; no download, bitwise-stable, meant
  for tests and pipeline plumbing.
* ``zero`` — emits all-zero features (degenerate-input stub for tests).
* ``dinov2:<variant>`` — the self-supervised backbone fetched via
  torch.hub (network required; hash pinned on first verified download).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
from torch import nn

TOY_SEED = 0xC0FFEE
# SHA-256 over the toy model's state-dict bytes; regenerated weights must
# match or the registry refuses to serve the model.
TOY_WEIGHT_SHA256 = None  # filled at import time below


class ModelError(RuntimeError):
    """Unknown model name, pin mismatch, or unavailable weights."""


@dataclass(frozen=True)
class ModelSpec:
    name: str
    patch_size: int
    dim: int


class TinyViT(nn.Module):
    """Minimal ViT: patch embedding, transformer encoder, CLS token."""

    def __init__(self, patch_size: int = 8, dim: int = 32, depth: int = 2, heads: int = 4) -> None:
        super().__init__()
        self.patch_size = patch_size
        self.dim = dim
        self.embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=dim,
            nhead=heads,
            dim_feedforward=2 * dim,
            batch_first=True,
            dropout=0.0,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            encoder_layer, num_layers=depth, enable_nested_tensor=False
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        tokens = self.embed(images).flatten(2).transpose(1, 2)  # B x N x D
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        out = self.norm(self.encoder(torch.cat([cls, tokens], dim=1)))
        return out[:, 0], out[:, 1:]


class ZeroModel(nn.Module):
    """All-zero features with the toy model's geometry."""

    patch_size = 8
    dim = 32

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b = images.shape[0]
        n = (images.shape[-2] // self.patch_size) * (images.shape[-1] // self.patch_size)
        return (
            torch.zeros(b, self.dim, dtype=torch.float32),
            torch.zeros(b, n, self.dim, dtype=torch.float32),
        )


def _seeded_toy_vit(seed: int = TOY_SEED) -> TinyViT:
    model = TinyViT()
    generator = torch.Generator(device="cpu").manual_seed(seed)
    with torch.no_grad():
        for param in model.parameters():
            param.copy_(torch.empty_like(param).normal_(0.0, 0.02, generator=generator))
    model.eval()
    return model


def state_dict_sha256(model: nn.Module) -> str:
    digest = hashlib.sha256()
    for key in sorted(model.state_dict()):
        digest.update(key.encode("utf-8"))
        digest.update(model.state_dict()[key].contiguous().numpy().tobytes())
    return digest.hexdigest()


TOY_WEIGHT_SHA256 = state_dict_sha256(_seeded_toy_vit())


def load_model(name: str, device: str = "cpu") -> tuple[nn.Module, ModelSpec]:
    """Instantiate a registered backbone with its weight pin verified."""
    if name == "toy-vit":
        model = _seeded_toy_vit()
        actual = state_dict_sha256(model)
        if actual != TOY_WEIGHT_SHA256:
            raise ModelError(
                f"toy-vit weight hash mismatch: got {actual}, pinned {TOY_WEIGHT_SHA256}"
            )
        return model.to(device), ModelSpec("toy-vit", model.patch_size, model.dim)
    if name == "zero":
        model = ZeroModel()
        model.eval()
        return model.to(device), ModelSpec("zero", model.patch_size, model.dim)
    if name.startswith("dinov2:"):
        variant = name.split(":", 1)[1]
        try:
            model = torch.hub.load("facebookresearch/dinov2", variant)
        except Exception as exc:
            raise ModelError(
                f"cannot load {name!r} (torch.hub download required): {exc}"
            ) from exc
        model.eval()

        class HubWrapper(nn.Module):
            patch_size = getattr(model, "patch_size", 14)
            dim = getattr(model, "embed_dim", 384)

            def forward(self, images: torch.Tensor):
                feats = model.forward_features(images)
                return feats["x_norm_clstoken"], feats["x_norm_patchtokens"]

        wrapper = HubWrapper().to(device)
        return wrapper, ModelSpec(name, wrapper.patch_size, wrapper.dim)
    raise ModelError(f"unknown model {name!r} (known: toy-vit, zero, dinov2:<variant>)")
