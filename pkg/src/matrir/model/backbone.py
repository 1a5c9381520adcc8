"""Image encoders producing token sequences for the two network modules."""
from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig


def _encoder_layer(dim, heads, ff, dropout):
    return nn.TransformerEncoderLayer(
        d_model=dim,
        nhead=heads,
        dim_feedforward=ff,
        dropout=dropout,
        batch_first=True,
        norm_first=True,
    )


class TinyBackbone(nn.Module):
    """Trainable patch encoder: (B, 3, H, W) -> (B, tokens, dim).

    Interface-compatible stand-in for a large frozen self-supervised encoder;
    weights train with the rest of the model.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.patch = nn.Conv2d(
            3, cfg.backbone_dim, cfg.backbone_patch, stride=cfg.backbone_patch
        )
        self.pos = nn.Parameter(
            torch.zeros(1, cfg.backbone_tokens, cfg.backbone_dim)
        )
        self.encoder = nn.TransformerEncoder(
            _encoder_layer(cfg.backbone_dim, cfg.n_heads, cfg.ff_dim, cfg.dropout),
            num_layers=cfg.backbone_layers,
            enable_nested_tensor=False,
        )
        self.use_pos = cfg.use_positional_encoding

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        x = self.patch(images).flatten(2).transpose(1, 2)
        if self.use_pos:
            x = x + self.pos
        return self.encoder(x)


class ExternalFrozenBackbone(nn.Module):
    """Adapter for a user-supplied pretrained encoder.

    The wrapped module must map (B, 3, H, W) -> (B, backbone_tokens,
    backbone_dim); its parameters are frozen here. No weights ship with this
    package.
    """

    def __init__(self, cfg: ModelConfig, module: nn.Module = None):
        super().__init__()
        if module is None:
            raise ValueError(
                "external-frozen backbone requires a wrapped encoder module"
            )
        self.inner = module
        for p in self.inner.parameters():
            p.requires_grad_(False)
        self._tokens = cfg.backbone_tokens
        self._dim = cfg.backbone_dim

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            out = self.inner(images)
        if out.shape[1:] != (self._tokens, self._dim):
            raise ValueError(
                f"external backbone produced {tuple(out.shape[1:])}, expected "
                f"({self._tokens}, {self._dim})"
            )
        return out


def make_backbone(cfg: ModelConfig, external: nn.Module = None) -> nn.Module:
    if cfg.backbone == "tiny-trainable":
        return TinyBackbone(cfg)
    return ExternalFrozenBackbone(cfg, external)
