"""Spatial path: scene appearance + depth -> initial RIR estimate."""
from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .layers import SpectrogramUpsampler


class SpatialModule(nn.Module):
    """Cross-attention decoder with learned queries over fused (V, D) tokens.

    Per-modality tokens are concatenated with a learned modality embedding,
    projected, and the two streams concatenated channel-wise into a fused
    sequence of width 2 x token_dim. The material mask is never an input
    here, so the output is invariant to it by construction.
    """

    def __init__(self, cfg: ModelConfig, backbone: nn.Module):
        super().__init__()
        self.backbone = backbone
        d_b, d_t = cfg.backbone_dim, cfg.token_dim
        self.mod_embed_v = nn.Parameter(torch.zeros(1, 1, d_b))
        self.mod_embed_d = nn.Parameter(torch.zeros(1, 1, d_b))
        self.proj_v = nn.Linear(2 * d_b, d_t)
        self.proj_d = nn.Linear(2 * d_b, d_t)
        self.fused_pos = nn.Parameter(torch.zeros(1, cfg.backbone_tokens, 2 * d_t))
        self.fused_proj = nn.Linear(2 * d_t, d_t)
        self.queries = nn.Parameter(torch.zeros(1, cfg.spatial_queries, d_t))
        layer = nn.TransformerDecoderLayer(
            d_model=d_t,
            nhead=cfg.n_heads,
            dim_feedforward=cfg.ff_dim,
            dropout=cfg.dropout,
            batch_first=True,
            norm_first=True,
        )
        self.decoder = nn.TransformerDecoder(layer, num_layers=cfg.decoder_layers)
        self.upsampler = SpectrogramUpsampler(
            d_t, cfg.upsampler_channels, out_channels=cfg.spec_channels
        )
        self.use_pos = cfg.use_positional_encoding
        nn.init.normal_(self.queries, std=0.02)
        nn.init.normal_(self.mod_embed_v, std=0.02)
        nn.init.normal_(self.mod_embed_d, std=0.02)
        if self.use_pos:
            nn.init.normal_(self.fused_pos, std=0.02)

    def fuse(self, image: torch.Tensor, depth: torch.Tensor) -> torch.Tensor:
        if depth.shape[1] == 1:  # grayscale depth into an RGB encoder
            depth = depth.expand(-1, 3, -1, -1)
        e_v = self.backbone(image)
        e_d = self.backbone(depth)
        h_v = self.proj_v(torch.cat([e_v, self.mod_embed_v.expand_as(e_v)], dim=-1))
        h_d = self.proj_d(torch.cat([e_d, self.mod_embed_d.expand_as(e_d)], dim=-1))
        fused = torch.cat([h_v, h_d], dim=-1)  # (B, tokens, 2*token_dim)
        if self.use_pos:
            fused = fused + self.fused_pos
        return fused

    def forward(self, image: torch.Tensor, depth: torch.Tensor):
        fused = self.fuse(image, depth)
        memory = self.fused_proj(fused)
        queries = self.queries.expand(image.shape[0], -1, -1)
        g_s = self.decoder(queries, memory)
        spec = self.upsampler(g_s)
        return spec, g_s
