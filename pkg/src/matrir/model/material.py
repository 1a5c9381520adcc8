"""Material path: modulates the spatial estimate with the material mask."""
from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .layers import BinauralPatchMerger, SpectrogramUpsampler


class MaterialModule(nn.Module):
    """Self-attention over [mask tokens; reweighting tokens; audio tokens].

    The encoded audio tokens drive a gated upsampler whose per-stage channel
    gates come from the encoded reweighting tokens. Disabling the reweighting
    tokens removes them from the sequence and leaves the stages ungated.
    """

    def __init__(self, cfg: ModelConfig, backbone: nn.Module):
        super().__init__()
        self.backbone = backbone
        d_b, d_t = cfg.backbone_dim, cfg.token_dim
        self.proj_m = nn.Linear(d_b, d_t)
        self.patches = BinauralPatchMerger(cfg.patch_size, d_t)
        self.n_reweight = cfg.reweight_tokens if cfg.use_reweight_tokens else 0
        if self.n_reweight:
            self.reweight = nn.Parameter(torch.zeros(1, cfg.reweight_tokens, d_t))
            self.proj_r = nn.Linear(d_t, d_t)
            nn.init.normal_(self.reweight, std=0.02)
        self.pos_m = nn.Parameter(torch.zeros(1, cfg.backbone_tokens, d_t))
        self.pos_s = nn.Parameter(torch.zeros(1, cfg.spec_patches, d_t))
        layer = nn.TransformerEncoderLayer(
            d_model=d_t,
            nhead=cfg.n_heads,
            dim_feedforward=cfg.ff_dim,
            dropout=cfg.dropout,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=cfg.encoder_layers, enable_nested_tensor=False
        )
        self.upsampler = SpectrogramUpsampler(
            d_t,
            cfg.upsampler_channels,
            out_channels=cfg.spec_channels,
            gated=self.n_reweight > 0,
            reweight_dim=self.n_reweight * d_t,
        )
        self.use_pos = cfg.use_positional_encoding
        if self.use_pos:
            nn.init.normal_(self.pos_m, std=0.02)
            nn.init.normal_(self.pos_s, std=0.02)

    def forward(
        self,
        spatial_spec: torch.Tensor,
        mask_image: torch.Tensor,
        zero_audio: bool = False,
    ) -> torch.Tensor:
        e_m = self.proj_m(self.backbone(mask_image))
        e_s = self.patches(spatial_spec)
        if zero_audio:  # material-only ablation: the spatial pathway is cut
            e_s = torch.zeros_like(e_s)
        if self.use_pos:
            e_m = e_m + self.pos_m
            e_s = e_s + self.pos_s
        b = mask_image.shape[0]
        parts = [e_m]
        if self.n_reweight:
            parts.append(self.proj_r(self.reweight).expand(b, -1, -1))
        parts.append(e_s)
        tokens = torch.cat(parts, dim=1)
        encoded = self.encoder(tokens)

        n_m = e_m.shape[1]
        if self.n_reweight:
            g_r = encoded[:, n_m : n_m + self.n_reweight]
            g_m = encoded[:, n_m + self.n_reweight :]
            return self.upsampler(g_m, g_r.flatten(1))
        g_m = encoded[:, n_m:]
        return self.upsampler(g_m)
