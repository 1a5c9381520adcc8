"""Shared building blocks: transposed-conv upsampler and patch merging."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class UpsamplerStage(nn.Module):
    """x2 upsampling: transposed conv (k=2, s=2) + two convs with leaky ReLUs."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(c_in, c_out, kernel_size=2, stride=2)
        self.conv1 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)

    def forward(self, x):
        x = self.up(x)
        x = F.leaky_relu(self.conv1(x), 0.2)
        x = F.leaky_relu(self.conv2(x), 0.2)
        return x


class SpectrogramUpsampler(nn.Module):
    """Token grid -> non-negative 2-channel magnitude map.

    Four x2 stages over `channels`, then a two-layer head; softplus keeps the
    output non-negative for any parameters. When `gated`, each stage's output
    is scaled per channel by sigmoid(linear(g_r)); a zeroed projection
    therefore scales stage outputs by exactly 0.5.
    """

    def __init__(self, token_dim: int, channels, out_channels: int = 2,
                 gated: bool = False, reweight_dim: int = 0):
        super().__init__()
        self.proj = nn.Conv2d(token_dim, channels[0], 1)
        self.stages = nn.ModuleList(
            UpsamplerStage(channels[i], channels[i + 1]) for i in range(4)
        )
        self.head1 = nn.Conv2d(channels[4], channels[4], 3, padding=1)
        self.head2 = nn.Conv2d(channels[4], out_channels, 3, padding=1)
        self.gated = gated
        if gated:
            self.gates = nn.ModuleList(
                nn.Linear(reweight_dim, channels[i + 1]) for i in range(4)
            )

    def forward(self, tokens: torch.Tensor, reweight: torch.Tensor = None):
        b, t, d = tokens.shape
        side = int(t**0.5)
        x = tokens.transpose(1, 2).reshape(b, d, side, side)
        x = self.proj(x)
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if self.gated and reweight is not None:
                gate = torch.sigmoid(self.gates[i](reweight))
                x = x * gate[:, :, None, None]
        x = F.leaky_relu(self.head1(x), 0.2)
        return F.softplus(self.head2(x))


class BinauralPatchMerger(nn.Module):
    """Spectrogram -> token sequence, merging co-located L/R patches.

    Each channel is cut into patch_size^2 patches; the left/right patch pair
    is concatenated and passed through a 2-layer MLP so one fused feature
    represents each patch location.
    """

    def __init__(self, patch_size: int, token_dim: int):
        super().__init__()
        self.patch_size = patch_size
        in_dim = 2 * patch_size * patch_size
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, token_dim),
            nn.GELU(),
            nn.Linear(token_dim, token_dim),
        )

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        b, c, f_bins, t_bins = spec.shape
        p = self.patch_size
        patches = spec.unfold(2, p, p).unfold(3, p, p)  # (B, C, F/p, T/p, p, p)
        patches = patches.contiguous().view(b, c, -1, p * p)
        pairs = torch.cat([patches[:, 0], patches[:, 1]], dim=-1)
        return self.mlp(pairs)
