"""Network configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


class ModelConfigError(ValueError):
    pass


VARIANTS = ("full", "spatial_only", "material_only")
BACKBONES = ("tiny-trainable", "external-frozen")


@dataclass
class ModelConfig:
    token_dim: int = 256
    ff_dim: int = 512
    dropout: float = 0.1
    decoder_layers: int = 4
    encoder_layers: int = 4
    n_heads: int = 8
    spatial_queries: int = 256
    reweight_tokens: int = 4
    patch_size: int = 16
    upsampler_channels: tuple = (512, 256, 128, 64, 32)
    backbone: str = "tiny-trainable"
    backbone_tokens: int = 256
    backbone_dim: int = 256  # 1024 when wrapping an external frozen encoder
    backbone_patch: int = 8
    backbone_layers: int = 4
    image_size: int = 128
    spec_size: int = 256
    spec_channels: int = 2
    use_reweight_tokens: bool = True
    use_positional_encoding: bool = True
    variant: str = "full"

    def __post_init__(self):
        if self.decoder_layers < 1 or self.encoder_layers < 1:
            raise ModelConfigError("need at least one decoder and encoder layer")
        if self.variant not in VARIANTS:
            raise ModelConfigError(f"variant must be one of {VARIANTS}")
        if self.backbone not in BACKBONES:
            raise ModelConfigError(f"backbone must be one of {BACKBONES}")
        grid = math.isqrt(self.spatial_queries)
        if grid * grid != self.spatial_queries:
            raise ModelConfigError("spatial_queries must form a square grid")
        if len(self.upsampler_channels) != 5:
            raise ModelConfigError("upsampler needs 5 channel counts (4 stages)")
        # four x2 stages map the query grid onto the spectrogram
        if grid * 16 != self.spec_size:
            raise ModelConfigError(
                f"query grid {grid}x{grid} cannot upsample to {self.spec_size}"
            )
        if self.spec_size % self.patch_size != 0:
            raise ModelConfigError("patch_size must divide spec_size")
        if self.image_size % self.backbone_patch != 0:
            raise ModelConfigError("backbone patch must divide image size")
        if self.token_dim % self.n_heads != 0:
            raise ModelConfigError("token_dim must be divisible by n_heads")
        expected_tokens = (self.image_size // self.backbone_patch) ** 2
        if self.backbone == "tiny-trainable" and expected_tokens != self.backbone_tokens:
            raise ModelConfigError(
                f"tiny backbone yields {expected_tokens} tokens, "
                f"config says {self.backbone_tokens}"
            )

    @property
    def query_grid(self) -> int:
        return math.isqrt(self.spatial_queries)

    @property
    def spec_patches(self) -> int:
        return (self.spec_size // self.patch_size) ** 2


def desk_config(**overrides) -> ModelConfig:
    """Default desk-scale model (trainable tiny backbone)."""
    return ModelConfig(**overrides)


def compact_config(**overrides) -> ModelConfig:
    """Small configuration for CPU-bound runs; same wiring, smaller dims."""
    base = dict(
        token_dim=64,
        ff_dim=128,
        dropout=0.1,
        decoder_layers=2,
        encoder_layers=2,
        n_heads=4,
        upsampler_channels=(64, 48, 32, 16, 8),
        backbone_dim=64,
        backbone_patch=8,
        backbone_layers=2,
        backbone_tokens=64,
        image_size=64,
    )
    base.update(overrides)
    return ModelConfig(**base)
