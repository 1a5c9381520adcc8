"""The full two-module network and its summary/checkpoint plumbing."""
from __future__ import annotations

from dataclasses import asdict

import torch
from torch import nn

from .backbone import make_backbone
from .config import ModelConfig
from .material import MaterialModule
from .spatial import SpatialModule


class DisentangledRIRNet(nn.Module):
    """F(V, D, M) -> (A_spatial, A_material).

    The spatial path never sees M; the material path modulates the spatial
    estimate. Variants: `spatial_only` returns the spatial estimate for both
    outputs, `material_only` cuts the spatial pathway (audio tokens zeroed).
    """

    def __init__(self, cfg: ModelConfig, external_backbone: nn.Module = None):
        super().__init__()
        self.cfg = cfg
        self.backbone = make_backbone(cfg, external_backbone)
        self.spatial = SpatialModule(cfg, self.backbone)
        if cfg.variant != "spatial_only":
            self.material = MaterialModule(cfg, self.backbone)
        else:
            self.material = None

    def forward(self, image, depth, mask_image):
        if self.cfg.variant == "material_only":
            b = image.shape[0]
            zero_spec = torch.zeros(
                b, self.cfg.spec_channels, self.cfg.spec_size, self.cfg.spec_size,
                device=image.device, dtype=image.dtype,
            )
            a_m = self.material(zero_spec, mask_image, zero_audio=True)
            return zero_spec, a_m
        a_s, _ = self.spatial(image, depth)
        if self.cfg.variant == "spatial_only":
            return a_s, a_s
        a_m = self.material(a_s, mask_image)
        return a_s, a_m


def init_model(
    cfg: ModelConfig, seed: int = 0, external_backbone: nn.Module = None
) -> DisentangledRIRNet:
    """Deterministic parameter initialization under the seed."""
    torch.manual_seed(seed)
    return DisentangledRIRNet(cfg, external_backbone)


def parameter_count(net: nn.Module, trainable_only: bool = True) -> int:
    return sum(
        p.numel() for p in net.parameters()
        if p.requires_grad or not trainable_only
    )


def _attach_mac_hooks(net, records):
    hooks = []

    def conv_hook(mod, inputs, output):
        k = mod.kernel_size[0] * mod.kernel_size[1]
        if isinstance(mod, nn.ConvTranspose2d):
            macs = inputs[0].shape[-1] * inputs[0].shape[-2] * mod.in_channels \
                * mod.out_channels * k
        else:
            macs = output.shape[-1] * output.shape[-2] * mod.out_channels \
                * mod.in_channels * k
        records.append(int(macs) * output.shape[0])

    def linear_hook(mod, inputs, output):
        tokens = inputs[0].numel() // inputs[0].shape[-1]
        records.append(int(tokens * mod.in_features * mod.out_features))

    def attn_hook(mod, inputs, output):
        q, k = inputs[0], inputs[1]
        d = mod.embed_dim
        q_len = q.shape[1] if q.ndim == 3 else q.shape[0]
        k_len = k.shape[1] if k.ndim == 3 else k.shape[0]
        proj = (q_len + 2 * k_len) * d * d + q_len * d * d
        scores = 2 * q_len * k_len * d
        records.append(int(proj + scores))

    for mod in net.modules():
        if isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)):
            hooks.append(mod.register_forward_hook(conv_hook))
        elif isinstance(mod, nn.Linear):
            hooks.append(mod.register_forward_hook(linear_hook))
        elif isinstance(mod, nn.MultiheadAttention):
            hooks.append(mod.register_forward_hook(attn_hook))
    return hooks


def model_summary(net: DisentangledRIRNet) -> dict:
    """Parameter counts per module plus a multiply-accumulate estimate for one
    forward pass (reported in the computational-cost table format)."""
    cfg = net.cfg
    per_module = {}
    for name, child in net.named_children():
        if child is None:
            continue
        per_module[name] = sum(p.numel() for p in child.parameters())
    # the shared backbone is counted once
    shared = sum(p.numel() for p in net.backbone.parameters())
    for name in ("spatial", "material"):
        if name in per_module:
            per_module[name] -= shared

    records: list = []
    hooks = _attach_mac_hooks(net, records)
    was_training = net.training
    net.eval()
    with torch.no_grad():
        v = torch.zeros(1, 3, cfg.image_size, cfg.image_size)
        d = torch.zeros(1, 1, cfg.image_size, cfg.image_size)
        m = torch.zeros(1, 3, cfg.image_size, cfg.image_size)
        net(v, d, m)
    for h in hooks:
        h.remove()
    if was_training:
        net.train()

    return {
        "config": asdict(cfg),
        "trainable_parameters": parameter_count(net, trainable_only=True),
        "total_parameters": parameter_count(net, trainable_only=False),
        "parameters_by_module": per_module,
        "forward_macs_estimate": int(sum(records)),
        "forward_gflops_estimate": round(2 * sum(records) / 1e9, 3),
    }


def save_checkpoint(path, net: DisentangledRIRNet, extra: dict = None):
    payload = {
        "config": asdict(net.cfg),
        "state_dict": net.state_dict(),
    }
    payload.update(extra or {})
    torch.save(payload, path)


def load_checkpoint(path, external_backbone: nn.Module = None):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg_dict = dict(payload["config"])
    cfg_dict["upsampler_channels"] = tuple(cfg_dict["upsampler_channels"])
    cfg = ModelConfig(**cfg_dict)
    net = DisentangledRIRNet(cfg, external_backbone)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return net, payload
