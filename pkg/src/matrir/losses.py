"""Training objective: spectrogram L1, energy-decay and matcher terms."""
from __future__ import annotations

from dataclasses import dataclass

import torch

ENERGY_DB_EPS = 1e-8


class LossContractError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    l1: float = 1.0
    energy_decay: float = 1.0
    matcher: float = 0.01

    def __post_init__(self):
        if min(self.l1, self.energy_decay, self.matcher) < 0:
            raise LossContractError("loss weights must be non-negative")


def spectrogram_l1(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise LossContractError(f"shape mismatch {pred.shape} vs {target.shape}")
    return (pred - target).abs().mean()


def decay_curve_db(spec: torch.Tensor) -> torch.Tensor:
    """Per-channel frame-energy backward integration in dB, (B, C, T)."""
    frame_energy = (spec**2).sum(dim=2)  # over frequency bins
    tail = torch.flip(torch.cumsum(torch.flip(frame_energy, [-1]), -1), [-1])
    return 10.0 * torch.log10(tail + ENERGY_DB_EPS)


def energy_decay_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean L1 between the pred/target per-frame energy decay curves (dB)."""
    if pred.shape != target.shape:
        raise LossContractError(f"shape mismatch {pred.shape} vs {target.shape}")
    return (decay_curve_db(pred) - decay_curve_db(target)).abs().mean()


def assert_frozen(matcher: torch.nn.Module):
    if any(p.requires_grad for p in matcher.parameters()):
        raise LossContractError("matcher must be frozen during model training")


def matcher_loss(pred_spec: torch.Tensor, mask_image: torch.Tensor,
                 matcher: torch.nn.Module) -> torch.Tensor:
    """BCE of the frozen matcher's score against the matching label.

    Gradients flow into pred_spec only; the matcher parameters are checked
    frozen and the module is run in eval mode.
    """
    assert_frozen(matcher)
    was_training = matcher.training
    matcher.eval()
    logits = matcher(mask_image, pred_spec)
    if was_training:
        matcher.train()
    target = torch.ones_like(logits)
    return torch.nn.functional.binary_cross_entropy_with_logits(logits, target)


def total_loss(
    pred_spatial: torch.Tensor,
    pred_material: torch.Tensor,
    target: torch.Tensor,
    mask_image: torch.Tensor = None,
    weights: LossWeights = LossWeights(),
    matcher: torch.nn.Module = None,
    spatial_only: bool = False,
    material_only: bool = False,
):
    """Combined objective; returns (scalar, weighted per-term breakdown).

    The matcher term is present only when a frozen matcher is supplied.
    Ablations: spatial_only drops the material terms, material_only drops the
    spatial terms.
    """
    if spatial_only and material_only:
        raise LossContractError("spatial_only and material_only are exclusive")
    breakdown = {}
    total = target.new_zeros(())
    if not material_only:
        breakdown["l1_s"] = weights.l1 * spectrogram_l1(pred_spatial, target)
        breakdown["ed_s"] = weights.energy_decay * energy_decay_loss(pred_spatial, target)
    if not spatial_only:
        breakdown["l1_m"] = weights.l1 * spectrogram_l1(pred_material, target)
        breakdown["ed_m"] = weights.energy_decay * energy_decay_loss(pred_material, target)
        if matcher is not None and weights.matcher > 0:
            if mask_image is None:
                raise LossContractError("matcher loss needs the mask image")
            breakdown["lc"] = weights.matcher * matcher_loss(
                pred_material, mask_image, matcher
            )
    for v in breakdown.values():
        total = total + v
    return total, breakdown
