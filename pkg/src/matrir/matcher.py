"""Mask/RIR correspondence matcher and its pretraining."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import EpochSampler, load_sample_tensors
from .dataset import SplitManifest


class MatcherDataError(ValueError):
    pass


class ResidualBlock(nn.Module):
    def __init__(self, c_in, c_out, stride=2):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        if stride != 1 or c_in != c_out:
            self.skip = nn.Sequential(
                nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False),
                nn.BatchNorm2d(c_out),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.skip(x))


class SmallResNet(nn.Module):
    """4-block residual CNN (desk-scale stand-in for an 18-layer one).

    `input_pool` average-pools the input down first (spectrograms are smooth
    enough for this and it keeps CPU cost sane); `log_scale` applies
    log1p(scale * x) for magnitude inputs.
    """

    def __init__(self, in_channels: int, out_dim: int, width: int = 64,
                 input_pool: int = 1, log_scale: float = 0.0):
        super().__init__()
        self.input_pool = input_pool
        self.log_scale = log_scale
        widths = [width, width, 2 * width, 2 * width]
        self.stem = nn.Conv2d(in_channels, width, 3, stride=2, padding=1, bias=False)
        self.stem_bn = nn.BatchNorm2d(width)
        blocks, c_prev = [], width
        for c in widths:
            blocks.append(ResidualBlock(c_prev, c, stride=2))
            c_prev = c
        self.blocks = nn.Sequential(*blocks)
        self.fc = nn.Linear(c_prev, out_dim)

    def forward(self, x):
        if self.log_scale > 0:
            x = torch.log1p(self.log_scale * x)
        if self.input_pool > 1:
            x = F.avg_pool2d(x, self.input_pool)
        x = F.relu(self.stem_bn(self.stem(x)))
        x = self.blocks(x)
        x = x.mean(dim=(2, 3))
        return self.fc(x)


class BandDecayEncoder(nn.Module):
    """Embeds per-band Schroeder decay shapes of a magnitude spectrogram.

    Frame energies in `n_bands` frequency bands are backward-integrated and
    level-normalized, so the features capture the band-wise decay shape (the
    material signature) while absolute level and room-size effects cancel.
    """

    def __init__(self, embed_dim: int, n_bands: int = 8):
        super().__init__()
        self.n_bands = n_bands
        self.net = nn.Sequential(
            nn.Conv1d(n_bands, 32, 9, stride=2, padding=4),
            nn.ReLU(),
            nn.Conv1d(32, 32, 9, stride=2, padding=4),
            nn.ReLU(),
            nn.Conv1d(32, 32, 9, stride=2, padding=4),
            nn.ReLU(),
            nn.AdaptiveAvgPool1d(8),
        )
        self.fc = nn.Linear(32 * 8, embed_dim)

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        b, c, f, t = spec.shape
        energy = (spec**2).mean(dim=1)  # (B, F, T)
        bands = energy.reshape(b, self.n_bands, f // self.n_bands, t).sum(dim=2)
        tail = torch.flip(torch.cumsum(torch.flip(bands, [-1]), -1), [-1])
        db = 10.0 * torch.log10(tail + 1e-10)
        db = db - db[:, :, :1]  # 0 dB at t=0: decay shape only
        z = self.net(db / 60.0).flatten(1)
        return self.fc(z)


class RirBranch(nn.Module):
    """Spectrogram encoder: small residual CNN + band-decay features."""

    def __init__(self, embed_dim: int, width: int, spec_pool: int):
        super().__init__()
        self.cnn = SmallResNet(
            2, embed_dim, width=width, input_pool=spec_pool, log_scale=20.0
        )
        self.decay = BandDecayEncoder(embed_dim)
        self.fc = nn.Linear(2 * embed_dim, embed_dim)

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        return self.fc(torch.cat([self.cnn(spec), self.decay(spec)], dim=-1))


class MatcherNet(nn.Module):
    """Dual-branch encoder + 3-layer head scoring (mask, RIR) agreement.

    The head sees the two embeddings plus their elementwise product and
    absolute difference (standard two-stream comparison features; without
    them the correspondence signal is too slow to learn at desk scale).
    """

    def __init__(self, embed_dim: int = 128, width: int = 32, spec_pool: int = 4):
        super().__init__()
        self.mask_branch = SmallResNet(3, embed_dim, width=width)
        self.rir_branch = RirBranch(embed_dim, width, spec_pool)
        self.head = nn.Sequential(
            nn.Linear(4 * embed_dim, embed_dim),
            nn.ReLU(),
            nn.Linear(embed_dim, embed_dim // 2),
            nn.ReLU(),
            nn.Linear(embed_dim // 2, 1),
        )

    def forward(self, mask_image: torch.Tensor, spec: torch.Tensor) -> torch.Tensor:
        zm = self.mask_branch(mask_image)
        zr = self.rir_branch(spec)
        z = torch.cat([zm, zr, zm * zr, (zm - zr).abs()], dim=-1)
        return self.head(z).squeeze(-1)

    def score(self, mask_image, spec) -> torch.Tensor:
        return torch.sigmoid(self(mask_image, spec))


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()
    return module


def _mismatch_batch(rng, masks, specs, config_ids, negative_fraction):
    """Within-batch negatives: masks re-paired with RIRs of other configs."""
    n = len(config_ids)
    labels = torch.ones(n)
    masks = masks.clone()
    n_neg = int(round(negative_fraction * n))
    neg_idx = rng.choice(n, size=n_neg, replace=False)
    for i in neg_idx:
        for _ in range(20):
            j = int(rng.integers(0, n))
            if config_ids[j] != config_ids[i]:
                masks[i] = masks[j]
                labels[i] = 0.0
                break
    return masks, specs, labels


def matcher_eval_pairs(man: SplitManifest, catalog, split: str = "uu", seed: int = 0):
    """Balanced matched/mismatched pairs from held-out records."""
    records = man.records(split)
    rng = np.random.default_rng(seed)
    masks, specs, labels = [], [], []
    for r in records:
        v, d, m, a = load_sample_tensors(man, r, catalog)
        masks.append(m)
        specs.append(a)
        labels.append(1.0)
    for i, r in enumerate(records):
        for _ in range(50):
            j = int(rng.integers(0, len(records)))
            if man.records(split)[j].config_id != r.config_id:
                masks.append(masks[j])
                specs.append(specs[i])
                labels.append(0.0)
                break
    return torch.stack(masks), torch.stack(specs), torch.tensor(labels)


def matcher_accuracy(matcher: MatcherNet, masks, specs, labels,
                     batch_size: int = 16) -> float:
    matcher.eval()
    hits = 0
    with torch.no_grad():
        for lo in range(0, len(labels), batch_size):
            sl = slice(lo, lo + batch_size)
            scores = matcher.score(masks[sl], specs[sl])
            hits += int(((scores > 0.5).float() == labels[sl]).sum())
    return hits / len(labels)


def pretrain_matcher(
    man: SplitManifest,
    catalog,
    epochs: int = 10,
    batch_size: int = 16,
    lr: float = 1e-3,
    negative_fraction: float = 0.75,
    seed: int = 0,
    width: int = 32,
    eval_split: str = "uu",
    log=None,
):
    """Train the correspondence matcher on the training split only.

    Negatives are within-batch mismatched (mask, RIR) pairs at the configured
    fraction. Returns (frozen matcher, held-out accuracy on balanced pairs
    from unseen scenes).
    """
    records = man.records("train")
    if len(records) < 2 * batch_size:
        raise MatcherDataError("training split too small for negative sampling")
    torch.manual_seed(seed)
    matcher = MatcherNet(width=width)
    opt = torch.optim.Adam(matcher.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
    sampler = EpochSampler(len(records), batch_size, seed)
    rng = np.random.default_rng(seed + 1)
    # negative-heavy batches would otherwise reward a constant "mismatch"
    pos_weight = torch.tensor(negative_fraction / max(1e-6, 1 - negative_fraction))

    matcher.train()
    for epoch in range(epochs):
        epoch_loss, n_batches = 0.0, 0
        for idx in sampler.epoch():
            if len(idx) < 4:
                continue
            batch = [records[i] for i in idx]
            tensors = [load_sample_tensors(man, r, catalog) for r in batch]
            masks = torch.stack([t[2] for t in tensors])
            specs = torch.stack([t[3] for t in tensors])
            cfg_ids = [r.config_id for r in batch]
            masks, specs, labels = _mismatch_batch(
                rng, masks, specs, cfg_ids, negative_fraction
            )
            logits = matcher(masks, specs)
            loss = F.binary_cross_entropy_with_logits(
                logits, labels, pos_weight=pos_weight
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            n_batches += 1
        sched.step()
        if log:
            log({"matcher_epoch": epoch, "loss": epoch_loss / max(n_batches, 1)})

    masks, specs, labels = matcher_eval_pairs(man, catalog, eval_split, seed)
    acc = matcher_accuracy(matcher, masks, specs, labels)
    return freeze(matcher), acc
