"""Training loop and experiment configuration."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import BatchStream, batch_tensors
from .dataset import check_manifest_invariants, load_catalog, load_manifest
from .losses import LossWeights, total_loss
from .model import ModelConfig, init_model, save_checkpoint
from .model.net import DisentangledRIRNet


class TrainConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    dataset_root: str
    out_dir: str
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    lr: float = 7e-5
    schedule: str = "cosine"
    batch_size: int = 16  # desk default; grad_accum emulates larger batches
    grad_accum: int = 1
    max_steps: int = 2000
    seed: int = 0
    loss_weights: dict = field(default_factory=dict)
    no_matcher: bool = False
    no_reweight_tokens: bool = False
    spatial_only: bool = False
    material_only: bool = False
    matcher_path: str = ""
    eval_every: int = 200
    patience: int = 10
    checkpoint_every: int = 500
    train_records_limit: int = 0  # 0 = all (the overfit mode sets 32)
    stop_when: dict = field(default_factory=dict)  # e.g. {"total_below": 0.1}

    def __post_init__(self):
        if self.spatial_only and self.material_only:
            raise TrainConfigError("spatial_only and material_only are exclusive")
        if self.schedule not in ("cosine", "constant"):
            raise TrainConfigError(f"unknown schedule {self.schedule}")
        if self.max_steps < 1 or self.batch_size < 1 or self.grad_accum < 1:
            raise TrainConfigError("invalid step/batch configuration")

    def model_config(self) -> ModelConfig:
        overrides = dict(self.model)
        if self.spatial_only:
            overrides["variant"] = "spatial_only"
        elif self.material_only:
            overrides["variant"] = "material_only"
        if self.no_reweight_tokens:
            overrides["use_reweight_tokens"] = False
        if "upsampler_channels" in overrides:
            overrides["upsampler_channels"] = tuple(overrides["upsampler_channels"])
        return ModelConfig(**overrides)

    def weights(self) -> LossWeights:
        return LossWeights(**self.loss_weights)


def make_scheduler(opt, cfg: TrainConfig):
    if cfg.schedule == "cosine":
        return torch.optim.lr_scheduler.CosineAnnealingLR(
            opt, T_max=cfg.max_steps, eta_min=0.0
        )
    return torch.optim.lr_scheduler.ConstantLR(opt, factor=1.0, total_iters=1)


class JsonlLogger:
    """Append-only structured log; every reported number is replayable."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def __call__(self, record: dict):
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _eval_l1(net, man, catalog, records, batch_size, variant):
    net.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for lo in range(0, len(records), batch_size):
            chunk = records[lo : lo + batch_size]
            v, d, m, a = batch_tensors(man, chunk, catalog)
            a_s, a_m = net(v, d, m)
            pred = a_s if variant == "spatial_only" else a_m
            total += float((pred - a).abs().mean()) * len(chunk)
            count += len(chunk)
    net.train()
    return total / max(count, 1)


def run_training(cfg: TrainConfig, matcher=None, log=None) -> dict:
    """Train a model on a built dataset; deterministic under cfg.seed.

    Aborts on any split-protocol violation in the manifest. Writes JSONL loss
    breakdowns, periodic checkpoints and a final/best checkpoint; returns a
    summary with the checkpoint paths and loss trajectory endpoints.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = load_manifest(cfg.dataset_root)
    catalog = load_catalog(cfg.dataset_root)
    check_manifest_invariants(man, catalog)

    torch.manual_seed(cfg.seed)
    model_cfg = cfg.model_config()
    net = init_model(model_cfg, cfg.seed)
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    sched = make_scheduler(opt, cfg)
    weights = cfg.weights()

    use_matcher = (
        not cfg.no_matcher
        and not cfg.spatial_only
        and weights.matcher > 0
    )
    if use_matcher and matcher is None:
        if not cfg.matcher_path:
            raise TrainConfigError(
                "matcher required: pretrain it or set no_matcher/matcher_path"
            )
        from .matcher import MatcherNet, freeze

        matcher = MatcherNet()
        payload = torch.load(cfg.matcher_path, map_location="cpu", weights_only=False)
        matcher.load_state_dict(payload["state_dict"])
        freeze(matcher)
    if not use_matcher:
        matcher = None

    records = list(man.records("train"))
    if cfg.train_records_limit:
        records = records[: cfg.train_records_limit]
    val_records = list(man.records("val"))
    stream = BatchStream(len(records), cfg.batch_size, cfg.seed)
    logger = log or JsonlLogger(out / "train_log.jsonl")

    step = 0
    step0_total = None
    last_total = None
    best_val = float("inf")
    evals_since_best = 0
    stopped = ""
    t_start = time.time()

    while step < cfg.max_steps:
        opt.zero_grad()
        accum_total = 0.0
        accum_parts: dict = {}
        for _ in range(cfg.grad_accum):
            chunk = [records[i] for i in stream.next_batch()]
            v, d, m, a = batch_tensors(man, chunk, catalog)
            a_s, a_m = net(v, d, m)
            loss, parts = total_loss(
                a_s, a_m, a, m, weights, matcher,
                spatial_only=cfg.spatial_only, material_only=cfg.material_only,
            )
            (loss / cfg.grad_accum).backward()
            accum_total += float(loss.detach()) / cfg.grad_accum
            for k, t in parts.items():
                accum_parts[k] = accum_parts.get(k, 0.0) + float(t.detach()) / cfg.grad_accum
        opt.step()
        sched.step()
        step += 1
        last_total = accum_total
        if step0_total is None:
            step0_total = accum_total
        record = {"step": step, "total": accum_total, "lr": sched.get_last_lr()[0]}
        record.update(accum_parts)
        logger(record)

        if cfg.stop_when.get("total_below") and accum_total < cfg.stop_when["total_below"]:
            stopped = "target_loss"
            break
        if val_records and cfg.eval_every and step % cfg.eval_every == 0:
            val_l1 = _eval_l1(
                net, man, catalog, val_records, cfg.batch_size, model_cfg.variant
            )
            logger({"step": step, "val_l1": val_l1})
            if val_l1 < best_val - 1e-6:
                best_val = val_l1
                evals_since_best = 0
                save_checkpoint(out / "best.pt", net, {"step": step, "val_l1": val_l1})
            else:
                evals_since_best += 1
                if evals_since_best >= cfg.patience:
                    stopped = "early_stop"
                    break
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            _save_resumable(out / f"step{step:06d}.pt", net, opt, sched, stream, step, cfg)

    final_path = out / "final.pt"
    _save_resumable(final_path, net, opt, sched, stream, step, cfg)
    summary = {
        "steps": step,
        "step0_total": step0_total,
        "final_total": last_total,
        "best_val_l1": best_val if best_val < float("inf") else None,
        "stopped": stopped or "max_steps",
        "checkpoint": str(final_path),
        "best_checkpoint": str(out / "best.pt") if (out / "best.pt").exists() else "",
        "wall_seconds": time.time() - t_start,
        "final_lr": sched.get_last_lr()[0],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


def _save_resumable(path, net, opt, sched, stream, step, cfg):
    save_checkpoint(
        path,
        net,
        {
            "step": step,
            "optimizer": opt.state_dict(),
            "scheduler": sched.state_dict(),
            "stream_state": stream.state(),
            "torch_rng": torch.get_rng_state(),
            "train_config": asdict(cfg),
        },
    )


def resume_training(checkpoint_path, extra_steps: int, matcher=None, log=None) -> dict:
    """Continue a run from a resumable checkpoint; losses reproduce the
    uninterrupted run within float tolerance."""
    payload = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
    cfg = TrainConfig(**payload["train_config"])
    man = load_manifest(cfg.dataset_root)
    catalog = load_catalog(cfg.dataset_root)

    net = init_model(cfg.model_config(), cfg.seed)
    net.load_state_dict(payload["state_dict"])
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    opt.load_state_dict(payload["optimizer"])
    sched = make_scheduler(opt, cfg)
    sched.load_state_dict(payload["scheduler"])
    torch.set_rng_state(payload["torch_rng"])

    records = list(man.records("train"))
    if cfg.train_records_limit:
        records = records[: cfg.train_records_limit]
    stream = BatchStream(len(records), cfg.batch_size, cfg.seed)
    stream.restore(payload["stream_state"])

    weights = cfg.weights()
    use_matcher = not cfg.no_matcher and not cfg.spatial_only and weights.matcher > 0
    if not use_matcher:
        matcher = None

    losses = []
    step = payload["step"]
    for _ in range(extra_steps):
        opt.zero_grad()
        accum = 0.0
        for _ in range(cfg.grad_accum):
            chunk = [records[i] for i in stream.next_batch()]
            v, d, m, a = batch_tensors(man, chunk, catalog)
            a_s, a_m = net(v, d, m)
            loss, _ = total_loss(
                a_s, a_m, a, m, weights, matcher,
                spatial_only=cfg.spatial_only, material_only=cfg.material_only,
            )
            (loss / cfg.grad_accum).backward()
            accum += float(loss.detach()) / cfg.grad_accum
        opt.step()
        sched.step()
        step += 1
        losses.append(accum)
        if log:
            log({"step": step, "total": accum, "resumed": True})
    return {"losses": losses, "final_step": step, "net": net}
