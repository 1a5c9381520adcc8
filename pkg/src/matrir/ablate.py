"""Ablation runner: the four component-removal variants plus the full model."""
from __future__ import annotations

import json
from dataclasses import asdict, replace
from pathlib import Path

from .dataset import load_catalog, load_manifest
from .evaluate import evaluate_split, model_predict_fn
from .judges import compute_matc, compute_matd
from .metrics import aggregate, format_table
from .model import load_checkpoint
from .train import TrainConfig, run_training

ABLATION_ROWS = {
    "full": {},
    "no_matcher": {"no_matcher": True},  # row a: drop the correspondence loss
    "no_reweight": {"no_reweight_tokens": True},  # row b: drop gating tokens
    "spatial_only": {"spatial_only": True, "no_matcher": True},  # row c
    "material_only": {"material_only": True},  # row d
}


def ablation_config(base: TrainConfig, row: str) -> TrainConfig:
    cfg = replace(base, **ABLATION_ROWS[row])
    cfg.out_dir = str(Path(base.out_dir) / row)
    return cfg


def run_ablation(
    base: TrainConfig,
    rows=("full", "no_matcher", "no_reweight", "spatial_only", "material_only"),
    matcher=None,
    judges: dict = None,
    eval_split: str = "uu",
    batch_size: int = 8,
    keep_per_sample: bool = False,
) -> dict:
    """Train each variant on the shared dataset/seed and report on one split.

    Returns {row: MetricReport}; also writes a comparison table next to the
    base out_dir.
    """
    man = load_manifest(base.dataset_root)
    catalog = load_catalog(base.dataset_root)
    reports = {}
    for row in rows:
        cfg = ablation_config(base, row)
        row_matcher = None if cfg.no_matcher else matcher
        summary = run_training(cfg, matcher=row_matcher)
        net, _ = load_checkpoint(summary["checkpoint"])
        samples = evaluate_split(
            man, catalog, eval_split, predict=model_predict_fn(net),
            batch_size=batch_size,
        )
        matc = matd = None
        if judges:
            matc = compute_matc(net, man, catalog, judges["matc_clf"], batch_size)
            matd = compute_matd(
                net, man, catalog, judges["clusters"], judges["matd_clf"],
                eval_split, batch_size=batch_size,
            )
        reports[row] = aggregate(
            eval_split, samples, matc=matc, matd=matd,
            keep_per_sample=keep_per_sample,
        )

    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = format_table(reports, title=f"Ablations on split {eval_split}")
    (out / "ablation_table.txt").write_text(table)
    (out / "ablation_reports.json").write_text(
        json.dumps({k: json.loads(v.to_json()) for k, v in reports.items()},
                   indent=1, sort_keys=True)
    )
    return reports
