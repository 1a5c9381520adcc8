"""Evaluation driver: six-metric reports per split."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .data import batch_tensors
from .dataset import SplitManifest, check_manifest_invariants, load_catalog, load_manifest, load_rir
from .judges import compute_matc, compute_matd
from .metrics import MetricReport, SampleMetrics, aggregate, format_table, standard_metrics
from .model import load_checkpoint

EVAL_SPLITS = ("us", "uu", "uk")


def model_predict_fn(net):
    net.eval()

    def predict(v, d, m):
        with torch.no_grad():
            return net(v, d, m)

    return predict


def ground_truth_predict_fn(man: SplitManifest, catalog):
    """Oracle upper bound: returns the stored targets as predictions."""

    def predict_records(records):
        _, _, _, a = batch_tensors(man, records, catalog)
        return a, a

    return predict_records


def evaluate_split(
    man: SplitManifest,
    catalog,
    split: str,
    predict=None,
    predict_records=None,
    batch_size: int = 8,
    gl_iterations: int = 32,
    use_true_waveforms: bool = True,
    keep_per_sample: bool = True,
) -> list:
    """Per-sample standard metrics for one split.

    `predict(v, d, m)` maps input tensors to (A_s, A_m); alternatively
    `predict_records(records)` maps records directly (oracle paths). Target
    waveforms come from disk; prediction waveforms are phase-retrieved.
    """
    records = man.records(split)
    out = []
    for lo in range(0, len(records), batch_size):
        chunk = records[lo : lo + batch_size]
        if predict_records is not None:
            _, a_m = predict_records(chunk)
        else:
            v, d, m, _ = batch_tensors(man, chunk, catalog)
            _, a_m = predict(v, d, m)
        for r, pred in zip(chunk, a_m):
            target = dsp.Spectrogram(
                np.asarray(
                    batch_tensors(man, [r], catalog)[3][0], dtype=np.float64
                )
            )
            pred_spec = dsp.Spectrogram(np.asarray(pred, dtype=np.float64))
            target_wave = load_rir(man.sample_dir(r)) if use_true_waveforms else None
            out.append(
                standard_metrics(
                    pred_spec,
                    target,
                    target_wave=target_wave,
                    sample_id=r.sample_id,
                    gl_iterations=gl_iterations,
                )
            )
    return out


def run_evaluation(
    checkpoint,
    dataset_root,
    split: str,
    judges: dict = None,
    out_path=None,
    batch_size: int = 8,
    keep_per_sample: bool = True,
) -> MetricReport:
    """Full six-metric report for one eval split.

    `judges`: optional {"matc_clf": ..., "matd_clf": ..., "clusters": ...};
    the material metrics are reported only when provided.
    """
    if split not in EVAL_SPLITS:
        raise ValueError(f"split must be one of {EVAL_SPLITS}")
    man = load_manifest(dataset_root)
    catalog = load_catalog(dataset_root)
    check_manifest_invariants(man, catalog)

    if isinstance(checkpoint, (str, Path)):
        net, _ = load_checkpoint(checkpoint)
    else:
        net = checkpoint
    samples = evaluate_split(
        man, catalog, split, predict=model_predict_fn(net), batch_size=batch_size
    )
    matc = matd = None
    if judges:
        matc = compute_matc(net, man, catalog, judges["matc_clf"], batch_size)
        matd = compute_matd(
            net, man, catalog, judges["clusters"], judges["matd_clf"], split,
            batch_size=batch_size,
        )
    report = aggregate(split, samples, matc=matc, matd=matd,
                       keep_per_sample=keep_per_sample)
    if out_path:
        Path(out_path).write_text(report.to_json())
        table = format_table({f"model ({split})": report})
        Path(str(out_path) + ".txt").write_text(table)
    return report
