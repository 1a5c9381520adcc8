"""Standard RIR metrics and the six-column evaluation report."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import dsp

METRIC_DIRECTIONS = {
    "l1": "lower",
    "stft": "lower",
    "rte_ms": "lower",
    "cte_db": "lower",
    "matc": "higher",
    "matd": "higher",
}
# table convention: L1 and STFT are displayed scaled by 1e-2
TABLE_SCALE = {"l1": 100.0, "stft": 100.0}
TABLE_COLUMNS = ("l1", "stft", "rte_ms", "cte_db", "matc", "matd")
TABLE_HEADERS = ("L1", "STFT", "RTE", "CTE", "MatC", "MatD")


@dataclass
class SampleMetrics:
    sample_id: str
    l1: float
    stft: float
    cte_db: float
    rte_ms: Optional[float]  # None when the RT60 fit failed
    rte_valid: bool


@dataclass
class MetricReport:
    split: str
    n_samples: int
    l1: float
    stft: float
    rte_ms: Optional[float]
    cte_db: float
    invalid_rte: int
    matc: Optional[float] = None
    matd: Optional[float] = None
    per_sample: list = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["directions"] = METRIC_DIRECTIONS
        d["display_scale"] = TABLE_SCALE
        return json.dumps(d, indent=1, sort_keys=True)

    def table_row(self) -> dict:
        row = {}
        for col in TABLE_COLUMNS:
            val = getattr(self, col)
            if val is None:
                row[col] = None
            else:
                row[col] = val * TABLE_SCALE.get(col, 1.0)
        return row


def format_table(rows: dict, title: str = "") -> str:
    """rows: name -> MetricReport. Columns follow the published order."""
    lines = []
    if title:
        lines.append(title)
    header = f"{'Method':<24}" + "".join(f"{h:>10}" for h in TABLE_HEADERS)
    lines.append(header)
    lines.append("-" * len(header))
    for name, report in rows.items():
        row = report.table_row()
        cells = []
        for col in TABLE_COLUMNS:
            v = row[col]
            cells.append(f"{v:>10.2f}" if v is not None else f"{'-':>10}")
        lines.append(f"{name:<24}" + "".join(cells))
    lines.append(
        "L1/STFT scaled x1e-2; RTE in ms; CTE in dB; lower is better. "
        "MatC/MatD in %; higher is better."
    )
    return "\n".join(lines)


def standard_metrics(
    pred: dsp.Spectrogram,
    target: dsp.Spectrogram,
    pred_wave: dsp.RIRWaveform = None,
    target_wave: dsp.RIRWaveform = None,
    sample_id: str = "",
    gl_iterations: int = 32,
) -> SampleMetrics:
    """Per-sample L1 / STFT / RTE / CTE record.

    Waveform-domain metrics use phase-retrieved inversion when a waveform is
    not supplied. An RT60 fit failure flags the sample invalid for RTE only.
    """
    if pred.magnitudes.shape != target.magnitudes.shape:
        raise dsp.SignalError("prediction/target shape mismatch")
    diff = pred.magnitudes - target.magnitudes
    l1 = float(np.abs(diff).mean())
    stft_err = float((diff**2).mean())

    if pred_wave is None:
        pred_wave = dsp.invert_magnitude(pred, iterations=gl_iterations).waveform
    if target_wave is None:
        target_wave = dsp.invert_magnitude(target, iterations=gl_iterations).waveform

    cte = abs(
        dsp.early_to_late_db(pred_wave).db - dsp.early_to_late_db(target_wave).db
    )
    try:
        rte = abs(dsp.estimate_rt60(pred_wave) - dsp.estimate_rt60(target_wave)) * 1e3
        rte_valid = True
    except dsp.DecayRangeError:
        rte, rte_valid = None, False
    return SampleMetrics(sample_id, l1, stft_err, float(cte), rte, rte_valid)


def aggregate(split: str, samples: list, matc=None, matd=None,
              keep_per_sample: bool = True) -> MetricReport:
    """Mean over valid samples; RTE averages only RT60-fit successes."""
    valid_rte = [s.rte_ms for s in samples if s.rte_valid]
    return MetricReport(
        split=split,
        n_samples=len(samples),
        l1=float(np.mean([s.l1 for s in samples])),
        stft=float(np.mean([s.stft for s in samples])),
        rte_ms=float(np.mean(valid_rte)) if valid_rte else None,
        cte_db=float(np.mean([s.cte_db for s in samples])),
        invalid_rte=sum(not s.rte_valid for s in samples),
        matc=matc,
        matd=matd,
        per_sample=[asdict(s) for s in samples] if keep_per_sample else [],
    )
