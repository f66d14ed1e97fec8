"""Evaluation harness: run inference over a test split, score PSNR/SSIM
against ground-truth transmissions, and render comparison tables.

Metrics are computed on the gamma-encoded, 8-bit-quantized rendering of each
image (what a viewer sees); the choice is recorded in the report metadata.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .datapipe import DatasetIndex, load_triple
from .imagecore import MetricReport, linear_to_srgb, psnr, ssim

log = logging.getLogger(__name__)

METRIC_SPACE = "gamma-encoded 8-bit"


@dataclass
class EvalRun:
    checkpoint_id: str
    dataset_id: str
    report: MetricReport
    input_baseline: MetricReport
    skipped: list[str] = field(default_factory=list)


def _quantized(img: np.ndarray) -> np.ndarray:
    return linear_to_srgb(img).astype(np.float64) / 255.0


def _score(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    a = _quantized(pred)
    b = _quantized(truth)
    return psnr(a, b), ssim(a, b)


def evaluate(
    infer_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    test_index: DatasetIndex,
    checkpoint_id: str = "model",
) -> EvalRun:
    """Score `infer_fn` on every indexed sample with ground-truth transmission.

    Also fills the model-independent Input baseline row (the blended input
    scored as if it were the predicted transmission).
    """
    report = MetricReport(metadata={"space": METRIC_SPACE, "checkpoint": checkpoint_id})
    baseline = MetricReport(metadata={"space": METRIC_SPACE, "checkpoint": "input"})
    skipped = []
    for entry in test_index.entries:
        if not entry.transmission_path.is_file():
            log.warning("sample %s: missing ground truth, skipped", entry.sample_id)
            skipped.append(entry.sample_id)
            continue
        triple = load_triple(entry)
        pred_t, _ = infer_fn(triple.input)
        report.add(entry.sample_id, *_score(pred_t, triple.transmission))
        baseline.add(entry.sample_id, *_score(triple.input, triple.transmission))
    return EvalRun(
        checkpoint_id=checkpoint_id,
        dataset_id=str(test_index.root),
        report=report,
        input_baseline=baseline,
        skipped=skipped,
    )


def report_rows(runs: list[EvalRun]) -> list[tuple[str, float, float]]:
    """Table rows (label, ssim, psnr): one Input baseline plus one row per run."""
    if not runs:
        raise ValueError("need at least one run")
    base = runs[0].input_baseline
    rows = [("Input", base.mean_ssim, base.mean_psnr)]
    for run in runs:
        rows.append((run.checkpoint_id, run.report.mean_ssim, run.report.mean_psnr))
    return rows


def format_table(runs: list[EvalRun]) -> str:
    rows = report_rows(runs)
    width = max(len(r[0]) for r in rows) + 2
    lines = [f"{'Method':<{width}}{'SSIM':>8}{'PSNR':>8}"]
    for label, s, p in rows:
        lines.append(f"{label:<{width}}{s:>8.3f}{p:>8.2f}")
    return "\n".join(lines)


def write_csv(runs: list[EvalRun], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "ssim", "psnr"])
        for label, s, p in report_rows(runs):
            writer.writerow([label, f"{s:.6f}", f"{p:.6f}"])


def read_csv(path) -> list[tuple[str, float, float]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        return [(label, float(s), float(p)) for label, s, p in reader]
