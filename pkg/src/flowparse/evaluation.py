"""Pixel-level parsing metrics: accuracy, foreground accuracy and macro P/R/F1."""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .grid import InvalidArgument, as_labels

SUMMARY_COLUMNS = ("accuracy", "fg_accuracy", "avg_precision", "avg_recall", "avg_f1")


def confusion(pred, gt, num_classes):
    """``K x K`` counts; cell ``(i, j)`` counts pixels with truth ``i`` predicted as ``j``."""
    pred = as_labels(pred, num_classes)
    gt = as_labels(gt, num_classes)
    if pred.shape != gt.shape:
        raise InvalidArgument(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    idx = gt.ravel() * num_classes + pred.ravel()
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class MetricsReport:
    accuracy: float
    fg_accuracy: float
    avg_precision: float
    avg_recall: float
    avg_f1: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    included: np.ndarray  # classes present in ground truth or prediction
    counts: np.ndarray  # the confusion matrix the report was computed from

    def summary(self):
        return [getattr(self, name) for name in SUMMARY_COLUMNS]


def compute_metrics(counts, background_class=0, include_background=True):
    counts = np.asarray(counts, dtype=np.int64)
    total = counts.sum()
    if total == 0:
        raise InvalidArgument("cannot compute metrics from an empty confusion matrix")
    diag = np.diag(counts)
    gt_totals = counts.sum(axis=1)
    pred_totals = counts.sum(axis=0)

    fg = np.ones(len(counts), dtype=bool)
    fg[background_class] = False
    fg_pixels = gt_totals[fg].sum()
    fg_accuracy = 1.0 if fg_pixels == 0 else float(diag[fg].sum() / fg_pixels)

    precision = _safe_div(diag, pred_totals)
    recall = _safe_div(diag, gt_totals)
    f1 = _safe_div(2 * precision * recall, precision + recall)

    included = (gt_totals + pred_totals) > 0
    averaged = included.copy()
    if not include_background:
        averaged[background_class] = False

    def avg(v):
        return float(v[averaged].mean()) if averaged.any() else 0.0

    return MetricsReport(
        accuracy=float(diag.sum() / total),
        fg_accuracy=fg_accuracy,
        avg_precision=avg(precision),
        avg_recall=avg(recall),
        avg_f1=avg(f1),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        included=included,
        counts=counts,
    )


def evaluate_frames(preds, gts, num_classes, background_class=0, include_background=True):
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for pred, gt in zip(preds, gts):
        counts += confusion(pred, gt, num_classes)
    return compute_metrics(counts, background_class, include_background)


def report_table(reports, class_names, method="method", background_class=0, include_background=True):
    """Aggregate per-video reports by summing their confusions; returns ``(report, csv_text)``."""
    if not reports:
        raise InvalidArgument("no reports to aggregate")
    counts = sum(r.counts for r in reports)
    if counts.shape[0] != len(class_names):
        raise InvalidArgument(f"{len(class_names)} class names for K={counts.shape[0]}")
    merged = compute_metrics(counts, background_class, include_background)
    return merged, table_csv([(method, merged)], class_names)


def table_csv(rows, class_names):
    """CSV with one row per ``(method, report)``: per-class F1 then the five summary metrics."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["method", *class_names, *SUMMARY_COLUMNS])
    for method, rep in rows:
        out.writerow([method, *(f"{v:.4f}" for v in rep.per_class_f1),
                      *(f"{v:.4f}" for v in rep.summary())])
    return buf.getvalue()
