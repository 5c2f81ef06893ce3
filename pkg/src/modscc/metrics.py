"""Confusion-matrix metrics for the Plant, Disease and Total (joint) tasks."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

METRIC_NAMES = ("accuracy", "macro_precision", "macro_recall", "macro_f1")
TASKS = ("Plant", "Disease", "Total")


@dataclass
class ConfusionMatrix:
    """Counts with rows = ground truth, columns = prediction.

    ``scored`` limits which classes enter the macro averages (all by default).
    """

    counts: np.ndarray
    scored: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        if self.scored is None:
            self.scored = np.arange(self.k)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self) -> dict[str, np.ndarray]:
        c = self.counts
        tp = np.diag(c)
        fp = c.sum(axis=0) - tp
        fn = c.sum(axis=1) - tp
        tn = c.sum() - tp - fp - fn
        return {"tp": tp, "fp": fp, "fn": fn, "tn": tn}


def confusion(y_true, y_pred, k: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"label arrays must be 1-d and equal length: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("cannot build a confusion matrix from zero samples")
    for name, y in (("y_true", y_true), ("y_pred", y_pred)):
        if y.min() < 0 or y.max() >= k:
            raise ValueError(f"{name} has labels outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = num.astype(np.float64)
    den = den.astype(np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class MetricReport:
    task: str
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_f1: float
    weighted_f1: float
    n_samples: int
    per_class: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> dict:
        return {m: getattr(self, m) for m in METRIC_NAMES}


def scores(cm: ConfusionMatrix, task: str = "") -> MetricReport:
    """Accuracy plus one-vs-rest precision/recall/F1, macro-averaged over the scored classes.

    A class with a zero denominator scores 0 and still counts in the macro mean.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    o = cm.one_vs_rest()
    precision = _ratio(o["tp"], o["tp"] + o["fp"])
    recall = _ratio(o["tp"], o["tp"] + o["fn"])
    f1 = _ratio(2 * precision * recall, precision + recall)
    sel = cm.scored
    accuracy = float(np.trace(cm.counts)) / cm.total
    support = cm.counts.sum(axis=1)
    # micro F1 over single-label predictions equals the fraction of correct samples
    micro_f1 = accuracy
    sup = support[sel].astype(np.float64)
    weighted_f1 = float((f1[sel] * sup).sum() / sup.sum()) if sup.sum() > 0 else 0.0
    per_class = [
        {"class": int(c), "precision": float(precision[c]), "recall": float(recall[c]), "f1": float(f1[c]),
         "support": int(support[c])}
        for c in sel
    ]
    return MetricReport(
        task=task,
        accuracy=accuracy,
        macro_precision=float(precision[sel].mean()),
        macro_recall=float(recall[sel].mean()),
        macro_f1=float(f1[sel].mean()),
        micro_f1=micro_f1,
        weighted_f1=weighted_f1,
        n_samples=cm.total,
        per_class=per_class,
    )


def joint_task_labels(plant_true, plant_pred, disease_true, disease_pred, n_disease: int):
    """Encode (plant, disease) as ``plant * n_disease + disease``.

    Returns ``(joint_true, joint_pred, classes)`` re-indexed onto the ground
    truth pairs actually observed; any predicted pair outside that set maps to
    one extra column that never appears in the truth.
    """
    arrays = [np.asarray(a, dtype=np.int64) for a in (plant_true, plant_pred, disease_true, disease_pred)]
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("plant and disease label arrays must have equal lengths")
    pt, pp, dt, dp = arrays
    jt = pt * n_disease + dt
    jp = pp * n_disease + dp
    classes = np.unique(jt)
    index = {int(c): i for i, c in enumerate(classes)}
    other = len(classes)
    jt_idx = np.array([index[int(c)] for c in jt], dtype=np.int64)
    jp_idx = np.array([index.get(int(c), other) for c in jp], dtype=np.int64)
    return jt_idx, jp_idx, classes


def task_reports(plant_true, plant_pred, disease_true, disease_pred, n_plant: int, n_disease: int) -> dict[str, MetricReport]:
    """Plant, Disease and Total reports; Total counts a sample correct only when both labels are."""
    out = {}
    if plant_pred is not None:
        out["Plant"] = scores(confusion(plant_true, plant_pred, n_plant), "Plant")
    if disease_pred is not None:
        out["Disease"] = scores(confusion(disease_true, disease_pred, n_disease), "Disease")
    if plant_pred is not None and disease_pred is not None:
        jt, jp, classes = joint_task_labels(plant_true, plant_pred, disease_true, disease_pred, n_disease)
        m = len(classes)
        cm = confusion(jt, jp, m + 1)
        cm.scored = np.arange(m)
        out["Total"] = scores(cm, "Total")
    return out


@dataclass
class RunAggregate:
    task: str
    n_runs: int
    mean: dict[str, float]
    std: dict[str, float]

    def cell(self, metric: str, digits: int = 5) -> str:
        return f"{self.mean[metric]:.{digits}f} ± {self.std[metric]:.{digits}f}"


def aggregate(runs: Sequence[MetricReport]) -> RunAggregate:
    """Mean and sample standard deviation (ddof=1; 0 for a single run) per metric."""
    if not runs:
        raise ValueError("aggregate needs at least one run")
    tasks = {r.task for r in runs}
    if len(tasks) != 1:
        raise ValueError(f"cannot aggregate reports of different tasks: {sorted(tasks)}")
    mean, std = {}, {}
    for m in METRIC_NAMES + ("micro_f1", "weighted_f1"):
        vals = np.array([getattr(r, m) for r in runs], dtype=np.float64)
        mean[m] = float(vals.mean())
        std[m] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return RunAggregate(tasks.pop(), len(runs), mean, std)


def write_reports_csv(reports: dict[str, MetricReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "accuracy", "macro_precision", "macro_recall", "macro_f1", "micro_f1",
                    "weighted_f1", "n_samples"])
        for task, r in reports.items():
            w.writerow([task, repr(r.accuracy), repr(r.macro_precision), repr(r.macro_recall),
                        repr(r.macro_f1), repr(r.micro_f1), repr(r.weighted_f1), r.n_samples])


def write_reports_json(reports: dict[str, MetricReport], path) -> None:
    with open(path, "w") as fh:
        json.dump({t: r.as_dict() for t, r in reports.items()}, fh, indent=1)


def read_reports_json(path) -> dict[str, MetricReport]:
    with open(path) as fh:
        raw = json.load(fh)
    return {t: MetricReport(**r) for t, r in raw.items()}


def format_aggregate_table(aggs: dict[str, RunAggregate], digits: int = 5) -> str:
    """Text table ``task | Acc. | F1`` with ``mean ± std`` cells."""
    lines = [f"{'task':<8} {'Acc.':>20} {'F1':>20}"]
    for task in TASKS:
        if task in aggs:
            a = aggs[task]
            lines.append(f"{task:<8} {a.cell('accuracy', digits):>20} {a.cell('macro_f1', digits):>20}")
    return "\n".join(lines)


def chance_level(k: int) -> float:
    return 1.0 / k if k > 0 else math.nan
