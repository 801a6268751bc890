"""Confusion matrices, per-class and macro precision/recall/F1, ordinal error."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _key(label) -> str:
    return getattr(label, "key", None) or str(label)


def _harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i, j]`` = items of true class ``classes[i]`` predicted as ``classes[j]``."""

    classes: tuple
    counts: np.ndarray

    @classmethod
    def from_labels(cls, truth: Sequence, predicted: Sequence, classes: Sequence) -> "ConfusionMatrix":
        if len(truth) != len(predicted):
            raise ValueError(f"length mismatch: {len(truth)} true labels vs {len(predicted)} predictions")
        index = {c: i for i, c in enumerate(classes)}
        if len(index) != len(classes):
            raise ValueError("classes must be distinct")
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(truth, predicted):
            for lab in (t, p):
                if lab not in index:
                    raise ValueError(f"label {lab!r} not among classes {list(classes)!r}")
            counts[index[t], index[p]] += 1
        return cls(tuple(classes), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {"classes": [_key(c) for c in self.classes], "counts": self.counts.tolist()}


@dataclass
class MetricsReport:
    per_class: dict = field(default_factory=dict)   # label -> {precision, recall, f1}
    macro: dict = field(default_factory=dict)       # avg_precision, avg_recall, f1
    support: dict = field(default_factory=dict)
    absent_classes: list = field(default_factory=list)
    confusion: ConfusionMatrix | None = None
    f1_mode: str = "macro_pr"
    ordinal_error: float | None = None

    def to_dict(self) -> dict:
        d = {
            "per_class": {_key(k): v for k, v in self.per_class.items()},
            "macro": dict(self.macro),
            "support": {_key(k): v for k, v in self.support.items()},
            "absent_classes": [_key(c) for c in self.absent_classes],
            "f1_mode": self.f1_mode,
        }
        if self.confusion is not None:
            d["confusion"] = self.confusion.to_dict()
        if self.ordinal_error is not None:
            d["ordinal_error"] = self.ordinal_error
        return d


def compute_metrics(truth: Sequence, predicted: Sequence, classes: Sequence,
                    f1_mode: str = "macro_pr", ordinal: bool = False) -> MetricsReport:
    """One-vs-rest precision/recall per class and their unweighted macro means.

    ``f1_mode="macro_pr"`` takes F1 as the harmonic mean of macro precision
    and macro recall; ``"mean_per_class"`` averages the per-class F1 values.
    A class with no true and no predicted items scores 0 and is listed in
    ``absent_classes``. With ``ordinal=True`` the report also carries the
    mean absolute rank distance between prediction and truth, ranks being
    positions in ``classes``.
    """
    if f1_mode not in ("macro_pr", "mean_per_class"):
        raise ValueError(f"unknown f1_mode {f1_mode!r}")
    cm = ConfusionMatrix.from_labels(truth, predicted, classes)
    tp = np.diag(cm.counts).astype(np.float64)
    pred_tot = cm.counts.sum(axis=0)
    true_tot = cm.counts.sum(axis=1)
    report = MetricsReport(confusion=cm, f1_mode=f1_mode)
    precisions, recalls, f1s = [], [], []
    for i, c in enumerate(cm.classes):
        p = tp[i] / pred_tot[i] if pred_tot[i] else 0.0
        r = tp[i] / true_tot[i] if true_tot[i] else 0.0
        f = _harmonic(p, r)
        report.per_class[c] = {"precision": float(p), "recall": float(r), "f1": float(f)}
        report.support[c] = int(true_tot[i])
        if not pred_tot[i] and not true_tot[i]:
            report.absent_classes.append(c)
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)
    mp = float(sum(precisions) / len(classes))
    mr = float(sum(recalls) / len(classes))
    mf = _harmonic(mp, mr) if f1_mode == "macro_pr" else float(sum(f1s) / len(classes))
    report.macro = {"avg_precision": mp, "avg_recall": mr, "f1": mf}
    if ordinal:
        rank = {c: i for i, c in enumerate(cm.classes)}
        diffs = [abs(rank[p] - rank[t]) for t, p in zip(truth, predicted)]
        report.ordinal_error = float(np.mean(diffs)) if diffs else 0.0
    return report
