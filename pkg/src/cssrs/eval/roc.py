"""One-vs-rest ROC curves with tied scores grouped into one threshold step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class RocCurve:
    positive_class: object
    points: tuple[tuple[float, float], ...]   # (fpr, tpr), starting at (0, 0)
    auc: float

    def to_dict(self) -> dict:
        return {
            "positive_class": getattr(self.positive_class, "key", str(self.positive_class)),
            "points": [list(p) for p in self.points],
            "auc": self.auc,
        }


def compute_roc(truth: Sequence, scores: Sequence[Mapping], positive_class) -> RocCurve:
    """ROC of ``scores[i][positive_class]`` against ``truth[i] == positive_class``.

    One point per distinct score, visited from high to low; AUC is the
    trapezoid area under those points.
    """
    if len(truth) != len(scores):
        raise ValueError(f"length mismatch: {len(truth)} labels vs {len(scores)} score maps")
    try:
        s = np.array([float(m[positive_class]) for m in scores])
    except KeyError:
        raise ValueError(f"score map without a probability for {positive_class!r}") from None
    y = np.array([t == positive_class for t in truth], dtype=bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"ROC undefined: truth has no {'positives' if n_pos == 0 else 'negatives'} "
                         f"for class {positive_class!r}")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(y)[ends]
    fps = (ends + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    points = tuple((float(a), float(b)) for a, b in zip(fpr, tpr))
    return RocCurve(positive_class, points, auc)
