"""Report writers: full-precision JSON, table-shaped CSV, ROC points and SVG plots."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .ablation import AblationRow  # noqa: E402
from .cv import METHOD_NAMES  # noqa: E402
from .roc import RocCurve  # noqa: E402

ABLATION_COLUMNS = ("experiment", "method", "TA", "UI", "SU", "avg_prec", "avg_rec", "f1")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


def write_ablation_csv(path, rows: Sequence[AblationRow]) -> Path:
    """One line per grid row; metrics rounded to 2 decimals, blank for failed rows."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_COLUMNS)
        for r in rows:
            ta, ui, su = r.flags
            vals = ["", "", ""]
            if r.metrics is not None:
                m = r.metrics.macro
                vals = [f"{m['avg_precision']:.2f}", f"{m['avg_recall']:.2f}", f"{m['f1']:.2f}"]
            w.writerow([r.experiment_id, METHOD_NAMES[r.method], _yn(ta), _yn(ui), _yn(su), *vals])
    return path


def write_roc_csv(path, curves: Mapping[str, Mapping[object, RocCurve]]) -> Path:
    """Rows (method, class, fpr, tpr); ``curves`` maps method name -> class -> curve."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "class", "fpr", "tpr"))
        for method, by_class in curves.items():
            for lab, curve in by_class.items():
                for fpr, tpr in curve.points:
                    w.writerow((method, getattr(lab, "key", lab), repr(fpr), repr(tpr)))
    return path


def plot_roc_svg(path, method: str, curves: Mapping[object, RocCurve]) -> Path:
    """Standalone per-method SVG with one curve per class; byte-stable across runs."""
    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "cssrs", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 5))
        for lab, curve in curves.items():
            xs, ys = zip(*curve.points)
            ax.plot(xs, ys, drawstyle="default", label=f"{getattr(lab, 'key', lab)} (AUC {curve.auc:.2f})")
        ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_title(f"{method} one-vs-rest ROC")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.legend(loc="lower right", fontsize="small")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
