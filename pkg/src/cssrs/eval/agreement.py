"""Krippendorff's alpha for nominal labels, group-wise and pairwise."""

from __future__ import annotations

import itertools
import math
from typing import Sequence


def _missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def krippendorff_alpha(annotations: Sequence[Sequence], level: str = "nominal") -> float:
    """Alpha over an annotator x item matrix; ``None`` (or NaN) marks a missing label.

    Only items with at least two labels are pairable. Uses the value-count
    form: with n_uc the count of value c in item u and m_u its label count,
    n * D_o = sum_u (m_u^2 - sum_c n_uc^2) / (m_u - 1) and
    n * D_e = (n^2 - sum_c n_c^2) / (n - 1). If every pairable label is the
    same value there is no expected disagreement and alpha is 1.
    """
    if level != "nominal":
        raise ValueError(f"unsupported measurement level {level!r}; only 'nominal' is implemented")
    rows = [list(r) for r in annotations]
    if len(rows) < 2:
        raise ValueError("krippendorff_alpha needs at least 2 annotators")
    n_items = len(rows[0])
    if any(len(r) != n_items for r in rows):
        raise ValueError("every annotator row must cover the same items")
    totals: dict = {}
    observed = 0.0
    for u in range(n_items):
        counts: dict = {}
        for r in rows:
            v = r[u]
            if not _missing(v):
                counts[v] = counts.get(v, 0) + 1
        m = sum(counts.values())
        if m < 2:
            continue
        observed += (m * m - sum(c * c for c in counts.values())) / (m - 1)
        for v, c in counts.items():
            totals[v] = totals.get(v, 0) + c
    n = sum(totals.values())
    if n == 0:
        raise ValueError("no pairable values: no item has labels from two annotators")
    expected = (n * n - sum(c * c for c in totals.values())) / (n - 1)
    if expected == 0:
        return 1.0
    return 1.0 - observed / expected


def pairwise_alpha(annotations: Sequence[Sequence], names: Sequence[str] | None = None) -> dict:
    """Alpha for every annotator pair that shares at least one pairable item."""
    rows = [list(r) for r in annotations]
    names = list(names) if names is not None else [str(i) for i in range(len(rows))]
    out = {}
    for i, j in itertools.combinations(range(len(rows)), 2):
        try:
            out[(names[i], names[j])] = krippendorff_alpha([rows[i], rows[j]])
        except ValueError:
            continue
    return out


def agreement_report(annotations: Sequence[Sequence], names: Sequence[str] | None = None) -> dict:
    pairs = pairwise_alpha(annotations, names)
    return {
        "groupwise": krippendorff_alpha(annotations),
        "pairwise": {f"{a}~{b}": v for (a, b), v in pairs.items()},
        "max_pairwise": max(pairs.values()) if pairs else None,
    }
