"""Per-severity sentiment and happiness summaries (descriptive only, no test verdict)."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..corpus import SeverityLabel, UserRecord
from ..lexicon import word_tokens


def post_score(text: str, lexicon: Mapping[str, float]) -> float:
    """Mean score of the post's words found in ``lexicon``; 0 when none are."""
    vals = [lexicon[w] for w in word_tokens(text) if w in lexicon]
    return float(np.mean(vals)) if vals else 0.0


def _variance_summary(groups: list[np.ndarray]) -> dict:
    groups = [g for g in groups if g.size]
    allv = np.concatenate(groups) if groups else np.zeros(0)
    grand = allv.mean() if allv.size else 0.0
    between = float(sum(g.size * (g.mean() - grand) ** 2 for g in groups))
    within = float(sum(((g - g.mean()) ** 2).sum() for g in groups))
    df_b, df_w = len(groups) - 1, allv.size - len(groups)
    total = between + within
    f = (between / df_b) / (within / df_w) if df_b > 0 and df_w > 0 and within > 0 else None
    return {
        "between_ss": between,
        "within_ss": within,
        "df_between": df_b,
        "df_within": df_w,
        "f_statistic": f,
        "eta_squared": between / total if total > 0 else 0.0,
    }


def sentiment_diagnostics(users: Sequence[UserRecord], valence_lexicon: Mapping[str, float],
                          happiness_lexicon: Mapping[str, float]) -> dict:
    """Per-post lexicon scores (raw text) grouped by the author's severity label.

    Returns ``{lexicon: {"levels": {label: {mean, stddev, n}}, "variance": {...}}}``.
    The variance block is a one-way decomposition for eyeballing separation.
    """
    out = {}
    for name, lex in (("valence", valence_lexicon), ("happiness", happiness_lexicon)):
        grouped = {lab: [] for lab in SeverityLabel}
        for u in users:
            if u.user_label is None:
                continue
            for p in u.posts:
                grouped[u.user_label].append(post_score(p.text, lex))
        arrays = {lab: np.array(v) for lab, v in grouped.items()}
        levels = {
            lab.key: {
                "mean": float(a.mean()) if a.size else 0.0,
                "stddev": float(a.std(ddof=1)) if a.size > 1 else 0.0,
                "n": int(a.size),
            }
            for lab, a in arrays.items()
        }
        out[name] = {"levels": levels, "variance": _variance_summary(list(arrays.values()))}
    return out
