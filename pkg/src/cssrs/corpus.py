"""Annotated Reddit corpus: records, loading, statistics, ablation slices.

Users are the unit of labelling (four C-SSRS severity levels, Supportive
through Attempt); their posts carry a five-way label that adds
Uninformative. Source rows labelled "indication" are dropped on load.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for unreadable or invalid dataset files."""


class PostLabel(IntEnum):
    SUPPORTIVE = 0
    IDEATION = 1
    BEHAVIOR = 2
    ATTEMPT = 3
    UNINFORMATIVE = 4

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: str) -> "PostLabel":
        label = _parse_label(value)
        if label is None:
            raise DatasetError("'indication' is not a post label")
        return label


class SeverityLabel(IntEnum):
    """User-level severity; integer order is the clinical order."""

    SUPPORTIVE = 0
    IDEATION = 1
    BEHAVIOR = 2
    ATTEMPT = 3

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: str) -> "SeverityLabel":
        label = _parse_label(value)
        if label is None or label is PostLabel.UNINFORMATIVE:
            raise DatasetError(f"{value!r} is not a user severity label")
        return cls(int(label))


LABEL_ALIASES = {
    "supportive": "supportive",
    "ideation": "ideation",
    "behavior": "behavior",
    "behaviour": "behavior",
    "attempt": "attempt",
    "uninformative": "uninformative",
    "indication": "indication",
    "indicator": "indication",
}
ALLOWED_LABELS = ("supportive", "ideation", "behavior", "attempt", "uninformative", "indication")


def _parse_label(value) -> PostLabel | None:
    """Map a label string to a PostLabel; ``None`` means suicide indication."""
    if not isinstance(value, str):
        raise DatasetError(f"label must be a string, got {value!r}; allowed: {', '.join(ALLOWED_LABELS)}")
    key = LABEL_ALIASES.get(value.strip().lower())
    if key is None:
        raise DatasetError(f"unknown label {value!r}; allowed: {', '.join(ALLOWED_LABELS)}")
    if key == "indication":
        return None
    return PostLabel[key.upper()]


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    user_id: str
    timestamp: int
    subreddit: str
    text: str
    label: PostLabel
    normalized_text: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise DatasetError(f"post {self.post_id!r} has empty text")

    @property
    def is_supportive_content(self) -> bool:
        return self.label is PostLabel.SUPPORTIVE

    @property
    def is_uninformative_content(self) -> bool:
        return self.label is PostLabel.UNINFORMATIVE


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    posts: tuple[PostRecord, ...]
    user_label: SeverityLabel | None
    username: str | None = None

    def __post_init__(self):
        if not self.posts:
            raise DatasetError(f"user {self.user_id!r} has no posts")
        keys = [(p.timestamp, p.post_id) for p in self.posts]
        if keys != sorted(keys):
            object.__setattr__(self, "posts", tuple(sorted(self.posts, key=lambda p: (p.timestamp, p.post_id))))

    @property
    def is_throwaway(self) -> bool:
        return detect_throwaway(self.username if self.username is not None else self.user_id)


def detect_throwaway(username: str) -> bool:
    return "throwaway" in username.casefold()


# -- loading -----------------------------------------------------------------

def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise DatasetError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise DatasetError(f"{where}: field {key!r} must be an integer")
        try:
            return int(value)
        except ValueError:
            raise DatasetError(f"{where}: field {key!r} must be an integer, got {value!r}") from None
    if not isinstance(value, kind):
        raise DatasetError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _post_from_dict(obj: dict, user_id: str, where: str) -> PostRecord | None:
    label = _labelled(obj, "label", where, _parse_label)
    text = _require(obj, "text", str, where)
    if not text.strip():
        raise DatasetError(f"{where}: field 'text' is empty")
    if label is None:
        return None
    norm = obj.get("normalized_text")
    return PostRecord(
        post_id=str(_require(obj, "post_id", (str, int), where)),
        user_id=user_id,
        timestamp=_require(obj, "timestamp", int, where),
        subreddit=str(obj.get("subreddit", "")),
        text=text,
        label=label,
        normalized_text=norm if isinstance(norm, str) else None,
    )


def _labelled(obj, key, where, parse):
    if key not in obj:
        raise DatasetError(f"{where}: missing field {key!r}")
    try:
        return parse(obj[key])
    except DatasetError as exc:
        raise DatasetError(f"{where}: field {key!r}: {exc}") from None


def _iter_jsonl_users(path: Path, require_labels: bool):
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path.name} line {lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DatasetError(f"{where}: expected an object per line")
            user_id = str(_require(obj, "user_id", (str, int), where))
            if require_labels or "label" in obj:
                label = _labelled(obj, "label", where, _parse_label)
                if label is PostLabel.UNINFORMATIVE:
                    raise DatasetError(f"{where}: field 'label': users cannot be 'uninformative'")
                indication = label is None
            else:
                label, indication = None, False
            posts_raw = _require(obj, "posts", list, where)
            posts = []
            for k, p in enumerate(posts_raw):
                if not isinstance(p, dict):
                    raise DatasetError(f"{where}: posts[{k}] must be an object")
                posts.append(_post_from_dict(p, user_id, f"{where} posts[{k}]"))
            yield where, user_id, obj.get("username"), label, indication, posts


def _iter_csv_users(path: Path, require_labels: bool):
    grouped: dict[str, dict] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"user_id", "post_id", "timestamp", "post_label", "text"}
        if reader.fieldnames is None:
            return
        missing = needed - set(reader.fieldnames)
        if require_labels:
            missing |= {"user_label"} - set(reader.fieldnames)
        if missing:
            raise DatasetError(f"{path.name} line 1: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            where = f"{path.name} line {lineno}"
            uid = row["user_id"]
            if not uid:
                raise DatasetError(f"{where}: field 'user_id' is empty")
            entry = grouped.setdefault(uid, {"where": where, "username": row.get("username") or None,
                                             "label_raw": row.get("user_label"), "posts": []})
            if row.get("user_label") != entry["label_raw"]:
                raise DatasetError(f"{where}: field 'user_label' disagrees with earlier rows for user {uid!r}")
            post = {"post_id": row["post_id"], "timestamp": row["timestamp"], "subreddit": row.get("subreddit", ""),
                    "text": row["text"], "label": row["post_label"]}
            entry["posts"].append(_post_from_dict(post, uid, where))
    for uid, entry in grouped.items():
        where = entry["where"]
        raw = entry["label_raw"]
        if raw is None or (raw == "" and not require_labels):
            label, indication = None, False
        else:
            label = _labelled({"user_label": raw}, "user_label", where, _parse_label)
            if label is PostLabel.UNINFORMATIVE:
                raise DatasetError(f"{where}: field 'user_label': users cannot be 'uninformative'")
            indication = label is None
        yield where, uid, entry["username"], label, indication, entry["posts"]


def load_dataset(path, format: str | None = None, require_labels: bool = True) -> list[UserRecord]:
    """Read users from JSONL (one user per line) or CSV (one post per row).

    Users labelled indication are dropped; so are indication-labelled posts,
    and any user that loses all of its posts that way. Counts of dropped
    records are logged. ``require_labels=False`` admits unlabelled users,
    for prediction inputs.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in ("jsonl", "csv"):
        raise DatasetError(f"unsupported dataset format {fmt!r} (use jsonl or csv)")
    rows = _iter_jsonl_users(path, require_labels) if fmt == "jsonl" else _iter_csv_users(path, require_labels)

    users: list[UserRecord] = []
    seen_posts: set[str] = set()
    seen_users: set[str] = set()
    dropped_users = dropped_posts = 0
    any_row = False
    for where, uid, username, label, indication, posts in rows:
        any_row = True
        if uid in seen_users:
            raise DatasetError(f"{where}: duplicate user_id {uid!r}")
        seen_users.add(uid)
        for p in posts:
            if p is None:
                continue
            if p.post_id in seen_posts:
                raise DatasetError(f"{where}: duplicate post_id {p.post_id!r}")
            seen_posts.add(p.post_id)
        if indication:
            dropped_users += 1
            continue
        kept = [p for p in posts if p is not None]
        dropped_posts += len(posts) - len(kept)
        if not kept:
            dropped_users += 1
            continue
        users.append(UserRecord(
            user_id=uid,
            posts=tuple(kept),
            user_label=SeverityLabel(int(label)) if label is not None else None,
            username=str(username) if username is not None else None,
        ))
    if not any_row:
        raise DatasetError(f"{path}: no records")
    if dropped_users or dropped_posts:
        logger.info("dropped %d indication users and %d indication posts", dropped_users, dropped_posts)
    return users


def user_to_dict(user: UserRecord) -> dict:
    out = {"user_id": user.user_id}
    if user.username is not None:
        out["username"] = user.username
    if user.user_label is not None:
        out["label"] = user.user_label.key
    posts = []
    for p in user.posts:
        d = {"post_id": p.post_id, "timestamp": p.timestamp, "subreddit": p.subreddit,
             "text": p.text, "label": p.label.key}
        if p.normalized_text is not None:
            d["normalized_text"] = p.normalized_text
        posts.append(d)
    out["posts"] = posts
    return out


def save_dataset(users: Iterable[UserRecord], path, format: str = "jsonl") -> None:
    path = Path(path)
    if format == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for u in users:
                fh.write(json.dumps(user_to_dict(u), ensure_ascii=False) + "\n")
    elif format == "csv":
        cols = ["user_id", "username", "user_label", "post_id", "timestamp", "subreddit", "post_label", "text"]
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for u in users:
                for p in u.posts:
                    w.writerow([u.user_id, u.username or "", u.user_label.key if u.user_label is not None else "",
                                p.post_id, p.timestamp, p.subreddit, p.label.key, p.text])
    else:
        raise DatasetError(f"unsupported dataset format {format!r}")


# -- statistics --------------------------------------------------------------

ABBREVIATIONS = frozenset({
    "e.g.", "i.e.", "etc.", "vs.", "dr.", "mr.", "mrs.", "ms.", "st.", "jr.", "sr.", "approx.", "no.", "u.s.",
})
_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")


def split_sentences(text: str) -> list[str]:
    """Split after runs of . ! ? followed by whitespace or end of text.

    A period ending a known abbreviation (``ABBREVIATIONS``) does not end
    the sentence.
    """
    sentences = []
    start = 0
    for m in _SENTENCE_END.finditer(text):
        end = m.end()
        words = text[start:end].split()
        last = words[-1].lower() if words else ""
        if last in ABBREVIATIONS and m.group() == ".":
            continue
        chunk = text[start:end].strip()
        if chunk:
            sentences.append(chunk)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


@dataclass
class CorpusStats:
    n_users: int
    n_posts: int
    n_sentences: int
    avg_posts_per_user: float
    avg_sentences_per_post: float
    users_by_label: dict[str, dict[str, int]] = field(default_factory=dict)
    posts_by_label: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "users": self.n_users,
            "posts": self.n_posts,
            "sentences": self.n_sentences,
            "avg_posts_per_user": self.avg_posts_per_user,
            "avg_sentences_per_post": self.avg_sentences_per_post,
            "users_by_label": self.users_by_label,
            "posts_by_label": self.posts_by_label,
        }


def dataset_stats(users: Sequence[UserRecord], sentence_splitter=split_sentences) -> CorpusStats:
    if not users:
        raise DatasetError("cannot compute statistics of an empty corpus")
    n_posts = sum(len(u.posts) for u in users)
    n_sent = sum(len(sentence_splitter(p.text)) for u in users for p in u.posts)
    groups = {"throwaway": Counter(), "non_throwaway": Counter()}
    post_groups = {"throwaway": Counter(), "non_throwaway": Counter()}
    for u in users:
        g = "throwaway" if u.is_throwaway else "non_throwaway"
        groups[g][u.user_label.key if u.user_label is not None else "unlabeled"] += 1
        post_groups[g].update(p.label.key for p in u.posts)
    order = [lab.key for lab in PostLabel] + ["unlabeled"]

    def ordered(c: Counter) -> dict[str, int]:
        return {k: c[k] for k in order if c[k]}

    return CorpusStats(
        n_users=len(users),
        n_posts=n_posts,
        n_sentences=n_sent,
        avg_posts_per_user=n_posts / len(users),
        avg_sentences_per_post=n_sent / n_posts,
        users_by_label={g: ordered(c) for g, c in groups.items()},
        posts_by_label={g: ordered(c) for g, c in post_groups.items()},
    )


# -- ablation ----------------------------------------------------------------

def ablation_slice(users: Sequence[UserRecord], include_throwaway: bool = True,
                   include_uninformative: bool = True, include_supportive: bool = True) -> list[UserRecord]:
    """Remove throwaway users and/or uninformative / supportive content.

    Excluding supportive content drops supportive posts and supportive users.
    Users left without posts are dropped.
    """
    out = []
    emptied = 0
    for u in users:
        if not include_throwaway and u.is_throwaway:
            continue
        if not include_supportive and u.user_label is SeverityLabel.SUPPORTIVE:
            continue
        posts = [
            p for p in u.posts
            if (include_uninformative or p.label is not PostLabel.UNINFORMATIVE)
            and (include_supportive or p.label is not PostLabel.SUPPORTIVE)
        ]
        if not posts:
            emptied += 1
            continue
        out.append(u if len(posts) == len(u.posts) else replace(u, posts=tuple(posts)))
    if emptied:
        logger.info("ablation slice dropped %d users left without posts", emptied)
    return out


# -- candidate users ---------------------------------------------------------

@dataclass(frozen=True)
class ZipfParams:
    """Knee detection on the ranked per-user match counts.

    The counts are fitted with ``f(r) = C / (r + b) ** a`` by least squares in
    log space; ``b`` is searched in ``[0, max_offset]``. The cutoff is the first
    rank whose observed count falls below ``tau`` times the fitted value.
    """

    tau: float = 0.5
    max_offset: float = 50.0
    negation_window: int = 3
    min_users: int = 10


@dataclass
class ZipfFit:
    log_c: float
    exponent: float
    offset: float
    cutoff_rank: int

    def fitted(self, ranks) -> np.ndarray:
        return np.exp(self.log_c) / (np.asarray(ranks, dtype=float) + self.offset) ** self.exponent


def fit_zipf_mandelbrot(freqs: Sequence[float], params: ZipfParams = ZipfParams()) -> ZipfFit:
    """Fit ranked positive frequencies; the line fit is closed form for each offset."""
    f = np.asarray(freqs, dtype=float)
    if f.size < 3 or (f <= 0).any():
        raise ValueError("need at least three positive frequencies to fit")
    r = np.arange(1, f.size + 1, dtype=float)
    logf = np.log(f)

    def solve(off):
        X = np.log(r + off)
        A = np.column_stack([np.ones_like(X), -X])
        coef, *_ = np.linalg.lstsq(A, logf, rcond=None)
        return coef, float(((A @ coef - logf) ** 2).sum())

    # coarse scan guards against local minima; the bounded search refines it
    grid = np.linspace(0.0, params.max_offset, 201)
    sse = [solve(o)[1] for o in grid]
    k = int(np.argmin(sse))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda o: solve(o)[1], bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    off = float(res.x) if res.fun <= sse[k] else float(grid[k])
    (log_c, a), _ = solve(off)
    fitted = np.exp(log_c) / (r + off) ** a
    below = np.nonzero(f < params.tau * fitted)[0]
    cutoff = int(below[0]) + 1 if below.size else f.size + 1
    return ZipfFit(float(log_c), float(a), off, cutoff)


def candidate_user_filter(raw_posts: Sequence[PostRecord], severity_lexicon, params: ZipfParams = ZipfParams(),
                          table=None, threshold: float = 0.6) -> list[str]:
    """Users whose count of non-negated severity-lexicon matches sits above the Zipf-Mandelbrot knee.

    Without an embedding ``table`` a match is an exact token-sequence match
    of a lexicon surface; with one, matching uses :func:`match_concepts`.
    This approximates the original filtering, whose exact fit and negation
    handling are not published in full.
    """
    from .lexicon import exact_surface_matches, match_concepts

    counts: Counter = Counter()
    users = set()
    for post in raw_posts:
        users.add(post.user_id)
        if table is None:
            found = exact_surface_matches(post.text, severity_lexicon, params.negation_window)
        else:
            found = match_concepts(post.text, severity_lexicon, table, threshold,
                                   negation_window=params.negation_window)
        counts[post.user_id] += sum(1 for m in found if not m.negated)
    if len(users) < params.min_users:
        raise ValueError("insufficient corpus for rank fit")
    ranked = sorted((c, uid) for uid, c in counts.items() if c > 0)
    ranked.sort(key=lambda t: (-t[0], t[1]))
    if len(ranked) < 3:
        return [uid for _, uid in ranked]
    fit = fit_zipf_mandelbrot([c for c, _ in ranked], params)
    return [uid for _, uid in ranked[:fit.cutoff_rank - 1]]
