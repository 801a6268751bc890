"""Embedding tables, clinical lexicons and MedNorm-style phrase normalisation.

A phrase (n-gram of the post) is represented by the mean of its token
vectors and compared to each concept surface by cosine similarity. Matches
at or above the threshold (0.6 by default) are resolved so that no two
overlap, checked for a preceding negation cue, and either counted
(severity scoring) or replaced by the concept's surface form (MedNorm).
"""

from __future__ import annotations

import csv
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import PostLabel, _parse_label

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.6
DEFAULT_MAX_NGRAM = 4
DEFAULT_NEGATION_WINDOW = 3
NEGATION_CUES = frozenset({"no", "not", "never", "don't", "dont", "won't", "wont", "can't", "cant", "n't"})
CLAUSE_BOUNDARIES = frozenset({".", ",", ";", "but"})
# similarities this close to +-1 are reported as exactly +-1
_SNAP = 1e-12


class LexiconError(ValueError):
    pass


# -- tokenisation ------------------------------------------------------------

_TOKEN = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int

    @property
    def is_word(self) -> bool:
        return self.text[0].isalnum() or self.text[0] == "_"


def tokenize(text: str) -> list[Token]:
    """Lowercased word tokens plus one token per punctuation character.

    Apostrophes inside a word stay with it ("don't"); curly apostrophes are
    normalised to ASCII. Offsets index into the original string.
    """
    return [Token(m.group().lower().replace("’", "'"), m.start(), m.end()) for m in _TOKEN.finditer(text)]


def word_tokens(text: str) -> list[str]:
    return [t.text for t in tokenize(text) if t.is_word]


# -- embeddings --------------------------------------------------------------

class EmbeddingTable:
    """Token -> vector map with one shared dimension."""

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int, lowercased: bool = True):
        self.dimension = dimension
        self.lowercased = lowercased
        self.tokens = list(vectors)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.matrix = np.array([vectors[t] for t in self.tokens], dtype=np.float64).reshape(-1, dimension)
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return self._key(token) in self.index

    def _key(self, token: str) -> str:
        return token.lower() if self.lowercased else token

    def lookup(self, token: str) -> np.ndarray | None:
        """The token's vector, or None when the token is absent."""
        i = self.index.get(self._key(token))
        return None if i is None else self.matrix[i]


def load_embeddings(path, lowercase: bool = True) -> EmbeddingTable:
    """Read a whitespace-separated text table: ``token v1 v2 ... vd`` per line.

    A leading ``count dim`` header line (word2vec text format) is skipped.
    """
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    dupes = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            token, raw = parts[0], parts[1:]
            if not raw:
                raise LexiconError(f"{path.name} line {lineno}: no vector values for {token!r}")
            try:
                vec = np.array([float(x) for x in raw])
            except ValueError:
                raise LexiconError(f"{path.name} line {lineno}: unparseable float in vector for {token!r}") from None
            if not np.isfinite(vec).all():
                raise LexiconError(f"{path.name} line {lineno}: non-finite value in vector for {token!r}")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise LexiconError(f"{path.name} line {lineno}: dimension {vec.size} != {dim}")
            key = token.lower() if lowercase else token
            if key in vectors:
                dupes += 1
            vectors[key] = vec
    if dim is None:
        raise LexiconError(f"{path}: empty embedding file")
    if dupes:
        logger.warning("%s: %d duplicate tokens, last occurrence kept", path.name, dupes)
    return EmbeddingTable(vectors, dim, lowercased=lowercase)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("undefined similarity: zero vector")
    sim = float(a @ b / (na * nb))
    if abs(sim - 1.0) < _SNAP or sim > 1.0:
        return 1.0
    if abs(sim + 1.0) < _SNAP or sim < -1.0:
        return -1.0
    return sim


def phrase_vector(tokens: Sequence[str], table: EmbeddingTable) -> np.ndarray | None:
    """Mean of the in-vocabulary token vectors, or None when none are known."""
    if not tokens:
        raise ValueError("phrase_vector needs at least one token")
    vecs = [v for v in (table.lookup(t) for t in tokens) if v is not None]
    if not vecs:
        return None
    return np.mean(vecs, axis=0)


# -- lexicons ----------------------------------------------------------------

@dataclass(frozen=True)
class ConceptEntry:
    concept_id: str
    surface: tuple[str, ...]
    severity_category: PostLabel | None
    source: str = ""

    @property
    def text(self) -> str:
        return " ".join(self.surface)


@dataclass(frozen=True)
class Lexicon:
    name: str
    concepts: tuple[ConceptEntry, ...]

    def __post_init__(self):
        ids = [c.concept_id for c in self.concepts]
        dup = [k for k, n in Counter(ids).items() if n > 1]
        if dup:
            raise LexiconError(f"lexicon {self.name!r}: duplicate concept_id {dup[0]!r}")
        for c in self.concepts:
            if not c.surface:
                raise LexiconError(f"lexicon {self.name!r}: concept {c.concept_id!r} has an empty surface")

    @property
    def is_severity(self) -> bool:
        return bool(self.concepts) and all(c.severity_category is not None for c in self.concepts)


def load_lexicon(path, name: str | None = None) -> Lexicon:
    """CSV with columns concept_id, surface, severity_category (optional), source."""
    path = Path(path)
    entries = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"concept_id", "surface"} <= set(reader.fieldnames):
            raise LexiconError(f"{path.name}: needs columns concept_id,surface")
        for lineno, row in enumerate(reader, 2):
            surface = tuple(word_tokens(row["surface"] or ""))
            if not surface:
                raise LexiconError(f"{path.name} line {lineno}: empty surface")
            raw_cat = (row.get("severity_category") or "").strip()
            cat = None
            if raw_cat:
                try:
                    cat = _parse_label(raw_cat)
                except ValueError as exc:
                    raise LexiconError(f"{path.name} line {lineno}: {exc}") from None
                if cat is None:
                    raise LexiconError(f"{path.name} line {lineno}: 'indication' is not a severity category")
            entries.append(ConceptEntry(row["concept_id"].strip(), surface, cat, (row.get("source") or "").strip()))
    return Lexicon(name or path.stem, tuple(entries))


def merge_lexicons(lexicons: Iterable[Lexicon]) -> Lexicon:
    """Union of several lexicons; concept ids are prefixed with the lexicon name."""
    lexicons = list(lexicons)
    if len(lexicons) == 1:
        return lexicons[0]
    concepts = tuple(
        ConceptEntry(f"{lx.name}:{c.concept_id}", c.surface, c.severity_category, c.source)
        for lx in lexicons for c in lx.concepts
    )
    return Lexicon("+".join(lx.name for lx in lexicons), concepts)


# -- matching ----------------------------------------------------------------

@dataclass(frozen=True)
class ConceptMatch:
    concept_id: str
    start: int
    end: int
    similarity: float
    negated: bool

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.end


def resolve_negation(tokens: Sequence[str], span: tuple[int, int], window: int = DEFAULT_NEGATION_WINDOW) -> bool:
    """True when a negation cue sits in the ``window`` tokens before the span
    with no clause boundary between the cue and the span."""
    start, end = span
    if not 0 <= start < end <= len(tokens):
        raise ValueError(f"span {span} outside token range {len(tokens)}")
    if window < 1:
        raise ValueError("window must be >= 1")
    for i in range(start - 1, max(start - window, 0) - 1, -1):
        tok = tokens[i]
        if tok in CLAUSE_BOUNDARIES:
            return False
        if tok in NEGATION_CUES or tok.endswith("n't"):
            return True
    return False


class _ConceptIndex:
    """Unit-normalised concept vectors for one (lexicon, table) pair."""

    def __init__(self, lexicon: Lexicon, table: EmbeddingTable):
        keep, vecs, skipped = [], [], []
        for c in lexicon.concepts:
            v = phrase_vector(c.surface, table)
            if v is None or not np.linalg.norm(v):
                skipped.append(c.concept_id)
                continue
            keep.append(c)
            vecs.append(v / np.linalg.norm(v))
        if skipped:
            logger.warning("lexicon %s: %d concepts have no embedding and are skipped (%s)",
                           lexicon.name, len(skipped), ", ".join(skipped[:5]))
        self.concepts = keep
        self.unit = np.array(vecs).reshape(len(keep), table.dimension)


_INDEX_CACHE: dict[tuple[int, int], tuple[Lexicon, EmbeddingTable, _ConceptIndex]] = {}


def _concept_index(lexicon: Lexicon, table: EmbeddingTable) -> _ConceptIndex:
    key = (id(lexicon), id(table))
    hit = _INDEX_CACHE.get(key)
    if hit is None or hit[0] is not lexicon or hit[1] is not table:
        hit = (lexicon, table, _ConceptIndex(lexicon, table))
        _INDEX_CACHE[key] = hit
    return hit[2]


def _resolve(candidates: list[tuple[int, int, int, float]]) -> list[tuple[int, int, int, float]]:
    # similarity desc, then longer span, then leftmost; similarities compared at 1e-9 resolution
    candidates.sort(key=lambda c: (-round(c[3], 9), -(c[1] - c[0]), c[0]))
    taken = np.zeros(max((c[1] for c in candidates), default=0), dtype=bool)
    chosen = []
    for s, e, ci, sim in candidates:
        if taken[s:e].any():
            continue
        taken[s:e] = True
        chosen.append((s, e, ci, sim))
    chosen.sort()
    return chosen


def match_concepts(text: str, lexicon: Lexicon, table: EmbeddingTable, threshold: float = DEFAULT_THRESHOLD,
                   max_ngram: int = DEFAULT_MAX_NGRAM, negation_window: int = DEFAULT_NEGATION_WINDOW,
                   tokens: list[Token] | None = None) -> list[ConceptMatch]:
    """Non-overlapping lexicon matches in ``text``, ordered by position.

    Every word n-gram (n <= ``max_ngram``, not crossing punctuation, first
    and last token in the embedding table) is scored against every concept; the best concept per n-gram is a candidate
    when its similarity reaches ``threshold``. Spans are token indices into
    ``tokenize(text)``.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    if max_ngram < 1:
        raise ValueError("max_ngram must be >= 1")
    toks = tokenize(text) if tokens is None else tokens
    if not toks:
        return []
    index = _concept_index(lexicon, table)
    if not index.concepts:
        return []
    words = [t.text for t in toks]
    n_tok = len(toks)
    vecs = np.zeros((n_tok, table.dimension))
    known = np.zeros(n_tok, dtype=bool)
    for i, t in enumerate(toks):
        if t.is_word:
            v = table.lookup(t.text)
            if v is not None:
                vecs[i] = v
                known[i] = True
    is_word = np.array([t.is_word for t in toks])
    csum = np.vstack([np.zeros(table.dimension), np.cumsum(vecs, axis=0)])
    ksum = np.concatenate([[0], np.cumsum(known)])
    wsum = np.concatenate([[0], np.cumsum(is_word)])

    candidates = []
    for n in range(1, max_ngram + 1):
        if n > n_tok:
            break
        starts = np.arange(n_tok - n + 1)
        ends = starts + n
        # n-grams must begin and end on known tokens, otherwise OOV neighbours
        # tie with the bare phrase and win on length
        ok = (wsum[ends] - wsum[starts] == n) & known[starts] & known[ends - 1]
        if not ok.any():
            continue
        s_ok, e_ok = starts[ok], ends[ok]
        sums = (csum[e_ok] - csum[s_ok]) / (ksum[e_ok] - ksum[s_ok])[:, None]
        norms = np.linalg.norm(sums, axis=1)
        live = norms > 0
        sims = np.full((len(s_ok), len(index.concepts)), -np.inf)
        sims[live] = (sums[live] / norms[live, None]) @ index.unit.T
        sims = np.clip(sims, -1.0, 1.0)
        sims[np.abs(sims - 1.0) < _SNAP] = 1.0
        best = sims.argmax(axis=1)
        best_sim = sims[np.arange(len(s_ok)), best]
        for s, e, ci, sim in zip(s_ok, e_ok, best, best_sim):
            if sim >= threshold - 1e-9:
                candidates.append((int(s), int(e), int(ci), float(sim)))

    return [
        ConceptMatch(index.concepts[ci].concept_id, s, e, sim, resolve_negation(words, (s, e), negation_window))
        for s, e, ci, sim in _resolve(candidates)
    ]


def exact_surface_matches(text: str, lexicon: Lexicon, negation_window: int = DEFAULT_NEGATION_WINDOW,
                          max_ngram: int | None = None) -> list[ConceptMatch]:
    """Matches of lexicon surfaces as exact token sequences (no embeddings)."""
    toks = tokenize(text)
    words = [t.text for t in toks]
    by_surface: dict[tuple[str, ...], str] = {}
    for c in lexicon.concepts:
        by_surface.setdefault(c.surface, c.concept_id)
    longest = max((len(s) for s in by_surface), default=0)
    if max_ngram is not None:
        longest = min(longest, max_ngram)
    candidates = []
    ids = list(by_surface.values())
    for n in range(1, longest + 1):
        for s in range(len(words) - n + 1):
            cid = by_surface.get(tuple(words[s:s + n]))
            if cid is not None:
                candidates.append((s, s + n, ids.index(cid), 1.0))
    return [ConceptMatch(ids[ci], s, e, 1.0, resolve_negation(words, (s, e), negation_window))
            for s, e, ci, _ in _resolve(candidates)]


def mednorm(text: str, norm_lexicons: Sequence[Lexicon] | Lexicon, table: EmbeddingTable,
            threshold: float = DEFAULT_THRESHOLD, max_ngram: int = DEFAULT_MAX_NGRAM,
            negation_window: int = DEFAULT_NEGATION_WINDOW) -> str:
    """Replace each non-negated matched phrase with its concept surface form."""
    normalized, _ = mednorm_with_matches(text, norm_lexicons, table, threshold, max_ngram, negation_window)
    return normalized


def mednorm_with_matches(text, norm_lexicons, table, threshold=DEFAULT_THRESHOLD, max_ngram=DEFAULT_MAX_NGRAM,
                         negation_window=DEFAULT_NEGATION_WINDOW) -> tuple[str, list[ConceptMatch]]:
    lexicon = norm_lexicons if isinstance(norm_lexicons, Lexicon) else merge_lexicons(norm_lexicons)
    toks = tokenize(text)
    matches = match_concepts(text, lexicon, table, threshold, max_ngram, negation_window, tokens=toks)
    surfaces = {c.concept_id: c.text for c in lexicon.concepts}
    pieces, cursor, used = [], 0, []
    for m in matches:
        if m.negated:
            continue
        a, b = toks[m.start].start, toks[m.end - 1].end
        pieces.append(text[cursor:a])
        pieces.append(surfaces[m.concept_id])
        cursor = b
        used.append(m)
    pieces.append(text[cursor:])
    return "".join(pieces), used


def concept_multiset(matches: Iterable[ConceptMatch], lexicon: Lexicon) -> Counter:
    surfaces = {c.concept_id: c.text for c in lexicon.concepts}
    return Counter(surfaces[m.concept_id] for m in matches if not m.negated)


def severity_score(text: str, severity_lexicon: Lexicon, table: EmbeddingTable,
                   threshold: float = DEFAULT_THRESHOLD, max_ngram: int = DEFAULT_MAX_NGRAM,
                   negation_window: int = DEFAULT_NEGATION_WINDOW) -> dict[PostLabel, int]:
    """Count non-negated matches per severity category (all five keys present)."""
    missing = [c.concept_id for c in severity_lexicon.concepts if c.severity_category is None]
    if missing:
        raise LexiconError(f"severity lexicon entries without a category: {', '.join(missing[:5])}")
    cat = {c.concept_id: c.severity_category for c in severity_lexicon.concepts}
    counts = {lab: 0 for lab in PostLabel}
    for m in match_concepts(text, severity_lexicon, table, threshold, max_ngram, negation_window):
        if not m.negated:
            counts[cat[m.concept_id]] += 1
    return counts


def load_score_lexicon(path) -> dict[str, float]:
    """Token,score CSV (AFINN / LabMT style); a header row is optional."""
    scores = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not row[0].strip():
                continue
            try:
                value = float(row[1])
            except (IndexError, ValueError):
                if lineno == 1:
                    continue
                raise LexiconError(f"{Path(path).name} line {lineno}: expected token,score") from None
            if not math.isfinite(value):
                raise LexiconError(f"{Path(path).name} line {lineno}: non-finite score")
            scores[row[0].strip().lower()] = value
    return scores
