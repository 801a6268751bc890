"""TvarM and TinvM: training, inference and the serialisable model bundle.

TvarM is two-stage. A post-level LSTM classifier (five outputs including
Uninformative) is trained and frozen, then a user-level CNN convolves over
the time-ordered per-post vectors [Pr(S), Pr(I), Pr(B), Pr(A)]. TinvM is a
single Kim-style CNN over all of a user's posts concatenated, with a
separator token between posts.

Ties in any argmax go to the more severe class (Attempt first, Uninformative
last). This is a clinical-safety default.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import PostLabel, PostRecord, SeverityLabel, UserRecord
from .lexicon import EmbeddingTable, word_tokens
from .nn import (
    AdamState,
    ParameterSet,
    Tensor,
    adam_step,
    backward,
    concat,
    conv1d_maxpool,
    cross_entropy,
    dense_softmax,
    dropout,
    embed_sequence,
    lstm_forward,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)

BUNDLE_FORMAT = "cssrs-bundle"
BUNDLE_VERSION = 1
POST_CLASSIFIER = "post_classifier"
TVARM = "tvarm"
TINVM = "tinvm"

PAD, OOV, SEP = 0, 1, 2
SPECIAL_TOKENS = ("<pad>", "<oov>", "<sep>")

# argmax tie-break order, most severe first
POST_SEVERITY_ORDER = (PostLabel.ATTEMPT, PostLabel.BEHAVIOR, PostLabel.IDEATION,
                       PostLabel.SUPPORTIVE, PostLabel.UNINFORMATIVE)
USER_SEVERITY_ORDER = (SeverityLabel.ATTEMPT, SeverityLabel.BEHAVIOR, SeverityLabel.IDEATION,
                       SeverityLabel.SUPPORTIVE)
RISK_COLUMNS = (PostLabel.SUPPORTIVE, PostLabel.IDEATION, PostLabel.BEHAVIOR, PostLabel.ATTEMPT)


class TrainingError(ValueError):
    pass


class BundleError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by both methods. Defaults are documented in the README."""

    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 16
    rng_seed: int = 0
    max_tokens_per_post: int = 256
    max_posts_per_user: int = 32
    class_weighting: str = "inverse_frequency"
    embedding_dim: int = 50
    lstm_hidden: int = 64
    tinvm_widths: tuple[int, ...] = (3, 4, 5)
    tinvm_maps: int = 100
    tvarm_widths: tuple[int, ...] = (2, 3)
    tvarm_maps: int = 32
    dropout: float = 0.5
    text_field: str = "normalized"

    def __post_init__(self):
        for name in ("epochs", "batch_size", "max_tokens_per_post", "max_posts_per_user",
                     "embedding_dim", "lstm_hidden", "tinvm_maps", "tvarm_maps"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ValueError(f"TrainConfig.{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"TrainConfig.learning_rate must be positive, got {self.learning_rate!r}")
        if isinstance(self.rng_seed, bool) or not isinstance(self.rng_seed, int) or self.rng_seed < 0:
            raise ValueError(f"TrainConfig.rng_seed must be a non-negative integer, got {self.rng_seed!r}")
        if self.class_weighting not in ("none", "inverse_frequency"):
            raise ValueError("TrainConfig.class_weighting must be 'none' or 'inverse_frequency'")
        if self.text_field not in ("normalized", "raw"):
            raise ValueError("TrainConfig.text_field must be 'normalized' or 'raw'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("TrainConfig.dropout must be in [0, 1)")
        for name in ("tinvm_widths", "tvarm_widths"):
            widths = tuple(getattr(self, name))
            if not widths or any(int(w) <= 0 for w in widths):
                raise ValueError(f"TrainConfig.{name} needs positive filter widths")
            object.__setattr__(self, name, tuple(int(w) for w in widths))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tinvm_widths"] = list(self.tinvm_widths)
        d["tvarm_widths"] = list(self.tvarm_widths)
        return d

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {', '.join(sorted(unknown))}")
        return cls(**values)


# -- vocabulary ----------------------------------------------------------------

class Vocabulary:
    """Token ids: 0 padding, 1 out-of-vocabulary, 2 post separator, then words."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.index = {t: i + len(SPECIAL_TOKENS) for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens) + len(SPECIAL_TOKENS)

    def encode(self, words: Sequence[str]) -> list[int]:
        return [self.index.get(w, OOV) for w in words]

    @classmethod
    def build(cls, texts: Iterable[str], table: EmbeddingTable | None = None) -> "Vocabulary":
        """Distinct words of ``texts`` in first-seen order; with a table, only words it knows."""
        seen: dict[str, None] = {}
        for text in texts:
            for w in word_tokens(text):
                if w not in seen and (table is None or w in table):
                    seen[w] = None
        return cls(list(seen))


def _embedding_matrix(params: ParameterSet, vocab: Vocabulary, table: EmbeddingTable | None, dim: int) -> None:
    """Add the ``embedding`` parameter. Pretrained rows and the pad row are frozen."""
    if table is None:
        init = params.rng.uniform(-0.08, 0.08, size=(len(vocab), dim))
        init[PAD] = 0.0
        params.add("embedding", init)
        params.freeze("embedding", rows=[PAD])
        return
    init = np.zeros((len(vocab), table.dimension))
    init[OOV:SEP + 1] = params.rng.uniform(-0.08, 0.08, size=(2, table.dimension))
    for tok, i in vocab.index.items():
        init[i] = table.lookup(tok)
    params.add("embedding", init)
    params.freeze("embedding", rows=[PAD] + list(range(len(SPECIAL_TOKENS), len(vocab))))


def post_text(post: PostRecord, config: TrainConfig) -> str:
    if config.text_field == "normalized" and post.normalized_text is not None:
        return post.normalized_text
    return post.text


def _post_ids(post: PostRecord, vocab: Vocabulary, config: TrainConfig) -> list[int]:
    ids = vocab.encode(word_tokens(post_text(post, config)))[: config.max_tokens_per_post]
    # punctuation-only posts still need one step; they go through the OOV row
    return ids or [OOV]


def _user_ids(user: UserRecord, vocab: Vocabulary, config: TrainConfig) -> list[int]:
    ids: list[int] = []
    for k, post in enumerate(user.posts):
        if k:
            ids.append(SEP)
        ids.extend(vocab.encode(word_tokens(post_text(post, config))))
    ids = ids[: config.max_tokens_per_post * config.max_posts_per_user]
    return ids or [OOV]


# -- bundle --------------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(obj["shape"])


@dataclass
class ModelBundle:
    """A trained model: parameters plus everything needed to run inference.

    Serialised as sorted-key JSON with base64 float64 arrays, so equal models
    give equal bytes. A TvarM bundle carries its frozen post classifier as
    the child ``"post"``.
    """

    kind: str
    config: TrainConfig
    arrays: dict[str, np.ndarray]
    vocabulary: list[str] | None = None
    rng_seed: int = 0
    training_log: list[dict] = field(default_factory=list)
    children: dict[str, "ModelBundle"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "kind": self.kind,
            "hyperparameters": self.config.to_dict(),
            "arrays": {k: _encode_array(v) for k, v in self.arrays.items()},
            "vocabulary": self.vocabulary,
            "rng_seed": self.rng_seed,
            "training_log": self.training_log,
            "children": {k: c.to_dict() for k, c in self.children.items()},
        }

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelBundle":
        if obj.get("format") != BUNDLE_FORMAT:
            raise BundleError("not a model bundle (missing format marker)")
        if obj.get("version") != BUNDLE_VERSION:
            raise BundleError(f"unsupported bundle version {obj.get('version')!r}, expected {BUNDLE_VERSION}")
        try:
            return cls(
                kind=obj["kind"],
                config=TrainConfig.from_dict(obj["hyperparameters"]),
                arrays={k: _decode_array(v) for k, v in obj["arrays"].items()},
                vocabulary=obj["vocabulary"],
                rng_seed=obj["rng_seed"],
                training_log=obj["training_log"],
                children={k: cls.from_dict(v) for k, v in obj["children"].items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleError(f"malformed bundle: {exc}") from None

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelBundle":
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BundleError(f"bundle is not valid JSON: {exc}") from None
        return cls.from_dict(obj)

    @classmethod
    def load(cls, path) -> "ModelBundle":
        return cls.from_bytes(Path(path).read_bytes())

    def params(self) -> ParameterSet:
        return ParameterSet.from_arrays(self.arrays, self.rng_seed)

    def vocab(self) -> Vocabulary:
        if self.vocabulary is None:
            raise BundleError(f"{self.kind} bundle has no vocabulary")
        return Vocabulary(self.vocabulary)


def _require_kind(bundle: ModelBundle, kind: str) -> None:
    if not isinstance(bundle, ModelBundle):
        raise BundleError(f"expected a {kind} bundle, got {type(bundle).__name__}")
    if bundle.kind != kind:
        raise BundleError(f"expected a {kind} bundle, got {bundle.kind}")


# -- predictions ---------------------------------------------------------------

def _argmax(probs: np.ndarray, order) -> int:
    best = order[0]
    for label in order[1:]:
        if probs[label] > probs[best]:
            best = label
    return best


@dataclass(frozen=True)
class PostPrediction:
    post_id: str
    probabilities: dict[PostLabel, float]
    predicted: PostLabel

    def risk_vector(self) -> np.ndarray:
        return np.array([self.probabilities[c] for c in RISK_COLUMNS])

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "predicted": self.predicted.key,
            "probabilities": {k.key: v for k, v in self.probabilities.items()},
        }


@dataclass(frozen=True)
class UserPrediction:
    user_id: str
    probabilities: dict[SeverityLabel, float]
    predicted: SeverityLabel
    method: str
    audit: dict | None = None

    def to_dict(self, include_audit: bool = True) -> dict:
        d = {
            "user_id": self.user_id,
            "method": self.method,
            "predicted": self.predicted.key,
            "probabilities": {k.key: v for k, v in self.probabilities.items()},
        }
        if include_audit and self.audit is not None:
            d["audit"] = self.audit
        return d


def _post_prediction(post_id: str, probs: np.ndarray) -> PostPrediction:
    label = PostLabel(_argmax(probs, POST_SEVERITY_ORDER))
    return PostPrediction(post_id, {lab: float(probs[lab]) for lab in PostLabel}, label)


def _user_prediction(user_id: str, probs: np.ndarray, method: str, audit: dict) -> UserPrediction:
    label = SeverityLabel(_argmax(probs, USER_SEVERITY_ORDER))
    return UserPrediction(user_id, {lab: float(probs[lab]) for lab in SeverityLabel}, label, method, audit)


# -- forward passes ------------------------------------------------------------

def _pad_ids(seqs: list[list[int]], extra: int = 0) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs])
    out = np.full((len(seqs), int(lengths.max()) + extra), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths


def _post_forward(params: ParameterSet, config: TrainConfig, seqs, training=False, rng=None) -> Tensor:
    ids, lengths = _pad_ids(seqs)
    emb = embed_sequence(ids, params["embedding"])
    h = lstm_forward(emb, params, config.lstm_hidden, lengths=lengths)
    h = dropout(h, config.dropout, rng, training)
    return dense_softmax(h, params["out.W"], params["out.b"])


def _cnn_head(x: Tensor, lengths, params: ParameterSet, widths, config: TrainConfig, training, rng) -> Tensor:
    pooled = [conv1d_maxpool(x, params[f"conv{w}.F"], params[f"conv{w}.b"], lengths=lengths) for w in widths]
    feats = concat(pooled, axis=-1) if len(pooled) > 1 else pooled[0]
    feats = dropout(feats, config.dropout, rng, training)
    return dense_softmax(feats, params["out.W"], params["out.b"])


def _tinvm_forward(params: ParameterSet, config: TrainConfig, seqs, training=False, rng=None) -> Tensor:
    # pad so every real window exists; windows starting in padding are masked
    ids, lengths = _pad_ids(seqs, extra=max(config.tinvm_widths) - 1)
    emb = embed_sequence(ids, params["embedding"])
    return _cnn_head(emb, lengths, params, config.tinvm_widths, config, training, rng)


def _tvarm_forward(params: ParameterSet, config: TrainConfig, mats, training=False, rng=None) -> Tensor:
    lengths = np.array([m.shape[0] for m in mats])
    x = np.zeros((len(mats), int(lengths.max()) + max(config.tvarm_widths) - 1, len(RISK_COLUMNS)))
    for i, m in enumerate(mats):
        x[i, : m.shape[0]] = m
    return _cnn_head(Tensor(x), lengths, params, config.tvarm_widths, config, training, rng)


def _add_cnn_params(params: ParameterSet, widths, maps: int, channels: int, n_out: int) -> None:
    for w in widths:
        params.add_glorot(f"conv{w}.F", (maps, w, channels), fan_in=w * channels, fan_out=w * maps)
        params.add_zeros(f"conv{w}.b", (maps,))
    feat = maps * len(widths)
    params.add_glorot("out.W", (n_out, feat), fan_in=feat, fan_out=n_out)
    params.add_zeros("out.b", (n_out,))


# -- training loop ---------------------------------------------------------------

def _check_labels(targets: np.ndarray, what: str) -> None:
    if targets.size == 0:
        raise TrainingError(f"precondition failed: empty training set for {what}")
    if np.unique(targets).size < 2:
        raise TrainingError(f"degenerate labels: {what} training set has a single class")


def class_weights(targets: np.ndarray, n_classes: int, mode: str) -> np.ndarray | None:
    """Inverse-frequency weights n / (k * n_c) over the k classes present."""
    if mode == "none":
        return None
    counts = np.bincount(targets, minlength=n_classes).astype(np.float64)
    present = counts > 0
    w = np.zeros(n_classes)
    w[present] = targets.size / (present.sum() * counts[present])
    return w


def _fit(params: ParameterSet, forward, inputs: list, targets: np.ndarray, n_classes: int,
         config: TrainConfig, stream: str) -> list[dict]:
    rng = np.random.default_rng(derive_seed(config.rng_seed, f"{stream}/train"))
    weights = class_weights(targets, n_classes, config.class_weighting)
    state = AdamState()
    n = len(inputs)
    log = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            probs = forward(params, config, [inputs[i] for i in idx], True, rng)
            loss = cross_entropy(probs, targets[idx], weights)
            if not np.isfinite(loss.data):
                raise TrainingError(f"{stream}: non-finite loss at epoch {epoch}")
            backward(loss, params)
            adam_step(params, state, config.learning_rate)
            total += float(loss.data) * len(idx)
        log.append({"epoch": epoch, "loss": total / n})
        logger.debug("%s epoch %d loss %.6f", stream, epoch, total / n)
    return log


# -- post classifier -------------------------------------------------------------

def train_post_classifier(train_posts: Sequence[tuple[PostRecord, PostLabel]], config: TrainConfig,
                          table: EmbeddingTable | None = None,
                          vocab_texts: Iterable[str] | None = None) -> ModelBundle:
    """Train the 5-way post LSTM.

    The vocabulary comes from the training texts, plus ``vocab_texts`` when
    given (unlabelled text only; with a pretrained table those rows are
    frozen, so no label information leaks through them).
    """
    train_posts = list(train_posts)
    targets = np.array([int(label) for _, label in train_posts], dtype=np.int64)
    _check_labels(targets, "post classifier")
    texts = [post_text(p, config) for p, _ in train_posts]
    vocab = Vocabulary.build(texts + list(vocab_texts or ()), table)
    params = ParameterSet(derive_seed(config.rng_seed, "post/init"))
    _embedding_matrix(params, vocab, table, config.embedding_dim)
    d, h = params["embedding"].shape[1], config.lstm_hidden
    params.add_uniform("lstm.W", (d, 4 * h))
    params.add_uniform("lstm.U", (h, 4 * h))
    params.add_zeros("lstm.b", (4 * h,))
    params.add_glorot("out.W", (len(PostLabel), h), fan_in=h, fan_out=len(PostLabel))
    params.add_zeros("out.b", (len(PostLabel),))
    seqs = [_post_ids(p, vocab, config) for p, _ in train_posts]
    log = _fit(params, _post_forward, seqs, targets, len(PostLabel), config, "post")
    return ModelBundle(POST_CLASSIFIER, config, {k: v.copy() for k, v in params.arrays().items()},
                       vocab.tokens, params.rng_seed, log)


def _post_probabilities(params: ParameterSet, config: TrainConfig, vocab: Vocabulary, post: PostRecord) -> np.ndarray:
    # one post per pass, so a post's output never depends on batch neighbours
    return _post_forward(params, config, [_post_ids(post, vocab, config)]).data[0]


def predict_post(bundle: ModelBundle, post: PostRecord) -> PostPrediction:
    _require_kind(bundle, POST_CLASSIFIER)
    probs = _post_probabilities(bundle.params(), bundle.config, bundle.vocab(), post)
    return _post_prediction(post.post_id, probs)


def predict_posts(bundle: ModelBundle, posts: Sequence[PostRecord]) -> list[PostPrediction]:
    _require_kind(bundle, POST_CLASSIFIER)
    params, vocab = bundle.params(), bundle.vocab()
    return [_post_prediction(p.post_id, _post_probabilities(params, bundle.config, vocab, p)) for p in posts]


# -- TvarM -------------------------------------------------------------------

def risk_matrix(post_predictions: Sequence[PostPrediction], max_posts: int) -> np.ndarray:
    """Rows [Pr(S), Pr(I), Pr(B), Pr(A)] per post, most recent ``max_posts`` kept.

    The Uninformative probability is dropped and the rest are not
    renormalised, so a low total risk mass stays visible to the CNN.
    """
    rows = np.array([p.risk_vector() for p in post_predictions]).reshape(-1, len(RISK_COLUMNS))
    return rows[-max_posts:]


def _require_posts(users: Sequence[UserRecord]) -> None:
    for u in users:
        if not u.posts:
            raise TrainingError(f"precondition failed: user {u.user_id!r} has no posts")


def _user_targets(users: Sequence[UserRecord], what: str) -> np.ndarray:
    missing = [u.user_id for u in users if u.user_label is None]
    if missing:
        raise TrainingError(f"precondition failed: user {missing[0]!r} has no label")
    targets = np.array([int(u.user_label) for u in users], dtype=np.int64)
    _check_labels(targets, what)
    return targets


def train_tvarm(users: Sequence[UserRecord], post_bundle: ModelBundle, config: TrainConfig) -> ModelBundle:
    """Train the user CNN over frozen post-classifier outputs."""
    _require_kind(post_bundle, POST_CLASSIFIER)
    users = list(users)
    _require_posts(users)
    targets = _user_targets(users, "TvarM")
    mats = [risk_matrix(predict_posts(post_bundle, u.posts), config.max_posts_per_user) for u in users]
    params = ParameterSet(derive_seed(config.rng_seed, "tvarm/init"))
    _add_cnn_params(params, config.tvarm_widths, config.tvarm_maps, len(RISK_COLUMNS), len(SeverityLabel))
    log = _fit(params, _tvarm_forward, mats, targets, len(SeverityLabel), config, "tvarm")
    return ModelBundle(TVARM, config, {k: v.copy() for k, v in params.arrays().items()},
                       None, params.rng_seed, log, {"post": post_bundle})


def train_tvarm_pipeline(users: Sequence[UserRecord], config: TrainConfig, table: EmbeddingTable | None = None,
                         vocab_texts: Iterable[str] | None = None) -> ModelBundle:
    """Both TvarM stages on the same users: post LSTM on their posts, then the user CNN."""
    users = list(users)
    _require_posts(users)
    posts = [(p, p.label) for u in users for p in u.posts]
    post_bundle = train_post_classifier(posts, config, table, vocab_texts)
    return train_tvarm(users, post_bundle, config)


def predict_user_tvarm(post_bundle: ModelBundle | None, user_bundle: ModelBundle, user: UserRecord) -> UserPrediction:
    """Predict one user; the audit holds the per-post trace in timestamp order.

    ``post_bundle`` may be None to use the classifier embedded in the user
    bundle; if given, it must be that same classifier.
    """
    _require_kind(user_bundle, TVARM)
    embedded = user_bundle.children.get("post")
    if post_bundle is None:
        post_bundle = embedded
    _require_kind(post_bundle, POST_CLASSIFIER)
    if embedded is not None and post_bundle is not embedded and post_bundle.content_hash() != embedded.content_hash():
        raise BundleError("post classifier does not match the one the TvarM user CNN was trained on")
    if not user.posts:
        raise ValueError(f"user {user.user_id!r} has no posts")
    config = user_bundle.config
    post_preds = predict_posts(post_bundle, user.posts)
    mat = risk_matrix(post_preds, config.max_posts_per_user)
    probs = _tvarm_forward(user_bundle.params(), config, [mat]).data[0]
    audit = {
        "posts": [
            {"post_id": p.post_id, "timestamp": post.timestamp, "predicted": p.predicted.key,
             "probabilities": {k.key: v for k, v in p.probabilities.items()}}
            for p, post in zip(post_preds, user.posts)
        ],
        "posts_used": int(mat.shape[0]),
    }
    return _user_prediction(user.user_id, probs, "TvarM", audit)


# -- TinvM -------------------------------------------------------------------

def train_tinvm(users: Sequence[UserRecord], config: TrainConfig, table: EmbeddingTable | None = None,
                vocab_texts: Iterable[str] | None = None) -> ModelBundle:
    users = list(users)
    _require_posts(users)
    targets = _user_targets(users, "TinvM")
    texts = [post_text(p, config) for u in users for p in u.posts]
    vocab = Vocabulary.build(texts + list(vocab_texts or ()), table)
    params = ParameterSet(derive_seed(config.rng_seed, "tinvm/init"))
    _embedding_matrix(params, vocab, table, config.embedding_dim)
    _add_cnn_params(params, config.tinvm_widths, config.tinvm_maps, params["embedding"].shape[1], len(SeverityLabel))
    seqs = [_user_ids(u, vocab, config) for u in users]
    log = _fit(params, _tinvm_forward, seqs, targets, len(SeverityLabel), config, "tinvm")
    return ModelBundle(TINVM, config, {k: v.copy() for k, v in params.arrays().items()},
                       vocab.tokens, params.rng_seed, log)


def predict_user_tinvm(bundle: ModelBundle, user: UserRecord) -> UserPrediction:
    _require_kind(bundle, TINVM)
    if not user.posts:
        raise ValueError(f"user {user.user_id!r} has no posts")
    ids = _user_ids(user, bundle.vocab(), bundle.config)
    probs = _tinvm_forward(bundle.params(), bundle.config, [ids]).data[0]
    audit = {"effective_tokens": len(ids), "posts": len(user.posts)}
    return _user_prediction(user.user_id, probs, "TinvM", audit)


def predict_user(bundle: ModelBundle, user: UserRecord) -> UserPrediction:
    """Dispatch on bundle kind (TvarM uses its embedded post classifier)."""
    if bundle.kind == TVARM:
        return predict_user_tvarm(None, bundle, user)
    if bundle.kind == TINVM:
        return predict_user_tinvm(bundle, user)
    raise BundleError(f"expected a tvarm or tinvm bundle, got {bundle.kind}")
