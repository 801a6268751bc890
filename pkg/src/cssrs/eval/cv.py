"""Stratified, seeded k-fold cross-validation for TvarM and TinvM."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..corpus import SeverityLabel, UserRecord
from ..lexicon import EmbeddingTable
from ..models import TrainConfig, UserPrediction, post_text, predict_user, train_tinvm, train_tvarm_pipeline
from ..seeding import derive_seed
from .metrics import MetricsReport, compute_metrics
from .roc import RocCurve, compute_roc

logger = logging.getLogger(__name__)

METHODS = ("tinvm", "tvarm")
METHOD_NAMES = {"tinvm": "TinvM", "tvarm": "TvarM"}


def normalize_method(method: str) -> str:
    m = method.lower()
    if m not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return m


def stratified_folds(labels: Sequence, folds: int, seed: int) -> np.ndarray:
    """Fold id per item; each class is shuffled and dealt round-robin.

    The deal continues across classes so fold sizes differ by at most one.
    """
    if folds < 2:
        raise ValueError(f"cross-validation needs at least 2 folds, got {folds}")
    labels = list(labels)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("cross-validation needs users of at least 2 classes")
    for c in classes:
        n = labels.count(c)
        if n < folds:
            name = getattr(c, "key", c)
            raise ValueError(f"stratification impossible: class {name!r} has {n} users but {folds} folds were "
                             f"requested; use --folds {max(2, n)} or fewer")
    rng = np.random.default_rng(seed)
    out = np.empty(len(labels), dtype=np.int64)
    slot = 0
    for c in classes:
        idx = np.array([i for i, lab in enumerate(labels) if lab == c])
        idx = idx[rng.permutation(idx.size)]
        out[idx] = (slot + np.arange(idx.size)) % folds
        slot = (slot + idx.size) % folds
    return out


@dataclass
class CVResult:
    method: str
    folds: np.ndarray
    predictions: list[tuple[int, UserPrediction]]
    metrics: MetricsReport
    roc: dict = field(default_factory=dict)      # SeverityLabel -> RocCurve
    skipped_roc: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": METHOD_NAMES[self.method],
            "metrics": self.metrics.to_dict(),
            "roc": {lab.key: curve.to_dict() for lab, curve in self.roc.items()},
            "skipped_roc": {lab.key: why for lab, why in self.skipped_roc.items()},
            "predictions": [dict(p.to_dict(include_audit=False), fold=int(f)) for f, p in self.predictions],
        }


def fold_config(config: TrainConfig, fold: int) -> TrainConfig:
    return replace(config, rng_seed=derive_seed(config.rng_seed, f"fold-{fold}"))


def _run_fold(method, train_users, test_users, config, table, vocab_texts):
    if method == "tvarm":
        bundle = train_tvarm_pipeline(train_users, config, table, vocab_texts)
    else:
        bundle = train_tinvm(train_users, config, table, vocab_texts)
    return [predict_user(bundle, u) for u in test_users]


def cross_validate(users: Sequence[UserRecord], method: str, folds: int = 5, config: TrainConfig = TrainConfig(),
                   table: EmbeddingTable | None = None, workers: int = 1) -> CVResult:
    """Predict every user once with a model trained on the other folds.

    The TvarM post classifier only sees posts of training-fold users. With a
    pretrained ``table`` the vocabulary also covers the held-out users' words;
    those rows are frozen pretrained vectors, so no labels leak.
    """
    method = normalize_method(method)
    users = list(users)
    labels = [u.user_label for u in users]
    if any(lab is None for lab in labels):
        raise ValueError("cross-validation needs a user_label for every user")
    assignment = stratified_folds(labels, folds, derive_seed(config.rng_seed, "folds"))
    vocab_texts = None
    if table is not None:
        vocab_texts = [post_text(p, config) for u in users for p in u.posts]
    jobs = []
    for k in range(folds):
        train = [u for u, f in zip(users, assignment) if f != k]
        test = [u for u, f in zip(users, assignment) if f == k]
        jobs.append((method, train, test, fold_config(config, k), table, vocab_texts))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold, *zip(*jobs)))
    else:
        results = [_run_fold(*job) for job in jobs]

    by_user = {}
    for k, preds in enumerate(results):
        logger.info("%s fold %d: %d users predicted", METHOD_NAMES[method], k, len(preds))
        for p in preds:
            by_user[p.user_id] = (k, p)
    predictions = [by_user[u.user_id] for u in users]
    truth = labels
    predicted = [p.predicted for _, p in predictions]
    classes = sorted(set(truth) | set(predicted))
    metrics = compute_metrics(truth, predicted, classes, ordinal=True)
    roc, skipped = {}, {}
    scores = [p.probabilities for _, p in predictions]
    for lab in SeverityLabel:
        try:
            roc[lab] = compute_roc(truth, scores, lab)
        except ValueError as exc:
            skipped[lab] = str(exc)
    return CVResult(method, assignment, predictions, metrics, roc, skipped)
