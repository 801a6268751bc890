"""The S1-S16 ablation grid over throwaway accounts, uninformative and supportive posts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

from ..corpus import UserRecord, ablation_slice
from ..lexicon import EmbeddingTable
from ..models import TrainConfig
from ..seeding import derive_seed
from .cv import METHOD_NAMES, CVResult, cross_validate
from .metrics import MetricsReport

logger = logging.getLogger(__name__)


def _grid() -> list[tuple[str, str, tuple[bool, bool, bool]]]:
    rows = []
    for method in ("tinvm", "tvarm"):
        for ta in (True, False):
            for ui, su in ((True, True), (True, False), (False, True), (False, False)):
                rows.append((f"S{len(rows) + 1}", method, (ta, ui, su)))
    return rows


# (experiment id, method, (throwaway accounts, uninformative posts, supportive posts))
ABLATION_GRID = tuple(_grid())


@dataclass
class AblationRow:
    experiment_id: str
    method: str
    flags: tuple[bool, bool, bool]
    metrics: MetricsReport | None = None
    error: str | None = None
    n_users: int = 0
    cv: CVResult | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        ta, ui, su = self.flags
        d = {
            "experiment": self.experiment_id,
            "method": METHOD_NAMES[self.method],
            "TA": ta, "UI": ui, "SU": su,
            "n_users": self.n_users,
            "status": "ok" if self.ok else "failed",
        }
        if self.metrics is not None:
            d["metrics"] = self.metrics.to_dict()
        if self.cv is not None:
            d["auc"] = {lab.key: c.auc for lab, c in self.cv.roc.items()}
        if self.error is not None:
            d["error"] = self.error
        return d


def ablation_row_config(config: TrainConfig, experiment_id: str) -> TrainConfig:
    """The training config a grid row runs with (its own derived seed)."""
    return replace(config, rng_seed=derive_seed(config.rng_seed, experiment_id))


def run_ablation(users: Sequence[UserRecord], config: TrainConfig = TrainConfig(), folds: int = 5,
                 table: EmbeddingTable | None = None, workers: int = 1) -> list[AblationRow]:
    """All 16 rows in table order; a row that fails keeps its error string."""
    rows = []
    for exp_id, method, flags in ABLATION_GRID:
        row = AblationRow(exp_id, method, flags)
        try:
            sliced = ablation_slice(users, *flags)
            row.n_users = len(sliced)
            result = cross_validate(sliced, method, folds, ablation_row_config(config, exp_id), table, workers)
            row.metrics, row.cv = result.metrics, result
        except Exception as exc:  # recorded, never aborts the grid
            row.error = f"{type(exc).__name__}: {exc}"
            logger.warning("%s failed: %s", exp_id, row.error)
        rows.append(row)
    return rows
