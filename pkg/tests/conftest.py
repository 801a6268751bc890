from __future__ import annotations

import json
from importlib.resources import files

import pytest

from pathlib import Path

from cssrs.corpus import PostLabel, PostRecord, SeverityLabel, UserRecord, load_dataset
from cssrs.lexicon import load_embeddings, load_lexicon
from cssrs.models import TrainConfig, train_tinvm, train_tvarm_pipeline

DATA = files("cssrs") / "data"
FIXTURES = Path(__file__).parent / "fixtures"
# small but converging setup shared by the model tests
FAST = TrainConfig(epochs=60, rng_seed=1)


def make_user(uid, label, post_labels, username=None, texts=None, t0=1000):
    posts = tuple(
        PostRecord(
            post_id=f"{uid}-p{i}",
            user_id=uid,
            timestamp=t0 + 60 * i,
            subreddit="SuicideWatch",
            text=(texts[i] if texts else f"post {i} of {uid}"),
            label=PostLabel[pl.upper()],
        )
        for i, pl in enumerate(post_labels)
    )
    return UserRecord(uid, posts, SeverityLabel[label.upper()] if label else None, username)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    return path


@pytest.fixture(scope="session")
def table():
    return load_embeddings(DATA / "fixture_embeddings.txt")


@pytest.fixture(scope="session")
def norm_lexicons():
    return [load_lexicon(DATA / "twadr_mini.csv"), load_lexicon(DATA / "askapatient_mini.csv")]


@pytest.fixture(scope="session")
def severity_lexicon():
    return load_lexicon(DATA / "severity_mini.csv")


@pytest.fixture(scope="session")
def keyword_users():
    return load_dataset(FIXTURES / "keyword40.jsonl")


@pytest.fixture(scope="session")
def tvarm_bundle(keyword_users, table):
    return train_tvarm_pipeline(keyword_users, FAST, table)


@pytest.fixture(scope="session")
def tinvm_bundle(keyword_users, table):
    return train_tinvm(keyword_users, FAST, table)


# -- acceptance summary --------------------------------------------------------

ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    status = "PASS" if report.outcome == "passed" else "SKIP" if report.outcome == "skipped" else "FAIL"
    prev = ACCEPTANCE_RESULTS.get(crit)
    if prev is None or prev[0] == "PASS":
        ACCEPTANCE_RESULTS[crit] = (status, report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE_RESULTS, key=lambda c: int(c.split()[0])):
        status, node = ACCEPTANCE_RESULTS[crit]
        terminalreporter.write_line(f"[{status}] criterion {crit}")
