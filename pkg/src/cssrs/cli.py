"""Command-line entry point: ``cssrs <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 data, 4 training, 5 internal error.
Commands that write artifacts put them under the output directory (flag,
config ``output_dir``, ``$CSSRS_OUTPUT_DIR``, else ``./cssrs-out``) next to a
``manifest.json`` that echoes the resolved config, the seed and content
hashes of every input and output. Passing that manifest back as
``--config`` reruns the command.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib.resources import files
from pathlib import Path

from . import __version__
from .corpus import DatasetError, SeverityLabel, dataset_stats, load_dataset
from .eval import (
    agreement_report,
    cross_validate,
    run_ablation,
    sentiment_diagnostics,
)
from .eval.cv import METHOD_NAMES, normalize_method
from .eval.reports import dumps, plot_roc_svg, write_ablation_csv, write_json, write_roc_csv
from .eval.roc import compute_roc
from .lexicon import LexiconError, load_embeddings, load_lexicon, load_score_lexicon, mednorm
from .models import BundleError, ModelBundle, TrainConfig, TrainingError, predict_user, train_tinvm, train_tvarm_pipeline

logger = logging.getLogger("cssrs")

EXIT_USAGE, EXIT_DATA, EXIT_TRAINING, EXIT_INTERNAL = 2, 3, 4, 5
MANIFEST_VERSION = 1
DEFAULT_OUTPUT_DIR = "cssrs-out"
SHIPPED = files("cssrs") / "data"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def usage_error(msg: str) -> CliError:
    return CliError(msg, EXIT_USAGE)


# -- run configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    dataset_path: str | None = None
    embeddings_path: str | None = None
    lexicon_paths: list[str] = field(default_factory=list)
    method: str = "tvarm"
    folds: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str | None = None
    master_seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        # rng_seed always follows master_seed, echoing both would be redundant
        d["train"].pop("rng_seed")
        return d


RUN_KEYS = {f.name for f in fields(RunConfig)} - {"train"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"rng_seed"}


def _coerce(raw: str):
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    if "," in raw:
        return [_coerce(x.strip()) for x in raw.split(",") if x.strip()]
    return raw


def read_config_file(path) -> tuple[dict, dict]:
    """Flat JSON object, ``key=value`` lines, or a manifest written by an earlier run.

    Returns (run-level values, train-level values).
    """
    path = Path(path)
    if not path.is_file():
        raise usage_error(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise usage_error(f"{path}: invalid JSON config ({exc.msg})") from None
        if "manifest_version" in obj:
            obj = dict(obj["config"])
            train = obj.pop("train", {})
            obj.update(train)
    else:
        obj = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise usage_error(f"{path} line {lineno}: expected key=value")
            k, v = line.split("=", 1)
            obj[k.strip()] = _coerce(v.strip())
    run, train = {}, {}
    for k, v in obj.items():
        if k in RUN_KEYS:
            run[k] = v
        elif k in TRAIN_KEYS:
            train[k] = v
        elif k in ("seed", "rng_seed"):
            run["master_seed"] = v
        else:
            raise usage_error(f"{path}: unknown config key {k!r}")
    if isinstance(run.get("lexicon_paths"), str):
        run["lexicon_paths"] = [run["lexicon_paths"]]
    return run, train


TRAIN_FLAGS = {
    "epochs": int, "learning_rate": float, "batch_size": int, "max_tokens_per_post": int,
    "max_posts_per_user": int, "class_weighting": str, "embedding_dim": int, "lstm_hidden": int,
    "tinvm_maps": int, "tvarm_maps": int, "dropout": float, "text_field": str,
}


def build_run_config(args) -> RunConfig:
    run, train = read_config_file(args.config) if getattr(args, "config", None) else ({}, {})
    for name in ("dataset_path", "embeddings_path", "method", "folds", "output_dir", "master_seed"):
        value = getattr(args, name, None)
        if value is not None:
            run[name] = value
    if getattr(args, "lexicon_paths", None):
        run["lexicon_paths"] = args.lexicon_paths
    for name in TRAIN_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            train[name] = value
    seed = run.get("master_seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise usage_error(f"master seed must be a non-negative integer, got {seed!r}")
    try:
        train_cfg = TrainConfig.from_dict(dict(train, rng_seed=seed))
    except (TypeError, ValueError) as exc:
        raise usage_error(f"invalid training config: {exc}") from None
    cfg = RunConfig(**{k: v for k, v in run.items() if k != "train"}, train=train_cfg)
    try:
        cfg.method = normalize_method(cfg.method)
    except ValueError as exc:
        raise usage_error(str(exc)) from None
    if isinstance(cfg.folds, bool) or not isinstance(cfg.folds, int) or cfg.folds < 2:
        raise usage_error(f"--folds must be an integer >= 2, got {cfg.folds!r}")
    # resolve every path before any compute
    for name in ("dataset_path", "embeddings_path"):
        value = getattr(cfg, name)
        if value is not None:
            setattr(cfg, name, str(_existing(value)))
    cfg.lexicon_paths = [str(_existing(p)) for p in cfg.lexicon_paths]
    out = cfg.output_dir or os.environ.get("CSSRS_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR
    cfg.output_dir = str(Path(out).resolve())
    return cfg


def _existing(path) -> Path:
    p = Path(path).expanduser().resolve()
    if not p.exists():
        raise usage_error(f"file not found: {path}")
    return p


# -- hashing and manifests -------------------------------------------------------

def git_blob_hash(data: bytes) -> str:
    """The object id git would give this content as a blob."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(command: str, cfg: RunConfig, outputs: list[Path], extra_inputs: list[str] = (),
                   path: Path | None = None) -> Path:
    inputs = [p for p in [cfg.dataset_path, cfg.embeddings_path, *cfg.lexicon_paths, *extra_inputs] if p]
    out_hashes = {p.name: git_blob_hash(p.read_bytes()) for p in sorted(outputs)}
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "master_seed": cfg.master_seed,
        "inputs": {p: git_blob_hash(Path(p).read_bytes()) for p in inputs},
        "outputs": out_hashes,
        "content_hash": git_blob_hash(json.dumps(out_hashes, sort_keys=True).encode("utf-8")),
    }
    return write_json(path or Path(cfg.output_dir) / "manifest.json", manifest)


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_users(path, require_labels=True):
    if path is None:
        raise usage_error("a dataset is required (--dataset or dataset_path in the config)")
    return load_dataset(path, require_labels=require_labels)


def _load_table(cfg: RunConfig):
    return load_embeddings(cfg.embeddings_path) if cfg.embeddings_path else None


# -- subcommands -----------------------------------------------------------------

def cmd_stats(args) -> int:
    path = _existing(args.dataset)
    stats = dataset_stats(load_dataset(path))
    if args.json:
        sys.stdout.write(dumps(stats.to_dict()))
        return 0
    d = stats.to_dict()
    lines = [f"{k}: {d[k]}" for k in ("users", "posts", "sentences")]
    lines.append(f"avg_posts_per_user: {d['avg_posts_per_user']:.2f}")
    lines.append(f"avg_sentences_per_post: {d['avg_sentences_per_post']:.2f}")
    for table in ("users_by_label", "posts_by_label"):
        for group, counts in d[table].items():
            lines.append(f"{table}.{group}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_normalize(args) -> int:
    src = _existing(args.input)
    table = load_embeddings(_existing(args.embeddings) if args.embeddings else SHIPPED / "fixture_embeddings.txt")
    lex_paths = args.lexicon_paths or [SHIPPED / "twadr_mini.csv", SHIPPED / "askapatient_mini.csv"]
    lexicons = [load_lexicon(_existing(p)) for p in lex_paths]
    norm = lambda text: mednorm(text, lexicons, table, threshold=args.threshold)  # noqa: E731
    skipped = 0
    with src.open(encoding="utf-8") as fin, open(args.output, "w", encoding="utf-8") as fout:
        for lineno, line in enumerate(fin, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("expected a JSON object")
                if isinstance(obj.get("posts"), list):
                    for k, post in enumerate(obj["posts"]):
                        if not isinstance(post, dict) or not isinstance(post.get("text"), str):
                            raise ValueError(f"posts[{k}] has no string 'text'")
                    for post in obj["posts"]:
                        post["normalized_text"] = norm(post["text"])
                elif isinstance(obj.get("text"), str):
                    obj["normalized_text"] = norm(obj["text"])
                else:
                    raise ValueError("record has neither 'text' nor 'posts'")
            except ValueError as exc:
                skipped += 1
                print(f"warning: {src.name} line {lineno}: skipped ({exc})", file=sys.stderr)
                continue
            fout.write(json.dumps(obj, ensure_ascii=False) + "\n")
    if skipped:
        print(f"{skipped} record(s) skipped", file=sys.stderr)
        return EXIT_DATA
    return 0


def cmd_train(args) -> int:
    cfg = build_run_config(args)
    users = _load_users(cfg.dataset_path)
    table = _load_table(cfg)
    if cfg.method == "tvarm":
        bundle = train_tvarm_pipeline(users, cfg.train, table)
    else:
        bundle = train_tinvm(users, cfg.train, table)
    out = _prepare_output(cfg)
    path = out / (args.out or f"{cfg.method}.bundle.json")
    bundle.save(path)
    write_manifest("train", cfg, [path])
    logger.info("wrote %s", path)
    return 0


def cmd_predict(args) -> int:
    bundle_path = _existing(args.bundle)
    bundle = ModelBundle.load(bundle_path)
    users = load_dataset(_existing(args.input), require_labels=False)
    out_path = Path(args.output)
    with out_path.open("w", encoding="utf-8") as fh:
        for u in users:
            pred = predict_user(bundle, u)
            fh.write(json.dumps(pred.to_dict(include_audit=args.audit), ensure_ascii=False, sort_keys=True) + "\n")
    cfg = RunConfig(output_dir=str(out_path.resolve().parent), master_seed=bundle.config.rng_seed)
    write_manifest("predict", cfg, [out_path], [str(bundle_path), str(_existing(args.input))],
                   path=out_path.with_name(out_path.stem + ".manifest.json"))
    return 0


def _prediction_rows(result, users):
    truth = {u.user_id: u.user_label for u in users}
    for fold, p in result.predictions:
        d = p.to_dict(include_audit=False)
        d["fold"] = int(fold)
        d["truth"] = truth[p.user_id].key
        yield d


def cmd_cv(args) -> int:
    cfg = build_run_config(args)
    users = _load_users(cfg.dataset_path)
    try:
        result = cross_validate(users, cfg.method, cfg.folds, cfg.train, _load_table(cfg), args.workers)
    except ValueError as exc:
        if "stratification" in str(exc) or "folds" in str(exc):
            raise usage_error(str(exc)) from None
        raise
    out = _prepare_output(cfg)
    name = METHOD_NAMES[cfg.method]
    summary = result.to_dict()
    summary.pop("predictions")  # written separately as JSONL
    metrics = write_json(out / f"metrics_{cfg.method}.json", summary)
    preds = out / f"predictions_{cfg.method}.jsonl"
    with preds.open("w", encoding="utf-8") as fh:
        for row in _prediction_rows(result, users):
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    roc_csv = write_roc_csv(out / f"roc_{cfg.method}.csv", {name: result.roc})
    svg = plot_roc_svg(out / f"roc_{cfg.method}.svg", name, result.roc)
    write_manifest("cv", cfg, [metrics, preds, roc_csv, svg])
    m = result.metrics.macro
    print(f"{name} {cfg.folds}-fold: avg_prec={m['avg_precision']:.2f} avg_rec={m['avg_recall']:.2f} f1={m['f1']:.2f}")
    for lab, curve in result.roc.items():
        print(f"  AUC {lab.key}: {curve.auc:.3f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = build_run_config(args)
    users = _load_users(cfg.dataset_path)
    rows = run_ablation(users, cfg.train, cfg.folds, _load_table(cfg), args.workers)
    out = _prepare_output(cfg)
    csv_path = write_ablation_csv(out / "ablation.csv", rows)
    json_path = write_json(out / "ablation.json", [r.to_dict() for r in rows])
    write_manifest("ablate", cfg, [csv_path, json_path])
    sys.stdout.write(csv_path.read_text(encoding="utf-8"))
    failed = [r.experiment_id for r in rows if not r.ok]
    if failed:
        print(f"failed rows: {', '.join(failed)}", file=sys.stderr)
    return 0


def read_annotations(path) -> tuple[list[str], list[list]]:
    """Long-format CSV with columns item, annotator, label (blank label = missing)."""
    items, annotators, cells = [], [], {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"item", "annotator", "label"} <= set(reader.fieldnames):
            raise DatasetError(f"{Path(path).name} line 1: needs columns item,annotator,label")
        for lineno, row in enumerate(reader, 2):
            item, ann, label = row["item"], row["annotator"], (row["label"] or "").strip()
            if item not in items:
                items.append(item)
            if ann not in annotators:
                annotators.append(ann)
            if (ann, item) in cells:
                raise DatasetError(f"{Path(path).name} line {lineno}: duplicate label for ({ann}, {item})")
            cells[(ann, item)] = label or None
    matrix = [[cells.get((a, i)) for i in items] for a in annotators]
    return annotators, matrix


def cmd_agreement(args) -> int:
    path = _existing(args.annotations)
    names, matrix = read_annotations(path)
    try:
        report = agreement_report(matrix, names)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    cfg = RunConfig(output_dir=str(Path(args.output_dir or os.environ.get("CSSRS_OUTPUT_DIR")
                                        or DEFAULT_OUTPUT_DIR).resolve()))
    out = _prepare_output(cfg)
    path_out = write_json(out / "agreement.json", report)
    write_manifest("agreement", cfg, [path_out], [str(path)])
    sys.stdout.write(dumps(report))
    return 0


def cmd_roc(args) -> int:
    out_dir = Path(args.output_dir or os.environ.get("CSSRS_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR).resolve()
    curves: dict[str, dict] = {}
    inputs = []
    for p in args.predictions:
        path = _existing(p)
        inputs.append(str(path))
        rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not rows:
            raise DatasetError(f"{path.name}: no predictions")
        for k, r in enumerate(rows, 1):
            if "truth" not in r or "probabilities" not in r:
                raise DatasetError(f"{path.name} line {k}: needs 'truth' and 'probabilities' (cv output)")
        method = rows[0].get("method", path.stem)
        truth = [SeverityLabel.parse(r["truth"]) for r in rows]
        scores = [{SeverityLabel.parse(k): v for k, v in r["probabilities"].items()} for r in rows]
        curves[method] = {}
        for lab in SeverityLabel:
            try:
                curves[method][lab] = compute_roc(truth, scores, lab)
            except ValueError as exc:
                logger.warning("%s %s: %s", method, lab.key, exc)
    cfg = RunConfig(output_dir=str(out_dir))
    out = _prepare_output(cfg)
    outputs = [write_roc_csv(out / "roc.csv", curves)]
    for method, by_class in curves.items():
        outputs.append(plot_roc_svg(out / f"roc_{method}.svg", method, by_class))
        for lab, curve in by_class.items():
            print(f"{method} AUC {lab.key}: {curve.auc:.3f}")
    write_manifest("roc", cfg, outputs, inputs)
    return 0


def cmd_diagnostics(args) -> int:
    cfg = build_run_config(args)
    users = _load_users(cfg.dataset_path)
    valence = load_score_lexicon(_existing(args.valence))
    happiness = load_score_lexicon(_existing(args.happiness))
    report = sentiment_diagnostics(users, valence, happiness)
    out = _prepare_output(cfg)
    path = write_json(out / "diagnostics.json", report)
    write_manifest("diagnostics", cfg, [path], [str(_existing(args.valence)), str(_existing(args.happiness))])
    sys.stdout.write(dumps(report))
    return 0


# -- parser ------------------------------------------------------------------------

def _add_run_args(p, method=True, folds=False, train=True):
    p.add_argument("--config", help="flat JSON or key=value file; a manifest.json reruns a previous command")
    p.add_argument("--dataset", dest="dataset_path", help="dataset JSONL/CSV")
    p.add_argument("--embeddings", dest="embeddings_path", help="pretrained embedding table (text format)")
    p.add_argument("--output-dir", dest="output_dir", help="default: $CSSRS_OUTPUT_DIR or ./cssrs-out")
    p.add_argument("--seed", dest="master_seed", type=int, help="master seed for every derived stream")
    if method:
        p.add_argument("--method", choices=["tinvm", "tvarm", "TinvM", "TvarM"])
    if folds:
        p.add_argument("--folds", type=int, help="number of stratified folds (default 5)")
        p.add_argument("--workers", type=int, default=1, help="parallel fold workers")
    if train:
        g = p.add_argument_group("training overrides")
        for name, kind in TRAIN_FLAGS.items():
            g.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cssrs", description="C-SSRS suicide-risk severity pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("dataset")
    p.add_argument("--json", action="store_true", help="print the full statistics as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("normalize", help="add normalized_text to every post (MedNorm)")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--lexicon", dest="lexicon_paths", action="append", help="concept lexicon CSV (repeatable)")
    p.add_argument("--embeddings", help="embedding table; defaults to the shipped fixture table")
    p.add_argument("--threshold", type=float, default=0.6)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("train", help="train a TvarM or TinvM bundle")
    _add_run_args(p)
    p.add_argument("--out", help="bundle file name inside the output dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict users with a trained bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True, help="users JSONL/CSV (labels optional)")
    p.add_argument("--output", required=True, help="output JSONL of user predictions")
    p.add_argument("--audit", action="store_true", help="include the per-post / token audit trace")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _add_run_args(p, folds=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("ablate", help="the 16-row ablation grid")
    _add_run_args(p, method=False, folds=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("agreement", help="Krippendorff alpha from item,annotator,label CSV")
    p.add_argument("annotations")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("roc", help="ROC curves from cv prediction files")
    p.add_argument("predictions", nargs="+")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("diagnostics", help="sentiment/happiness summaries per severity level")
    _add_run_args(p, method=False, train=False)
    p.add_argument("--valence", required=True, help="token,score CSV")
    p.add_argument("--happiness", required=True, help="token,score CSV")
    p.set_defaults(func=cmd_diagnostics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, LexiconError, BundleError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except Exception as exc:  # pragma: no cover - safety net
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
