"""``recselect`` command line: prepare, build-meta, select, synth, report."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import metadataset as md
from .config import StudyConfig, load_config
from .errors import (
    DatasetTooSmall,
    InsufficientInteractions,
    MissingStageOutput,
    RecSelectError,
    SchemaMismatch,
    UsageError,
)
from .interactions import build_dataset, export_csv, ingest_csv, load_exported
from .metafeatures import load_features, save_features
from .preprocess import load_plan, save_plan
from .selection import aggregate, emit_report, filter_significant, loo_evaluate, read_records

log = logging.getLogger("recselect")

MANIFEST = "manifest.json"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_manifest(directory: Path, stage: str) -> dict:
    path = directory / MANIFEST
    if not path.exists():
        raise MissingStageOutput(f"{path}: not found; run `recselect {stage}` first")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}:{exc.lineno}: {exc.msg}") from None


def cmd_prepare(cfg: StudyConfig) -> dict:
    if not cfg.corpus:
        raise UsageError("config has no corpus entries to prepare")
    out = cfg.prepared_dir
    if (out / MANIFEST).exists():
        shutil.rmtree(out)  # our own previous output; keeps reruns free of stale datasets
    out.mkdir(parents=True, exist_ok=True)
    datasets, excluded = [], []
    for entry in cfg.corpus:
        ds = build_dataset(ingest_csv(entry.path, entry.schema))
        try:
            p = md.prepare(entry.name, ds, cfg.seed, cfg.core_k)
        except (DatasetTooSmall, InsufficientInteractions) as exc:
            log.warning("excluded %s: %s", entry.name, exc)
            excluded.append({"name": entry.name, "reason": str(exc)})
            continue
        d = out / entry.name
        d.mkdir()
        export_csv(p.dataset, d / "interactions.csv")
        save_plan(p.plan, p.dataset, d / "splits.csv")
        save_features({p.name: p.features}, d / "metafeatures.csv")
        datasets.append(entry.name)
        log.info(
            "prepared %s: %d users, %d items, %d interactions",
            entry.name,
            p.dataset.n_users,
            p.dataset.n_items,
            p.dataset.n_interactions,
        )
    manifest = {
        "tool": "recselect",
        "version": __version__,
        "seed": cfg.seed,
        "core_k": cfg.core_k,
        "datasets": datasets,
        "excluded": excluded,
    }
    _write_json(out / MANIFEST, manifest)
    return manifest


def load_prepared(cfg: StudyConfig) -> list[md.PreparedDataset]:
    manifest = _read_manifest(cfg.prepared_dir, "prepare")
    if manifest.get("seed") != cfg.seed:
        raise MissingStageOutput(
            f"{cfg.prepared_dir / MANIFEST}: prepared with seed {manifest.get('seed')}, config seed is {cfg.seed}; rerun prepare"
        )
    out = []
    for name in manifest["datasets"]:
        d = cfg.prepared_dir / name
        files = [d / "interactions.csv", d / "splits.csv", d / "metafeatures.csv"]
        for f in files:
            if not f.exists():
                raise MissingStageOutput(f"{f}: not found; rerun prepare")
        ds = load_exported(files[0])
        plan = load_plan(files[1], ds, md.derive_seed(cfg.seed, name))
        feats = load_features(files[2])
        if name not in feats:
            raise SchemaMismatch(f"{files[2]}: no row for dataset {name!r}")
        out.append(md.PreparedDataset(name, ds, plan, feats[name]))
    return out


def cmd_build_meta(cfg: StudyConfig, jobs: int = 1) -> md.PerformanceTable:
    prepared = load_prepared(cfg)
    if not prepared:
        raise MissingStageOutput(f"{cfg.prepared_dir}: no datasets survived prepare")
    table = md.build_prepared(prepared, cfg.zoo, cfg.fit_budget_seconds, cfg.seed, jobs)
    md.save(table, cfg.performance_dir, cfg.zoo, {"core_k": cfg.core_k})
    return table


def cmd_select(cfg: StudyConfig, jobs: int = 1, filter_sig: bool = False) -> list[Path]:
    perf = cfg.performance_dir / "performance.csv"
    if not perf.exists():
        raise MissingStageOutput(f"{perf}: not found; run `recselect build-meta` first")
    table = md.load(cfg.performance_dir)
    gt = md.ground_truth(table)
    records = []
    for learner in cfg.learners:
        for objective in cfg.objectives:
            records += loo_evaluate(
                table, learner.family, learner.grid, objective, cfg.seed, cfg.inner_folds, jobs, gt
            )
    if filter_sig:
        records = filter_significant(records)
        if not records:
            raise SchemaMismatch("no record has p < 0.05; nothing to report")
    return emit_report(aggregate(records), cfg.report_dir, cfg.report_format)


def cmd_report(cfg: StudyConfig, filter_sig: bool = False) -> list[Path]:
    """Re-aggregate saved records, plus any external ones, into ``report/combined``."""
    sources = [cfg.report_dir / ("records.csv" if cfg.report_format == "csv" else "report.json")]
    if not sources[0].exists():
        raise MissingStageOutput(f"{sources[0]}: not found; run `recselect select` first")
    records = []
    for path in sources + list(cfg.extra_records):
        if not path.exists():
            raise MissingStageOutput(f"{path}: records file not found")
        records += read_records(path)
    if filter_sig:
        records = filter_significant(records)
    if not records:
        raise SchemaMismatch("no records to aggregate")
    return emit_report(aggregate(records), cfg.report_dir / "combined", cfg.report_format)


STUDY_TEMPLATE = """\
# Planted-rule study generated by `recselect synth` (rule: {rule}).
seed: {seed}
output_dir: .
fit_budget_seconds: {budget}
corpus:
{corpus}"""


def cmd_synth(cfg: StudyConfig) -> Path:
    from .synth import generate_corpus, planted_winner
    from .metafeatures import extract

    if cfg.synth is None:
        raise UsageError("config has no 'synth' section")
    s = cfg.synth
    corpus = generate_corpus(s.n_datasets, s.seed, s.rule, s.max_interactions)
    out = cfg.output_dir
    data = out / "corpus"
    data.mkdir(parents=True, exist_ok=True)
    rows = ["dataset,regime,planted_winner,n_interactions"]
    for name, regime, ds in corpus:
        export_csv(ds, data / f"{name}.csv")
        rows.append(f"{name},{regime},{planted_winner(extract(ds))},{ds.n_interactions}")
    (data / "planted.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    entries = "".join(
        f"  - name: {name}\n    path: corpus/{name}.csv\n    schema: {{has_header: true, user_col: user, item_col: item}}\n"
        for name, _, _ in corpus
    )
    study = out / "study.yaml"
    study.write_text(
        STUDY_TEMPLATE.format(rule=s.rule, seed=s.seed, budget=s.fit_budget_seconds, corpus=entries), encoding="utf-8"
    )
    return study


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="study YAML file")
    common.add_argument("--seed", type=int, help="override the config's root seed")
    common.add_argument("-v", "--verbose", action="count", default=0, help="log progress (-vv for debug)")

    p = _Parser(prog="recselect", description="Meta-learned recommender algorithm selection.")
    p.add_argument("--version", action="version", version=f"recselect {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("prepare", parents=[common], help="prune, split and describe every corpus dataset")
    b = sub.add_parser("build-meta", parents=[common], help="run the zoo on every prepared dataset")
    b.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")
    b.add_argument("--budget", type=float, help="per-fit time budget in seconds")
    s = sub.add_parser("select", parents=[common], help="leave-one-out meta-learner evaluation")
    s.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")
    s.add_argument("--filter-significant", action="store_true", help="drop records with p >= 0.05")
    sub.add_parser("synth", parents=[common], help="write a planted-rule synthetic corpus and study.yaml")
    r = sub.add_parser("report", parents=[common], help="re-aggregate records, including external ones")
    r.add_argument("--filter-significant", action="store_true", help="drop records with p >= 0.05")
    return p


def run(argv: list[str]) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "budget", None) is not None:
        if args.budget <= 0:
            raise UsageError("--budget must be positive")
        cfg = replace(cfg, fit_budget_seconds=args.budget)
    jobs = getattr(args, "jobs", 1)
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    filter_sig = getattr(args, "filter_significant", False)

    if args.command == "prepare":
        m = cmd_prepare(cfg)
        print(f"prepared {len(m['datasets'])} datasets, excluded {len(m['excluded'])} -> {cfg.prepared_dir}")
    elif args.command == "build-meta":
        t = cmd_build_meta(cfg, jobs)
        print(f"performance table {len(t.datasets)}x{len(t.combos)} -> {cfg.performance_dir}")
    elif args.command == "select":
        for path in cmd_select(cfg, jobs, filter_sig):
            print(path)
    elif args.command == "synth":
        print(cmd_synth(cfg))
    elif args.command == "report":
        for path in cmd_report(cfg, filter_sig):
            print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except RecSelectError as exc:
        code = exc.exit_code
        err = {"error": exc.kind, "message": str(exc)}
    except FileNotFoundError as exc:
        code, err = 2, {"error": "FileNotFound", "message": f"{exc.filename}: {exc.strerror}"}
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 3
        code, err = 3, {"error": type(exc).__name__, "message": str(exc)}
    err["exit_code"] = code
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
