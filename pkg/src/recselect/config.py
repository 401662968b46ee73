"""Study configuration: one YAML file describing corpus, zoo, learners and outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .algos import AlgoComboId, Algorithm, default_zoo
from .errors import ConfigError
from .interactions import CsvSchema
from .metadataset import DEFAULT_BUDGET
from .metalearn import DEFAULT_GRIDS, Family, RegressorSpec
from .metrics import THRESHOLDS
from .preprocess import N_FOLDS
from .selection import Objective

TOP_KEYS = {
    "corpus",
    "core_k",
    "n_folds",
    "thresholds",
    "fit_budget_seconds",
    "seed",
    "zoo",
    "learners",
    "objectives",
    "inner_folds",
    "output_dir",
    "report_format",
    "extra_records",
    "synth",
}
SCHEMA_KEYS = {"user_col", "item_col", "rating_col", "timestamp_col", "delimiter", "has_header"}
SYNTH_KEYS = {"n_datasets", "rule", "seed", "max_interactions", "fit_budget_seconds"}

# hyperparameters each algorithm needs, with their accepted types
ZOO_KEYS: dict[Algorithm, dict[str, tuple[type, ...]]] = {
    Algorithm.Random: {},
    Algorithm.Popularity: {},
    Algorithm.UserKNN: {"neighbors": (int,)},
    Algorithm.ItemKNN: {"neighbors": (int,)},
    Algorithm.ImplicitALS: {"factors": (int,), "reg": (int, float), "epochs": (int,)},
    Algorithm.EASE: {"reg": (int, float)},
}


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    path: Path
    schema: CsvSchema


@dataclass(frozen=True)
class LearnerEntry:
    family: Family
    grid: list[dict[str, Any]]


@dataclass(frozen=True)
class SynthConfig:
    n_datasets: int
    seed: int
    rule: str = "regimes"
    max_interactions: int = 20_000
    fit_budget_seconds: float = 30.0


@dataclass(frozen=True)
class StudyConfig:
    seed: int
    output_dir: Path
    corpus: list[DatasetEntry] = field(default_factory=list)
    core_k: int = 5
    fit_budget_seconds: float = DEFAULT_BUDGET
    zoo: list[tuple[AlgoComboId, dict[str, Any]]] = field(default_factory=default_zoo)
    learners: list[LearnerEntry] = field(default_factory=list)
    objectives: list[Objective] = field(default_factory=lambda: list(Objective))
    inner_folds: int = 3
    report_format: str = "csv"
    extra_records: list[Path] = field(default_factory=list)
    synth: SynthConfig | None = None
    source: Path | None = None

    @property
    def prepared_dir(self) -> Path:
        return self.output_dir / "prepared"

    @property
    def performance_dir(self) -> Path:
        return self.output_dir / "performance"

    @property
    def report_dir(self) -> Path:
        return self.output_dir / "report"


class _Doc:
    """Plain Python values plus the source line of every node."""

    def __init__(self, source: str):
        self.source = source

    def err(self, node: yaml.Node | None, msg: str) -> ConfigError:
        line = node.start_mark.line + 1 if node is not None else 1
        return ConfigError(f"{self.source}:{line}: {msg}")

    def value(self, node: yaml.Node) -> Any:
        if isinstance(node, yaml.MappingNode):
            return {self.value(k): self.value(v) for k, v in node.value}
        if isinstance(node, yaml.SequenceNode):
            return [self.value(v) for v in node.value]
        return _scalar(node)

    def mapping(self, node: yaml.Node, what: str, allowed: set[str] | None = None) -> dict[str, yaml.Node]:
        if not isinstance(node, yaml.MappingNode):
            raise self.err(node, f"{what} must be a mapping")
        out: dict[str, yaml.Node] = {}
        for k, v in node.value:
            key = _scalar(k)
            if not isinstance(key, str):
                raise self.err(k, f"{what}: keys must be strings")
            if key in out:
                raise self.err(k, f"{what}: duplicate key {key!r}")
            if allowed is not None and key not in allowed:
                raise self.err(k, f"{what}: unknown key {key!r}")
            out[key] = v
        return out

    def sequence(self, node: yaml.Node, what: str) -> list[yaml.Node]:
        if not isinstance(node, yaml.SequenceNode):
            raise self.err(node, f"{what} must be a list")
        return list(node.value)

    def typed(self, node: yaml.Node, what: str, types: tuple[type, ...]) -> Any:
        v = self.value(node)
        if not isinstance(v, types) or (isinstance(v, bool) and bool not in types):
            raise self.err(node, f"{what} must be {'/'.join(t.__name__ for t in types)}")
        return float(v) if float in types and isinstance(v, int) else v


def _scalar(node: yaml.Node) -> Any:
    if not isinstance(node, yaml.ScalarNode):
        return None
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def _column(doc: _Doc, node: yaml.Node, what: str, optional: bool) -> int | str | None:
    v = doc.value(node)
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, str)) or (isinstance(v, int) and v < 0):
        raise doc.err(node, f"{what} must be a non-negative column index or a header name")
    return v


def _schema(doc: _Doc, node: yaml.Node | None, where: str) -> CsvSchema:
    if node is None:
        return CsvSchema()
    m = doc.mapping(node, f"{where}.schema", SCHEMA_KEYS)
    kw: dict[str, Any] = {}
    for key in ("user_col", "item_col", "rating_col", "timestamp_col"):
        if key in m:
            kw[key] = _column(doc, m[key], key, key in ("rating_col", "timestamp_col"))
    if "delimiter" in m:
        d = doc.typed(m["delimiter"], "delimiter", (str,))
        if len(d) != 1:
            raise doc.err(m["delimiter"], "delimiter must be a single character")
        kw["delimiter"] = d
    if "has_header" in m:
        kw["has_header"] = doc.typed(m["has_header"], "has_header", (bool,))
    schema = CsvSchema(**kw)
    if not schema.has_header:
        for key in ("user_col", "item_col", "rating_col", "timestamp_col"):
            if isinstance(getattr(schema, key), str):
                raise doc.err(m[key], f"{key} names a column but has_header is false")
    return schema


def _zoo(doc: _Doc, node: yaml.Node) -> list[tuple[AlgoComboId, dict[str, Any]]]:
    out, seen = [], set()
    for entry in doc.sequence(node, "zoo"):
        m = doc.mapping(entry, "zoo entry", {"combo", "hyperparameters"})
        if "combo" not in m:
            raise doc.err(entry, "zoo entry needs 'combo'")
        try:
            combo = AlgoComboId.parse(doc.typed(m["combo"], "combo", (str,)))
        except ValueError as exc:
            raise doc.err(m["combo"], str(exc)) from None
        if combo in seen:
            raise doc.err(m["combo"], f"duplicate combo {combo}")
        seen.add(combo)
        hp_node = m.get("hyperparameters")
        hp_map = doc.mapping(hp_node, "hyperparameters") if hp_node is not None else {}
        need = ZOO_KEYS[combo.algorithm]
        hp = {}
        for key, vnode in hp_map.items():
            if key not in need:
                raise doc.err(vnode, f"{combo}: unknown hyperparameter {key!r}")
            hp[key] = doc.typed(vnode, key, need[key])
            if hp[key] <= 0:
                raise doc.err(vnode, f"{combo}: {key} must be positive")
        missing = sorted(set(need) - set(hp))
        if missing:
            raise doc.err(entry, f"{combo}: missing hyperparameters {', '.join(missing)}")
        out.append((combo, hp))
    if not out:
        raise doc.err(node, "zoo must not be empty")
    return out


def _learners(doc: _Doc, node: yaml.Node, seed: int) -> list[LearnerEntry]:
    out, seen = [], set()
    for entry in doc.sequence(node, "learners"):
        if isinstance(entry, yaml.ScalarNode):
            m = {"family": entry}
        else:
            m = doc.mapping(entry, "learner", {"family", "grid"})
        if "family" not in m:
            raise doc.err(entry, "learner needs 'family'")
        try:
            family = Family(doc.typed(m["family"], "family", (str,)))
        except ValueError:
            raise doc.err(m["family"], f"unknown learner family; known: {', '.join(f.value for f in Family)}") from None
        if family in seen:
            raise doc.err(m["family"], f"duplicate learner {family.value}")
        seen.add(family)
        if "grid" in m:
            grid = []
            for point in doc.sequence(m["grid"], "grid"):
                hp = {k: doc.value(v) for k, v in doc.mapping(point, "grid point").items()}
                try:
                    RegressorSpec(family, hp, seed)
                except (KeyError, ValueError, TypeError) as exc:
                    raise doc.err(point, f"{family.value}: {exc}") from None
                grid.append(hp)
            if not grid:
                raise doc.err(m["grid"], "grid must not be empty")
        else:
            grid = list(DEFAULT_GRIDS[family])
        out.append(LearnerEntry(family, grid))
    return out


def _synth(doc: _Doc, node: yaml.Node) -> SynthConfig:
    m = doc.mapping(node, "synth", SYNTH_KEYS)
    for key in ("n_datasets", "seed"):
        if key not in m:
            raise doc.err(node, f"synth needs {key!r}")
    kw: dict[str, Any] = {
        "n_datasets": doc.typed(m["n_datasets"], "n_datasets", (int,)),
        "seed": doc.typed(m["seed"], "seed", (int,)),
    }
    if kw["n_datasets"] < 3:
        raise doc.err(m["n_datasets"], "n_datasets must be >= 3")
    if "rule" in m:
        from .synth import RULES

        kw["rule"] = doc.typed(m["rule"], "rule", (str,))
        if kw["rule"] not in RULES:
            raise doc.err(m["rule"], f"unknown planted rule; known: {', '.join(RULES)}")
    if "max_interactions" in m:
        kw["max_interactions"] = doc.typed(m["max_interactions"], "max_interactions", (int,))
        if kw["max_interactions"] < 50:
            raise doc.err(m["max_interactions"], "max_interactions must be >= 50")
    if "fit_budget_seconds" in m:
        kw["fit_budget_seconds"] = doc.typed(m["fit_budget_seconds"], "fit_budget_seconds", (int, float))
        if kw["fit_budget_seconds"] <= 0:
            raise doc.err(m["fit_budget_seconds"], "fit_budget_seconds must be positive")
    return SynthConfig(**kw)


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> StudyConfig:
    """Parse and validate a study config; relative paths resolve against ``base_dir``."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    doc = _Doc(source)
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{source}:{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        raise ConfigError(f"{source}:1: empty config")
    m = doc.mapping(root, "config", TOP_KEYS)

    if "seed" not in m:
        raise doc.err(root, "'seed' is required (no implicit randomness)")
    seed = doc.typed(m["seed"], "seed", (int,))
    if seed < 0:
        raise doc.err(m["seed"], "seed must be non-negative")
    if "output_dir" not in m:
        raise doc.err(root, "'output_dir' is required")
    kw: dict[str, Any] = {"seed": seed, "output_dir": base / doc.typed(m["output_dir"], "output_dir", (str,))}

    corpus, names = [], set()
    for entry in doc.sequence(m["corpus"], "corpus") if "corpus" in m else []:
        e = doc.mapping(entry, "corpus entry", {"name", "path", "schema"})
        for key in ("name", "path"):
            if key not in e:
                raise doc.err(entry, f"corpus entry needs {key!r}")
        name = doc.typed(e["name"], "name", (str,))
        if not name or "/" in name or name in (".", ".."):
            raise doc.err(e["name"], f"invalid dataset name {name!r}")
        if name in names:
            raise doc.err(e["name"], f"duplicate dataset name {name!r}")
        names.add(name)
        corpus.append(DatasetEntry(name, base / doc.typed(e["path"], "path", (str,)), _schema(doc, e.get("schema"), name)))
    kw["corpus"] = corpus

    if "core_k" in m:
        kw["core_k"] = doc.typed(m["core_k"], "core_k", (int,))
        if kw["core_k"] < 1:
            raise doc.err(m["core_k"], "core_k must be >= 1")
    if "n_folds" in m and doc.value(m["n_folds"]) != N_FOLDS:
        raise doc.err(m["n_folds"], f"n_folds is fixed at {N_FOLDS}")
    if "thresholds" in m and doc.value(m["thresholds"]) != list(THRESHOLDS):
        raise doc.err(m["thresholds"], f"thresholds are fixed at {list(THRESHOLDS)}")
    if "fit_budget_seconds" in m:
        kw["fit_budget_seconds"] = doc.typed(m["fit_budget_seconds"], "fit_budget_seconds", (int, float))
        if kw["fit_budget_seconds"] <= 0:
            raise doc.err(m["fit_budget_seconds"], "fit_budget_seconds must be positive")
    if "zoo" in m:
        kw["zoo"] = _zoo(doc, m["zoo"])
    kw["learners"] = (
        _learners(doc, m["learners"], seed)
        if "learners" in m
        else [LearnerEntry(f, list(DEFAULT_GRIDS[f])) for f in Family]
    )
    if "objectives" in m:
        objs = []
        for o in doc.sequence(m["objectives"], "objectives"):
            try:
                obj = Objective(doc.typed(o, "objective", (str,)))
            except ValueError:
                raise doc.err(o, f"unknown objective; known: {', '.join(x.value for x in Objective)}") from None
            if obj in objs:
                raise doc.err(o, f"duplicate objective {obj.value}")
            objs.append(obj)
        if not objs:
            raise doc.err(m["objectives"], "objectives must not be empty")
        kw["objectives"] = objs
    if "inner_folds" in m:
        kw["inner_folds"] = doc.typed(m["inner_folds"], "inner_folds", (int,))
        if kw["inner_folds"] < 2:
            raise doc.err(m["inner_folds"], "inner_folds must be >= 2")
    if "report_format" in m:
        kw["report_format"] = doc.typed(m["report_format"], "report_format", (str,))
        if kw["report_format"] not in ("csv", "json"):
            raise doc.err(m["report_format"], "report_format must be csv or json")
    if "extra_records" in m:
        kw["extra_records"] = [
            base / doc.typed(p, "extra_records entry", (str,)) for p in doc.sequence(m["extra_records"], "extra_records")
        ]
    if "synth" in m:
        kw["synth"] = _synth(doc, m["synth"])
    return StudyConfig(**kw)


def load_config(path: str | Path) -> StudyConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}:1: not UTF-8 ({exc.reason})") from None
    cfg = parse_config(text, str(path), path.parent)
    return StudyConfig(**{**cfg.__dict__, "source": path})
