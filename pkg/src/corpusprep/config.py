"""Pipeline configuration: dataclasses, YAML loading, validation, overrides."""
from __future__ import annotations

import dataclasses
import glob as globmod
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .contentfilter import RuleConfigError, compile_artifact_rules, load_blocklist
from .quality import QualityThresholds


class ConfigError(Exception):
    """Configuration file is missing, malformed or fails validation."""


@dataclass
class LangIdStageConfig:
    enabled: bool = True
    scorer: str = "hashed_ngram"  # hashed_ngram | precomputed
    model_path: str | None = None
    scores_path: str | None = None
    target_lang: str = "ro"
    threshold: float = 0.5


@dataclass
class DedupStageConfig:
    paragraph_enabled: bool = True
    paragraph_scope: str = "shard"  # shard | global
    exact_enabled: bool = True
    fuzzy_enabled: bool = True
    seed: int = 117117
    shingle_width: int = 13
    num_permutations: int = 117
    bands: int = 9
    rows: int = 13
    jaccard_threshold: float = 0.8


@dataclass
class ContentFilterStageConfig:
    enabled: bool = True
    blocklist_path: str | None = None
    artifact_rules_path: str | None = None
    mask_pii: bool = True


@dataclass
class QualityStageConfig:
    enabled: bool = True
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)


@dataclass
class PipelineConfig:
    wet_paths: list[str]
    snapshot: str
    output_dir: str
    batch_size: int = 100
    workers: int = 1
    langid: LangIdStageConfig = field(default_factory=LangIdStageConfig)
    dedup: DedupStageConfig = field(default_factory=DedupStageConfig)
    content_filter: ContentFilterStageConfig = field(default_factory=ContentFilterStageConfig)
    quality: QualityStageConfig = field(default_factory=QualityStageConfig)


def _build_section(cls, raw: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**raw)


def _build_thresholds(raw: dict) -> QualityThresholds:
    known = {f.name for f in dataclasses.fields(QualityThresholds)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"quality.thresholds: unknown keys {sorted(unknown)}")
    kwargs = dict(raw)
    for key in ("top_ngram_max", "dup_ngram_max"):
        if key in kwargs:
            kwargs[key] = {int(n): float(v) for n, v in kwargs[key].items()}
    return QualityThresholds(**kwargs)


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> PipelineConfig:
    """Build a PipelineConfig; relative paths resolve against base_dir."""
    base = Path(base_dir)
    raw = dict(raw)

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        path = Path(p)
        return str(path if path.is_absolute() else base / path)

    try:
        wet_paths = [resolve(p) for p in raw.pop("wet_paths")]
        snapshot = raw.pop("snapshot")
        output_dir = resolve(raw.pop("output_dir"))
    except KeyError as exc:
        raise ConfigError(f"missing required config key: {exc.args[0]}") from exc

    langid_raw = dict(raw.pop("langid", {}))
    for key in ("model_path", "scores_path"):
        if langid_raw.get(key) is not None:
            langid_raw[key] = resolve(langid_raw[key])
    content_raw = dict(raw.pop("content_filter", {}))
    for key in ("blocklist_path", "artifact_rules_path"):
        if content_raw.get(key) is not None:
            content_raw[key] = resolve(content_raw[key])
    quality_raw = dict(raw.pop("quality", {}))
    thresholds_raw = quality_raw.pop("thresholds", None)
    quality = _build_section(QualityStageConfig, quality_raw, "quality")
    if thresholds_raw is not None:
        quality.thresholds = _build_thresholds(thresholds_raw)

    cfg = PipelineConfig(
        wet_paths=wet_paths,
        snapshot=str(snapshot),
        output_dir=output_dir,
        batch_size=int(raw.pop("batch_size", 100)),
        workers=int(raw.pop("workers", 1)),
        langid=_build_section(LangIdStageConfig, langid_raw, "langid"),
        dedup=_build_section(DedupStageConfig, dict(raw.pop("dedup", {})), "dedup"),
        content_filter=_build_section(ContentFilterStageConfig, content_raw, "content_filter"),
        quality=quality,
    )
    if raw:
        raise ConfigError(f"unknown top-level config keys: {sorted(raw)}")
    return cfg


def load_config(path: str | Path, overrides: list[str] | None = None) -> PipelineConfig:
    """Load a YAML config file, applying dotted key=value overrides."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    for item in overrides or []:
        apply_override(raw, item)
    return config_from_dict(raw, base_dir=path.parent)


def apply_override(raw: dict, item: str) -> None:
    """Apply one 'dotted.key=value' override onto the raw config mapping."""
    key, sep, value = item.partition("=")
    if not sep:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {item!r}: {part} is not a section")
    node[parts[-1]] = yaml.safe_load(value)


def expand_wet_paths(cfg: PipelineConfig) -> list[str]:
    """Expand globs in wet_paths; literal paths pass through."""
    out: list[str] = []
    for pattern in cfg.wet_paths:
        if any(ch in pattern for ch in "*?["):
            out.extend(sorted(globmod.glob(pattern)))
        else:
            out.append(pattern)
    return out


def validate_config(cfg: PipelineConfig) -> list[str]:
    """Return a list of problems; empty means the config is runnable."""
    problems: list[str] = []
    if cfg.batch_size < 1:
        problems.append(f"batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.workers < 1:
        problems.append(f"workers must be >= 1, got {cfg.workers}")
    if not cfg.snapshot:
        problems.append("snapshot label must be non-empty")

    for pattern in cfg.wet_paths:
        if not any(ch in pattern for ch in "*?[") and not Path(pattern).exists():
            problems.append(f"wet path does not exist: {pattern}")

    li = cfg.langid
    if li.enabled:
        if li.scorer not in ("hashed_ngram", "precomputed"):
            problems.append(f"langid.scorer must be hashed_ngram or precomputed, got {li.scorer!r}")
        if li.scorer == "hashed_ngram":
            if not li.model_path:
                problems.append("langid.scorer=hashed_ngram requires langid.model_path")
            elif not Path(li.model_path).exists():
                problems.append(f"langid.model_path does not exist: {li.model_path}")
            else:
                from . import langid as _langid

                try:
                    _langid.load_model(li.model_path)
                except _langid.ModelError as exc:
                    problems.append(str(exc))
        if li.scorer == "precomputed":
            if not li.scores_path:
                problems.append("langid.scorer=precomputed requires langid.scores_path")
            elif not Path(li.scores_path).exists():
                problems.append(f"langid.scores_path does not exist: {li.scores_path}")
        if not 0.0 <= li.threshold <= 1.0:
            problems.append(f"langid.threshold must be in [0,1], got {li.threshold}")
        if not li.target_lang:
            problems.append("langid.target_lang must be non-empty")

    dd = cfg.dedup
    if dd.paragraph_scope not in ("shard", "global"):
        problems.append(f"dedup.paragraph_scope must be shard or global, got {dd.paragraph_scope!r}")
    if dd.bands * dd.rows != dd.num_permutations:
        problems.append(
            f"dedup.bands*rows must equal num_permutations "
            f"({dd.bands}*{dd.rows} != {dd.num_permutations})"
        )
    if dd.shingle_width < 1:
        problems.append(f"dedup.shingle_width must be >= 1, got {dd.shingle_width}")
    if not 0.0 < dd.jaccard_threshold <= 1.0:
        problems.append(f"dedup.jaccard_threshold must be in (0,1], got {dd.jaccard_threshold}")

    cf = cfg.content_filter
    if cf.enabled:
        if cf.blocklist_path is not None:
            if not Path(cf.blocklist_path).exists():
                problems.append(f"content_filter.blocklist_path does not exist: {cf.blocklist_path}")
            else:
                try:
                    load_blocklist(cf.blocklist_path)
                except RuleConfigError as exc:
                    problems.append(str(exc))
        if cf.artifact_rules_path is not None:
            if not Path(cf.artifact_rules_path).exists():
                problems.append(
                    f"content_filter.artifact_rules_path does not exist: {cf.artifact_rules_path}"
                )
            else:
                try:
                    compile_artifact_rules(load_artifact_rules_file(cf.artifact_rules_path))
                except (RuleConfigError, ConfigError) as exc:
                    problems.append(str(exc))

    qt = cfg.quality.thresholds
    if qt.min_words >= qt.max_words:
        problems.append("quality min_words must be < max_words")
    if qt.min_median_wordlen >= qt.max_median_wordlen:
        problems.append("quality min_median_wordlen must be < max_median_wordlen")
    for name, table, sizes in (
        ("top_ngram_max", qt.top_ngram_max, (2, 3, 4)),
        ("dup_ngram_max", qt.dup_ngram_max, (5, 6, 7, 8, 9, 10)),
    ):
        for n in sizes:
            if n not in table:
                problems.append(f"quality thresholds {name} missing entry for n={n}")
            elif table[n] <= 0:
                problems.append(f"quality thresholds {name}[{n}] must be positive")
    for name, value in (
        ("max_bullet_frac", qt.max_bullet_frac),
        ("max_ellipsis_frac", qt.max_ellipsis_frac),
        ("min_punct_frac", qt.min_punct_frac),
    ):
        if not 0.0 <= value <= 1.0:
            problems.append(f"quality thresholds {name} must be in [0,1], got {value}")
    return problems


def load_artifact_rules_file(path: str | Path) -> list[dict]:
    """Read a YAML list of {name, pattern, scope} artifact rules."""
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ConfigError(f"artifact rules file {path} must hold a list of rules")
    return raw


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = dataclasses.asdict(cfg)
    return out


def stage_settings_fingerprint_payload(cfg: PipelineConfig, stage: str) -> dict:
    """The per-stage settings that must invalidate cached outputs when changed."""
    if stage == "ingest":
        return {"snapshot": cfg.snapshot}
    if stage == "langid":
        li = cfg.langid
        return {
            "scorer": li.scorer,
            "model": _file_digest(li.model_path),
            "scores": _file_digest(li.scores_path),
            "target_lang": li.target_lang,
            "threshold": li.threshold,
        }
    if stage == "paragraph_dedup":
        return {"scope": cfg.dedup.paragraph_scope}
    if stage == "exact_dedup":
        return {}
    if stage == "fuzzy_dedup":
        dd = cfg.dedup
        return {
            "seed": dd.seed,
            "shingle_width": dd.shingle_width,
            "num_permutations": dd.num_permutations,
            "bands": dd.bands,
            "rows": dd.rows,
            "jaccard_threshold": dd.jaccard_threshold,
        }
    if stage == "content_filter":
        cf = cfg.content_filter
        return {
            "blocklist": _file_digest(cf.blocklist_path),
            "artifact_rules": _file_digest(cf.artifact_rules_path),
            "mask_pii": cf.mask_pii,
        }
    if stage == "quality":
        return {"thresholds": json.loads(json.dumps(dataclasses.asdict(cfg.quality.thresholds), sort_keys=True))}
    raise ValueError(f"unknown stage {stage!r}")


def _file_digest(path: str | None) -> str | None:
    if path is None:
        return None
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return f"missing:{path}"
