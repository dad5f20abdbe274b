"""Flat key=value run configuration with section prefixes.

Example:

    seed = 7
    paths.out = runs/bench
    rationale.k1 = 2
    train.epochs = 100
    eval.threshold = 2

Unset synth.seed / train.seed inherit the top-level seed. The resolved config
hashes to a short hex string embedded in every artifact so mixed-provenance
inputs are detectable at evaluation time.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import SynthConfig
from .errors import DataError, UsageError
from .rationale import RationaleConfig
from .seqmodel import TrainConfig

ABLATIONS = ("none", "no_revision", "no_rationale", "no_lawtree")


@dataclass(frozen=True)
class PathsConfig:
    corpus: str = ""
    law: str = ""
    qrels: str = ""
    stopwords: str = ""
    synonyms: str = ""
    out: str = "out"


@dataclass(frozen=True)
class EvalConfig:
    recall_ks: tuple[int, ...] = (1, 5, 10, 20)
    coverage_ks: tuple[int, ...] = (1, 3, 5, 10)
    threshold: int = 1

    def __post_init__(self):
        if any(k < 1 for k in (*self.recall_ks, *self.coverage_ks)):
            raise DataError("metric cutoffs must be >= 1")
        if self.threshold < 0:
            raise DataError("relevance threshold must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    ablation: str = "none"
    tree_depth: int = 4
    paths: PathsConfig = field(default_factory=PathsConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    rationale: RationaleConfig = field(default_factory=RationaleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise UsageError(f"unknown ablation {self.ablation!r} (expected one of {ABLATIONS})")
        if self.tree_depth != 4:
            raise UsageError("tree.depth must be 4 (section, chapter, article, leaf)")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")


def _parse_int(value: str) -> int:
    return int(value)


def _parse_float(value: str) -> float:
    return float(value)


def _parse_str(value: str) -> str:
    return value


def _parse_int_list(value: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in value.split(",") if part.strip())


# key -> (section attr on RunConfig or None for top-level, field name, parser)
_KEY_TABLE = {
    "seed": (None, "seed", _parse_int),
    "threads": (None, "threads", _parse_int),
    "ablation": (None, "ablation", _parse_str),
    "tree.depth": (None, "tree_depth", _parse_int),
    "paths.corpus": ("paths", "corpus", _parse_str),
    "paths.law": ("paths", "law", _parse_str),
    "paths.qrels": ("paths", "qrels", _parse_str),
    "paths.stopwords": ("paths", "stopwords", _parse_str),
    "paths.synonyms": ("paths", "synonyms", _parse_str),
    "paths.out": ("paths", "out", _parse_str),
    "synth.seed": ("synth", "seed", _parse_int),
    "synth.n_sections": ("synth", "n_sections", _parse_int),
    "synth.n_chapters_per_section": ("synth", "n_chapters_per_section", _parse_int),
    "synth.n_articles_per_chapter": ("synth", "n_articles_per_chapter", _parse_int),
    "synth.n_charges_per_article": ("synth", "n_charges_per_article", _parse_int),
    "synth.n_docs": ("synth", "n_docs", _parse_int),
    "synth.n_queries": ("synth", "n_queries", _parse_int),
    "synth.keywords_per_charge": ("synth", "keywords_per_charge", _parse_int),
    "synth.noise_rate": ("synth", "noise_rate", _parse_float),
    "synth.multi_charge_rate": ("synth", "multi_charge_rate", _parse_float),
    "rationale.k1": ("rationale", "k1", _parse_int),
    "rationale.k2": ("rationale", "k2", _parse_int),
    "rationale.k3": ("rationale", "k3", _parse_int),
    "rationale.lambda1": ("rationale", "lambda1", _parse_float),
    "rationale.lambda2": ("rationale", "lambda2", _parse_float),
    "rationale.lambda3": ("rationale", "lambda3", _parse_float),
    "rationale.budget": ("rationale", "budget", _parse_int),
    "rationale.embed_dim": ("rationale", "embed_dim", _parse_int),
    "train.seed": ("train", "seed", _parse_int),
    "train.hidden_dim": ("train", "hidden_dim", _parse_int),
    "train.hash_buckets": ("train", "hash_buckets", _parse_int),
    "train.learning_rate": ("train", "learning_rate", _parse_float),
    "train.epochs": ("train", "epochs", _parse_int),
    "train.warmup_epochs": ("train", "warmup_epochs", _parse_int),
    "train.batch_size": ("train", "batch_size", _parse_int),
    "train.reward_unit": ("train", "reward_unit", _parse_float),
    "train.hierarchy_decay": ("train", "hierarchy_decay", _parse_float),
    "train.rank_decay": ("train", "rank_decay", _parse_float),
    "train.teacher_weight": ("train", "teacher_weight", _parse_float),
    "train.revision_weight": ("train", "revision_weight", _parse_float),
    "train.beam_size": ("train", "beam_size", _parse_int),
    "eval.recall_ks": ("eval", "recall_ks", _parse_int_list),
    "eval.coverage_ks": ("eval", "coverage_ks", _parse_int_list),
    "eval.threshold": ("eval", "threshold", _parse_int),
}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    top: dict[str, object] = {}
    sections: dict[str, dict[str, object]] = {"paths": {}, "synth": {}, "rationale": {},
                                              "train": {}, "eval": {}}
    explicit: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEY_TABLE:
            raise UsageError(f"{source}:{lineno}: unknown config key {key!r}")
        section, fname, parser = _KEY_TABLE[key]
        try:
            parsed = parser(value)
        except ValueError:
            raise UsageError(f"{source}:{lineno}: bad value {value!r} for {key!r}") from None
        explicit.add(key)
        if section is None:
            top[fname] = parsed
        else:
            sections[section][fname] = parsed

    seed = int(top.get("seed", 0))
    if "synth.seed" not in explicit:
        sections["synth"]["seed"] = seed
    if "train.seed" not in explicit:
        sections["train"]["seed"] = seed
    try:
        return RunConfig(
            seed=seed,
            threads=int(top.get("threads", 1)),
            ablation=str(top.get("ablation", "none")),
            tree_depth=int(top.get("tree_depth", 4)),
            paths=PathsConfig(**sections["paths"]),
            synth=SynthConfig(**sections["synth"]),
            rationale=RationaleConfig(**sections["rationale"]),
            train=TrainConfig(**sections["train"]),
            eval=EvalConfig(**sections["eval"]),
        )
    except DataError as exc:
        raise UsageError(f"{source}: {exc}") from exc


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, source=str(path))


def apply_overrides(config: RunConfig, seed: int | None = None,
                    out: str | None = None, threads: int | None = None) -> RunConfig:
    """CLI flags take precedence over the config file."""
    if seed is not None:
        config = replace(config, seed=seed,
                         synth=replace(config.synth, seed=seed),
                         train=replace(config.train, seed=seed))
    if out is not None:
        config = replace(config, paths=replace(config.paths, out=out))
    if threads is not None:
        config = replace(config, threads=threads)
    return config


def _flatten(prefix: str, obj) -> list[tuple[str, str]]:
    items = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            items.extend(_flatten(f"{prefix}{f.name}.", value))
        else:
            if isinstance(value, tuple):
                rendered = ",".join(str(v) for v in value)
            else:
                rendered = repr(value) if isinstance(value, float) else str(value)
            items.append((f"{prefix}{f.name}", rendered))
    return items


# execution details that do not change what a stage computes
_HASH_EXEMPT_PREFIXES = ("paths.", "threads")


def config_hash(config: RunConfig) -> str:
    """Short stable hash of the semantic configuration.

    Paths and the worker cap are excluded: identical settings produce identical
    artifacts regardless of where they are written or how many threads ran.
    """
    lines = sorted(
        f"{key}={value}" for key, value in _flatten("", config)
        if not key.startswith(_HASH_EXEMPT_PREFIXES)
    )
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    return digest[:16]
