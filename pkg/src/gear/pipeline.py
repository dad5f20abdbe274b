"""End-to-end stages shared by the CLI and the experiment harness.

Every stage reads declared inputs, writes declared artifacts under the output
directory, and is a pure function of (inputs, seed). Artifacts embed the
resolved config hash; evaluation refuses mixed-hash inputs unless forced.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import corpus as corpus_mod
from . import decode as decode_mod
from . import evaluation as eval_mod
from . import lawtree as lawtree_mod
from . import rationale as rationale_mod
from . import seqmodel, training
from .config import RunConfig, config_hash
from .corpus import Document, ROLE_CANDIDATE, ROLE_QUERY
from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArtifactPaths:
    corpus: Path
    law: Path
    qrels: Path
    stopwords: Path | None
    synonyms: Path | None
    rationales: Path
    tree: Path
    model: Path
    loss_log: Path
    loss_curve: Path
    run: Path
    out: Path


def artifact_paths(cfg: RunConfig) -> ArtifactPaths:
    out = Path(cfg.paths.out)
    return ArtifactPaths(
        corpus=Path(cfg.paths.corpus) if cfg.paths.corpus else out / "corpus.jsonl",
        law=Path(cfg.paths.law) if cfg.paths.law else out / "law.json",
        qrels=Path(cfg.paths.qrels) if cfg.paths.qrels else out / "qrels.tsv",
        stopwords=Path(cfg.paths.stopwords) if cfg.paths.stopwords else None,
        synonyms=Path(cfg.paths.synonyms) if cfg.paths.synonyms else None,
        rationales=out / "rationales.jsonl",
        tree=out / "tree.json",
        model=out / "model.bin",
        loss_log=out / "loss_log.csv",
        loss_curve=out / "loss_curve.png",
        run=out / "run.tsv",
        out=out,
    )


def stage_synth(cfg: RunConfig) -> str:
    paths = artifact_paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    docs, schema, qrels = corpus_mod.generate_synthetic(cfg.synth)
    digest = config_hash(cfg)
    corpus_mod.write_corpus(docs, paths.corpus, digest)
    corpus_mod.write_law_schema(schema, paths.law, digest)
    corpus_mod.write_qrels(qrels, paths.qrels, digest)
    n_candidates = sum(1 for d in docs if d.role == ROLE_CANDIDATE)
    return (f"synth: wrote {n_candidates} candidates, {len(docs) - n_candidates} queries, "
            f"{len(schema)} charges, {len(qrels.entries)} qrel entries -> {paths.out}")


def _load_shared(cfg: RunConfig):
    paths = artifact_paths(cfg)
    docs = corpus_mod.load_corpus(paths.corpus)
    schema = corpus_mod.load_law_schema(paths.law)
    stopwords = corpus_mod.load_stopwords(paths.stopwords) if paths.stopwords else frozenset()
    synonyms = rationale_mod.load_synonyms(paths.synonyms) if paths.synonyms else None
    return paths, docs, schema, stopwords, synonyms


def build_corpora(schema, stopwords, synonyms, embed_dim: int) -> rationale_mod.Corpora:
    names, definitions = rationale_mod.build_charge_keywords(schema, stopwords, synonyms)
    embeddings = rationale_mod.build_charge_embeddings(schema, dim=embed_dim)
    return rationale_mod.Corpora(names, definitions, embeddings)


def stage_extract(cfg: RunConfig) -> str:
    paths, docs, schema, stopwords, synonyms = _load_shared(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    corpora = build_corpora(schema, stopwords, synonyms, cfg.rationale.embed_dim)

    def one(doc: Document) -> rationale_mod.RationaleSet:
        return rationale_mod.extract(doc, corpora, cfg.rationale, stopwords)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            extracted = list(pool.map(one, docs))
    else:
        extracted = [one(doc) for doc in docs]
    rationales = {doc.doc_id: rs for doc, rs in zip(docs, extracted)}
    order = [doc.doc_id for doc in docs]
    rationale_mod.write_rationales(paths.rationales, rationales, order, config_hash(cfg))
    mean_tokens = (sum(len(rs.serialized.split()) for rs in extracted) / len(extracted)
                   if extracted else 0.0)
    return (f"extract: wrote rationales for {len(docs)} documents "
            f"(mean {mean_tokens:.1f} tokens) -> {paths.rationales}")


def stage_build_tree(cfg: RunConfig) -> str:
    paths, docs, schema, _, _ = _load_shared(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    candidates = [d for d in docs if d.role == ROLE_CANDIDATE]
    if cfg.ablation == "no_lawtree":
        tree = lawtree_mod.build_shuffled_tree(schema, candidates, cfg.seed)
    else:
        tree = lawtree_mod.build_tree(schema, candidates)
    lawtree_mod.save_tree(tree, paths.tree, config_hash(cfg))
    return (f"build-tree: {tree.n_leaves} leaves over {len(candidates)} candidates "
            f"({cfg.ablation if cfg.ablation == 'no_lawtree' else 'law-aligned'}) -> {paths.tree}")


def _truncate_raw(text: str, budget: int) -> str:
    return " ".join(text.split()[:budget])


def _model_inputs(cfg: RunConfig, docs, paths) -> dict[str, str]:
    """Serialized model input per document: rationales, or raw text for no_rationale."""
    if cfg.ablation == "no_rationale":
        return {doc.doc_id: _truncate_raw(doc.text, cfg.rationale.budget) for doc in docs}
    rationales = rationale_mod.load_rationales(paths.rationales)
    missing = [doc.doc_id for doc in docs if doc.doc_id not in rationales]
    if missing:
        raise DataError(f"rationales missing for {len(missing)} documents "
                        f"(e.g. {missing[:3]}); run the extract stage first")
    return {doc.doc_id: rationales[doc.doc_id].serialized for doc in docs}


def _effective_train_config(cfg: RunConfig) -> seqmodel.TrainConfig:
    if cfg.ablation == "no_revision":
        return replace(cfg.train, revision_weight=0.0)
    return cfg.train


def stage_train(cfg: RunConfig) -> str:
    paths, docs, schema, _, _ = _load_shared(cfg)
    qrels = corpus_mod.load_qrels(paths.qrels)
    tree = lawtree_mod.load_tree(paths.tree)
    inputs = _model_inputs(cfg, docs, paths)
    train_cfg = _effective_train_config(cfg)
    loss_log: list[dict] = []
    params = training.train(docs, inputs, tree, qrels, train_cfg,
                            threshold=cfg.eval.threshold, loss_log=loss_log)
    digest = config_hash(cfg)
    seqmodel.save_model(params, paths.model, digest, depth=tree.depth)
    with paths.loss_log.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={digest}\n")
        writer = csv.DictWriter(fh, fieldnames=["epoch", "indexing_loss",
                                                "retrieval_loss", "revision_loss", "total"])
        writer.writeheader()
        writer.writerows(loss_log)
    if loss_log:
        from .plots import plot_loss_curves
        plot_loss_curves(loss_log, paths.loss_curve)
    final = loss_log[-1]["total"] if loss_log else float("nan")
    return (f"train: {train_cfg.epochs} epochs, final loss {final:.4f} "
            f"-> {paths.model}")


def stage_retrieve(cfg: RunConfig) -> str:
    paths, docs, schema, _, _ = _load_shared(cfg)
    tree = lawtree_mod.load_tree(paths.tree)
    params, _ = seqmodel.load_model(paths.model, tree)
    inputs = _model_inputs(cfg, docs, paths)
    k = max((*cfg.eval.recall_ks, *cfg.eval.coverage_ks, cfg.train.beam_size))
    results = {}
    for doc in docs:
        if doc.role != ROLE_QUERY:
            continue
        results[doc.doc_id] = decode_mod.retrieve(params, tree, inputs[doc.doc_id],
                                                  k, cfg.train.beam_size)
    decode_mod.write_run(paths.run, results, config_hash(cfg))
    return f"retrieve: ranked {len(results)} queries (beam {cfg.train.beam_size}) -> {paths.run}"


def _check_hashes(paths, force: bool) -> None:
    observed = {}
    for name, path in (("run", paths.run), ("qrels", paths.qrels),
                       ("corpus", paths.corpus), ("law", paths.law)):
        if path.exists():
            digest = corpus_mod.read_config_hash(path)
            if digest:
                observed[name] = digest
    if len(set(observed.values())) > 1:
        detail = ", ".join(f"{name}={digest}" for name, digest in sorted(observed.items()))
        if force:
            logger.warning("mixed config hashes (%s); proceeding under --force", detail)
        else:
            raise DataError(f"mixed config hashes across inputs ({detail}); "
                            "rerun the pipeline or pass --force")


def stage_eval(cfg: RunConfig, force: bool = False) -> tuple[str, eval_mod.EvalReport]:
    paths, docs, schema, _, _ = _load_shared(cfg)
    qrels = corpus_mod.load_qrels(paths.qrels)
    _check_hashes(paths, force)
    run = decode_mod.load_run(paths.run)
    report = eval_mod.evaluate(
        run, qrels, docs, schema,
        recall_ks=cfg.eval.recall_ks, coverage_ks=cfg.eval.coverage_ks,
        threshold=cfg.eval.threshold,
        metadata={"config_hash": config_hash(cfg),
                  "corpus_id": corpus_mod.corpus_fingerprint(docs)})
    eval_mod.emit_report(report, paths.out, fmt="all")
    headline = ", ".join(f"{name}={report.means[name]:.4f}"
                         for name in ("recall@10", "mrr", "coverage@1")
                         if name in report.means)
    return f"eval: {headline} -> {paths.out / 'report.json'}", report


STAGES = ("synth", "extract", "build-tree", "train", "retrieve", "eval")


def run_pipeline(cfg: RunConfig, force: bool = False) -> eval_mod.EvalReport:
    """All stages in order; returns the final evaluation report."""
    print(stage_synth(cfg))
    print(stage_extract(cfg))
    print(stage_build_tree(cfg))
    print(stage_train(cfg))
    print(stage_retrieve(cfg))
    summary, report = stage_eval(cfg, force)
    print(summary)
    return report
