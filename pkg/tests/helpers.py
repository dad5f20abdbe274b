"""Shared fixtures and reference implementations used across the test suite."""

from __future__ import annotations

import random

import numpy as np

from gear.corpus import (
    Charge,
    Document,
    LawSchema,
    ROLE_CANDIDATE,
    ROLE_QUERY,
    SynthConfig,
    generate_synthetic,
)
from gear.decode import retrieve
from gear.lawtree import LawTree, Token, build_shuffled_tree, build_tree
from gear.rationale import (
    Corpora,
    RationaleConfig,
    build_charge_embeddings,
    build_charge_keywords,
    extract,
)
from gear.seqmodel import ModelParams, TrainConfig, encode_query
from gear.training import train
from gear.evaluation import evaluate


def fig3_schema() -> LawSchema:
    """Section 2 / chapter 5 with articles 267 and 269 (one charge each)."""
    return LawSchema((
        Charge("ch267", "crime of extortion", "obtaining property by threats", 2, 5, 267),
        Charge("ch269", "crime of robbery", "taking property by force or fear", 2, 5, 269),
    ))


def fig3_docs() -> list[Document]:
    return [
        Document("725", "threats and force were used. property was taken.",
                 ("ch267", "ch269"), ROLE_CANDIDATE),
        Document("809", "property taken by force at night.", ("ch269",), ROLE_CANDIDATE),
    ]


def random_constraint_tree(rng: random.Random, max_leaf_values: int = 4) -> LawTree:
    """A random depth-4 tree with level values drawn from small pools, so the
    token vocabulary stays tiny (<= 16 content tokens + BOS)."""
    leaves = []
    doc_no = 0
    for section in rng.sample(range(4), rng.randint(1, 3)):
        for chapter in rng.sample(range(4), rng.randint(1, 3)):
            for article in rng.sample(range(4), rng.randint(1, 2)):
                for leaf in range(rng.randint(1, max_leaf_values)):
                    leaves.append(((section, chapter, article, leaf),
                                   f"d{doc_no}", f"ch{article}"))
                    doc_no += 1
    return LawTree(leaves)


def exhaustive_masked_scores(params: ModelParams, tree: LawTree, query: str):
    """Reference decode: walk every leaf path, masking logits to valid children
    at each step, then sort by (-score, path). Independent of the beam search."""
    h0 = encode_query(params, query)
    vocab = params.vocab
    scored = []
    for path, _, _ in tree.leaves():
        h = h0
        prev_idx = vocab.index_of(Token(0, 0))
        cum = 0.0
        steps = []
        prefix = ()
        for level, value in enumerate(path, start=1):
            h = np.tanh(params.rec_w @ h + params.rec_e @ params.embed_tok[prev_idx]
                        + params.rec_b)
            logits = params.out_w @ h + params.out_b
            valid = tree.child_values(prefix)
            idxs = np.array([vocab.index_of(Token(level, v)) for v in valid])
            vals = logits[idxs]
            m = vals.max()
            lps = vals - (m + np.log(np.exp(vals - m).sum()))
            lp = float(lps[valid.index(value)])
            cum = cum + lp
            steps.append(lp)
            prefix = prefix + (value,)
            prev_idx = vocab.index_of(Token(level, value))
        scored.append((cum, path, tuple(steps)))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return scored


BENCHMARK_TRAIN = dict(epochs=100, warmup_epochs=2, batch_size=32, beam_size=30)
BENCHMARK_THRESHOLD = 2


def run_benchmark(args: tuple[int, str]) -> dict[str, float]:
    """One full in-memory experiment on the default synthetic benchmark.

    ``args`` is (seed, variant) where variant is one of none / no_revision /
    no_rationale / no_lawtree. Returns the metric means.
    """
    seed, variant = args
    docs, schema, qrels = generate_synthetic(SynthConfig(seed=seed))
    candidates = [d for d in docs if d.role == ROLE_CANDIDATE]
    queries = [d for d in docs if d.role == ROLE_QUERY]
    rationale_cfg = RationaleConfig()
    if variant == "no_rationale":
        inputs = {d.doc_id: " ".join(d.text.split()[:rationale_cfg.budget]) for d in docs}
    else:
        names, definitions = build_charge_keywords(schema)
        corpora = Corpora(names, definitions,
                          build_charge_embeddings(schema, dim=rationale_cfg.embed_dim))
        inputs = {d.doc_id: extract(d, corpora, rationale_cfg).serialized for d in docs}
    if variant == "no_lawtree":
        tree = build_shuffled_tree(schema, candidates, seed)
    else:
        tree = build_tree(schema, candidates)
    train_cfg = TrainConfig(seed=seed,
                            revision_weight=0.0 if variant == "no_revision" else 1e-3,
                            **BENCHMARK_TRAIN)
    params = train(docs, inputs, tree, qrels, train_cfg, threshold=BENCHMARK_THRESHOLD)
    run = {
        q.doc_id: retrieve(params, tree, inputs[q.doc_id],
                           k=train_cfg.beam_size, beam_size=train_cfg.beam_size).doc_ids()
        for q in queries
    }
    report = evaluate(run, qrels, docs, schema, threshold=BENCHMARK_THRESHOLD)
    return report.means
