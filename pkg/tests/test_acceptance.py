"""End-to-end acceptance suite.

Each test checks one release criterion at its stated tolerance and prints a
single `ACCEPTANCE <n> (<name>): PASS` line when it holds. Run with

    pytest tests/test_acceptance.py -v -s

Criterion 7 trains twenty models (four variants across five seeds) and is the
slow part of the suite; everything else finishes in well under a minute each.
"""

import hashlib
import itertools
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from gear.cli import main
from gear.decode import constrained_beam_search
from gear.lawtree import BOS_TOKEN, LawTree, SemanticId, Token, load_tree, parse_id
from gear.rationale import (
    build_charge_embeddings,
    extract_sentence_rationales,
    extract_word_rationales,
    score_sentence,
)
from gear.corpus import Charge, Document, LawSchema, tokenize
from gear.seqmodel import (
    TrainConfig,
    Vocab,
    gradient_check,
    indexing_loss_grad,
    init_params,
    retrieval_loss_grad,
    revision_loss_grad,
    sequence_logprob,
    step_reward,
)
from helpers import (
    exhaustive_masked_scores,
    random_constraint_tree,
    run_benchmark,
)

BENCHMARK_SEED = 1
ABLATION_SEEDS = (1, 2, 3, 4, 5)


def report(criterion: int, name: str) -> None:
    print(f"\nACCEPTANCE {criterion} ({name}): PASS")


def test_01_constrained_decoding_matches_exhaustive_oracle():
    started = time.time()
    rng = random.Random(20240817)
    n_instances = 110
    for trial in range(n_instances):
        tree = random_constraint_tree(rng)
        assert len(tree.vocabulary()) <= 20 and tree.n_leaves <= 200
        params = init_params(Vocab.from_tree(tree), d=8, hash_buckets=32, seed=trial)
        query = " ".join(rng.choice(["rob", "bank", "steal", "seal", "fraud", "deed"])
                         for _ in range(rng.randint(0, 8)))
        hyps = constrained_beam_search(params, tree, query,
                                       beam_size=tree.n_leaves + rng.randint(0, 4))
        expected = exhaustive_masked_scores(params, tree, query)
        assert len(hyps) == tree.n_leaves
        assert [h.values for h in hyps] == [path for _, path, _ in expected]
        np.testing.assert_allclose([h.logprob for h in hyps],
                                   [score for score, _, _ in expected],
                                   rtol=1e-9, atol=1e-12)
    elapsed = time.time() - started
    assert elapsed < 60.0, f"oracle-equivalence suite took {elapsed:.1f}s"
    report(1, "constrained decoding equals exhaustive enumeration")


def test_02_step_reward_table():
    assert step_reward(Token(4, 7), Token(4, 7), 4, 4, reward_unit=1.0) == 1.0
    assert step_reward(Token(4, 725), Token(4, 809), 4, 4,
                       reward_unit=1.0, hierarchy_decay=0.1) == -84.0
    near_root = step_reward(Token(1, 3), Token(1, 2), 1, 4,
                            reward_unit=1.0, hierarchy_decay=0.1)
    assert near_root == -(0.1 ** 3) * 1.0 * abs(3 - 2)
    assert near_root == pytest.approx(-0.001, abs=1e-12)
    report(2, "hierarchy reward table reproduces exactly")


def test_03_gradient_fidelity():
    started = time.time()
    # depth-4 tree with exactly 8 vocabulary entries (7 content tokens + BOS)
    leaves = [((1, 1, 3, 0), "d0", "c1"), ((1, 1, 3, 1), "d1", "c1"),
              ((1, 2, 4, 0), "d2", "c2"), ((1, 2, 4, 1), "d3", "c2")]
    tree = LawTree(leaves)
    vocab = Vocab.from_tree(tree)
    assert len(vocab) == 8
    ids = [SemanticId.from_values(path) for path, _, _ in leaves]
    texts = ["rob the bank", "steal the goods", "", "seal of the company"]
    worst = 0.0
    for restart in range(20):
        params = init_params(vocab, d=4, hash_buckets=16, seed=restart, scale=0.4)
        rng = random.Random(restart)
        index_pairs = [(rng.choice(texts), rng.choice(ids)) for _ in range(4)]
        retrieve_pairs = [(rng.choice(texts), rng.choice(ids)) for _ in range(3)]
        beams = [(sid, ()) for sid in rng.sample(ids, 3)]
        labels = tuple(rng.sample(ids, 2))
        cfg = TrainConfig(hidden_dim=4, hash_buckets=16, rank_decay=0.7,
                          teacher_weight=2.0, hierarchy_decay=0.1)
        for loss_fn in (
            lambda p: indexing_loss_grad(p, index_pairs),
            lambda p: retrieval_loss_grad(p, retrieve_pairs),
            lambda p: revision_loss_grad(p, "rob bank", beams, labels, cfg),
        ):
            worst = max(worst, gradient_check(params, loss_fn, eps=1e-5))
    assert worst <= 1e-4, f"max relative gradient error {worst:.2e}"
    elapsed = time.time() - started
    assert elapsed < 60.0, f"gradient checks took {elapsed:.1f}s"
    report(3, f"analytic gradients match finite differences (max rel err {worst:.1e})")


def test_04_normalization():
    # unmasked: sum over all |V|^L sequences equals 1 for |V|=5, L=3
    vocab = Vocab((BOS_TOKEN, Token(1, 0), Token(1, 1), Token(2, 0), Token(3, 0)))
    assert len(vocab) == 5
    params = init_params(vocab, d=6, hash_buckets=16, seed=3)
    total = sum(math.exp(sequence_logprob(params, "query text", seq))
                for seq in itertools.product(vocab.tokens, repeat=3))
    assert total == pytest.approx(1.0, abs=1e-6)

    # masked: every per-step distribution across a full decode sums to 1
    from gear.decode import masked_log_softmax
    from gear.seqmodel import decode_step, encode_query

    rng = random.Random(5)
    tree = random_constraint_tree(rng)
    params = init_params(Vocab.from_tree(tree), d=8, hash_buckets=32, seed=9)

    def walk(prefix_tokens, h, prev):
        h_next, logits = decode_step(params, h, prev)
        children = sorted(tree.valid_children(prefix_tokens))
        if not children:
            return
        idxs = np.array([params.vocab.index_of(t) for t in children])
        mass = float(np.exp(masked_log_softmax(logits, idxs)).sum())
        assert abs(mass - 1.0) <= 1e-9
        for tok in children:
            walk(prefix_tokens + (tok,), h_next, tok)

    walk((), encode_query(params, "a decode query"), BOS_TOKEN)
    report(4, "sequence and masked step distributions normalize")


def test_05_rationale_extraction_equals_bruteforce():
    rng = random.Random(97)
    schema = LawSchema((
        Charge("c1", "crime of robbery", "rob bank assault threat", 1, 1, 101),
        Charge("c2", "crime of theft", "steal goods quietly shop", 1, 1, 102),
        Charge("c3", "crime of fraud", "deceive contract money paper", 1, 2, 103),
    ))
    from gear.rationale import build_charge_keywords

    names, definitions = build_charge_keywords(schema)
    embeddings = build_charge_embeddings(schema, dim=32)
    vocab = ["rob", "bank", "assault", "threat", "steal", "goods", "quietly",
             "shop", "deceive", "contract", "money", "paper", "noise", "filler"]
    for trial in range(120):
        n_sentences = rng.randint(1, 9)
        sentences = [" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 7))) + "."
                     for _ in range(n_sentences)]
        doc = Document(f"d{trial}", " ".join(sentences), ("c1",), "candidate")

        for corpus, k in ((names, rng.randint(0, 5)),
                          (definitions, rng.randint(0, 8))):
            tf = {}
            for tok in tokenize(doc.text):
                tf[tok] = tf.get(tok, 0) + 1
            expected_words = sorted(
                (term for term in corpus.terms if tf.get(term, 0) > 0),
                key=lambda term: (-tf[term], term))[:k]
            assert extract_word_rationales(doc, corpus, k) == expected_words

        k3 = rng.randint(0, n_sentences)
        scores = [score_sentence(s, names, definitions, embeddings)
                  for s in doc.sentences]
        keep = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k3]
        expected_sentences = [doc.sentences[i] for i in sorted(keep)]
        assert extract_sentence_rationales(doc, names, definitions, embeddings,
                                           k3) == expected_sentences
    report(5, "word and sentence extraction equal brute-force sorts")


def test_06_synthetic_benchmark():
    started = time.time()
    means = run_benchmark((BENCHMARK_SEED, "none"))
    elapsed = time.time() - started
    assert means["recall@10"] >= 0.8, means
    assert means["mrr"] >= 0.5, means
    assert means["coverage@1"] >= 0.9, means
    assert elapsed < 600.0, f"benchmark took {elapsed:.1f}s"
    report(6, f"benchmark recall@10={means['recall@10']:.3f} "
              f"mrr={means['mrr']:.3f} coverage@1={means['coverage@1']:.3f} "
              f"in {elapsed:.0f}s")


def test_07_directional_ablations():
    variants = ("none", "no_revision", "no_rationale", "no_lawtree")
    jobs = [(seed, variant) for seed in ABLATION_SEEDS for variant in variants]
    with ProcessPoolExecutor(max_workers=2) as pool:
        results = dict(zip(jobs, pool.map(run_benchmark, jobs)))

    def mean_of(variant, metric):
        return float(np.mean([results[(s, variant)][metric] for s in ABLATION_SEEDS]))

    full_mrr = mean_of("none", "mrr")
    for variant in ("no_revision", "no_rationale", "no_lawtree"):
        assert full_mrr >= mean_of(variant, "mrr"), \
            f"full MRR {full_mrr:.4f} < {variant} {mean_of(variant, 'mrr'):.4f}"
    for k in (1, 3):
        assert mean_of("none", f"coverage@{k}") >= mean_of("no_revision", f"coverage@{k}")
    for (seed, variant), means in results.items():
        curve = [means[f"coverage@{k}"] for k in (1, 3, 5, 10)]
        assert curve == sorted(curve), f"coverage not monotone for {seed}/{variant}"
    summary = " ".join(f"{v}={mean_of(v, 'mrr'):.3f}" for v in variants)
    report(7, f"ablation MRR means: {summary}")


def test_08_validity_and_determinism(tmp_path):
    config_text = (
        "seed = 17\n"
        "paths.out = {out}\n"
        "synth.n_docs = 80\n"
        "synth.n_queries = 16\n"
        "train.epochs = 25\n"
        "train.beam_size = 20\n"
        "eval.threshold = 2\n"
    )
    digests = {}
    for label in ("a", "b"):
        out = tmp_path / label
        cfg_path = tmp_path / f"{label}.cfg"
        cfg_path.write_text(config_text.format(out=out))
        assert main(["pipeline", "--config", str(cfg_path)]) == 0
        digests[label] = {
            name: hashlib.sha256((out / name).read_bytes()).hexdigest()
            for name in ("run.tsv", "model.bin")
        }
    assert digests["a"] == digests["b"], "reruns are not byte-identical"

    # every generated ID in the run parses as a tree leaf
    out = tmp_path / "a"
    tree = load_tree(out / "tree.json")
    n_ids = 0
    for line in (out / "run.tsv").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        id_string = line.split("\t")[4]
        parse_id(id_string, tree)
        n_ids += 1
    assert n_ids > 0
    report(8, f"{n_ids} generated IDs all parse as leaves; reruns byte-identical")
