"""Adam training over the combined indexing + retrieval + revision objective.

Each epoch shuffles (seeded) the teacher-forcing pairs into mini-batches; after
the warmup epochs the beams for every query are regenerated once per epoch with
constrained beam search and the revision loss joins the per-batch objective.
Training is single-threaded and bit-reproducible given (seed, config, inputs).
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np

from .corpus import Document, Qrels, ROLE_CANDIDATE, ROLE_QUERY
from .decode import constrained_beam_search
from .errors import DataError, DivergenceError
from .lawtree import LawTree, SemanticId
from .seqmodel import (
    ModelParams,
    TrainConfig,
    Vocab,
    indexing_loss_grad,
    init_params,
    retrieval_loss_grad,
    revision_batch_grad,
    zero_grads,
)

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class _Adam:
    def __init__(self, params: ModelParams, learning_rate: float):
        self.lr = learning_rate
        self.step_count = 0
        self.m = zero_grads(params)
        self.v = zero_grads(params)
        self._scratch = zero_grads(params)

    def step(self, params: ModelParams, grads: Mapping[str, np.ndarray]) -> None:
        self.step_count += 1
        bias1 = 1.0 - ADAM_BETA1 ** self.step_count
        bias2 = 1.0 - ADAM_BETA2 ** self.step_count
        for name, grad in grads.items():
            m = self.m[name]
            v = self.v[name]
            buf = self._scratch[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * grad
            v *= ADAM_BETA2
            np.multiply(grad, grad, out=buf)
            buf *= 1.0 - ADAM_BETA2
            v += buf
            np.divide(v, bias2, out=buf)
            np.sqrt(buf, out=buf)
            buf += ADAM_EPS
            np.divide(m, buf, out=buf)
            buf *= self.lr / bias1
            getattr(params, name)[...] -= buf


def build_training_pairs(
    corpus: Sequence[Document],
    inputs: Mapping[str, str],
    tree: LawTree,
    qrels: Qrels,
    threshold: int = 1,
) -> tuple[list[tuple[str, SemanticId]], list[tuple[str, SemanticId]],
           list[tuple[str, str, tuple[SemanticId, ...]]]]:
    """Assemble (input, id) pairs for indexing and retrieval plus query labels.

    Multi-ID documents and multi-relevant queries contribute one pair per
    (input, id). Queries without any indexed relevant document are skipped.
    """
    indexed_docs = set(tree.doc_ids())
    indexing_pairs = []
    for doc in corpus:
        if doc.role != ROLE_CANDIDATE or doc.doc_id not in indexed_docs:
            continue
        text = inputs.get(doc.doc_id)
        if text is None:
            raise DataError(f"no model input for candidate {doc.doc_id!r}")
        for sid in sorted(tree.ids_of_doc(doc.doc_id)):
            indexing_pairs.append((text, sid))

    retrieval_pairs = []
    query_items = []
    for doc in corpus:
        if doc.role != ROLE_QUERY:
            continue
        text = inputs.get(doc.doc_id)
        if text is None:
            raise DataError(f"no model input for query {doc.doc_id!r}")
        labels: list[SemanticId] = []
        for rel_doc in sorted(qrels.relevant(doc.doc_id, threshold)):
            if rel_doc not in indexed_docs:
                continue
            labels.extend(sorted(tree.ids_of_doc(rel_doc)))
        if not labels:
            continue
        for sid in labels:
            retrieval_pairs.append((text, sid))
        query_items.append((doc.doc_id, text, tuple(labels)))
    return indexing_pairs, retrieval_pairs, query_items


def _partition(rng: np.random.Generator, n_items: int, n_batches: int) -> list[np.ndarray]:
    if n_items == 0:
        return [np.zeros(0, dtype=np.int64)] * n_batches
    return np.array_split(rng.permutation(n_items), n_batches)


def train(
    corpus: Sequence[Document],
    inputs: Mapping[str, str],
    tree: LawTree,
    qrels: Qrels,
    config: TrainConfig,
    threshold: int = 1,
    loss_log: list | None = None,
) -> ModelParams:
    """Train a model from scratch; deterministic given (seed, config, inputs).

    ``inputs`` maps doc_id -> serialized model input (rationales, or raw text
    for the no-extraction baseline). Appends one dict per epoch to ``loss_log``
    when given and raises DivergenceError on a non-finite loss.
    """
    vocab = Vocab.from_tree(tree)
    params = init_params(vocab, config.hidden_dim, config.hash_buckets, config.seed)
    indexing_pairs, retrieval_pairs, query_items = build_training_pairs(
        corpus, inputs, tree, qrels, threshold)
    optimizer = _Adam(params, config.learning_rate)
    rng = np.random.default_rng(config.seed + 1)
    use_revision = config.revision_weight != 0.0 and bool(query_items)

    for epoch in range(config.epochs):
        revision_items = []
        if use_revision and epoch >= config.warmup_epochs:
            for _, text, labels in query_items:
                beams = constrained_beam_search(params, tree, text, config.beam_size)
                revision_items.append(
                    (text, [(hyp.semantic_id(), hyp.step_logprobs) for hyp in beams], labels))

        n_pairs = max(len(indexing_pairs), len(retrieval_pairs), 1)
        n_batches = max(1, -(-n_pairs // config.batch_size))
        index_split = _partition(rng, len(indexing_pairs), n_batches)
        retrieve_split = _partition(rng, len(retrieval_pairs), n_batches)
        revision_split = _partition(rng, len(revision_items), n_batches)

        sums = np.zeros(3)
        counts = np.zeros(3)
        for batch_no in range(n_batches):
            grads = zero_grads(params)
            idx_batch = [indexing_pairs[i] for i in index_split[batch_no]]
            if idx_batch:
                value, g = indexing_loss_grad(params, idx_batch)
                for name in grads:
                    grads[name] += g[name]
                sums[0] += value
                counts[0] += 1
            ret_batch = [retrieval_pairs[i] for i in retrieve_split[batch_no]]
            if ret_batch:
                value, g = retrieval_loss_grad(params, ret_batch)
                for name in grads:
                    grads[name] += g[name]
                sums[1] += value
                counts[1] += 1
            rev_batch = [revision_items[i] for i in revision_split[batch_no]]
            if rev_batch:
                value, g = revision_batch_grad(params, rev_batch, config)
                for name in grads:
                    grads[name] += config.revision_weight * g[name]
                sums[2] += value
                counts[2] += 1
            optimizer.step(params, grads)

        means = np.divide(sums, counts, out=np.zeros(3), where=counts > 0)
        total = means[0] + means[1] + config.revision_weight * means[2]
        if not np.isfinite(total):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch}: indexing={means[0]}, "
                f"retrieval={means[1]}, revision={means[2]}")
        row = {"epoch": epoch, "indexing_loss": float(means[0]),
               "retrieval_loss": float(means[1]), "revision_loss": float(means[2]),
               "total": float(total)}
        if loss_log is not None:
            loss_log.append(row)
        logger.info("epoch %d: indexing=%.4f retrieval=%.4f revision=%.4f total=%.4f",
                    epoch, means[0], means[1], means[2], total)
    return params
