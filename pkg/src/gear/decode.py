"""Constrained beam search over the law tree and document-level ranking.

At every step each hypothesis's logits are masked to the valid children of its
prefix and renormalized, so per-step distributions stay proper and cumulative
scores are comparable; all finished hypotheses are leaf paths by construction.
Document ranking deduplicates leaves per document, keeping the best-scoring ID.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence
from weakref import WeakKeyDictionary

import numpy as np

from .errors import ContractError, DataError
from .lawtree import BOS_TOKEN, LawTree, SemanticId, Token, format_id
from .seqmodel import ModelParams, Vocab, encode_query

logger = logging.getLogger(__name__)

# prefix -> (child values, vocab indices) per (tree, vocab); trees and vocabs
# are immutable so entries never go stale
_CHILD_INDEX_CACHE: "WeakKeyDictionary[LawTree, dict]" = WeakKeyDictionary()


def _child_indices(tree: LawTree, vocab: Vocab,
                   prefix_values: tuple[int, ...]) -> tuple[tuple[int, ...], np.ndarray]:
    per_vocab = _CHILD_INDEX_CACHE.setdefault(tree, {})
    cache = per_vocab.setdefault(vocab, {})
    entry = cache.get(prefix_values)
    if entry is None:
        child_values = tree.child_values(prefix_values)
        level = len(prefix_values) + 1
        indices = vocab.indices_of([Token(level, v) for v in child_values])
        entry = (child_values, indices)
        cache[prefix_values] = entry
    return entry


@dataclass(frozen=True)
class Hypothesis:
    """A complete decoded path with its cumulative and per-step log-probs."""

    tokens: tuple[Token, ...]
    logprob: float
    step_logprobs: tuple[float, ...]

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(tok.value for tok in self.tokens)

    def semantic_id(self) -> SemanticId:
        return SemanticId(self.tokens)


@dataclass(frozen=True)
class RankedDoc:
    doc_id: str
    semantic_id: SemanticId
    score: float
    article_path: tuple[int, int, int]


@dataclass(frozen=True)
class RetrievalResult:
    """Deduplicated per-query ranking with judgment (article path) predictions."""

    entries: tuple[RankedDoc, ...]

    def __post_init__(self):
        scores = [e.score for e in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ContractError("retrieval scores must be non-increasing")
        doc_ids = [e.doc_id for e in self.entries]
        if len(set(doc_ids)) != len(doc_ids):
            raise ContractError("retrieval doc_ids must be distinct")

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]


def masked_log_softmax(logits: np.ndarray, valid_indices: np.ndarray) -> np.ndarray:
    """Log-probabilities over the valid indices only (mass renormalized)."""
    vals = logits[valid_indices]
    m = vals.max()
    return vals - (m + np.log(np.exp(vals - m).sum()))


def constrained_beam_search(params: ModelParams, tree: LawTree, query: str,
                            beam_size: int) -> list[Hypothesis]:
    """Beam search restricted to tree paths; returns min(beam_size, #leaves)
    complete hypotheses ranked by cumulative log-prob, ties lexicographic."""
    if beam_size < 1:
        raise ContractError("beam_size must be >= 1")
    if tree.n_leaves < 1:
        raise ContractError("tree has no leaves to decode")
    h0 = encode_query(params, query)
    return _beam_search_from_state(params, tree, h0, beam_size)


def _beam_search_from_state(params: ModelParams, tree: LawTree, h0: np.ndarray,
                            beam_size: int) -> list[Hypothesis]:
    vocab = params.vocab
    beams: list[tuple[tuple[int, ...], float, tuple[float, ...]]] = [((), 0.0, ())]
    states = h0[None, :]
    prev_idx = np.array([vocab.index_of(BOS_TOKEN)], dtype=np.int64)
    for level in range(1, tree.depth + 1):
        e_prev = params.embed_tok[prev_idx]
        h_next = np.tanh(states @ params.rec_w.T + e_prev @ params.rec_e.T + params.rec_b)
        logits = h_next @ params.out_w.T + params.out_b
        candidates = []
        for i, (values, cum, steps) in enumerate(beams):
            child_values, idxs = _child_indices(tree, vocab, values)
            step_lps = masked_log_softmax(logits[i], idxs)
            for value, lp in zip(child_values, step_lps):
                lp = float(lp)
                candidates.append((cum + lp, values + (value,), steps + (lp,), i))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        kept = candidates[:beam_size]
        beams = [(values, cum, steps) for cum, values, steps, _ in kept]
        states = h_next[[i for _, _, _, i in kept]]
        prev_idx = np.array([vocab.index_of(Token(level, values[-1]))
                             for values, _, _ in beams], dtype=np.int64)
    return [
        Hypothesis(tuple(Token(lvl + 1, v) for lvl, v in enumerate(values)), cum, steps)
        for values, cum, steps in beams
    ]


def rank_documents(tree: LawTree, hypotheses: Sequence[Hypothesis], k: int) -> RetrievalResult:
    """Map hypotheses to documents, dedup keeping each document's best ID,
    truncate to k; judgment prediction is the article-level prefix."""
    if k < 1:
        raise ContractError("k must be >= 1")
    entries: list[RankedDoc] = []
    seen: set[str] = set()
    for hyp in hypotheses:
        sid = hyp.semantic_id()
        doc_id, _ = tree.leaf_to_doc(sid)
        if doc_id in seen:
            continue
        seen.add(doc_id)
        entries.append(RankedDoc(doc_id, sid, hyp.logprob, hyp.values[:3]))
        if len(entries) == k:
            break
    return RetrievalResult(tuple(entries))


def retrieve(params: ModelParams, tree: LawTree, query: str, k: int,
             beam_size: int) -> RetrievalResult:
    """End-to-end single inference: ranked documents plus judgment predictions."""
    hypotheses = constrained_beam_search(params, tree, query, beam_size)
    return rank_documents(tree, hypotheses, k)


# ---------------------------------------------------------------------------
# Run file format
# ---------------------------------------------------------------------------


def write_run(path, results: Mapping[str, RetrievalResult],
              config_hash: str | None = None) -> None:
    """run.tsv: query_id, 1-based rank, doc_id, score, id string, article path."""
    lines = []
    if config_hash:
        lines.append(f"# config_hash={config_hash}")
    for query_id in sorted(results):
        for rank, entry in enumerate(results[query_id].entries, start=1):
            article = "-".join(str(v) for v in entry.article_path)
            lines.append("\t".join((
                query_id, str(rank), entry.doc_id, repr(entry.score),
                format_id(entry.semantic_id), article,
            )))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_run(path) -> dict[str, list[str]]:
    """Ranked doc ids per query (ranks must be 1..n in order)."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    run: dict[str, list[str]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise DataError(f"{path}:{lineno}: expected 6 tab-separated fields")
        query_id, rank_text, doc_id = parts[0], parts[1], parts[2]
        ranked = run.setdefault(query_id, [])
        try:
            rank = int(rank_text)
        except ValueError:
            raise DataError(f"{path}:{lineno}: rank {rank_text!r} is not an integer") from None
        if rank != len(ranked) + 1:
            raise DataError(f"{path}:{lineno}: rank {rank} out of order for {query_id!r}")
        ranked.append(doc_id)
    return run
