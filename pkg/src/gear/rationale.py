"""Law-grounded keyword corpora and word/sentence rationale extraction.

Three corpora drive extraction: tokenized charge names, tokenized charge
definitions, and hashed term-frequency embeddings of the definitions.
Word rationales are the highest term-frequency corpus terms in a document;
sentence rationales score each sentence by normalized corpus overlap plus its
best cosine against the charge embeddings. Candidates with labeled charges are
extracted against corpora shrunk to those charges.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .corpus import Document, LawSchema, ROLE_CANDIDATE, stable_bucket, tokenize
from .errors import ContractError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KeywordCorpus:
    """Term counts aggregated across charges, with per-charge provenance.

    ``sources`` maps charge_id -> term Counter; aggregate counts and provenance
    are derived so that shrinking to a charge subset recomputes counts from the
    retained sources only.
    """

    sources: Mapping[str, Counter]

    @cached_property
    def terms(self) -> Counter:
        total: Counter = Counter()
        for counts in self.sources.values():
            total.update(counts)
        return total

    @cached_property
    def provenance(self) -> dict[str, frozenset[str]]:
        prov: dict[str, set[str]] = {}
        for charge_id, counts in self.sources.items():
            for term in counts:
                prov.setdefault(term, set()).add(charge_id)
        return {term: frozenset(ids) for term, ids in prov.items()}

    def count(self, term: str) -> int:
        return self.terms.get(term, 0)


@dataclass(frozen=True)
class EmbeddingCorpus:
    """Unit-norm hashed term-frequency vectors, one per charge."""

    dim: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        for charge_id, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ContractError(f"embedding for {charge_id!r} has shape {vec.shape}")
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > 1e-6:
                raise ContractError(f"embedding for {charge_id!r} is not unit-norm ({norm})")

    @cached_property
    def matrix(self) -> np.ndarray:
        """Row-stacked vectors in sorted charge order; empty -> (0, dim)."""
        order = sorted(self.vectors)
        if not order:
            return np.zeros((0, self.dim))
        return np.stack([self.vectors[cid] for cid in order])


class Corpora(NamedTuple):
    names: KeywordCorpus        # from charge names
    definitions: KeywordCorpus  # from charge definitions
    embeddings: EmbeddingCorpus


def _expand(tokens: list[str], synonyms: Mapping[str, Sequence[str]] | None) -> list[str]:
    if not synonyms:
        return tokens
    expanded = []
    for tok in tokens:
        expanded.append(tok)
        expanded.extend(synonyms.get(tok, ()))
    return expanded


def build_charge_keywords(
    schema: LawSchema,
    stopwords: Iterable[str] = (),
    synonyms: Mapping[str, Sequence[str]] | None = None,
) -> tuple[KeywordCorpus, KeywordCorpus]:
    """Build the charge-name corpus and the charge-definition corpus.

    The optional synonym map realizes lexical-variant expansion: each token
    occurrence also contributes its listed variants.
    """
    stop = frozenset(stopwords)
    name_sources: dict[str, Counter] = {}
    definition_sources: dict[str, Counter] = {}
    for charge in schema.charges:
        name_sources[charge.charge_id] = Counter(
            _expand(tokenize(charge.name, stop), synonyms))
        definition_sources[charge.charge_id] = Counter(
            _expand(tokenize(charge.definition, stop), synonyms))
    return KeywordCorpus(name_sources), KeywordCorpus(definition_sources)


def embed_tokens(tokens: Sequence[str], dim: int) -> np.ndarray:
    """Hashed term-frequency vector over ``dim`` buckets, L2-normalized.

    Returns the zero vector for an empty token list (caller decides fallback).
    """
    vec = np.zeros(dim)
    for tok in tokens:
        vec[stable_bucket(tok, dim)] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def build_charge_embeddings(
    schema: LawSchema,
    corpus_vocab: Iterable[str] | None = None,
    dim: int = 256,
) -> EmbeddingCorpus:
    """Embed every charge definition; a vocabulary restricts tokens if given.

    Empty definitions fall back to the uniform unit vector (logged).
    """
    if dim < 8:
        raise ContractError(f"embedding dim must be >= 8, got {dim}")
    vocab = frozenset(corpus_vocab) if corpus_vocab is not None else None
    vectors: dict[str, np.ndarray] = {}
    for charge in schema.charges:
        tokens = tokenize(charge.definition)
        if vocab is not None:
            tokens = [t for t in tokens if t in vocab]
        vec = embed_tokens(tokens, dim)
        if not vec.any():
            logger.warning("charge %s has an empty definition; using uniform embedding",
                           charge.charge_id)
            vec = np.full(dim, 1.0 / np.sqrt(dim))
        vectors[charge.charge_id] = vec
    return EmbeddingCorpus(dim, vectors)


def extract_word_rationales(
    doc: Document,
    corpus: KeywordCorpus,
    k: int,
    stopwords: Iterable[str] = (),
) -> list[str]:
    """The <= k corpus terms with highest term frequency in the document.

    Zero-frequency terms are excluded; ties break lexicographically and the
    output is sorted by (tf desc, term asc).
    """
    if k <= 0:
        return []
    tf = Counter(tokenize(doc.text, stopwords))
    present = [term for term in corpus.terms if tf[term] > 0]
    present.sort(key=lambda term: (-tf[term], term))
    return present[:k]


def _sim_tokens(tokens: Sequence[str], corpus: KeywordCorpus) -> float:
    terms = corpus.terms
    return float(sum(terms.get(tok, 0) for tok in tokens))


def sim(sentence: str, corpus: KeywordCorpus, stopwords: Iterable[str] = ()) -> float:
    """Sum over the sentence's token occurrences of their corpus counts."""
    return _sim_tokens(tokenize(sentence, stopwords), corpus)


def score_sentence(
    sentence: str,
    names: KeywordCorpus,
    definitions: KeywordCorpus,
    embeddings: EmbeddingCorpus,
    lambdas: tuple[float, float, float] = (10.0, 1.0, 0.1),
    stopwords: Iterable[str] = (),
    emb_fn: Callable[[Sequence[str]], np.ndarray] | None = None,
) -> float:
    """Length-normalized keyword overlap plus the best charge-embedding cosine.

    Sentences with no tokens score -inf (excluded from selection).
    """
    tokens = tokenize(sentence, stopwords)
    if not tokens:
        return float("-inf")
    lam1, lam2, lam3 = lambdas
    length = len(tokens)
    score = (lam1 * _sim_tokens(tokens, names) / length
             + lam2 * _sim_tokens(tokens, definitions) / length)
    if lam3 != 0.0 and embeddings.matrix.shape[0] > 0:
        vec = emb_fn(tokens) if emb_fn is not None else embed_tokens(tokens, embeddings.dim)
        if vec.any():
            score += lam3 * float(np.max(embeddings.matrix @ vec))
    return score


def extract_sentence_rationales(
    doc: Document,
    names: KeywordCorpus,
    definitions: KeywordCorpus,
    embeddings: EmbeddingCorpus,
    k3: int,
    lambdas: tuple[float, float, float] = (10.0, 1.0, 0.1),
    stopwords: Iterable[str] = (),
    positive_only: bool = False,
) -> list[str]:
    """Top-k3 sentences by score, returned in original document order.

    Ties break toward earlier sentences. With ``positive_only`` sentences whose
    score is not strictly positive are dropped before selection.
    """
    if k3 <= 0:
        return []
    scored = []
    for idx, sentence in enumerate(doc.sentences):
        score = score_sentence(sentence, names, definitions, embeddings,
                               lambdas, stopwords)
        if score == float("-inf"):
            continue
        if positive_only and score <= 0.0:
            continue
        scored.append((score, idx, sentence))
    top = sorted(scored, key=lambda item: (-item[0], item[1]))[:k3]
    return [sentence for _, _, sentence in sorted(top, key=lambda item: item[1])]


def shrink_corpus(
    names: KeywordCorpus,
    definitions: KeywordCorpus,
    embeddings: EmbeddingCorpus,
    charges: Iterable[str],
) -> Corpora:
    """Restrict all three corpora to the given charges, recomputing counts."""
    wanted = set(charges)
    if not wanted:
        raise ContractError("shrink_corpus requires a nonempty charge set")
    known = set(embeddings.vectors) | set(names.sources) | set(definitions.sources)
    unknown = wanted - known
    if unknown:
        raise DataError(f"unknown charge_id(s) in shrink: {sorted(unknown)}")
    keep = sorted(wanted)
    return Corpora(
        KeywordCorpus({cid: names.sources[cid] for cid in keep if cid in names.sources}),
        KeywordCorpus({cid: definitions.sources[cid] for cid in keep
                       if cid in definitions.sources}),
        EmbeddingCorpus(embeddings.dim, {cid: embeddings.vectors[cid] for cid in keep
                                         if cid in embeddings.vectors}),
    )


@dataclass(frozen=True)
class RationaleConfig:
    k1: int = 2
    k2: int = 5
    k3: int = 15
    lambda1: float = 10.0
    lambda2: float = 1.0
    lambda3: float = 0.1
    budget: int = 512
    embed_dim: int = 256

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3) < 0:
            raise DataError("rationale k1/k2/k3 must be >= 0")
        if self.budget < 1:
            raise DataError("rationale budget must be >= 1 token")
        if self.embed_dim < 8:
            raise DataError("rationale embed_dim must be >= 8")

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)


@dataclass(frozen=True)
class RationaleSet:
    """Extracted word- and sentence-level rationales plus their serialized form."""

    e_w1: tuple[str, ...]
    e_w2: tuple[str, ...]
    e_s: tuple[str, ...]
    serialized: str


def _compose(parts: Sequence[str], budget: int) -> str:
    if budget < 1:
        raise ContractError("budget must be >= 1 token")
    joined = " ".join(parts)
    tokens = joined.split()
    return " ".join(tokens[:budget])


def compose_query(rationales: RationaleSet, budget: int = 512) -> str:
    """Concatenate e_w1 ++ e_w2 ++ e_s space-separated, truncated to ``budget`` tokens."""
    return _compose((*rationales.e_w1, *rationales.e_w2, *rationales.e_s), budget)


def extract(
    doc: Document,
    corpora: Corpora,
    config: RationaleConfig = RationaleConfig(),
    stopwords: Iterable[str] = (),
) -> RationaleSet:
    """Full per-document extraction; candidates see corpora shrunk to their charges."""
    names, definitions, embeddings = corpora
    if doc.role == ROLE_CANDIDATE:
        names, definitions, embeddings = shrink_corpus(
            names, definitions, embeddings, doc.charges)
    e_w1 = tuple(extract_word_rationales(doc, names, config.k1, stopwords))
    e_w2 = tuple(extract_word_rationales(doc, definitions, config.k2, stopwords))
    e_s = tuple(extract_sentence_rationales(
        doc, names, definitions, embeddings, config.k3, config.lambdas, stopwords,
        positive_only=True))
    serialized = _compose((*e_w1, *e_w2, *e_s), config.budget)
    return RationaleSet(e_w1, e_w2, e_s, serialized)


# ---------------------------------------------------------------------------
# Cache file and synonym file formats
# ---------------------------------------------------------------------------


def load_synonyms(path) -> dict[str, tuple[str, ...]]:
    """Read synonyms.tsv: term <TAB> variant, one pair per line."""
    table: dict[str, list[str]] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 tab-separated fields")
        table.setdefault(parts[0], []).append(parts[1])
    return {term: tuple(variants) for term, variants in table.items()}


def write_rationales(
    path,
    rationales: Mapping[str, RationaleSet],
    order: Sequence[str],
    config_hash: str | None = None,
) -> None:
    lines = []
    if config_hash:
        lines.append(json.dumps({"meta": "rationales", "config_hash": config_hash}))
    for doc_id in order:
        rs = rationales[doc_id]
        lines.append(json.dumps(
            {"doc_id": doc_id, "e_w1": list(rs.e_w1), "e_w2": list(rs.e_w2),
             "e_s": list(rs.e_s), "serialized": rs.serialized},
            ensure_ascii=False,
        ))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_rationales(path) -> dict[str, RationaleSet]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    result: dict[str, RationaleSet] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        if "doc_id" not in obj and "meta" in obj:
            continue
        try:
            result[obj["doc_id"]] = RationaleSet(
                tuple(obj["e_w1"]), tuple(obj["e_w2"]), tuple(obj["e_s"]), obj["serialized"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed rationale entry: {exc}") from exc
    return result
