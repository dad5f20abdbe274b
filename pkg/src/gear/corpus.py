"""Corpus data model, file formats, tokenization, and the synthetic generator.

Documents, the law schema, and relevance judgments are small frozen dataclasses
with strict loaders. The generator builds seed-reproducible corpora whose
candidate documents are bags of their charges' definition keywords plus a
configurable fraction of noise drawn from the global vocabulary; queries are
noised copies of a candidate's keyword profile.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError

ROLE_CANDIDATE = "candidate"
ROLE_QUERY = "query"

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)
_SENT_SPLIT_RE = re.compile(r"(?<=[.!?。！？])\s+")


def tokenize(text: str, stopwords: Iterable[str] = ()) -> list[str]:
    """Lowercased word tokens with punctuation stripped and stopwords removed.

    Deterministic; empty input yields an empty list.
    """
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else frozenset(stopwords)
    return [tok for tok in _WORD_RE.findall(text.lower()) if tok not in stop]


def split_sentences(text: str) -> list[str]:
    """Split on sentence-final punctuation (. ! ? and CJK equivalents) followed by whitespace or EOL."""
    stripped = text.strip()
    if not stripped:
        return []
    return [part for part in _SENT_SPLIT_RE.split(stripped) if part]


def stable_bucket(token: str, n_buckets: int) -> int:
    """Hash a token into one of ``n_buckets``; stable across runs and platforms."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


@dataclass(frozen=True)
class Document:
    """A legal text with labeled charges and a role (candidate or query)."""

    doc_id: str
    text: str
    charges: tuple[str, ...] = ()
    role: str = ROLE_CANDIDATE
    sentences: tuple[str, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.role not in (ROLE_CANDIDATE, ROLE_QUERY):
            raise DataError(f"document {self.doc_id!r}: unknown role {self.role!r}")
        object.__setattr__(self, "charges", tuple(self.charges))
        if self.role == ROLE_CANDIDATE and not self.charges:
            raise DataError(f"candidate document {self.doc_id!r} has no charges")
        object.__setattr__(self, "sentences", tuple(split_sentences(self.text)))


@dataclass(frozen=True)
class Charge:
    charge_id: str
    name: str
    definition: str
    section: int
    chapter: int
    article: int

    def __post_init__(self):
        for fname in ("section", "chapter", "article"):
            if getattr(self, fname) < 0:
                raise DataError(f"charge {self.charge_id!r}: negative {fname}")

    @property
    def article_path(self) -> tuple[int, int, int]:
        return (self.section, self.chapter, self.article)


@dataclass(frozen=True)
class LawSchema:
    """The flat charge list plus the implied section -> chapter -> article containment."""

    charges: tuple[Charge, ...]

    def __post_init__(self):
        object.__setattr__(self, "charges", tuple(self.charges))
        by_id: dict[str, Charge] = {}
        for charge in self.charges:
            if charge.charge_id in by_id:
                raise DataError(f"duplicate charge_id {charge.charge_id!r}")
            by_id[charge.charge_id] = charge
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.charges)

    @property
    def charge_ids(self) -> tuple[str, ...]:
        return tuple(c.charge_id for c in self.charges)

    def charge(self, charge_id: str) -> Charge:
        try:
            return self._by_id[charge_id]
        except KeyError:
            raise DataError(f"unknown charge_id {charge_id!r}") from None

    def article_path(self, charge_id: str) -> tuple[int, int, int]:
        return self.charge(charge_id).article_path


@dataclass(frozen=True)
class Qrels:
    """Graded relevance judgments, at most one entry per (query, document)."""

    entries: tuple[tuple[str, str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((q, d, int(g)) for q, d, g in self.entries))
        by_query: dict[str, dict[str, int]] = {}
        for query_id, doc_id, grade in self.entries:
            if grade < 0:
                raise DataError(f"qrels: negative grade for ({query_id}, {doc_id})")
            grades = by_query.setdefault(query_id, {})
            if doc_id in grades:
                raise DataError(f"qrels: duplicate entry for ({query_id}, {doc_id})")
            grades[doc_id] = grade
        object.__setattr__(self, "_by_query", by_query)

    @property
    def query_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_query))

    def grades(self, query_id: str) -> Mapping[str, int]:
        return self._by_query.get(query_id, {})

    def relevant(self, query_id: str, threshold: int = 1) -> frozenset[str]:
        return frozenset(d for d, g in self.grades(query_id).items() if g >= threshold)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _open_lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc


def load_corpus(path) -> list[Document]:
    """Read corpus.jsonl: one JSON object per line with doc_id/text/charges/role.

    A leading meta object (no "doc_id" key) carrying a config hash is skipped.
    """
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_open_lines(path), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{path}:{lineno}: expected a JSON object")
        if "doc_id" not in obj and "meta" in obj:
            continue
        for key in ("doc_id", "text", "role"):
            if key not in obj:
                raise DataError(f"{path}:{lineno}: missing field {key!r}")
        charges = obj.get("charges", [])
        if not isinstance(charges, list) or not all(isinstance(c, str) for c in charges):
            raise DataError(f"{path}:{lineno}: 'charges' must be a list of strings")
        if obj["doc_id"] in seen:
            raise DataError(f"{path}:{lineno}: duplicate doc_id {obj['doc_id']!r}")
        seen.add(obj["doc_id"])
        try:
            docs.append(Document(obj["doc_id"], obj["text"], tuple(charges), obj["role"]))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return docs


def write_corpus(docs: Sequence[Document], path, config_hash: str | None = None) -> None:
    lines = []
    if config_hash:
        lines.append(json.dumps({"meta": "corpus", "config_hash": config_hash}))
    for doc in docs:
        lines.append(json.dumps(
            {"doc_id": doc.doc_id, "text": doc.text, "charges": list(doc.charges), "role": doc.role},
            ensure_ascii=False,
        ))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_law_schema(path) -> LawSchema:
    """Read law.json: nested sections -> chapters -> articles -> charges."""
    text = "\n".join(_open_lines(path))
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    charges: list[Charge] = []
    try:
        for section in obj["sections"]:
            for chapter in section["chapters"]:
                for article in chapter["articles"]:
                    for entry in article["charges"]:
                        charges.append(Charge(
                            charge_id=entry["charge_id"],
                            name=entry["name"],
                            definition=entry["definition"],
                            section=int(section["id"]),
                            chapter=int(chapter["id"]),
                            article=int(article["id"]),
                        ))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed law schema: missing {exc}") from exc
    return LawSchema(tuple(charges))


def write_law_schema(schema: LawSchema, path, config_hash: str | None = None) -> None:
    sections: dict[int, dict[int, dict[int, list[Charge]]]] = {}
    for charge in schema.charges:
        sections.setdefault(charge.section, {}).setdefault(charge.chapter, {}) \
            .setdefault(charge.article, []).append(charge)
    obj: dict = {}
    if config_hash:
        obj["config_hash"] = config_hash
    obj["sections"] = [
        {
            "id": sec,
            "chapters": [
                {
                    "id": chap,
                    "articles": [
                        {
                            "id": art,
                            "charges": [
                                {"charge_id": c.charge_id, "name": c.name, "definition": c.definition}
                                for c in sorted(arts[art], key=lambda c: c.charge_id)
                            ],
                        }
                        for art in sorted(arts)
                    ],
                }
                for chap, arts in sorted(chaps.items())
            ],
        }
        for sec, chaps in sorted(sections.items())
    ]
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_qrels(path) -> Qrels:
    """Read qrels.tsv: query_id <TAB> doc_id <TAB> grade. '#' lines are comments."""
    entries: list[tuple[str, str, int]] = []
    for lineno, line in enumerate(_open_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        query_id, doc_id, grade_text = parts
        try:
            grade = int(grade_text)
        except ValueError:
            raise DataError(f"{path}:{lineno}: grade {grade_text!r} is not an integer") from None
        if grade < 0:
            raise DataError(f"{path}:{lineno}: negative grade")
        entries.append((query_id, doc_id, grade))
    try:
        return Qrels(tuple(entries))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_qrels(qrels: Qrels, path, config_hash: str | None = None) -> None:
    lines = []
    if config_hash:
        lines.append(f"# config_hash={config_hash}")
    lines.extend(f"{q}\t{d}\t{g}" for q, d, g in qrels.entries)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_stopwords(path) -> frozenset[str]:
    """Read stopwords.txt: one token per line, UTF-8; '#' lines are comments."""
    words = set()
    for line in _open_lines(path):
        word = line.strip()
        if word and not word.startswith("#"):
            words.add(word)
    return frozenset(words)


def read_config_hash(path) -> str | None:
    """Sniff the embedded config hash from any artifact format (None if absent)."""
    path = Path(path)
    try:
        head = path.read_bytes()[:4096]
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if head.startswith(b"GEARMDL1"):
        raw = head[28:44]
        text = raw.rstrip(b"\0").decode("ascii", errors="replace")
        return text or None
    first = head.split(b"\n", 1)[0].decode("utf-8", errors="replace").strip()
    if first.startswith("# config_hash="):
        return first.split("=", 1)[1].strip() or None
    if first.startswith("{"):
        try:
            obj = json.loads(first)
            if isinstance(obj, dict) and "config_hash" in obj:
                return obj["config_hash"]
        except json.JSONDecodeError:
            pass
        # whole-file JSON (law.json, tree.json, report.json)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
            if isinstance(obj, dict):
                return obj.get("config_hash")
        except json.JSONDecodeError:
            return None
    return None


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_sections: int = 2
    n_chapters_per_section: int = 2
    n_articles_per_chapter: int = 2
    n_charges_per_article: int = 3
    n_docs: int = 200
    n_queries: int = 50
    keywords_per_charge: int = 3
    noise_rate: float = 0.2
    multi_charge_rate: float = 0.15

    def __post_init__(self):
        for fname in ("n_sections", "n_chapters_per_section", "n_articles_per_chapter",
                      "n_charges_per_article", "n_docs", "n_queries", "keywords_per_charge"):
            if getattr(self, fname) < 1:
                raise DataError(f"SynthConfig.{fname} must be >= 1")
        for fname in ("noise_rate", "multi_charge_rate"):
            value = getattr(self, fname)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"SynthConfig.{fname} must be in [0, 1]")


_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_word(rng: random.Random, used: set[str]) -> str:
    while True:
        word = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(3))
        if word not in used:
            used.add(word)
            return word


def _bag_to_text(rng: random.Random, tokens: list[str]) -> str:
    """Chunk a shuffled token bag into period-terminated sentences."""
    sentences = []
    pos = 0
    while pos < len(tokens):
        width = rng.randint(5, 9)
        sentences.append(" ".join(tokens[pos:pos + width]) + ".")
        pos += width
    return " ".join(sentences)


def _profile_tokens(rng: random.Random, charge_keywords: Mapping[str, tuple[str, ...]],
                    charges: Sequence[str], vocab_pool: Sequence[str], noise_rate: float) -> list[str]:
    tokens: list[str] = []
    for charge_id in charges:
        for keyword in charge_keywords[charge_id]:
            # 40-60 repeats keeps documents above typical sentence-selection
            # cutoffs while staying well under the 512-token input budget
            tokens.extend([keyword] * rng.randint(40, 60))
    n_noise = round(len(tokens) * noise_rate)
    tokens.extend(rng.choice(vocab_pool) for _ in range(n_noise))
    rng.shuffle(tokens)
    return tokens


def generate_synthetic(config: SynthConfig) -> tuple[list[Document], LawSchema, Qrels]:
    """Build a deterministic corpus: candidates, queries, schema, and graded qrels.

    Grade 2 marks candidates sharing all of a query's charges, grade 1 those
    sharing at least one; identical seeds give byte-identical output.
    """
    rng = random.Random(config.seed)
    used_words: set[str] = set()

    charges: list[Charge] = []
    charge_keywords: dict[str, tuple[str, ...]] = {}
    article_no = 100
    charge_no = 0
    for section in range(1, config.n_sections + 1):
        for chapter in range(1, config.n_chapters_per_section + 1):
            for _ in range(config.n_articles_per_chapter):
                article_no += 1
                for _ in range(config.n_charges_per_article):
                    charge_no += 1
                    keywords = tuple(_pseudo_word(rng, used_words)
                                     for _ in range(config.keywords_per_charge))
                    charge_id = f"c{charge_no:03d}"
                    name = "crime of " + " ".join(keywords[:2])
                    definition = (f"whoever commits {' '.join(keywords)} "
                                  f"is guilty under article {article_no}.")
                    charges.append(Charge(charge_id, name, definition, section, chapter, article_no))
                    charge_keywords[charge_id] = keywords
    schema = LawSchema(tuple(charges))

    keyword_pool = [kw for kws in charge_keywords.values() for kw in kws]
    filler_pool = [_pseudo_word(rng, used_words) for _ in range(len(keyword_pool))]
    vocab_pool = keyword_pool + filler_pool
    charge_ids = list(charge_keywords)

    candidates: list[Document] = []
    for i in range(config.n_docs):
        n_charges = 2 if (len(charge_ids) >= 2 and rng.random() < config.multi_charge_rate) else 1
        doc_charges = tuple(sorted(rng.sample(charge_ids, n_charges)))
        tokens = _profile_tokens(rng, charge_keywords, doc_charges, vocab_pool, config.noise_rate)
        text = _bag_to_text(rng, tokens)
        candidates.append(Document(f"d{i:03d}", text, doc_charges, ROLE_CANDIDATE))

    queries: list[Document] = []
    for i in range(config.n_queries):
        anchor = candidates[rng.randrange(config.n_docs)]
        tokens = _profile_tokens(rng, charge_keywords, anchor.charges, vocab_pool, config.noise_rate)
        text = _bag_to_text(rng, tokens)
        queries.append(Document(f"q{i:03d}", text, anchor.charges, ROLE_QUERY))

    entries: list[tuple[str, str, int]] = []
    for query in queries:
        query_charges = set(query.charges)
        for doc in candidates:
            shared = query_charges & set(doc.charges)
            if query_charges <= set(doc.charges):
                entries.append((query.doc_id, doc.doc_id, 2))
            elif shared:
                entries.append((query.doc_id, doc.doc_id, 1))
    qrels = Qrels(tuple(entries))
    return candidates + queries, schema, qrels


def corpus_fingerprint(docs: Sequence[Document]) -> str:
    """Short stable identifier for a corpus (used in report metadata)."""
    h = hashlib.sha256()
    for doc in docs:
        h.update(doc.doc_id.encode("utf-8"))
        h.update(b"\0")
        h.update(doc.text.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()[:16]
