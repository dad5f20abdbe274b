"""The law structure constraint tree and hierarchical semantic IDs.

Every (charge, document) pair owns one leaf whose path is
section -> chapter -> article -> leaf ordinal; the implicit root renders as the
leading 0 in the surface form (e.g. "0-2-5-269-0"). Tokens carry their level so
equal integers at different levels stay distinct vocabulary entries. The tree
is immutable after construction and answers the valid-children queries that
constrained decoding needs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .corpus import Document, LawSchema
from .errors import ContractError, DataError

DEFAULT_DEPTH = 4

LEVEL_NAMES = {1: "section", 2: "chapter", 3: "article", 4: "leaf"}


class Token(NamedTuple):
    """A (level, value) vocabulary entry; level 0 is reserved for BOS."""

    level: int
    value: int


BOS_TOKEN = Token(0, 0)


@dataclass(frozen=True)
class SemanticId:
    """A fixed-length token path identifying one (charge, document) leaf."""

    tokens: tuple[Token, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ContractError("SemanticId requires at least one token")
        for position, token in enumerate(self.tokens, start=1):
            if token.level != position:
                raise ContractError(
                    f"SemanticId levels must increase 1..{len(self.tokens)}, "
                    f"got level {token.level} at position {position}")
            if token.value < 0:
                raise ContractError("SemanticId token values must be non-negative")

    @classmethod
    def from_values(cls, values: Sequence[int]) -> "SemanticId":
        return cls(tuple(Token(i + 1, int(v)) for i, v in enumerate(values)))

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(tok.value for tok in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __lt__(self, other: "SemanticId") -> bool:
        return self.values < other.values


class LawTree:
    """Immutable trie over semantic-ID paths with leaf <-> document maps."""

    def __init__(self, leaves: Iterable[tuple[Sequence[int], str, str]]):
        """Build from (path values, doc_id, charge_id) triples of uniform depth."""
        leaf_info: dict[tuple[int, ...], tuple[str, str]] = {}
        children: dict[tuple[int, ...], set[int]] = {}
        depth: int | None = None
        for values, doc_id, charge_id in leaves:
            path = tuple(int(v) for v in values)
            if depth is None:
                depth = len(path)
            elif len(path) != depth:
                raise DataError(f"leaf {path} has depth {len(path)}, expected {depth}")
            if any(v < 0 for v in path):
                raise DataError(f"leaf {path} has negative values")
            if path in leaf_info:
                raise DataError(f"duplicate leaf path {path}")
            leaf_info[path] = (doc_id, charge_id)
            for i in range(len(path)):
                children.setdefault(path[:i], set()).add(path[i])
        if depth is None:
            depth = DEFAULT_DEPTH
        self.depth = depth
        self._leaf_info = leaf_info
        self._children = {prefix: tuple(sorted(vals)) for prefix, vals in children.items()}
        doc_ids: dict[str, list[SemanticId]] = {}
        for path in sorted(leaf_info):
            doc_id, _ = leaf_info[path]
            doc_ids.setdefault(doc_id, []).append(SemanticId.from_values(path))
        self._doc_ids = {doc: tuple(ids) for doc, ids in doc_ids.items()}

    @property
    def n_leaves(self) -> int:
        return len(self._leaf_info)

    def leaves(self) -> list[tuple[tuple[int, ...], str, str]]:
        """All (path, doc_id, charge_id) triples in sorted path order."""
        return [(path, *self._leaf_info[path]) for path in sorted(self._leaf_info)]

    def doc_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._doc_ids))

    def child_values(self, prefix_values: Sequence[int]) -> tuple[int, ...]:
        """Sorted child values below a values-prefix; () for a leaf path."""
        prefix = tuple(int(v) for v in prefix_values)
        if prefix in self._children:
            return self._children[prefix]
        if len(prefix) == self.depth and prefix in self._leaf_info:
            return ()
        raise ContractError(f"prefix {prefix} is not a valid path in the tree")

    def valid_children(self, prefix: Sequence[Token]) -> frozenset[Token]:
        """The child tokens of a (possibly empty) path from the root."""
        for position, token in enumerate(prefix, start=1):
            if token.level != position:
                raise ContractError(
                    f"prefix token at position {position} has level {token.level}")
        values = tuple(tok.value for tok in prefix)
        level = len(values) + 1
        return frozenset(Token(level, v) for v in self.child_values(values))

    def is_leaf_path(self, values: Sequence[int]) -> bool:
        return tuple(int(v) for v in values) in self._leaf_info

    def leaf_to_doc(self, semantic_id: SemanticId) -> tuple[str, str]:
        """The (doc_id, charge_id) pair owning a leaf."""
        info = self._leaf_info.get(semantic_id.values)
        if info is None:
            raise DataError(f"id {format_id(semantic_id)} is not a leaf of the tree")
        return info

    def ids_of_doc(self, doc_id: str) -> frozenset[SemanticId]:
        ids = self._doc_ids.get(doc_id)
        if ids is None:
            raise DataError(f"unknown doc_id {doc_id!r}")
        return frozenset(ids)

    def vocabulary(self) -> tuple[Token, ...]:
        """All distinct (level, value) tokens, sorted; BOS not included."""
        seen: set[Token] = set()
        for path in self._leaf_info:
            for level, value in enumerate(path, start=1):
                seen.add(Token(level, value))
        return tuple(sorted(seen))


def build_tree(schema: LawSchema, candidates: Sequence[Document]) -> LawTree:
    """Place every (charge, document) pair under its article node.

    Leaf suffix values are ordinals assigned in ascending (doc_id, charge_id)
    order within each article, so construction is independent of input order.
    """
    by_article: dict[tuple[int, int, int], list[tuple[str, str]]] = {}
    for doc in candidates:
        if not doc.charges:
            raise DataError(f"document {doc.doc_id!r} has no charges to index")
        for charge_id in doc.charges:
            path = schema.article_path(charge_id)
            by_article.setdefault(path, []).append((doc.doc_id, charge_id))
    leaves = []
    for article_path in sorted(by_article):
        for suffix, (doc_id, charge_id) in enumerate(sorted(by_article[article_path])):
            leaves.append(((*article_path, suffix), doc_id, charge_id))
    return LawTree(leaves)


def build_shuffled_tree(schema: LawSchema, candidates: Sequence[Document], seed: int) -> LawTree:
    """Baseline tree that scatters leaves over random articles.

    Same shape and depth as the real tree but prefixes carry no charge
    semantics, for measuring what the law-aligned hierarchy contributes.
    """
    articles = sorted({c.article_path for c in schema.charges})
    pairs = []
    for doc in candidates:
        if not doc.charges:
            raise DataError(f"document {doc.doc_id!r} has no charges to index")
        for charge_id in doc.charges:
            schema.article_path(charge_id)  # validate the charge exists
            pairs.append((doc.doc_id, charge_id))
    rng = random.Random(seed)
    by_article: dict[tuple[int, int, int], list[tuple[str, str]]] = {}
    for pair in sorted(pairs):
        by_article.setdefault(articles[rng.randrange(len(articles))], []).append(pair)
    leaves = []
    for article_path in sorted(by_article):
        for suffix, (doc_id, charge_id) in enumerate(sorted(by_article[article_path])):
            leaves.append(((*article_path, suffix), doc_id, charge_id))
    return LawTree(leaves)


def format_id(semantic_id: SemanticId) -> str:
    """Surface form with the implicit root: "0-v1-v2-...-vL"."""
    return "0-" + "-".join(str(v) for v in semantic_id.values)


def parse_id(text: str, tree: LawTree) -> SemanticId:
    """Parse and validate a surface-form ID against the tree's leaves."""
    parts = text.strip().split("-")
    if not parts or parts[0] != "0":
        raise DataError(f"id {text!r} must start with the root marker 0")
    if len(parts) - 1 != tree.depth:
        raise DataError(
            f"id {text!r} has {len(parts) - 1} components, expected {tree.depth}")
    values = []
    for part in parts[1:]:
        try:
            value = int(part)
        except ValueError:
            raise DataError(f"id {text!r} has non-integer component {part!r}") from None
        if value < 0:
            raise DataError(f"id {text!r} has negative component {value}")
        values.append(value)
    if not tree.is_leaf_path(values):
        raise DataError(f"id {text!r} is not a leaf of the tree")
    return SemanticId.from_values(values)


def save_tree(tree: LawTree, path, config_hash: str | None = None) -> None:
    obj: dict = {}
    if config_hash:
        obj["config_hash"] = config_hash
    obj["depth"] = tree.depth
    obj["leaves"] = [
        {"path": list(leaf_path), "doc_id": doc_id, "charge_id": charge_id}
        for leaf_path, doc_id, charge_id in tree.leaves()
    ]
    obj["vocabulary"] = [[tok.level, tok.value] for tok in tree.vocabulary()]
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_tree(path) -> LawTree:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    try:
        leaves = [(entry["path"], entry["doc_id"], entry["charge_id"])
                  for entry in obj["leaves"]]
        depth = int(obj["depth"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed tree file: {exc}") from exc
    tree = LawTree(leaves)
    if tree.n_leaves and tree.depth != depth:
        raise DataError(f"{path}: leaf depth {tree.depth} disagrees with header {depth}")
    return tree
