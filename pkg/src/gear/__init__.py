"""Generative legal document retrieval over a law structure constraint tree.

Documents are assigned hierarchical, law-aware semantic IDs; retrieval is
autoregressive generation of those IDs under constrained beam search, returning
ranked documents together with their judgment (article path) predictions in a
single inference.
"""

__version__ = "0.1.0"

from .corpus import Document, LawSchema, Qrels, SynthConfig, generate_synthetic, tokenize
from .lawtree import LawTree, SemanticId, Token, build_tree, format_id, parse_id
from .seqmodel import ModelParams, TrainConfig, Vocab

__all__ = [
    "Document", "LawSchema", "Qrels", "SynthConfig", "generate_synthetic", "tokenize",
    "LawTree", "SemanticId", "Token", "build_tree", "format_id", "parse_id",
    "ModelParams", "TrainConfig", "Vocab",
    "__version__",
]
