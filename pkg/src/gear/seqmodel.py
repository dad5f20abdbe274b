"""Compact trainable encoder-decoder over semantic-ID tokens, with all losses.

The encoder mean-pools hashed token embeddings of the serialized rationale and
projects through a tanh layer; the decoder is a vanilla recurrent cell whose
initial state is the query encoding. Gradients are computed analytically
(verified against finite differences) so training has no framework dependency
beyond numpy.

Losses: indexing and retrieval cross-entropy over teacher-forced ID sequences,
and a policy-gradient revision objective that weights beam token log-probs by
a hierarchy-decayed step reward and adds a teacher term pulling toward the
nearest ground-truth ID.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import stable_bucket, tokenize
from .errors import ContractError, DataError
from .lawtree import BOS_TOKEN, LawTree, SemanticId, Token

logger = logging.getLogger(__name__)

TENSOR_FIELDS = ("embed_in", "proj_w", "proj_b", "embed_tok",
                 "rec_w", "rec_e", "rec_b", "out_w", "out_b")

MODEL_MAGIC = b"GEARMDL1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Vocab:
    """Decoder vocabulary: BOS at index 0, then all tree tokens sorted."""

    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != BOS_TOKEN:
            raise ContractError("vocabulary must start with the BOS token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ContractError("vocabulary tokens must be distinct")

    @classmethod
    def from_tree(cls, tree: LawTree) -> "Vocab":
        return cls((BOS_TOKEN, *tree.vocabulary()))

    @cached_property
    def _index(self) -> dict[Token, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def index_of(self, token: Token) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise ContractError(f"token {token} is not in the vocabulary") from None

    def indices_of(self, tokens: Sequence[Token]) -> np.ndarray:
        return np.fromiter((self.index_of(t) for t in tokens), dtype=np.int64,
                           count=len(tokens))


@dataclass
class ModelParams:
    """All trainable tensors plus the vocabulary they are indexed by."""

    vocab: Vocab
    embed_in: np.ndarray   # (H, d) hashed input-token embeddings
    proj_w: np.ndarray     # (d, d) query projection
    proj_b: np.ndarray     # (d,)
    embed_tok: np.ndarray  # (V, d) decoder token embeddings (incl. BOS)
    rec_w: np.ndarray      # (d, d) state -> state
    rec_e: np.ndarray      # (d, d) token embedding -> state
    rec_b: np.ndarray      # (d,)
    out_w: np.ndarray      # (V, d) state -> logits
    out_b: np.ndarray      # (V,)

    @property
    def d(self) -> int:
        return self.proj_w.shape[0]

    @property
    def hash_buckets(self) -> int:
        return self.embed_in.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_FIELDS}

    def copy(self) -> "ModelParams":
        return ModelParams(self.vocab, **{k: v.copy() for k, v in self.tensors().items()})


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.tensors().items()}


def init_params(vocab: Vocab, d: int = 64, hash_buckets: int = 4096,
                seed: int = 0, scale: float = 0.1) -> ModelParams:
    rng = np.random.default_rng(seed)
    n_vocab = len(vocab)
    return ModelParams(
        vocab=vocab,
        embed_in=rng.normal(0.0, scale, (hash_buckets, d)),
        proj_w=rng.normal(0.0, scale, (d, d)),
        proj_b=np.zeros(d),
        embed_tok=rng.normal(0.0, scale, (n_vocab, d)),
        rec_w=rng.normal(0.0, scale, (d, d)),
        rec_e=rng.normal(0.0, scale, (d, d)),
        rec_b=np.zeros(d),
        out_w=rng.normal(0.0, scale, (n_vocab, d)),
        out_b=np.zeros(n_vocab),
    )


@dataclass(frozen=True)
class TrainConfig:
    """Model and optimization settings; defaults suit the compact numpy model."""

    hidden_dim: int = 64
    hash_buckets: int = 4096
    learning_rate: float = 1e-3
    epochs: int = 100
    warmup_epochs: int = 2
    batch_size: int = 32
    reward_unit: float = 1.0        # reward for a matching step
    hierarchy_decay: float = 0.1    # per-level mismatch decay toward the root
    rank_decay: float = 1.0         # per-beam-rank decay of the revision terms
    teacher_weight: float = 10.0    # weight of the ground-truth NLL term
    revision_weight: float = 1e-3   # weight of the revision loss in the total
    beam_size: int = 30
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.hierarchy_decay <= 1.0:
            raise DataError("hierarchy_decay must be in (0, 1]")
        if not 0.0 < self.rank_decay <= 1.0:
            raise DataError("rank_decay must be in (0, 1]")
        for fname in ("hidden_dim", "hash_buckets", "beam_size", "batch_size"):
            if getattr(self, fname) < 1:
                raise DataError(f"{fname} must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise DataError("epochs and warmup_epochs must be >= 0")


# ---------------------------------------------------------------------------
# Encoding and single-step decoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncodedText:
    """Sparse bag-of-buckets form of an input text. Arrays are read-only shared
    cache entries; do not mutate."""

    buckets: np.ndarray  # unique bucket ids, sorted
    counts: np.ndarray   # occurrence counts per bucket
    n_tokens: int


@lru_cache(maxsize=8192)
def encode_text(text: str, n_buckets: int) -> EncodedText:
    tokens = tokenize(text)
    if not tokens:
        return EncodedText(np.zeros(0, dtype=np.int64), np.zeros(0), 0)
    counts: dict[int, int] = {}
    for tok in tokens:
        bucket = stable_bucket(tok, n_buckets)
        counts[bucket] = counts.get(bucket, 0) + 1
    buckets = np.array(sorted(counts), dtype=np.int64)
    return EncodedText(buckets, np.array([counts[b] for b in buckets], dtype=float),
                       len(tokens))


def _mean_embedding(params: ModelParams, enc: EncodedText) -> np.ndarray:
    if enc.n_tokens == 0:
        return np.zeros(params.d)
    return enc.counts @ params.embed_in[enc.buckets] / enc.n_tokens


def encode_query(params: ModelParams, text: str) -> np.ndarray:
    """Mean hashed-bucket embedding through the tanh query projection."""
    v = _mean_embedding(params, encode_text(text, params.hash_buckets))
    return np.tanh(params.proj_w @ v + params.proj_b)


def decode_step(params: ModelParams, h_prev: np.ndarray,
                prev_token: Token) -> tuple[np.ndarray, np.ndarray]:
    """One recurrent step: next state and logits over the full vocabulary."""
    idx = params.vocab.index_of(prev_token)
    h_next = np.tanh(params.rec_w @ h_prev + params.rec_e @ params.embed_tok[idx]
                     + params.rec_b)
    return h_next, params.out_w @ h_next + params.out_b


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable log-softmax (1-D or 2-D)."""
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _as_tokens(sequence) -> tuple[Token, ...]:
    if isinstance(sequence, SemanticId):
        return sequence.tokens
    return tuple(sequence)


def sequence_logprob(params: ModelParams, query: str, tokens) -> float:
    """Teacher-forced log-probability of a token sequence given the query."""
    h = encode_query(params, query)
    prev = BOS_TOKEN
    total = 0.0
    for token in _as_tokens(tokens):
        h, logits = decode_step(params, h, prev)
        total += float(log_softmax(logits)[params.vocab.index_of(token)])
        prev = token
    return total


# ---------------------------------------------------------------------------
# Batched weighted-log-likelihood objective (shared by all losses)
# ---------------------------------------------------------------------------


def _batch_objective(params: ModelParams, rows: Sequence[tuple[str, tuple[Token, ...]]],
                     weights: np.ndarray, want_grad: bool) -> tuple[float, dict | None]:
    """Evaluate sum_{n,t} weights[n,t] * log p(target[n,t] | query_n, prefix).

    All rows must share one sequence length. Inputs are deduplicated so a query
    appearing in many rows is encoded once; gradients flow through the shared
    encoding.
    """
    if not rows:
        return 0.0, zero_grads(params) if want_grad else None
    length = len(rows[0][1])
    if any(len(tokens) != length for _, tokens in rows):
        raise ContractError("all sequences in a batch must have equal length")
    n_rows = len(rows)
    vocab = params.vocab

    text_index: dict[str, int] = {}
    encs: list[EncodedText] = []
    row_input = np.zeros(n_rows, dtype=np.int64)
    for n, (text, _) in enumerate(rows):
        if text not in text_index:
            text_index[text] = len(encs)
            encs.append(encode_text(text, params.hash_buckets))
        row_input[n] = text_index[text]

    n_inputs = len(encs)
    v_mean = np.zeros((n_inputs, params.d))
    for u, enc in enumerate(encs):
        v_mean[u] = _mean_embedding(params, enc)
    h0_unique = np.tanh(v_mean @ params.proj_w.T + params.proj_b)

    targets = np.zeros((n_rows, length), dtype=np.int64)
    for n, (_, tokens) in enumerate(rows):
        targets[n] = vocab.indices_of(tokens)

    bos = np.full(n_rows, vocab.index_of(BOS_TOKEN), dtype=np.int64)
    prev_indices = [bos] + [targets[:, t] for t in range(length - 1)]

    h_states = [h0_unique[row_input]]
    probs: list[np.ndarray] = []
    value = 0.0
    arange = np.arange(n_rows)
    for t in range(length):
        e_prev = params.embed_tok[prev_indices[t]]
        h_next = np.tanh(h_states[t] @ params.rec_w.T + e_prev @ params.rec_e.T
                         + params.rec_b)
        logits = h_next @ params.out_w.T + params.out_b
        log_p = log_softmax(logits)
        value += float((weights[:, t] * log_p[arange, targets[:, t]]).sum())
        h_states.append(h_next)
        if want_grad:
            probs.append(np.exp(log_p))
    if not want_grad:
        return value, None

    grads = zero_grads(params)
    d_h_carry = np.zeros((n_rows, params.d))
    for t in range(length - 1, -1, -1):
        w_col = weights[:, t]
        d_logits = -w_col[:, None] * probs[t]
        d_logits[arange, targets[:, t]] += w_col
        h_t = h_states[t + 1]
        grads["out_w"] += d_logits.T @ h_t
        grads["out_b"] += d_logits.sum(axis=0)
        d_h = d_logits @ params.out_w + d_h_carry
        d_u = d_h * (1.0 - h_t * h_t)
        grads["rec_w"] += d_u.T @ h_states[t]
        grads["rec_b"] += d_u.sum(axis=0)
        e_prev = params.embed_tok[prev_indices[t]]
        grads["rec_e"] += d_u.T @ e_prev
        np.add.at(grads["embed_tok"], prev_indices[t], d_u @ params.rec_e)
        d_h_carry = d_u @ params.rec_w

    d_h0_unique = np.zeros((n_inputs, params.d))
    np.add.at(d_h0_unique, row_input, d_h_carry)
    d_z0 = d_h0_unique * (1.0 - h0_unique * h0_unique)
    grads["proj_w"] += d_z0.T @ v_mean
    grads["proj_b"] += d_z0.sum(axis=0)
    d_v = d_z0 @ params.proj_w
    nonempty = [(u, enc) for u, enc in enumerate(encs) if enc.n_tokens]
    if nonempty:
        all_buckets = np.concatenate([enc.buckets for _, enc in nonempty])
        all_scale = np.concatenate([enc.counts / enc.n_tokens for _, enc in nonempty])
        all_rows = np.concatenate([np.full(len(enc.buckets), u, dtype=np.int64)
                                   for u, enc in nonempty])
        np.add.at(grads["embed_in"], all_buckets, all_scale[:, None] * d_v[all_rows])
    return value, grads


def _pairs_to_rows(pairs) -> list[tuple[str, tuple[Token, ...]]]:
    return [(text, _as_tokens(target)) for text, target in pairs]


def _nll(params: ModelParams, pairs, want_grad: bool) -> tuple[float, dict | None]:
    rows = _pairs_to_rows(pairs)
    if not rows:
        return 0.0, zero_grads(params) if want_grad else None
    weights = np.full((len(rows), len(rows[0][1])), -1.0 / len(rows))
    return _batch_objective(params, rows, weights, want_grad)


def indexing_loss(params: ModelParams, pairs) -> float:
    """Negative mean teacher-forced sequence log-prob over (document, id) pairs."""
    return _nll(params, pairs, want_grad=False)[0]


def indexing_loss_grad(params: ModelParams, pairs) -> tuple[float, dict]:
    value, grads = _nll(params, pairs, want_grad=True)
    return value, grads


def retrieval_loss(params: ModelParams, pairs) -> float:
    """Negative mean teacher-forced sequence log-prob over (query, relevant id) pairs."""
    return _nll(params, pairs, want_grad=False)[0]


def retrieval_loss_grad(params: ModelParams, pairs) -> tuple[float, dict]:
    value, grads = _nll(params, pairs, want_grad=True)
    return value, grads


# ---------------------------------------------------------------------------
# Step reward and revision loss
# ---------------------------------------------------------------------------


def step_reward(pred: Token, label: Token, step: int, total_steps: int,
                reward_unit: float = 1.0, hierarchy_decay: float = 0.1) -> float:
    """Reward for one decode step: +unit on a match, a hierarchy-decayed
    negative absolute value difference otherwise."""
    if pred.level != label.level:
        raise ContractError(
            f"step_reward compares tokens at one level, got {pred.level} vs {label.level}")
    if not 1 <= step <= total_steps:
        raise ContractError(f"step {step} outside 1..{total_steps}")
    if pred.value == label.value:
        return reward_unit
    return -(hierarchy_decay ** (total_steps - step)) * reward_unit * abs(pred.value - label.value)


def _sequence_rewards(pred_tokens: tuple[Token, ...], label: SemanticId,
                      reward_unit: float, hierarchy_decay: float) -> np.ndarray:
    length = len(pred_tokens)
    return np.array([
        step_reward(pred_tokens[t], label.tokens[t], t + 1, length,
                    reward_unit, hierarchy_decay)
        for t in range(length)
    ])


def nearest_label(pred_tokens, labels: Sequence[SemanticId],
                  reward_unit: float = 1.0, hierarchy_decay: float = 0.1) -> SemanticId:
    """The ground-truth ID with maximal total step reward against a prediction.

    Ties break toward the lexicographically smallest label, so the choice is
    deterministic.
    """
    pred = _as_tokens(pred_tokens)
    if not labels:
        raise ContractError("nearest_label requires at least one label")
    best = None
    best_key = None
    for label in sorted(labels, key=lambda lab: lab.values):
        total = float(_sequence_rewards(pred, label, reward_unit, hierarchy_decay).sum())
        if best_key is None or total > best_key:
            best, best_key = label, total
    return best


def _normalize_labels(labels) -> tuple[SemanticId, ...]:
    if isinstance(labels, SemanticId):
        return (labels,)
    return tuple(labels)


def _reward_matrix(beam_values: np.ndarray, label_values: np.ndarray,
                   reward_unit: float, hierarchy_decay: float) -> np.ndarray:
    """Step rewards for every (beam, label) pair: (B, N, L) array."""
    length = beam_values.shape[1]
    decay_pows = hierarchy_decay ** np.arange(length - 1, -1, -1, dtype=float)
    diff = np.abs(beam_values[:, None, :] - label_values[None, :, :]).astype(float)
    penalty = -decay_pows * reward_unit * diff
    return np.where(beam_values[:, None, :] == label_values[None, :, :],
                    reward_unit, penalty)


def _revision_rows(query: str, beams, labels, config: TrainConfig):
    """Expand one query's beams into weighted log-prob rows.

    Beam rank b contributes weight -rank_decay^b * R_t on its own tokens and
    -rank_decay^b * teacher_weight on its nearest label's tokens.
    """
    labels = sorted(_normalize_labels(labels), key=lambda lab: lab.values)
    beam_tokens = [_as_tokens(b[0] if isinstance(b, tuple) else b.tokens) for b in beams]
    beam_values = np.array([[tok.value for tok in toks] for toks in beam_tokens])
    label_values = np.array([lab.values for lab in labels])
    rewards = _reward_matrix(beam_values, label_values,
                             config.reward_unit, config.hierarchy_decay)
    # argmax takes the first maximum, i.e. the lexicographically smallest label
    best = rewards.sum(axis=2).argmax(axis=1)
    decays = config.rank_decay ** np.arange(len(beams), dtype=float)

    rows: list[tuple[str, tuple[Token, ...]]] = []
    row_weights: list[np.ndarray] = []
    label_weight: dict[int, float] = {}
    for rank, tokens in enumerate(beam_tokens):
        rows.append((query, tokens))
        row_weights.append(-decays[rank] * rewards[rank, best[rank]])
        label_weight[int(best[rank])] = label_weight.get(int(best[rank]), 0.0) + decays[rank]
    if config.teacher_weight != 0.0:
        length = beam_values.shape[1]
        for label_idx in sorted(label_weight):
            rows.append((query, labels[label_idx].tokens))
            row_weights.append(np.full(length,
                                       -config.teacher_weight * label_weight[label_idx]))
    return rows, row_weights


def _revision_objective(params: ModelParams, query: str, beams, labels,
                        config: TrainConfig, want_grad: bool) -> tuple[float, dict | None]:
    if not beams:
        logger.warning("revision loss called with no beams; returning 0")
        return 0.0, zero_grads(params) if want_grad else None
    rows, row_weights = _revision_rows(query, beams, labels, config)
    return _batch_objective(params, rows, np.stack(row_weights), want_grad)


def revision_loss(params: ModelParams, query: str, beams, labels,
                  config: TrainConfig) -> float:
    """Policy-gradient revision objective for one query's ranked beams.

    Minimizing raises the probability of reward-matching beam tokens, lowers
    mismatching ones proportionally to their reward magnitude, and always pulls
    toward each beam's nearest ground-truth ID (the teacher term).
    """
    return _revision_objective(params, query, beams, labels, config, want_grad=False)[0]


def revision_loss_grad(params: ModelParams, query: str, beams, labels,
                       config: TrainConfig) -> tuple[float, dict]:
    value, grads = _revision_objective(params, query, beams, labels, config, want_grad=True)
    return value, grads


def revision_batch_grad(params: ModelParams, items, config: TrainConfig) -> tuple[float, dict]:
    """Mean per-query revision loss and its gradient over (query, beams, labels)
    items, evaluated in one forward/backward pass."""
    rows: list[tuple[str, tuple[Token, ...]]] = []
    weights: list[np.ndarray] = []
    n_items = len(items)
    for query, beams, labels in items:
        if not beams:
            logger.warning("revision loss called with no beams; skipping query")
            continue
        q_rows, q_weights = _revision_rows(query, beams, labels, config)
        rows.extend(q_rows)
        weights.extend(w / n_items for w in q_weights)
    if not rows:
        return 0.0, zero_grads(params)
    return _batch_objective(params, rows, np.stack(weights), want_grad=True)


# ---------------------------------------------------------------------------
# Total loss over a batch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainBatch:
    indexing_pairs: tuple = ()
    retrieval_pairs: tuple = ()
    revision: tuple = ()  # (query_text, beams, labels) triples
    epoch: int = 0


def loss_components(params: ModelParams, batch: TrainBatch,
                    config: TrainConfig) -> tuple[float, float, float, float]:
    """(indexing, retrieval, revision, total); revision is 0 during warmup."""
    l_index = indexing_loss(params, batch.indexing_pairs)
    l_retrieve = retrieval_loss(params, batch.retrieval_pairs)
    l_revise = 0.0
    if batch.epoch >= config.warmup_epochs and batch.revision:
        values = [revision_loss(params, query, beams, labels, config)
                  for query, beams, labels in batch.revision]
        l_revise = float(np.mean(values))
        total = l_index + l_retrieve + config.revision_weight * l_revise
    else:
        total = l_index + l_retrieve
    return l_index, l_retrieve, l_revise, total


def total_loss(params: ModelParams, batch: TrainBatch, config: TrainConfig) -> float:
    return loss_components(params, batch, config)[3]


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def gradient_check(params: ModelParams, loss_fn, eps: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn(params) -> (value, grads)``. Intended for tiny models; every
    parameter entry is perturbed twice.
    """
    _, grads = loss_fn(params)
    max_rel = 0.0
    for name in TENSOR_FIELDS:
        arr = getattr(params, name)
        analytic = grads[name]
        for index in np.ndindex(arr.shape):
            original = arr[index]
            arr[index] = original + eps
            f_plus = loss_fn(params)[0]
            arr[index] = original - eps
            f_minus = loss_fn(params)[0]
            arr[index] = original
            fd = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[index]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
            if rel > max_rel:
                max_rel = rel
    return max_rel


# ---------------------------------------------------------------------------
# Model serialization
# ---------------------------------------------------------------------------


def save_model(params: ModelParams, path, config_hash: str = "",
               depth: int | None = None) -> None:
    """Binary format: magic, version, d, H, |V|, L, 16-byte config hash,
    then float64 little-endian tensors in declared order."""
    if depth is None:
        depth = max((tok.level for tok in params.vocab.tokens), default=0)
    hash_bytes = config_hash.encode("ascii")[:16].ljust(16, b"\0")
    header = MODEL_MAGIC + struct.pack(
        "<5I", MODEL_VERSION, params.d, params.hash_buckets, len(params.vocab), depth)
    blobs = [header, hash_bytes]
    for name in TENSOR_FIELDS:
        blobs.append(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(blobs))


def load_model(path, tree: LawTree) -> tuple[ModelParams, str | None]:
    """Read a model and bind its vocabulary from the tree (sorted tokens + BOS)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if len(blob) < 44 or blob[:8] != MODEL_MAGIC:
        raise DataError(f"{path}: not a model file (bad magic)")
    version, d, hash_buckets, n_vocab, depth = struct.unpack("<5I", blob[8:28])
    if version != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model format version {version}")
    config_hash = blob[28:44].rstrip(b"\0").decode("ascii", errors="replace") or None
    vocab = Vocab.from_tree(tree)
    if len(vocab) != n_vocab:
        raise DataError(
            f"{path}: model vocabulary size {n_vocab} does not match tree ({len(vocab)})")
    if tree.n_leaves and tree.depth != depth:
        raise DataError(f"{path}: model depth {depth} does not match tree ({tree.depth})")
    shapes = {
        "embed_in": (hash_buckets, d), "proj_w": (d, d), "proj_b": (d,),
        "embed_tok": (n_vocab, d), "rec_w": (d, d), "rec_e": (d, d), "rec_b": (d,),
        "out_w": (n_vocab, d), "out_b": (n_vocab,),
    }
    offset = 44
    tensors = {}
    for name in TENSOR_FIELDS:
        shape = shapes[name]
        size = int(np.prod(shape)) * 8
        if offset + size > len(blob):
            raise DataError(f"{path}: truncated tensor data at {name!r}")
        tensors[name] = np.frombuffer(blob, dtype="<f8", count=int(np.prod(shape)),
                                      offset=offset).reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes after tensors")
    return ModelParams(vocab, **tensors), config_hash
