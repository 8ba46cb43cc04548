"""Skip-gram word embeddings with negative sampling, trained from scratch.

Training walks every (center, context) pair inside the window, in corpus
order, updating input/output matrices by stochastic gradient descent on
the negative-sampling objective. Negatives are drawn from the unigram
distribution raised to 0.75. The learning rate decays linearly over the
total number of pair updates down to 1e-4 of its initial value. The inner
loop is JIT-compiled; it runs single-threaded with its own 64-bit PRNG, so
one seed always reproduces bit-identical vectors.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from numba import njit

from .errors import InputOutputError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingParams:
    dimension: int = 100
    window: int = 5
    negative_samples: int = 5
    epochs: int = 5
    initial_learning_rate: float = 0.025
    min_count: int = 5
    seed: int = 1

    def __post_init__(self):
        for name in ("dimension", "window", "negative_samples", "epochs", "min_count"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"embedding {name} must be positive")
        if self.initial_learning_rate <= 0:
            raise ValidationError("embedding initial_learning_rate must be positive")
        if self.dimension > 1024:
            raise ValidationError("embedding dimension must be at most 1024")


@dataclass
class EmbeddingModel:
    vocabulary: dict[str, int]
    vectors: np.ndarray  # (|V|, dimension) float32
    params: EmbeddingParams | None = None
    epoch_losses: list[float] | None = None

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def vector(self, token: str) -> np.ndarray | None:
        idx = self.vocabulary.get(token)
        return self.vectors[idx] if idx is not None else None


@dataclass(frozen=True)
class TweetVector:
    values: np.ndarray
    covered_tokens: int


@njit(cache=True)
def _sgns_train(flat, offsets, w_in, w_out, cum, window, negatives, epochs, lr0, lr_min, seed, losses):
    # Sequential SGNS over sentence-encoded corpus. splitmix64 supplies all
    # randomness so results do not depend on any library RNG internals.
    state = np.uint64(seed)
    n_sent = offsets.shape[0] - 1
    total_pairs = 0
    for s in range(n_sent):
        length = offsets[s + 1] - offsets[s]
        for i in range(length):
            left = i - window
            if left < 0:
                left = 0
            right = i + window
            if right > length - 1:
                right = length - 1
            total_pairs += right - left
    if total_pairs == 0:
        return
    dim = w_in.shape[1]
    vocab = cum.shape[0]
    processed = 0
    grand_total = total_pairs * epochs
    for epoch in range(epochs):
        loss_acc = 0.0
        for s in range(n_sent):
            start = offsets[s]
            length = offsets[s + 1] - start
            for i in range(length):
                center = flat[start + i]
                left = i - window
                if left < 0:
                    left = 0
                right = i + window
                if right > length - 1:
                    right = length - 1
                for j in range(left, right + 1):
                    if j == i:
                        continue
                    context = flat[start + j]
                    lr = lr0 * (1.0 - processed / grand_total)
                    if lr < lr_min:
                        lr = lr_min
                    processed += 1
                    # positive sample
                    v = w_in[center]
                    score = 0.0
                    for d in range(dim):
                        score += v[d] * w_out[context, d]
                    if score > 30.0:
                        score = 30.0
                    elif score < -30.0:
                        score = -30.0
                    sig = 1.0 / (1.0 + math.exp(-score))
                    loss_acc += -math.log(sig + 1e-12)
                    g = (sig - 1.0) * lr
                    for d in range(dim):
                        tmp = v[d]
                        w_in[center, d] -= g * w_out[context, d]
                        w_out[context, d] -= g * tmp
                    # negative samples
                    for k in range(negatives):
                        state += np.uint64(0x9E3779B97F4A7C15)
                        z = state
                        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
                        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
                        z = z ^ (z >> np.uint64(31))
                        u = z / 18446744073709551616.0
                        lo = 0
                        hi = vocab - 1
                        while lo < hi:
                            mid = (lo + hi) // 2
                            if cum[mid] < u:
                                lo = mid + 1
                            else:
                                hi = mid
                        neg = lo
                        if neg == context:
                            continue
                        score = 0.0
                        for d in range(dim):
                            score += v[d] * w_out[neg, d]
                        if score > 30.0:
                            score = 30.0
                        elif score < -30.0:
                            score = -30.0
                        sig = 1.0 / (1.0 + math.exp(-score))
                        loss_acc += -math.log(1.0 - sig + 1e-12)
                        g = sig * lr
                        for d in range(dim):
                            tmp = v[d]
                            w_in[center, d] -= g * w_out[neg, d]
                            w_out[neg, d] -= g * tmp
        losses[epoch] = loss_acc / total_pairs


def build_vocabulary(counts: Counter[str], min_count: int) -> dict[str, int]:
    """Count-thresholded vocabulary, indexed by descending frequency."""
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return {t: i for i, t in enumerate(kept)}


def train_embedding(corpus: Iterable[list[str]], params: EmbeddingParams) -> EmbeddingModel:
    """Train skip-gram vectors over tokenized sentences.

    The corpus is materialized once (desk-scale contract) so the counting
    pass and the epochs see identical data. Out-of-vocabulary tokens are
    dropped before windows are formed.
    """
    counts: Counter[str] = Counter()
    sentences: list[list[str]] = []
    for tokens in corpus:
        sentences.append(tokens)
        counts.update(tokens)
    vocabulary = build_vocabulary(counts, params.min_count)
    if not vocabulary:
        raise ValidationError(
            f"no token reaches min_count={params.min_count}; cannot build a vocabulary"
        )
    encoded: list[np.ndarray] = []
    for tokens in sentences:
        ids = [vocabulary[t] for t in tokens if t in vocabulary]
        if len(ids) >= 2:
            encoded.append(np.asarray(ids, dtype=np.int32))
    flat = np.concatenate(encoded) if encoded else np.zeros(0, dtype=np.int32)
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([len(e) for e in encoded], out=offsets[1:])

    freq = np.zeros(len(vocabulary), dtype=np.float64)
    for token, idx in vocabulary.items():
        freq[idx] = counts[token]
    noise = freq**0.75
    cum = np.cumsum(noise)
    cum /= cum[-1]

    rng = np.random.default_rng(params.seed)
    w_in = ((rng.random((len(vocabulary), params.dimension)) - 0.5) / params.dimension).astype(
        np.float32
    )
    w_out = np.zeros((len(vocabulary), params.dimension), dtype=np.float32)
    losses = np.zeros(params.epochs, dtype=np.float64)
    _sgns_train(
        flat,
        offsets,
        w_in,
        w_out,
        cum,
        params.window,
        params.negative_samples,
        params.epochs,
        params.initial_learning_rate,
        params.initial_learning_rate * 1e-4,
        params.seed,
        losses,
    )
    logger.info(
        "trained embedding: |V|=%d dim=%d sentences=%d", len(vocabulary), params.dimension, len(encoded)
    )
    return EmbeddingModel(
        vocabulary=vocabulary,
        vectors=w_in,
        params=params,
        epoch_losses=[float(x) for x in losses],
    )


def embed_tweet(model: EmbeddingModel, tokens: list[str]) -> TweetVector:
    """Mean of the vectors of in-vocabulary tokens.

    Out-of-vocabulary tokens are skipped; with no coverage the result is
    the zero vector and covered_tokens is 0.
    """
    indices = [model.vocabulary[t] for t in tokens if t in model.vocabulary]
    if not indices:
        return TweetVector(np.zeros(model.dimension, dtype=np.float32), 0)
    return TweetVector(model.vectors[indices].mean(axis=0), len(indices))


def save_embedding(model: EmbeddingModel, path: str | Path) -> None:
    """Write the text model file: '<|V|> <dim>' header, then token + floats.

    Floats are written with 9 significant digits, which round-trips the
    float32 vectors exactly.
    """
    ordered = sorted(model.vocabulary.items(), key=lambda kv: kv[1])
    try:
        handle = open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise InputOutputError(f"cannot write embedding model {path}: {exc}") from exc
    with handle:
        handle.write(f"{len(ordered)} {model.dimension}\n")
        for token, idx in ordered:
            row = " ".join(f"{x:.9g}" for x in model.vectors[idx])
            handle.write(f"{token} {row}\n")


def load_embedding(path: str | Path) -> EmbeddingModel:
    """Read a model file written by save_embedding.

    Only the geometry is stored in the file, so the returned model carries
    no training params or losses.
    """
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputOutputError(f"cannot read embedding model {path}: {exc}") from exc
    with handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise InputOutputError(f"{path}: bad embedding header")
        size, dim = int(header[0]), int(header[1])
        vocabulary: dict[str, int] = {}
        vectors = np.zeros((size, dim), dtype=np.float32)
        for i in range(size):
            parts = handle.readline().split()
            if len(parts) != dim + 1:
                raise InputOutputError(f"{path}: bad vector line {i + 2}")
            vocabulary[parts[0]] = i
            vectors[i] = np.array(parts[1:], dtype=np.float32)
    return EmbeddingModel(vocabulary=vocabulary, vectors=vectors)
