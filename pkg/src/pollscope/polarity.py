"""Two-stage tweet polarity prediction and per-user majority voting.

Stage 1 is a relevance predictor; stage 2 runs independent positive and
negative one-vs-rest predictors whose labels combine into a four-way
outcome (positive, negative, neutral, discarded). All predictors are
linear max-margin classifiers trained by stochastic subgradient descent
on the L2-regularized hinge loss, with seeded per-epoch shuffling.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .corpus import Tweet, preprocess
from .embedding import EmbeddingModel, embed_tweet
from .errors import InputOutputError, ValidationError

logger = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"
NEUTRAL = "neutral"
DISCARDED = "discarded"
IRRELEVANT = "irrelevant"
UNCLASSIFIABLE = "unclassifiable"
UNASSIGNED = "unassigned"

TWEET_POLARITIES = (POSITIVE, NEGATIVE, NEUTRAL, DISCARDED, IRRELEVANT, UNCLASSIFIABLE)

LABEL_RELEVANT = "relevant"
LABEL_NON_RELEVANT = "non_relevant"
TWEET_LABELS = (LABEL_RELEVANT, LABEL_NON_RELEVANT, POSITIVE, NEGATIVE, NEUTRAL)


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    regularization: float
    trained_on: int

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[0])


@dataclass
class PredictorSuite:
    relevance: LinearModel
    positive: LinearModel
    negative: LinearModel

    def __post_init__(self):
        dims = {self.relevance.dimension, self.positive.dimension, self.negative.dimension}
        if len(dims) != 1:
            raise ValidationError(f"predictor dimensions disagree: {sorted(dims)}")


@dataclass(frozen=True)
class UserPolarity:
    value: str  # positive | negative | neutral | unassigned
    n_pos: int
    n_neg: int
    n_neu: int


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f_score: float
    accuracy: float


@dataclass
class CrossValidation:
    folds: list[Metrics]
    mean: Metrics


@njit(cache=True)
def _hinge_sgd(x, y, order, weights, lam, epochs):
    # Pegasos-style subgradient steps, eta_t = 1 / (lam * t). The bias
    # rides along as a constant-1 feature (last column of x), so the
    # shrinkage factor applies to it uniformly and early oversized steps
    # cancel instead of parking the intercept far from the data.
    n, dim = x.shape
    t = 0
    for epoch in range(epochs):
        for i in range(n):
            idx = order[epoch, i]
            t += 1
            eta = 1.0 / (lam * t)
            margin = 0.0
            for d in range(dim):
                margin += weights[d] * x[idx, d]
            margin *= y[idx]
            scale = 1.0 - eta * lam
            for d in range(dim):
                weights[d] *= scale
            if margin < 1.0:
                step = eta * y[idx]
                for d in range(dim):
                    weights[d] += step * x[idx, d]


def train_linear(
    samples: Sequence[tuple[np.ndarray, bool]],
    regularization: float = 1e-4,
    epochs: int = 50,
    seed: int = 0,
) -> LinearModel:
    """Train a binary max-margin classifier on (vector, label) samples."""
    if regularization <= 0:
        raise ValidationError("regularization must be positive")
    if len(samples) < 2:
        raise ValidationError("need at least two training samples")
    labels = {bool(label) for _, label in samples}
    if len(labels) != 2:
        raise ValidationError("training data contains a single class")
    dims = {np.shape(v)[0] for v, _ in samples}
    if len(dims) != 1:
        raise ValidationError(f"training vectors have mixed dimensions: {sorted(dims)}")
    x = np.empty((len(samples), dims.pop() + 1), dtype=np.float64)
    for row, (v, _) in zip(x, samples):
        row[:-1] = v
        row[-1] = 1.0  # bias feature
    y = np.asarray([1.0 if label else -1.0 for _, label in samples])
    rng = np.random.default_rng(seed)
    order = np.empty((epochs, len(samples)), dtype=np.int64)
    for epoch in range(epochs):
        order[epoch] = rng.permutation(len(samples))
    weights = np.zeros(x.shape[1], dtype=np.float64)
    _hinge_sgd(x, y, order, weights, regularization, epochs)
    return LinearModel(
        weights=weights[:-1].copy(),
        bias=float(weights[-1]),
        regularization=regularization,
        trained_on=len(samples),
    )


def predict(model: LinearModel, v: np.ndarray) -> tuple[bool, float]:
    """Label and signed margin for one vector; margin 0 is the negative class."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != model.dimension:
        raise ValidationError(
            f"vector dimension {v.shape[0]} does not match model dimension {model.dimension}"
        )
    margin = float(model.weights @ v + model.bias)
    return margin > 0.0, margin


def combine(relevant: bool, pos: bool, neg: bool) -> str:
    """Fold the three binary labels into one tweet polarity.

    Irrelevant tweets stay irrelevant; of the relevant ones, (pos, non-neg)
    is positive, (non-pos, neg) is negative, (non-pos, non-neg) is neutral,
    and a contradictory (pos, neg) is discarded.
    """
    if not relevant:
        return IRRELEVANT
    if pos and neg:
        return DISCARDED
    if pos:
        return POSITIVE
    if neg:
        return NEGATIVE
    return NEUTRAL


def classify_tweet(
    suite: PredictorSuite,
    embedding: EmbeddingModel,
    tweet: Tweet | str,
    stopwords: frozenset[str] = frozenset(),
) -> str:
    """Preprocess, embed and run the two-stage pipeline for one tweet."""
    text = tweet.text if isinstance(tweet, Tweet) else tweet
    vec = embed_tweet(embedding, preprocess(text, stopwords))
    if vec.covered_tokens == 0:
        return UNCLASSIFIABLE
    relevant, _ = predict(suite.relevance, vec.values)
    if not relevant:
        return IRRELEVANT
    pos, _ = predict(suite.positive, vec.values)
    neg, _ = predict(suite.negative, vec.values)
    return combine(True, pos, neg)


def user_polarity_from_counts(n_pos: int, n_neg: int, n_neu: int) -> UserPolarity:
    """Majority decision from vote counts; ties go to neutral."""
    if n_pos == n_neg == n_neu == 0:
        return UserPolarity(UNASSIGNED, 0, 0, 0)
    top = max(n_pos, n_neg, n_neu)
    winners = [
        value
        for value, count in ((POSITIVE, n_pos), (NEGATIVE, n_neg), (NEUTRAL, n_neu))
        if count == top
    ]
    value = winners[0] if len(winners) == 1 else NEUTRAL
    return UserPolarity(value, n_pos, n_neg, n_neu)


def user_polarity(tweet_polarities: Iterable[str]) -> UserPolarity:
    """Majority vote over classified tweets.

    Only positive/negative/neutral tweets vote; irrelevant, discarded and
    unclassifiable ones are excluded. Ties go to neutral; a user with no
    voting tweets stays unassigned.
    """
    n_pos = n_neg = n_neu = 0
    for value in tweet_polarities:
        if value == POSITIVE:
            n_pos += 1
        elif value == NEGATIVE:
            n_neg += 1
        elif value == NEUTRAL:
            n_neu += 1
    return user_polarity_from_counts(n_pos, n_neg, n_neu)


def metrics_from_predictions(predictions: Sequence[bool], labels: Sequence[bool]) -> Metrics:
    """Precision/recall/F/accuracy treating True as the positive class."""
    if len(predictions) != len(labels) or not labels:
        raise ValidationError("predictions and labels must be equal-length and non-empty")
    tp = fp = fn = tn = 0
    for p, l in zip(predictions, labels):
        if p and l:
            tp += 1
        elif p and not l:
            fp += 1
        elif not p and l:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f_score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / len(labels)
    return Metrics(precision, recall, f_score, accuracy)


def evaluate(model: LinearModel, test: Sequence[tuple[np.ndarray, bool]]) -> Metrics:
    """Confusion-matrix metrics of a model over a labeled test set."""
    if not test:
        raise ValidationError("cannot evaluate on an empty test set")
    predictions = [predict(model, v)[0] for v, _ in test]
    return metrics_from_predictions(predictions, [bool(l) for _, l in test])


def split_train_test(
    samples: Sequence, ratio: float, seed: int = 0
) -> tuple[list, list]:
    """Seeded shuffle, then split with train size round(ratio * n)."""
    if not 0.0 < ratio < 1.0:
        raise ValidationError("split ratio must be strictly between 0 and 1")
    if len(samples) < 2:
        raise ValidationError("need at least two samples to split")
    indices = np.random.default_rng(seed).permutation(len(samples))
    n_train = math.floor(ratio * len(samples) + 0.5)
    train = [samples[i] for i in indices[:n_train]]
    test = [samples[i] for i in indices[n_train:]]
    return train, test


def cross_validate(
    samples: Sequence[tuple[np.ndarray, bool]],
    k: int,
    regularization: float = 1e-4,
    epochs: int = 50,
    seed: int = 0,
) -> CrossValidation:
    """Seeded-shuffle k-fold CV; fold sizes differ by at most one."""
    if k < 2:
        raise ValidationError("k must be at least 2")
    if k > len(samples):
        raise ValidationError(f"k={k} exceeds the {len(samples)} available samples")
    indices = list(np.random.default_rng(seed).permutation(len(samples)))
    base, extra = divmod(len(samples), k)
    folds: list[Metrics] = []
    start = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        test_idx = indices[start : start + size]
        train_idx = indices[:start] + indices[start + size :]
        start += size
        model = train_linear(
            [samples[i] for i in train_idx], regularization=regularization, epochs=epochs, seed=seed
        )
        folds.append(evaluate(model, [samples[i] for i in test_idx]))
    mean = Metrics(
        precision=sum(m.precision for m in folds) / k,
        recall=sum(m.recall for m in folds) / k,
        f_score=sum(m.f_score for m in folds) / k,
        accuracy=sum(m.accuracy for m in folds) / k,
    )
    return CrossValidation(folds=folds, mean=mean)


# --- labeled data -----------------------------------------------------------


def load_labeled_tweets(path: str | Path) -> tuple[list[tuple[str, str]], int]:
    """Load (text, label) records, skipping and counting malformed lines."""
    rows: list[tuple[str, str]] = []
    skipped = 0
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputOutputError(f"cannot read labeled tweets {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            try:
                obj = json.loads(line)
                text, label = str(obj["text"]), str(obj["label"])
                if label not in TWEET_LABELS:
                    raise ValueError(f"unknown label {label!r}")
                rows.append((text, label))
            except (ValueError, KeyError, TypeError) as exc:
                skipped += 1
                logger.warning("%s:%d: skipping labeled tweet (%s)", path, lineno, exc)
    return rows, skipped


def keyword_label(
    text: str, positive_keywords: Iterable[str], negative_keywords: Iterable[str]
) -> str | None:
    """Label a tweet by polarized keyword lists, or None when ambiguous.

    A case-folded substring hit on exactly one side decides the label;
    hits on both sides or neither leave the tweet unlabeled.
    """
    folded = text.casefold()
    pos_hit = any(k.casefold() in folded for k in positive_keywords)
    neg_hit = any(k.casefold() in folded for k in negative_keywords)
    if pos_hit and not neg_hit:
        return POSITIVE
    if neg_hit and not pos_hit:
        return NEGATIVE
    return None


@dataclass
class TrainingSets:
    """Per-predictor (vector, label) datasets plus composition counts."""

    relevance: list[tuple[np.ndarray, bool]]
    positive: list[tuple[np.ndarray, bool]]
    negative: list[tuple[np.ndarray, bool]]
    composition: dict[str, int]


def compose_training_sets(
    labeled: Sequence[tuple[np.ndarray, str]],
    relevance_per_class: int = 1000,
    polarity_positive: int = 500,
    seed: int = 0,
) -> TrainingSets:
    """Assemble the three predictor datasets from embedded labeled tweets.

    Relevance: `relevance_per_class` relevant (drawn across positive,
    negative and neutral) vs the same number of non-relevant. Positive
    predictor: `polarity_positive` positive vs an equal count of
    non-positive built as a balanced half negative / half neutral mix; the
    negative predictor mirrors it. Targets shrink to what the pools can
    supply while staying balanced.
    """
    pools: dict[str, list[np.ndarray]] = {
        POSITIVE: [],
        NEGATIVE: [],
        NEUTRAL: [],
        LABEL_NON_RELEVANT: [],
        LABEL_RELEVANT: [],
    }
    for vector, label in labeled:
        pools[label].append(vector)
    rng = np.random.default_rng(seed)

    def take(pool: list[np.ndarray], n: int) -> list[np.ndarray]:
        idx = rng.permutation(len(pool))[:n]
        return [pool[i] for i in idx]

    relevant_pool = pools[POSITIVE] + pools[NEGATIVE] + pools[NEUTRAL] + pools[LABEL_RELEVANT]
    n_rel = min(relevance_per_class, len(relevant_pool), len(pools[LABEL_NON_RELEVANT]))
    if n_rel < 2:
        raise ValidationError("not enough labeled tweets to build the relevance dataset")
    relevance = [(v, True) for v in take(relevant_pool, n_rel)]
    relevance += [(v, False) for v in take(pools[LABEL_NON_RELEVANT], n_rel)]

    def one_vs_rest(own: str, others: tuple[str, str], target: int) -> list[tuple[np.ndarray, bool]]:
        half = min(target // 2, len(pools[others[0]]), len(pools[others[1]]))
        n_own = min(target, len(pools[own]), 2 * half)
        half = n_own // 2
        if n_own < 2 or half < 1:
            raise ValidationError(f"not enough labeled tweets for the {own} predictor")
        data = [(v, True) for v in take(pools[own], n_own)]
        data += [(v, False) for v in take(pools[others[0]], half)]
        data += [(v, False) for v in take(pools[others[1]], n_own - half)]
        return data

    positive = one_vs_rest(POSITIVE, (NEGATIVE, NEUTRAL), polarity_positive)
    negative = one_vs_rest(NEGATIVE, (POSITIVE, NEUTRAL), polarity_positive)
    composition = {
        "relevance_per_class": n_rel,
        "positive_samples": len(positive),
        "negative_samples": len(negative),
    }
    return TrainingSets(relevance, positive, negative, composition)


# --- model files ------------------------------------------------------------


def save_linear(model: LinearModel, path: str | Path) -> None:
    """Write '<dimension>', a weight line and a bias line, decimal text."""
    try:
        handle = open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise InputOutputError(f"cannot write classifier model {path}: {exc}") from exc
    with handle:
        handle.write(f"{model.dimension}\n")
        handle.write(" ".join(f"{x:.17g}" for x in model.weights) + "\n")
        handle.write(f"{model.bias:.17g}\n")


def load_linear(model_path: str | Path, regularization: float = 1e-4) -> LinearModel:
    """Read a classifier model file.

    The file stores geometry only; regularization is metadata restored
    from the caller and trained_on is unknown (reported as 2, the minimum
    a trained model can have).
    """
    try:
        lines = Path(model_path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputOutputError(f"cannot read classifier model {model_path}: {exc}") from exc
    try:
        dim = int(lines[0])
        weights = np.array(lines[1].split(), dtype=np.float64)
        bias = float(lines[2])
    except (IndexError, ValueError) as exc:
        raise InputOutputError(f"{model_path}: bad classifier model file ({exc})") from exc
    if weights.shape[0] != dim:
        raise InputOutputError(f"{model_path}: weight count does not match header dimension")
    return LinearModel(weights=weights, bias=bias, regularization=regularization, trained_on=2)
