import math
import random

import numpy as np
import pytest

from pollscope.embedding import (
    EmbeddingModel,
    EmbeddingParams,
    build_vocabulary,
    embed_tweet,
    load_embedding,
    save_embedding,
    train_embedding,
)
from pollscope.errors import ValidationError

from planted import planted_corpus

PARAMS = EmbeddingParams(
    dimension=50, window=3, negative_samples=5, epochs=5,
    initial_learning_rate=0.025, min_count=5, seed=1234,
)


def cosine(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


@pytest.fixture(scope="module")
def planted_model():
    sentences, pairs, controls = planted_corpus(seed=77)
    model = train_embedding(sentences, PARAMS)
    return model, pairs, controls


class TestTrainEmbedding:
    def test_planted_pairs_separate_from_controls(self, planted_model):
        model, pairs, controls = planted_model
        a, b = pairs[0]
        sim_pair = cosine(model.vector(a), model.vector(b))
        sim_control = cosine(model.vector(a), model.vector(controls[0]))
        assert sim_pair > sim_control + 0.2

    def test_min_count_above_all_counts_rejected(self):
        corpus = [["solo", "duo"]] * 3
        with pytest.raises(ValidationError):
            train_embedding(corpus, EmbeddingParams(dimension=8, min_count=10))

    def test_bitwise_determinism(self):
        sentences, _, _ = planted_corpus(n_sentences=400, seed=5)
        params = EmbeddingParams(dimension=16, window=2, epochs=2, min_count=3, seed=99)
        first = train_embedding(sentences, params)
        second = train_embedding(sentences, params)
        assert first.vocabulary == second.vocabulary
        assert np.array_equal(first.vectors, second.vectors)
        assert first.epoch_losses == second.epoch_losses

    def test_loss_decreases_on_planted_corpus(self, planted_model):
        model, _, _ = planted_model
        losses = model.epoch_losses
        assert all(math.isfinite(x) for x in losses)
        assert losses[-1] < losses[0]

    def test_no_zero_vectors_after_training(self, planted_model):
        model, _, _ = planted_model
        norms = np.linalg.norm(model.vectors, axis=1)
        assert (norms > 0).all()

    def test_vocabulary_threshold_exact(self):
        corpus = [["common"] * 5, ["rare"] * 4, ["common", "rare", "once"]]
        vocab = build_vocabulary(
            __import__("collections").Counter(t for s in corpus for t in s), min_count=5
        )
        assert "common" in vocab and "rare" in vocab and "once" not in vocab
        # rare has count exactly 5: threshold is >=
        model = train_embedding(corpus, EmbeddingParams(dimension=8, min_count=5, epochs=1))
        assert set(model.vocabulary) == {"common", "rare"}


class TestEmbedTweet:
    def model(self):
        vectors = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]], dtype=np.float32)
        return EmbeddingModel(vocabulary={"a": 0, "b": 1, "c": 2}, vectors=vectors)

    def test_singleton_mean(self):
        vec = embed_tweet(self.model(), ["a"])
        assert np.array_equal(vec.values, np.array([1.0, 2.0], dtype=np.float32))
        assert vec.covered_tokens == 1

    def test_duplicate_tokens(self):
        vec = embed_tweet(self.model(), ["b", "b"])
        assert np.array_equal(vec.values, np.array([3.0, -1.0], dtype=np.float32))
        assert vec.covered_tokens == 2

    def test_all_oov(self):
        vec = embed_tweet(self.model(), ["zz", "yy"])
        assert not vec.values.any()
        assert vec.covered_tokens == 0

    def test_oov_skipped_in_mean(self):
        vec = embed_tweet(self.model(), ["a", "zz", "b"])
        assert np.allclose(vec.values, [2.0, 0.5])
        assert vec.covered_tokens == 2

    def test_permutation_invariant(self):
        rng = random.Random(3)
        model = self.model()
        for _ in range(500):
            tokens = [rng.choice(["a", "b", "c", "zz"]) for _ in range(rng.randrange(1, 10))]
            shuffled = tokens[:]
            rng.shuffle(shuffled)
            assert np.allclose(embed_tweet(model, tokens).values, embed_tweet(model, shuffled).values)

    def test_mean_inside_convex_hull_norm(self, planted_model):
        model, _, _ = planted_model
        rng = random.Random(9)
        tokens_all = list(model.vocabulary)
        for _ in range(200):
            tokens = [rng.choice(tokens_all) for _ in range(rng.randrange(1, 12))]
            vec = embed_tweet(model, tokens)
            max_norm = max(np.linalg.norm(model.vector(t)) for t in tokens)
            assert np.linalg.norm(vec.values) <= max_norm + 1e-6


class TestModelFile:
    def test_round_trip_lossless(self, tmp_path, planted_model):
        model, _, _ = planted_model
        path = tmp_path / "emb.txt"
        save_embedding(model, path)
        loaded = load_embedding(path)
        assert loaded.vocabulary == model.vocabulary
        assert np.array_equal(loaded.vectors, model.vectors)

    def test_second_save_byte_identical(self, tmp_path, planted_model):
        model, _, _ = planted_model
        first, second = tmp_path / "a.txt", tmp_path / "b.txt"
        save_embedding(model, first)
        save_embedding(load_embedding(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_header_format(self, tmp_path, planted_model):
        model, _, _ = planted_model
        path = tmp_path / "emb.txt"
        save_embedding(model, path)
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == f"{len(model.vocabulary)} {model.dimension}"


class TestParams:
    def test_rejects_non_positive(self):
        with pytest.raises(ValidationError):
            EmbeddingParams(dimension=0)
        with pytest.raises(ValidationError):
            EmbeddingParams(epochs=0)
        with pytest.raises(ValidationError):
            EmbeddingParams(initial_learning_rate=-1.0)

    def test_rejects_oversized_dimension(self):
        with pytest.raises(ValidationError):
            EmbeddingParams(dimension=2048)
