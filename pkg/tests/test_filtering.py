import csv
import random
from datetime import timedelta

import numpy as np
import pytest

from pollscope.errors import ValidationError
from pollscope.filtering import (
    BACKEND_FIXTURE,
    BACKEND_HEURISTIC,
    BOT_REMOVED,
    KEPT,
    OUTLIER_REMOVED,
    BotScore,
    FixtureScorer,
    HeuristicScorer,
    activity_rate,
    filter_bots,
    filter_outliers,
    iqr_bounds,
    score_bot,
    write_verdicts_csv,
)

from conftest import REFERENCE, make_tweet, make_user, utc


class TestActivityRate:
    def test_direct_formula(self):
        user = make_user(months=10, post_count=300)
        assert activity_rate(user, REFERENCE).normalized_volume == 30.0

    def test_age_floored_at_one_month(self):
        user = make_user(post_count=50, created_at=REFERENCE - timedelta(days=12))
        assert activity_rate(user, REFERENCE).normalized_volume == 50.0

    def test_zero_posts(self):
        assert activity_rate(make_user(post_count=0), REFERENCE).normalized_volume == 0.0

    def test_created_after_reference_rejected(self):
        user = make_user(created_at=REFERENCE + timedelta(days=1))
        with pytest.raises(ValidationError):
            activity_rate(user, REFERENCE)


class TestIqrBounds:
    def test_hand_computed_example(self):
        bounds = iqr_bounds([1, 2, 3, 4, 5, 6, 7, 8], 1.5)
        assert bounds.q1 == pytest.approx(2.75, abs=1e-12)
        assert bounds.q3 == pytest.approx(6.25, abs=1e-12)
        assert bounds.upper == pytest.approx(11.5, abs=1e-12)

    def test_zero_iqr(self):
        bounds = iqr_bounds([4.2] * 10)
        assert bounds.upper == 4.2

    def test_single_value(self):
        bounds = iqr_bounds([7.0])
        assert (bounds.q1, bounds.q3, bounds.upper) == (7.0, 7.0, 7.0)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            iqr_bounds([])

    def test_non_positive_multiplier_rejected(self):
        with pytest.raises(ValidationError):
            iqr_bounds([1.0, 2.0], 0.0)

    def test_matches_numpy_oracle(self):
        # Independent route: numpy's linear-interpolation percentiles.
        rng = random.Random(13)
        for _ in range(300):
            values = [rng.uniform(-50, 50) for _ in range(rng.randrange(1, 200))]
            bounds = iqr_bounds(values, 1.5)
            q1, q3 = np.percentile(values, [25, 75])
            assert bounds.q1 == pytest.approx(q1, abs=1e-12)
            assert bounds.q3 == pytest.approx(q3, abs=1e-12)
            assert bounds.upper == pytest.approx(q3 + 1.5 * (q3 - q1), abs=1e-12)


class TestFilterOutliers:
    def test_extreme_outlier_removed(self):
        users = [make_user(f"u{i}", months=10, post_count=100) for i in range(100)]
        users.append(make_user("whale", months=10, post_count=10_000))
        kept, removed, _ = filter_outliers(users, REFERENCE)
        assert [v.user_id for v in removed] == ["whale"]
        assert len(kept) == 100

    def test_equal_rates_keep_everyone(self):
        users = [make_user(f"u{i}", months=5, post_count=50) for i in range(20)]
        kept, removed, bounds = filter_outliers(users, REFERENCE)
        assert removed == []
        assert bounds.upper == 10.0  # strict > keeps the boundary

    def test_synthetic_inflation_recovery(self):
        # 10,000 users, 12% with 10x inflated rates; checked against a
        # direct recomputation of the fence over the same rates.
        rng = random.Random(99)
        users, inflated = [], set()
        for i in range(10_000):
            months = rng.randint(10, 20)
            rate = rng.uniform(1.0, 3.0)
            if rng.random() < 0.12:
                rate *= 10
                inflated.add(f"u{i}")
            users.append(make_user(f"u{i}", months=months, post_count=round(rate * months)))
        kept, removed, bounds = filter_outliers(users, REFERENCE)
        removed_ids = {v.user_id for v in removed}
        recovered = len(removed_ids & inflated) / len(inflated)
        false_positives = len(removed_ids - inflated) / (len(users) - len(inflated))
        assert recovered >= 0.95
        assert false_positives <= 0.02
        rates = {u.user_id: activity_rate(u, REFERENCE).normalized_volume for u in users}
        expected = {uid for uid, r in rates.items() if r > bounds.upper}
        assert removed_ids == expected

    def test_permutation_invariant(self):
        rng = random.Random(5)
        users = [make_user(f"u{i}", months=rng.randint(1, 30), post_count=rng.randrange(500)) for i in range(200)]
        kept_a, removed_a, _ = filter_outliers(users, REFERENCE)
        shuffled = users[:]
        rng.shuffle(shuffled)
        kept_b, removed_b, _ = filter_outliers(shuffled, REFERENCE)
        assert {u.user_id for u in kept_a} == {u.user_id for u in kept_b}
        assert {v.user_id for v in removed_a} == {v.user_id for v in removed_b}

    def test_raising_multiplier_never_shrinks_kept(self):
        rng = random.Random(8)
        users = [make_user(f"u{i}", months=rng.randint(1, 30), post_count=rng.randrange(500)) for i in range(300)]
        kept_ids = []
        for multiplier in (0.5, 1.0, 1.5, 3.0, 10.0):
            kept, _, _ = filter_outliers(users, REFERENCE, multiplier)
            kept_ids.append({u.user_id for u in kept})
        for smaller, larger in zip(kept_ids, kept_ids[1:]):
            assert smaller <= larger

    def test_empty_catalog_rejected(self):
        with pytest.raises(ValidationError):
            filter_outliers([], REFERENCE)


class TestScoreBot:
    def test_fixture_replay(self):
        scorer = FixtureScorer({"u42": 73.5})
        score = score_bot(make_user("u42"), [], scorer)
        assert score.score == 73.5
        assert score.backend == BACKEND_FIXTURE

    def test_fixture_miss_errors_by_default(self):
        with pytest.raises(ValidationError):
            score_bot(make_user("u1"), [], FixtureScorer({}))

    def test_fixture_miss_heuristic_fallback(self):
        score = score_bot(make_user("u1"), [], FixtureScorer({}), on_miss="heuristic")
        assert score.backend == BACKEND_HEURISTIC
        assert score.score == 50.0

    def test_metronome_retweeter_scores_high(self):
        # Fixed 60-second intervals, 100% retweets: regularity and retweet
        # terms saturate, so the documented formula gives at least 80.
        start = utc(2017, 8, 1)
        tweets = [
            make_tweet(f"t{i}", created_at=start + timedelta(seconds=60 * i), is_retweet=True)
            for i in range(100)
        ]
        user = make_user("bot", profile_location_text="x", profile_image_ref="y")
        score = score_bot(user, tweets, HeuristicScorer())
        assert score.score >= 80.0

    def test_no_tweets_uninformative_prior(self):
        score = score_bot(make_user("quiet"), [], HeuristicScorer())
        assert score.score == 50.0

    def test_score_range_clamped(self):
        rng = random.Random(3)
        start = utc(2017, 8, 1)
        for _ in range(50):
            tweets = [
                make_tweet(
                    f"t{i}",
                    created_at=start + timedelta(seconds=rng.randrange(10_000_000)),
                    is_retweet=rng.random() < 0.5,
                )
                for i in range(rng.randrange(0, 30))
            ]
            score = score_bot(make_user("u"), tweets, HeuristicScorer())
            assert 0.0 <= score.score <= 100.0


class TestFilterBots:
    def scores(self, mapping):
        return {uid: BotScore(uid, value, BACKEND_FIXTURE) for uid, value in mapping.items()}

    def test_above_threshold_removed(self):
        users = [make_user("u1")]
        humans, removed = filter_bots(users, self.scores({"u1": 41.0}), threshold=40.0)
        assert humans == []
        assert removed[0].stage == BOT_REMOVED

    def test_boundary_value_kept(self):
        users = [make_user("u1")]
        humans, removed = filter_bots(users, self.scores({"u1": 40.0}), threshold=40.0)
        assert len(humans) == 1 and removed == []

    def test_below_threshold_kept(self):
        users = [make_user("u1")]
        humans, removed = filter_bots(users, self.scores({"u1": 39.0}), threshold=40.0)
        assert len(humans) == 1 and removed == []

    def test_missing_scores_listed(self):
        users = [make_user("u1"), make_user("u2"), make_user("u3")]
        with pytest.raises(ValidationError) as excinfo:
            filter_bots(users, self.scores({"u2": 10.0}))
        assert "u1" in str(excinfo.value) and "u3" in str(excinfo.value)

    def test_raising_threshold_never_shrinks_humans(self):
        rng = random.Random(17)
        users = [make_user(f"u{i}") for i in range(200)]
        scores = self.scores({f"u{i}": rng.uniform(0, 100) for i in range(200)})
        previous = set()
        for threshold in (10, 30, 50, 70, 90):
            humans, _ = filter_bots(users, scores, threshold)
            current = {u.user_id for u in humans}
            assert previous <= current
            previous = current


class TestPipelineProperties:
    def test_partition_property(self):
        rng = random.Random(23)
        for _ in range(10):
            users = [
                make_user(f"u{i}", months=rng.randint(1, 40), post_count=rng.randrange(2000))
                for i in range(rng.randrange(1, 300))
            ]
            kept, outliers, _ = filter_outliers(users, REFERENCE)
            scores = {
                u.user_id: BotScore(u.user_id, rng.uniform(0, 100), BACKEND_FIXTURE) for u in kept
            }
            humans, bots = filter_bots(kept, scores)
            assert len(humans) + len(outliers) + len(bots) == len(users)

    def test_removed_users_carry_justification(self):
        users = [make_user(f"u{i}", months=10, post_count=10) for i in range(50)]
        users.append(make_user("whale", months=1, post_count=100_000))
        kept, outliers, bounds = filter_outliers(users, REFERENCE)
        for verdict in outliers:
            assert verdict.rate is not None
            assert verdict.rate.normalized_volume > bounds.upper
        scores = {u.user_id: BotScore(u.user_id, 90.0, BACKEND_FIXTURE) for u in kept}
        _, bots = filter_bots(kept, scores)
        for verdict in bots:
            assert verdict.bot is not None and verdict.bot.score > 40.0


def test_verdict_csv_export(tmp_path):
    from pollscope.filtering import ActivityRate, FilterVerdict

    verdicts = [
        FilterVerdict("u1", KEPT),
        FilterVerdict("u2", OUTLIER_REMOVED, rate=ActivityRate("u2", 123.456789)),
        FilterVerdict("u3", BOT_REMOVED, bot=BotScore("u3", 77.7, BACKEND_FIXTURE)),
    ]
    path = tmp_path / "verdicts.csv"
    write_verdicts_csv(path, verdicts)
    rows = list(csv.DictReader(open(path)))
    assert [r["stage"] for r in rows] == [KEPT, OUTLIER_REMOVED, BOT_REMOVED]
    assert rows[1]["normalized_volume"] == "123.456789"
    assert rows[2]["bot_score"] == "77.70"
    assert rows[2]["backend"] == BACKEND_FIXTURE


def test_bot_score_range_validated():
    with pytest.raises(ValidationError):
        BotScore("u1", 101.0, BACKEND_FIXTURE)


def test_fixture_scorer_load(tmp_path):
    path = tmp_path / "scores.jsonl"
    path.write_text('{"user_id": "u1", "score": 73.5}\n{"user_id": "u2", "score": 10}\n')
    scorer = FixtureScorer.load(path)
    assert scorer.score(make_user("u1"), []) == 73.5
    assert scorer.score(make_user("unknown"), []) is None
