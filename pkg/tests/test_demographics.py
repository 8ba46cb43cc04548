import math
import random
from collections import Counter

import pytest

from pollscope.demographics import (
    Face,
    Gazetteer,
    GazetteerEntry,
    RecordedFaceClient,
    age_bucket,
    classify_ethnicity,
    extract_age,
    extract_gender,
    gazetteer_lookup,
    load_name_gender_table,
    resolve_location,
    train_name_classifier,
)
from pollscope.errors import ValidationError

from conftest import make_tweet, make_user, utc


def entry(name, country, region, city, lat, lon, population, alternates=()):
    return GazetteerEntry(
        name=name,
        alternates=tuple(alternates),
        country=country,
        region=region,
        city=city,
        latitude=lat,
        longitude=lon,
        population=population,
    )


SPAIN_ITALY = Gazetteer([
    entry("Barcelona", "Spain", "Catalonia", "Barcelona", 41.39, 2.17, 1_620_000),
    entry("Madrid", "Spain", "Community of Madrid", "Madrid", 40.42, -3.70, 3_220_000),
    entry("Milan", "Italy", "Lombardy", "Milan", 45.46, 9.19, 1_350_000, alternates=("Milano",)),
    entry("Catalonia", "Spain", "Catalonia", None, 41.8, 1.5, 7_500_000),
])


class TestGender:
    def face_client(self):
        return RecordedFaceClient({
            "u7.jpg": (Face("female", 34, 0.93),),
            "two.jpg": (Face("male", 20, 0.9), Face("female", 22, 0.8)),
            "none.jpg": (),
        })

    def test_single_face_wins(self):
        user = make_user(profile_image_ref="u7.jpg")
        result = extract_gender(user, self.face_client(), {})
        assert (result.value, result.source, result.confidence) == ("female", "face_service", 0.93)

    def test_name_fallback(self):
        user = make_user(display_name="Maria Rossi")
        result = extract_gender(user, self.face_client(), {"maria": ("female", 0.99)})
        assert (result.value, result.source, result.confidence) == ("female", "name_table", 0.99)

    def test_both_fallbacks_exhausted(self):
        user = make_user(display_name="X Æ", profile_image_ref="two.jpg")
        result = extract_gender(user, self.face_client(), {"maria": ("female", 0.99)})
        assert (result.value, result.source, result.confidence) == ("unknown", "none", 0.0)

    def test_zero_faces_falls_back(self):
        user = make_user(display_name="Maria Rossi", profile_image_ref="none.jpg")
        result = extract_gender(user, self.face_client(), {"maria": ("female", 0.8)})
        assert result.source == "name_table"

    def test_client_failure_never_aborts(self):
        class Exploding:
            def analyze(self, ref):
                raise ConnectionError("boom")

        user = make_user(display_name="Maria Rossi", profile_image_ref="u7.jpg")
        result = extract_gender(user, Exploding(), {"maria": ("female", 0.8)})
        assert result.source == "name_table"

    def test_provenance_is_single_source(self):
        # Fallback-chain determinism: face result present means the name
        # table is never consulted, and vice versa.
        rng = random.Random(4)
        client = self.face_client()
        table = {"maria": ("female", 0.9), "marc": ("male", 0.8)}
        refs = [None, "u7.jpg", "two.jpg", "none.jpg", "missing.jpg"]
        names = ["Maria Rossi", "Marc Font", "Zzyzx Q"]
        for _ in range(10_000):
            user = make_user(
                display_name=rng.choice(names), profile_image_ref=rng.choice(refs)
            )
            result = extract_gender(user, client, table)
            again = extract_gender(user, client, table)
            assert result == again
            if result.value == "unknown":
                assert result.source == "none" and result.confidence == 0.0
            else:
                assert result.source in ("face_service", "name_table")


class TestAge:
    def client(self, age):
        return RecordedFaceClient({"img.jpg": (Face("female", age, 0.9),)})

    @pytest.mark.parametrize(
        "age,bucket",
        [(17, "under18"), (18, "b18_30"), (30, "b18_30"), (31, "b31_45"),
         (45, "b31_45"), (46, "b46_65"), (65, "b46_65"), (66, "over65")],
    )
    def test_buckets(self, age, bucket):
        user = make_user(profile_image_ref="img.jpg")
        result = extract_age(user, self.client(age))
        assert result.years == age
        assert result.bucket == bucket

    def test_no_usable_face(self):
        result = extract_age(make_user(), None)
        assert result.years is None and result.bucket == "unknown"

    def test_bucket_function_matches(self):
        for age in range(0, 100):
            assert age_bucket(age) in ("under18", "b18_30", "b31_45", "b46_65", "over65")


def brute_force_posterior(name, labeled, order=3, smoothing=1.0):
    """Independent naive-Bayes posterior over the tiny training vocabulary."""

    def grams(word):
        padded = "^" * (order - 1) + word.casefold() + "$" * (order - 1)
        return [padded[i:i + order] for i in range(len(padded) - order + 1)]

    classes = sorted({label for _, label in labeled})
    vocab = sorted({g for word, _ in labeled for g in grams(word)})
    scores = {}
    for c in classes:
        examples = [word for word, label in labeled if label == c]
        counts = Counter(g for word in examples for g in grams(word))
        total = sum(counts.values())
        log_p = math.log(len(examples) / len(labeled))
        for g in grams(name):
            if g in vocab:
                log_p += math.log((counts[g] + smoothing) / (total + smoothing * len(vocab)))
        scores[c] = log_p
    peak = max(scores.values())
    norm = sum(math.exp(s - peak) for s in scores.values())
    return {c: math.exp(s - peak) / norm for c, s in scores.items()}


class TestNameClassifier:
    def test_two_surname_classes(self):
        labeled = [("garcía", "hisp")] * 50 + [("rossi", "ital")] * 50
        model = train_name_classifier(labeled)
        result = classify_ethnicity("garcia", model)
        assert result.label == "hisp"
        oracle = brute_force_posterior("garcia", labeled)
        assert result.confidence == pytest.approx(oracle["hisp"], abs=1e-9)
        assert oracle["hisp"] > 0.5

    def test_balanced_training_equal_priors(self):
        model = train_name_classifier([("garcía", "hisp")] * 30 + [("rossi", "ital")] * 30)
        priors = set(model.log_priors.values())
        assert len(priors) == 1

    def test_unseen_ngrams_fall_back_to_prior(self):
        labeled = [("garcía", "hisp")] * 30 + [("rossi", "ital")] * 10
        model = train_name_classifier(labeled)
        result = classify_ethnicity("qqqq", model)
        assert result.label == "hisp"  # argmax prior
        assert result.confidence == pytest.approx(0.75, abs=1e-9)

    def test_tie_breaks_lexicographically(self):
        model = train_name_classifier([("aaa", "zeta"), ("aaa", "alpha")])
        result = classify_ethnicity("aaa", model)
        assert result.label == "alpha"

    def test_empty_name_error_result(self):
        model = train_name_classifier([("garcía", "hisp"), ("rossi", "ital")])
        result = classify_ethnicity("   ", model)
        assert result.label == "" and result.path == () and result.confidence == 0.0

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            train_name_classifier([("garcía", "hisp")] * 5)

    def test_posteriors_sum_to_one(self):
        rng = random.Random(12)
        pool = ["garcia", "rossi", "smith", "lopez", "ferrari", "brown", "torres"]
        labeled = [(rng.choice(pool), rng.choice(["a", "b", "c"])) for _ in range(200)]
        model = train_name_classifier(labeled)
        for _ in range(500):
            name = "".join(rng.choice("abcdefgqz") for _ in range(rng.randrange(1, 9)))
            result = classify_ethnicity(name, model)
            oracle = brute_force_posterior(name, labeled)
            assert sum(oracle.values()) == pytest.approx(1.0, abs=1e-9)
            assert result.confidence == pytest.approx(oracle[result.label], abs=1e-9)

    def test_hierarchical_labels_yield_paths(self):
        labeled = [("garcía", "europe/hispanic")] * 10 + [("rossi", "europe/italian")] * 10
        model = train_name_classifier(labeled)
        result = classify_ethnicity("garcia", model)
        assert result.path == ("europe", "hispanic")

    def test_flat_label_single_element_path(self):
        model = train_name_classifier([("garcía", "hisp")] * 5 + [("rossi", "ital")] * 5)
        assert classify_ethnicity("rossi", model).path == ("ital",)


class TestGazetteerLookup:
    def test_direct_city(self):
        assert gazetteer_lookup("Barcelona", SPAIN_ITALY) == ("Spain", "Catalonia", "Barcelona")

    def test_no_match(self):
        assert gazetteer_lookup("somewhere over the rainbow", SPAIN_ITALY) is None

    def test_most_populous_wins(self):
        ambiguous = Gazetteer([
            entry("Georgia", "United States", "Georgia", None, 32.1, -82.9, 10_700_000),
            entry("Georgia", "Georgia", None, None, 42.3, 43.3, 3_700_000),
        ])
        assert gazetteer_lookup("Georgia", ambiguous) == ("United States", "Georgia", None)

    def test_comma_component_match(self):
        assert gazetteer_lookup("Milano, Italia", SPAIN_ITALY) == ("Italy", "Lombardy", "Milan")

    def test_punctuation_and_case(self):
        assert gazetteer_lookup("  BARCELONA!!", SPAIN_ITALY) == ("Spain", "Catalonia", "Barcelona")


class TestResolveLocation:
    def geo_tweet(self, tid, lat, lon, hour):
        return make_tweet(tid, geo=(lat, lon), created_at=utc(2017, 8, 1, hour))

    def test_majority_vote(self):
        tweets = [
            self.geo_tweet("t1", 41.39, 2.17, 1),
            self.geo_tweet("t2", 41.40, 2.18, 2),
            self.geo_tweet("t3", 40.42, -3.70, 3),
        ]
        result = resolve_location(make_user(), tweets, SPAIN_ITALY)
        assert result.city == "Barcelona"
        assert result.supporting_count == 2
        assert result.source == "geo_majority"

    def test_profile_text_fallback(self):
        user = make_user(profile_location_text="Milano, Italia")
        result = resolve_location(user, [], SPAIN_ITALY)
        assert (result.country, result.region, result.city) == ("Italy", "Lombardy", "Milan")
        assert result.source == "profile_text"

    def test_no_information(self):
        result = resolve_location(make_user(), [], SPAIN_ITALY)
        assert result.source == "none"
        assert result.country is None

    def test_far_geotag_contributes_no_vote(self):
        user = make_user(profile_location_text="Madrid")
        tweets = [self.geo_tweet("t1", 0.0, 0.0, 1)]  # Gulf of Guinea
        result = resolve_location(user, tweets, SPAIN_ITALY)
        assert result.source == "profile_text"
        assert result.city == "Madrid"

    def test_city_tie_escalates_to_region(self):
        # One vote Barcelona city, one vote Catalonia region-level entry:
        # city level ties 1-1, but both fall in Catalonia.
        tweets = [
            self.geo_tweet("t1", 41.39, 2.17, 1),
            self.geo_tweet("t2", 41.8, 1.5, 2),
        ]
        result = resolve_location(make_user(), tweets, SPAIN_ITALY)
        assert result.source == "geo_majority"
        assert (result.country, result.region) == ("Spain", "Catalonia")
        assert result.city is None
        assert result.supporting_count == 2

    def test_full_tie_uses_most_recent(self):
        tweets = [
            self.geo_tweet("t1", 41.39, 2.17, 1),   # Barcelona
            self.geo_tweet("t2", 45.46, 9.19, 2),   # Milan, most recent
        ]
        result = resolve_location(make_user(), tweets, SPAIN_ITALY)
        assert result.city == "Milan"
        assert result.supporting_count == 1

    def test_hierarchy_invariant_random(self):
        rng = random.Random(31)
        points = [(41.39, 2.17), (40.42, -3.70), (45.46, 9.19), (41.8, 1.5), (0.0, 0.0)]
        texts = [None, "Barcelona", "Milano, Italia", "Catalonia", "nowhere"]
        for _ in range(2000):
            tweets = [
                self.geo_tweet(f"t{i}", *rng.choice(points), hour=i + 1)
                for i in range(rng.randrange(0, 5))
            ]
            user = make_user(profile_location_text=rng.choice(texts))
            result = resolve_location(user, tweets, SPAIN_ITALY)
            if result.city is not None:
                assert result.region is not None
            if result.region is not None:
                assert result.country is not None
            if result.source == "geo_majority":
                assert result.supporting_count >= 1


def test_name_gender_table_round_trip(tmp_path):
    path = tmp_path / "names.csv"
    path.write_text("first_name,gender,confidence\nMaria,female,0.99\n")
    table = load_name_gender_table(path)
    assert table["maria"] == ("female", 0.99)
