"""Stage implementations wiring the modules into the pipeline.

Stages exchange plain files inside the run output directory so every
intermediate stays auditable. Re-running a stage with unchanged inputs
and config rewrites byte-identical artifacts (the manifest records
wall-clock times and is bookkeeping, not an artifact).
"""

from __future__ import annotations

import csv
import json
import logging
import time
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import PipelineConfig
from .corpus import (
    Tweet,
    UserProfile,
    load_stopwords,
    load_tweets,
    load_users,
    match_topic,
    preprocess,
)
from .demographics import (
    Gazetteer,
    RecordedFaceClient,
    extract_record,
    load_labeled_names,
    load_name_gender_table,
    train_name_classifier,
    write_demographics_csv,
)
from .embedding import embed_tweet, load_embedding, save_embedding, train_embedding
from .errors import PreconditionError, ValidationError
from .filtering import (
    BACKEND_HEURISTIC,
    KEPT,
    FilterVerdict,
    FixtureScorer,
    HeuristicScorer,
    filter_bots,
    filter_outliers,
    score_bot,
    write_verdicts_csv,
)
from .polarity import (
    NEGATIVE,
    NEUTRAL,
    POSITIVE,
    PredictorSuite,
    UserPolarity,
    classify_tweet,
    compose_training_sets,
    cross_validate,
    evaluate,
    load_labeled_tweets,
    load_linear,
    save_linear,
    split_train_test,
    train_linear,
    user_polarity_from_counts,
)
from .report import (
    ReportBundle,
    ReportRecord,
    breakdown,
    compare_official,
    emit,
    polarity_distribution,
    shares_by_location,
)

logger = logging.getLogger(__name__)

ARTIFACTS = {
    "users_ingested": "users_ingested.jsonl",
    "tweets_ingested": "tweets_ingested.jsonl",
    "tweets_topical": "tweets_topical.jsonl",
    "verdicts": "filter_verdicts.csv",
    "users_kept": "users_kept.jsonl",
    "demographics": "demographics.csv",
    "embedding": "embedding_model.txt",
    "predictor_relevance": "predictor_relevance.model",
    "predictor_positive": "predictor_positive.model",
    "predictor_negative": "predictor_negative.model",
    "metrics": "predictor_metrics.csv",
    "user_polarity": "user_polarity.csv",
    "manifest": "manifest.json",
}

REPORT_DIR = "report"
FIGURES_DIR = "figures"

STAGE_ORDER = ("ingest", "filter", "demographics", "embed", "train", "classify", "report")


def artifact(cfg: PipelineConfig, key: str) -> Path:
    return cfg.paths.output_dir / ARTIFACTS[key]


def _require(path: Path | None, what: str) -> Path:
    if path is None or not path.exists():
        raise PreconditionError(f"missing {what}: {path}")
    return path


def _require_config_path(path: Path | None, what: str) -> Path:
    if path is None:
        raise PreconditionError(f"config does not set paths.{what}")
    return path


def _user_record(user: UserProfile) -> dict:
    record = {
        "id": user.user_id,
        "screen_name": user.screen_name,
        "name": user.display_name,
        "created_at": user.created_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "post_count": user.post_count,
    }
    if user.profile_location_text:
        record["location"] = user.profile_location_text
    if user.profile_image_ref:
        record["image_url"] = user.profile_image_ref
    return record


def _tweet_record(tweet: Tweet) -> dict:
    record = {
        "id": tweet.tweet_id,
        "user_id": tweet.user_id,
        "created_at": tweet.created_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "text": tweet.text,
        "hashtags": list(tweet.hashtags),
        "retweet": tweet.is_retweet,
    }
    if tweet.geo is not None:
        record["lat"], record["lon"] = tweet.geo
    return record


def run_ingest(cfg: PipelineConfig) -> dict:
    users_path = _require_config_path(cfg.paths.users, "users")
    tweets_path = _require_config_path(cfg.paths.tweets, "tweets")
    out = cfg.paths.output_dir
    out.mkdir(parents=True, exist_ok=True)

    catalog = load_users(users_path)
    with open(artifact(cfg, "users_ingested"), "w", encoding="utf-8", newline="\n") as handle:
        for user in catalog:
            handle.write(json.dumps(_user_record(user)) + "\n")

    stream = load_tweets(tweets_path)
    n_topical = n_valid = n_retweets_dropped = 0
    with open(artifact(cfg, "tweets_ingested"), "w", encoding="utf-8", newline="\n") as ingested, \
            open(artifact(cfg, "tweets_topical"), "w", encoding="utf-8", newline="\n") as topical:
        for tweet in stream:
            if cfg.exclude_retweets and tweet.is_retweet:
                n_retweets_dropped += 1
                continue
            n_valid += 1
            line = json.dumps(_tweet_record(tweet)) + "\n"
            ingested.write(line)
            if match_topic(tweet, cfg.topic):
                topical.write(line)
                n_topical += 1
    return {
        "users_valid": len(catalog),
        "users_skipped": catalog.skipped,
        "users_duplicate": catalog.duplicates,
        "tweets_valid": n_valid,
        "tweets_skipped": stream.skipped,
        "tweets_retweets_dropped": n_retweets_dropped,
        "tweets_topical": n_topical,
    }


def _tweets_by_user(path: Path, user_ids: set[str], geo_only: bool = False) -> dict[str, list[Tweet]]:
    grouped: dict[str, list[Tweet]] = {}
    for tweet in load_tweets(path):
        if tweet.user_id not in user_ids:
            continue
        if geo_only and tweet.geo is None:
            continue
        grouped.setdefault(tweet.user_id, []).append(tweet)
    return grouped


def run_filter(cfg: PipelineConfig) -> dict:
    users_file = _require(artifact(cfg, "users_ingested"), "ingested users (run ingest first)")
    catalog = load_users(users_file)
    if cfg.filtering.reference_time is None:
        raise PreconditionError("filtering.reference_time is not set")
    kept, outlier_verdicts, bounds = filter_outliers(
        list(catalog), cfg.filtering.reference_time, cfg.filtering.iqr_multiplier
    )

    need_tweets = cfg.filtering.bot_backend == BACKEND_HEURISTIC or (
        cfg.filtering.fixture_miss_policy == "heuristic"
    )
    tweets_by_user: dict[str, list[Tweet]] = {}
    if need_tweets:
        tweets_file = _require(artifact(cfg, "tweets_ingested"), "ingested tweets (run ingest first)")
        tweets_by_user = _tweets_by_user(tweets_file, {u.user_id for u in kept})
    if cfg.filtering.bot_backend == BACKEND_HEURISTIC:
        scorer = HeuristicScorer()
    else:
        fixture = _require_config_path(cfg.paths.bot_fixture, "bot_fixture")
        scorer = FixtureScorer.load(_require(fixture, "bot-score fixture"))
    scores = {
        u.user_id: score_bot(
            u, tweets_by_user.get(u.user_id, []), scorer, on_miss=cfg.filtering.fixture_miss_policy
        )
        for u in kept
    }
    humans, bot_verdicts = filter_bots(kept, scores, cfg.filtering.bot_threshold)

    by_user: dict[str, FilterVerdict] = {v.user_id: v for v in outlier_verdicts}
    by_user.update({v.user_id: v for v in bot_verdicts})
    human_ids = {u.user_id for u in humans}
    verdicts = []
    for user in catalog:
        if user.user_id in by_user:
            verdicts.append(by_user[user.user_id])
        else:
            verdicts.append(
                FilterVerdict(user.user_id, KEPT, rate=None, bot=scores.get(user.user_id))
            )
    write_verdicts_csv(artifact(cfg, "verdicts"), verdicts)
    with open(artifact(cfg, "users_kept"), "w", encoding="utf-8", newline="\n") as handle:
        for user in catalog:
            if user.user_id in human_ids:
                handle.write(json.dumps(_user_record(user)) + "\n")
    counts = {
        "input": len(catalog),
        "kept": len(humans),
        "outlier_removed": len(outlier_verdicts),
        "bot_removed": len(bot_verdicts),
        "iqr_upper": bounds.upper,
    }
    assert counts["kept"] + counts["outlier_removed"] + counts["bot_removed"] == counts["input"]
    return counts


def run_demographics(cfg: PipelineConfig) -> dict:
    users_file = _require(artifact(cfg, "users_kept"), "kept users (run filter first)")
    gazetteer_path = _require_config_path(cfg.paths.gazetteer, "gazetteer")
    gazetteer = Gazetteer.load(_require(gazetteer_path, "gazetteer file"))
    catalog = load_users(users_file)

    face_client = None
    if cfg.paths.face_fixture is not None:
        face_client = RecordedFaceClient.load(_require(cfg.paths.face_fixture, "face fixture"))
    name_table = {}
    if cfg.paths.name_gender_table is not None:
        name_table = load_name_gender_table(_require(cfg.paths.name_gender_table, "name-gender table"))
    ethnicity_model = None
    if cfg.paths.labeled_names is not None:
        rows = load_labeled_names(_require(cfg.paths.labeled_names, "labeled names"))
        ethnicity_model = train_name_classifier(rows)

    tweets_file = _require(artifact(cfg, "tweets_ingested"), "ingested tweets (run ingest first)")
    geo_tweets = _tweets_by_user(tweets_file, {u.user_id for u in catalog}, geo_only=True)

    records = []
    counts = Counter()
    for user in catalog:
        record = extract_record(
            user, geo_tweets.get(user.user_id, []), face_client, name_table, ethnicity_model, gazetteer
        )
        records.append(record)
        counts["gender_identified"] += record.gender.value != "unknown"
        counts["age_identified"] += record.age.years is not None
        counts["ethnicity_identified"] += bool(record.ethnicity and record.ethnicity.label)
        counts["located"] += record.location.source != "none"
    write_demographics_csv(artifact(cfg, "demographics"), records)
    return {"users": len(catalog), **counts}


def run_embed(cfg: PipelineConfig) -> dict:
    users_file = _require(artifact(cfg, "users_kept"), "kept users (run filter first)")
    tweets_file = _require(artifact(cfg, "tweets_ingested"), "ingested tweets (run ingest first)")
    stopwords = load_stopwords(cfg.paths.stopwords)
    kept_ids = {u.user_id for u in load_users(users_file)}

    def sentences() -> Iterable[list[str]]:
        for tweet in load_tweets(tweets_file):
            if tweet.user_id in kept_ids:
                yield preprocess(tweet.text, stopwords)

    model = train_embedding(sentences(), cfg.embedding)
    save_embedding(model, artifact(cfg, "embedding"))
    return {
        "vocabulary": len(model.vocabulary),
        "dimension": model.dimension,
        "final_loss": model.epoch_losses[-1] if model.epoch_losses else None,
    }


def run_train(cfg: PipelineConfig) -> dict:
    labeled_path = _require_config_path(cfg.paths.labeled_tweets, "labeled_tweets")
    _require(labeled_path, "labeled tweets")
    model = load_embedding(_require(artifact(cfg, "embedding"), "embedding model (run embed first)"))
    stopwords = load_stopwords(cfg.paths.stopwords)

    labeled_rows, skipped = load_labeled_tweets(labeled_path)
    embedded = []
    zero_coverage = 0
    for text, label in labeled_rows:
        vec = embed_tweet(model, preprocess(text, stopwords))
        if vec.covered_tokens == 0:
            zero_coverage += 1
            continue
        embedded.append((vec.values, label))
    sets = compose_training_sets(
        embedded,
        relevance_per_class=cfg.training.relevance_per_class,
        polarity_positive=cfg.training.polarity_positive,
        seed=cfg.training.seed,
    )

    t = cfg.training
    metrics_rows = []
    for name, data in (("relevance", sets.relevance), ("positive", sets.positive), ("negative", sets.negative)):
        train_part, test_part = split_train_test(data, t.ratio, seed=t.seed)
        cv = cross_validate(
            train_part, t.k_folds, regularization=t.regularization, epochs=t.epochs, seed=t.seed
        )
        final = train_linear(train_part, regularization=t.regularization, epochs=t.epochs, seed=t.seed)
        test_metrics = evaluate(final, test_part)
        save_linear(final, artifact(cfg, f"predictor_{name}"))
        for split, m in (("cv_mean", cv.mean), ("test", test_metrics)):
            metrics_rows.append(
                [name, split, f"{m.precision:.4f}", f"{m.recall:.4f}", f"{m.f_score:.4f}", f"{m.accuracy:.4f}"]
            )
    with open(artifact(cfg, "metrics"), "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["predictor", "evaluation", "precision", "recall", "f_score", "accuracy"])
        writer.writerows(metrics_rows)
    return {
        "labeled": len(labeled_rows),
        "labeled_skipped": skipped,
        "zero_coverage": zero_coverage,
        **sets.composition,
    }


def sample_users(user_ids: Sequence[str], n: int, seed: int) -> list[str]:
    """Uniform sample without replacement, reported in input order."""
    if n > len(user_ids):
        raise ValidationError(f"cannot sample {n} users from a population of {len(user_ids)}")
    chosen = np.random.default_rng(seed).permutation(len(user_ids))[:n]
    return [user_ids[i] for i in sorted(chosen)]


def run_classify(cfg: PipelineConfig) -> dict:
    users_file = _require(artifact(cfg, "users_kept"), "kept users (run filter first)")
    topical_file = _require(artifact(cfg, "tweets_topical"), "topical tweets (run ingest first)")
    embedding = load_embedding(
        _require(artifact(cfg, "embedding"), "embedding model (run embed first)")
    )
    suite = PredictorSuite(
        relevance=load_linear(
            _require(artifact(cfg, "predictor_relevance"), "relevance predictor (run train first)"),
            cfg.training.regularization,
        ),
        positive=load_linear(
            _require(artifact(cfg, "predictor_positive"), "positive predictor (run train first)"),
            cfg.training.regularization,
        ),
        negative=load_linear(
            _require(artifact(cfg, "predictor_negative"), "negative predictor (run train first)"),
            cfg.training.regularization,
        ),
    )
    stopwords = load_stopwords(cfg.paths.stopwords)

    user_ids = [u.user_id for u in load_users(users_file)]
    if cfg.sampling.n is not None:
        user_ids = sample_users(user_ids, cfg.sampling.n, cfg.sampling.seed)
    selected = set(user_ids)

    votes: dict[str, list[int]] = {uid: [0, 0, 0] for uid in user_ids}
    outcome_counts: Counter[str] = Counter()
    n_tweets = 0
    for tweet in load_tweets(topical_file):
        if tweet.user_id not in selected:
            continue
        n_tweets += 1
        value = classify_tweet(suite, embedding, tweet, stopwords)
        outcome_counts[value] += 1
        if value == POSITIVE:
            votes[tweet.user_id][0] += 1
        elif value == NEGATIVE:
            votes[tweet.user_id][1] += 1
        elif value == NEUTRAL:
            votes[tweet.user_id][2] += 1

    with open(artifact(cfg, "user_polarity"), "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["user_id", "value", "n_pos", "n_neg", "n_neu"])
        for uid in user_ids:
            up = user_polarity_from_counts(*votes[uid])
            writer.writerow([uid, up.value, up.n_pos, up.n_neg, up.n_neu])
    return {
        "users_classified": len(user_ids),
        "tweets_classified": n_tweets,
        **{f"tweets_{k}": v for k, v in sorted(outcome_counts.items())},
    }


def _load_user_polarity(path: Path) -> dict[str, UserPolarity]:
    with open(path, encoding="utf-8", newline="") as handle:
        return {
            row["user_id"]: UserPolarity(
                row["value"], int(row["n_pos"]), int(row["n_neg"]), int(row["n_neu"])
            )
            for row in csv.DictReader(handle)
        }


def _load_demographics(path: Path) -> dict[str, dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as handle:
        return {row["user_id"]: row for row in csv.DictReader(handle)}


def run_report(cfg: PipelineConfig) -> dict:
    polarity_file = _require(artifact(cfg, "user_polarity"), "user polarity (run classify first)")
    demo_file = _require(artifact(cfg, "demographics"), "demographics (run demographics first)")
    user_polarities = _load_user_polarity(polarity_file)
    demographics = _load_demographics(demo_file)

    records = []
    for uid, up in user_polarities.items():
        demo = demographics.get(uid, {})

        def known(key: str) -> str | None:
            value = demo.get(key, "")
            return value if value and value != "unknown" else None

        records.append(
            ReportRecord(
                user_id=uid,
                polarity=up.value,
                gender=known("gender"),
                age_bucket=known("age_bucket"),
                ethnicity=known("ethnicity"),
                country=known("country"),
                region=known("region"),
                city=known("city"),
            )
        )

    bundle = ReportBundle(distribution=polarity_distribution(user_polarities.values()))
    for dimension in ("gender", "age_bucket", "ethnicity", "region", "city", "country"):
        bundle.breakdowns[dimension] = breakdown(records, dimension, cfg.report.top_k)
    polarized = [r for r in records if r.polarity in (POSITIVE, NEGATIVE, NEUTRAL)]
    for level in ("region", "city", "country"):
        bundle.shares[level] = shares_by_location(polarized, level)
    if cfg.paths.official_results is not None:
        predicted: dict[str, float] = {}
        for level in ("country", "region", "city"):  # city-level wins name collisions
            predicted.update({name: share for name, share, _, _ in bundle.shares[level]})
        bundle.comparison = compare_official(
            predicted, _require(cfg.paths.official_results, "official results")
        )

    report_dir = cfg.paths.output_dir / REPORT_DIR
    written = emit(bundle, report_dir, cfg.report.format)
    if cfg.report.figures:
        from . import figures  # matplotlib import deferred until needed

        written += figures.render_all(bundle, report_dir / FIGURES_DIR)
    return {
        "analyzed": bundle.distribution.n_analyzed,
        "polarized": bundle.distribution.n_polarized,
        "files": len(written),
    }


STAGES = {
    "ingest": run_ingest,
    "filter": run_filter,
    "demographics": run_demographics,
    "embed": run_embed,
    "train": run_train,
    "classify": run_classify,
    "report": run_report,
}


def write_manifest(cfg: PipelineConfig, stage_records: dict[str, dict]) -> Path:
    """Merge stage input/output counts and timings into manifest.json."""
    path = artifact(cfg, "manifest")
    manifest = {"tool_version": __version__, "config": {}, "stages": {}}
    if path.exists():
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            logger.warning("manifest %s unreadable; rewriting", path)
    manifest["tool_version"] = __version__
    manifest["config"] = {
        "source": str(cfg.source) if cfg.source else None,
        "snapshot": cfg.snapshot,
        "output_dir": str(cfg.paths.output_dir),
    }
    manifest.setdefault("stages", {}).update(stage_records)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def run_stages(cfg: PipelineConfig, names: Sequence[str]) -> dict[str, dict]:
    """Run stages in order, recording counts and wall-clock in the manifest."""
    records: dict[str, dict] = {}
    for name in names:
        if name not in STAGES:
            raise ValidationError(f"unknown stage {name!r}")
        started = time.perf_counter()
        counts = STAGES[name](cfg)
        elapsed = time.perf_counter() - started
        logger.info("stage %s finished in %.2fs: %s", name, elapsed, counts)
        records[name] = {"counts": counts, "wall_clock_s": round(elapsed, 3)}
    write_manifest(cfg, records)
    return records
