"""Seeded synthetic corpora with full ground truth.

The generator emits exactly the file formats the pipeline consumes (user
and tweet archives, bot-score/face fixtures, name tables, gazetteer,
labeled tweets, official results) plus ground-truth CSVs, so an end-to-end
run can be checked against known answers. Everything derives from one
64-bit seed; two runs with the same spec are byte-identical.

Construction choices that make recovery well-posed: bot fixture scores
(>= 60) and human scores (<= 30) straddle the default threshold of 40;
outlier accounts post 10x the tweets of everyone else while account ages
share one range, so their normalized volume separates cleanly; polarized
users draw most of their topical tweets from their own class lexicon.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

WINDOW_START = datetime(2017, 7, 1, tzinfo=timezone.utc)
WINDOW_END = datetime(2017, 10, 1, tzinfo=timezone.utc)
REFERENCE_TIME = WINDOW_END

TOPIC_HASHTAG = "synthref"

# tweet-construction probabilities (class-conditional content model)
OWN_LEXICON_TWEET = 0.85  # a polarized user's topical tweet uses their own class
RELEVANT_FRACTION = 0.8
CLASS_TOKEN_FRACTION = 0.8
HASHTAG_RELEVANT = 0.9
HASHTAG_BACKGROUND = 0.05
URL_FRACTION = 0.2
SHOUT_FRACTION = 0.15
GEO_USER_FRACTION = 0.35
GEO_TWEET_FRACTION = 0.5
FACE_FRACTION = 0.55
PROFILE_TEXT_FRACTION = 0.6
BOT_RETWEET_FRACTION = 0.9

TRUE_POSITIVE = "relevant_positive"
TRUE_NEGATIVE = "relevant_negative"
TRUE_NEUTRAL = "relevant_neutral"
TRUE_BACKGROUND = "background"

_FEMALE_NAMES = (
    "maria", "lucia", "elena", "sofia", "carmen", "paula",
    "laura", "marta", "alba", "julia", "nora", "irene",
)
_MALE_NAMES = (
    "marc", "david", "pablo", "sergio", "jordi", "luca",
    "matteo", "diego", "ivan", "oscar", "hugo", "adria",
)
_SURNAMES = {
    "hispanic": (
        "garcia", "fernandez", "rodriguez", "martinez", "lopez",
        "gonzalez", "sanchez", "ramirez", "torres", "flores",
    ),
    "italian": (
        "rossi", "russo", "ferrari", "esposito", "bianchi",
        "romano", "colombo", "ricci", "marino", "greco",
    ),
    "british": (
        "smith", "jones", "taylor", "brown", "williams",
        "wilson", "johnson", "davies", "robinson", "wright",
    ),
}


@dataclass(frozen=True)
class RegionSpec:
    name: str
    weight: float
    city: str
    latitude: float
    longitude: float
    city_population: int
    region_population: int


DEFAULT_REGIONS = (
    RegionSpec("Norland", 3.0, "Norport", 40.0, 0.0, 1_500_000, 3_200_000),
    RegionSpec("Sudonia", 2.0, "Sudville", 44.0, 4.0, 900_000, 2_100_000),
    RegionSpec("Westmark", 2.0, "Westburg", 40.0, 8.0, 700_000, 1_800_000),
    RegionSpec("Eastvale", 1.0, "Eastham", 44.0, 12.0, 400_000, 900_000),
)

COUNTRY = "Synthland"


@dataclass(frozen=True)
class Lexicons:
    relevant_positive: tuple[str, ...] = (
        "yesway", "forward", "approve", "suport", "sovereign", "newdawn",
        "hopeful", "standtall", "voteyes", "wewill", "brightpath",
        "togetheryes", "freedomcall", "ourvoice", "liftup", "winyes",
    )
    relevant_negative: tuple[str, ...] = (
        "novote", "against", "refuse", "rejectit", "staynow", "holdback",
        "badplan", "costly", "divisive", "votenope", "notthis", "pushback",
        "wrongturn", "riskfall", "standno", "keepcalm",
    )
    relevant_neutral: tuple[str, ...] = (
        "undecided", "debate", "question", "listening", "weighing",
        "openmind", "midground", "unsure", "askmore", "bothsides",
        "thinking", "fencesit", "panelista", "mulling", "pondering", "tbdvote",
    )
    background: tuple[str, ...] = (
        "coffee", "football", "sunrise", "playlist", "recipe", "traffic",
        "weekend", "garden", "cinema", "novel", "workout", "market",
        "museum", "holiday", "puppy", "concert", "breakfast", "cycling",
        "painting", "chess", "picnic", "fishing", "sewing", "karaoke",
        "camping", "jogging", "baking", "stargazing", "surfing", "knitting",
    )

    def by_class(self) -> dict[str, tuple[str, ...]]:
        return {
            TRUE_POSITIVE: self.relevant_positive,
            TRUE_NEGATIVE: self.relevant_negative,
            TRUE_NEUTRAL: self.relevant_neutral,
            TRUE_BACKGROUND: self.background,
        }


@dataclass(frozen=True)
class SynthSpec:
    n_users: int = 1000
    bot_fraction: float = 0.1
    outlier_fraction: float = 0.1
    polarity_mix: tuple[float, float, float] = (0.35, 0.40, 0.25)
    lexicons: Lexicons = field(default_factory=Lexicons)
    tweets_per_user: tuple[int, int] = (12, 24)
    regions: tuple[RegionSpec, ...] = DEFAULT_REGIONS
    seed: int = 7

    def __post_init__(self):
        if self.n_users < 1:
            raise ValidationError("n_users must be positive")
        for name in ("bot_fraction", "outlier_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1)")
        if abs(sum(self.polarity_mix) - 1.0) > 1e-9:
            raise ValidationError("polarity_mix must sum to 1")
        if any(p < 0 for p in self.polarity_mix):
            raise ValidationError("polarity_mix entries must be non-negative")
        lex = self.lexicons.by_class()
        all_tokens = [t for tokens in lex.values() for t in tokens]
        if len(all_tokens) != len(set(all_tokens)):
            raise ValidationError("lexicon classes must be disjoint")
        lo, hi = self.tweets_per_user
        if not 1 <= lo <= hi:
            raise ValidationError("tweets_per_user must satisfy 1 <= low <= high")
        if any(r.weight <= 0 for r in self.regions):
            raise ValidationError("region weights must be positive")
        n_special = round(self.n_users * self.bot_fraction) + round(
            self.n_users * self.outlier_fraction
        )
        if n_special > self.n_users:
            raise ValidationError("bot_fraction + outlier_fraction exceed the user count")


@dataclass
class SynthResult:
    out_dir: Path
    paths: dict[str, Path]
    counts: dict[str, int]


def _largest_remainder(n: int, weights: list[float]) -> list[int]:
    total = sum(weights)
    quotas = [n * w / total for w in weights]
    counts = [int(q) for q in quotas]
    remainder = n - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: (counts[i] - quotas[i], i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def _assign(rng: np.random.Generator, n: int, values: list, weights: list[float]) -> list:
    assigned = []
    for value, count in zip(values, _largest_remainder(n, weights)):
        assigned.extend([value] * count)
    perm = rng.permutation(n)
    return [assigned[i] for i in perm]


def _isoformat(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


class _Writer:
    """Collects output files and remembers their paths by short key."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: dict[str, Path] = {}

    def open(self, key: str, filename: str):
        path = self.out_dir / filename
        self.paths[key] = path
        return open(path, "w", encoding="utf-8", newline="")


def generate(spec: SynthSpec, out_dir: str | Path) -> SynthResult:
    """Generate the corpus, fixtures and ground truth under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n = spec.n_users

    n_bots = round(n * spec.bot_fraction)
    n_outliers = round(n * spec.outlier_fraction)
    roles = _assign(
        rng, n, ["bot", "outlier", "human"], [n_bots, n_outliers, n - n_bots - n_outliers]
    )
    polarity = _assign(rng, n, ["positive", "negative", "neutral"], list(spec.polarity_mix))
    regions = _assign(rng, n, list(spec.regions), [r.weight for r in spec.regions])
    ethnicity = _assign(rng, n, sorted(_SURNAMES), [1.0] * len(_SURNAMES))
    gender = _assign(rng, n, ["female", "male"], [1.0, 1.0])

    name_conf = {
        name: round(float(c), 4)
        for name, c in zip(
            _FEMALE_NAMES + _MALE_NAMES, rng.uniform(0.85, 0.99, len(_FEMALE_NAMES) + len(_MALE_NAMES))
        )
    }
    lex = spec.lexicons.by_class()
    classes = (TRUE_POSITIVE, TRUE_NEGATIVE, TRUE_NEUTRAL)
    window_seconds = int((WINDOW_END - WINDOW_START).total_seconds())

    writer = _Writer(out)
    counts = {"users": n, "bots": n_bots, "outliers": n_outliers, "tweets": 0}
    labeled_pool: dict[str, list[str]] = {c: [] for c in (*classes, TRUE_BACKGROUND)}
    region_truth: dict[str, list[int]] = {}  # region -> [n_positive, n_negative] among humans

    users_f = writer.open("users", "users.jsonl")
    tweets_f = writer.open("tweets", "tweets.jsonl")
    scores_f = writer.open("bot_fixture", "bot_scores.jsonl")
    faces_f = writer.open("face_fixture", "face_fixture.jsonl")
    gt_users_f = writer.open("ground_truth_users", "ground_truth_users.csv")
    gt_tweets_f = writer.open("ground_truth_tweets", "ground_truth_tweets.csv")
    gt_users = csv.writer(gt_users_f, lineterminator="\n")
    gt_users.writerow([
        "user_id", "polarity", "is_bot", "is_outlier", "gender", "age_years",
        "age_bucket", "ethnicity", "region", "city", "country",
    ])
    gt_tweets = csv.writer(gt_tweets_f, lineterminator="\n")
    gt_tweets.writerow(["tweet_id", "user_id", "true_class"])

    tweet_serial = 0
    with users_f, tweets_f, scores_f, faces_f, gt_users_f, gt_tweets_f:
        for i in range(n):
            uid = f"u{i:06d}"
            role = roles[i]
            user_class = {"positive": TRUE_POSITIVE, "negative": TRUE_NEGATIVE, "neutral": TRUE_NEUTRAL}[polarity[i]]
            region = regions[i]
            first_pool = _FEMALE_NAMES if gender[i] == "female" else _MALE_NAMES
            first = first_pool[int(rng.integers(len(first_pool)))]
            surname = _SURNAMES[ethnicity[i]][int(rng.integers(len(_SURNAMES[ethnicity[i]])))]
            display_name = f"{first.title()} {surname.title()}"

            # Draw a posting rate and derive the account age from it, so
            # human normalized volumes stay near-uniform in [1, 3] posts
            # per month: the Tukey fence of a uniform sample sits half a
            # width above its maximum, keeping false outliers out, while
            # the 10x outlier accounts land far beyond it.
            n_tweets = int(rng.integers(spec.tweets_per_user[0], spec.tweets_per_user[1] + 1))
            rate_base = float(rng.uniform(1.0, 3.0))
            months = max(round(n_tweets / rate_base), 1)
            created_at = REFERENCE_TIME - timedelta(days=months * 30 + 15)
            if role == "outlier":
                n_tweets *= 10

            has_face = rng.random() < FACE_FRACTION
            age_years: int | None = None
            faces: list[dict] = []
            if has_face:
                kind = rng.random()
                if kind < 0.06:
                    faces = [_face_dict(rng, gender[i]), _face_dict(rng, gender[i])]
                elif kind < 0.10:
                    faces = []
                else:
                    age_years = int(rng.integers(16, 81))
                    faces = [_face_dict(rng, gender[i], age_years)]
            image_ref = f"img_{uid}.jpg" if has_face else None

            is_geo_user = rng.random() < GEO_USER_FRACTION
            location_text = None
            if not is_geo_user and rng.random() < PROFILE_TEXT_FRACTION:
                location_text = f"{region.city}, {COUNTRY}" if rng.random() < 0.5 else region.city

            users_f.write(json.dumps({
                "id": uid,
                "screen_name": f"{first}_{surname}_{i}",
                "name": display_name,
                "created_at": _isoformat(created_at),
                "location": location_text,
                "image_url": image_ref,
                "post_count": n_tweets,
            }) + "\n")

            score = rng.uniform(60.0, 95.0) if role == "bot" else rng.uniform(5.0, 30.0)
            scores_f.write(json.dumps({"user_id": uid, "score": round(float(score), 2)}) + "\n")
            if image_ref:
                faces_f.write(json.dumps({"image_ref": image_ref, "faces": faces}) + "\n")

            offsets = np.sort(rng.integers(0, window_seconds, n_tweets))
            if role == "bot":
                start = int(rng.integers(0, max(window_seconds - 3600 * n_tweets, 1)))
                offsets = start + 3600 * np.arange(n_tweets)
            for k in range(n_tweets):
                tweet_serial += 1
                tid = f"t{tweet_serial:08d}"
                ts = WINDOW_START + timedelta(seconds=int(offsets[k]))
                if role == "bot":
                    true_class = TRUE_BACKGROUND
                    retweet = bool(rng.random() < BOT_RETWEET_FRACTION)
                elif rng.random() < RELEVANT_FRACTION:
                    if rng.random() < OWN_LEXICON_TWEET:
                        true_class = user_class
                    else:
                        others = [c for c in classes if c != user_class]
                        true_class = others[int(rng.integers(2))]
                    retweet = False
                else:
                    true_class = TRUE_BACKGROUND
                    retweet = False
                text, hashtags = _tweet_text(rng, lex, true_class)
                record: dict = {
                    "id": tid,
                    "user_id": uid,
                    "created_at": _isoformat(ts),
                    "text": text,
                    "hashtags": hashtags,
                    "retweet": retweet,
                }
                if is_geo_user and rng.random() < GEO_TWEET_FRACTION:
                    record["lat"] = round(float(region.latitude + rng.uniform(-0.15, 0.15)), 5)
                    record["lon"] = round(float(region.longitude + rng.uniform(-0.15, 0.15)), 5)
                tweets_f.write(json.dumps(record) + "\n")
                gt_tweets.writerow([tid, uid, true_class])
                counts["tweets"] += 1
                if role == "human":
                    labeled_pool[true_class].append(text)

            gt_users.writerow([
                uid, polarity[i], int(role == "bot"), int(role == "outlier"), gender[i],
                age_years if age_years is not None else "",
                _bucket(age_years), ethnicity[i], region.name, region.city, COUNTRY,
            ])
            if role == "human":
                region_truth.setdefault(region.name, [0, 0])
                if polarity[i] == "positive":
                    region_truth[region.name][0] += 1
                elif polarity[i] == "negative":
                    region_truth[region.name][1] += 1

    _write_name_gender(writer, name_conf)
    _write_labeled_names(writer)
    _write_gazetteer(writer, spec.regions)
    counts["labeled_tweets"] = _write_labeled_tweets(writer, rng, labeled_pool)
    _write_official_results(writer, rng, spec.regions, region_truth)
    _write_config(writer)
    logger.info("synthetic corpus: %d users, %d tweets -> %s", n, counts["tweets"], out)
    return SynthResult(out_dir=out, paths=writer.paths, counts=counts)


def _bucket(age_years: int | None) -> str:
    if age_years is None:
        return "unknown"
    if age_years < 18:
        return "under18"
    if age_years <= 30:
        return "b18_30"
    if age_years <= 45:
        return "b31_45"
    if age_years <= 65:
        return "b46_65"
    return "over65"


def _face_dict(rng: np.random.Generator, gender: str, age: int | None = None) -> dict:
    return {
        "gender": gender,
        "age": age,
        "confidence": round(float(rng.uniform(0.80, 0.99)), 4),
    }


def _tweet_text(rng: np.random.Generator, lex: dict, true_class: str) -> tuple[str, list[str]]:
    vocab = lex[true_class]
    background = lex[TRUE_BACKGROUND]
    length = int(rng.integers(6, 12))
    tokens = []
    for _ in range(length):
        if true_class != TRUE_BACKGROUND and rng.random() < CLASS_TOKEN_FRACTION:
            tokens.append(vocab[int(rng.integers(len(vocab)))])
        else:
            tokens.append(background[int(rng.integers(len(background)))])
    if rng.random() < SHOUT_FRACTION:
        pick = int(rng.integers(len(tokens)))
        tokens[pick] = tokens[pick].upper() + "!!!"
    hashtags = []
    tag_p = HASHTAG_BACKGROUND if true_class == TRUE_BACKGROUND else HASHTAG_RELEVANT
    if rng.random() < tag_p:
        tokens.append(f"#{TOPIC_HASHTAG}")
        hashtags.append(TOPIC_HASHTAG)
    if rng.random() < URL_FRACTION:
        tokens.append(f"https://t.co/{int(rng.integers(1 << 30)):x}")
    return " ".join(tokens), hashtags


def _write_name_gender(writer: _Writer, name_conf: dict[str, float]) -> None:
    with writer.open("name_gender", "name_gender.csv") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["first_name", "gender", "confidence"])
        for name in _FEMALE_NAMES:
            out.writerow([name, "female", f"{name_conf[name]:.4f}"])
        for name in _MALE_NAMES:
            out.writerow([name, "male", f"{name_conf[name]:.4f}"])


def _write_labeled_names(writer: _Writer) -> None:
    with writer.open("labeled_names", "labeled_names.csv") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["name", "class"])
        for label in sorted(_SURNAMES):
            for surname in _SURNAMES[label]:
                out.writerow([surname, label])


def _write_gazetteer(writer: _Writer, regions: tuple[RegionSpec, ...]) -> None:
    with writer.open("gazetteer", "gazetteer.csv") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow([
            "name", "alternate_names", "country", "region", "city",
            "latitude", "longitude", "population",
        ])
        for r in regions:
            out.writerow([
                r.city, f"{r.city.lower()}|{r.city.lower()} city", COUNTRY, r.name, r.city,
                f"{r.latitude:.4f}", f"{r.longitude:.4f}", r.city_population,
            ])
            out.writerow([
                r.name, r.name.lower(), COUNTRY, r.name, "",
                f"{r.latitude + 1.0:.4f}", f"{r.longitude + 1.0:.4f}", r.region_population,
            ])
        out.writerow(["Synthland", "synthland republic", COUNTRY, "", "", "42.0", "6.0", "8000000"])


def _write_labeled_tweets(writer: _Writer, rng: np.random.Generator, pool: dict[str, list[str]]) -> int:
    targets = {
        "positive": (TRUE_POSITIVE, 600),
        "negative": (TRUE_NEGATIVE, 600),
        "neutral": (TRUE_NEUTRAL, 480),
        "non_relevant": (TRUE_BACKGROUND, 1200),
    }
    written = 0
    with writer.open("labeled_tweets", "labeled_tweets.jsonl") as handle:
        for label in ("positive", "negative", "neutral", "non_relevant"):
            true_class, target = targets[label]
            texts = pool[true_class]
            take = min(target, len(texts))
            for idx in rng.permutation(len(texts))[:take]:
                handle.write(json.dumps({"text": texts[int(idx)], "label": label}) + "\n")
                written += 1
    return written


def _write_official_results(
    writer: _Writer,
    rng: np.random.Generator,
    regions: tuple[RegionSpec, ...],
    region_truth: dict[str, list],
) -> None:
    with writer.open("official_results", "official_results.csv") as handle:
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(["location", "official_yes_pct", "turnout_pct"])
        total = [0, 0]
        for r in regions:
            n_pos, n_neg = region_truth.get(r.name, [0, 0])
            total[0] += n_pos
            total[1] += n_neg
            if n_pos + n_neg == 0:
                continue
            true_share = 100.0 * n_pos / (n_pos + n_neg)
            official = min(max(true_share + float(rng.uniform(-12.0, 12.0)), 1.0), 99.0)
            out.writerow([r.name, f"{official:.2f}", f"{rng.uniform(35.0, 65.0):.2f}"])
        if sum(total):
            share = 100.0 * total[0] / sum(total)
            official = min(max(share + float(rng.uniform(-12.0, 12.0)), 1.0), 99.0)
            out.writerow([COUNTRY, f"{official:.2f}", f"{rng.uniform(35.0, 65.0):.2f}"])


def _write_config(writer: _Writer) -> None:
    # Paths in the generated config are relative to the config file itself.
    lines = f"""\
paths:
  users: users.jsonl
  tweets: tweets.jsonl
  bot_fixture: bot_scores.jsonl
  face_fixture: face_fixture.jsonl
  name_gender_table: name_gender.csv
  labeled_names: labeled_names.csv
  gazetteer: gazetteer.csv
  labeled_tweets: labeled_tweets.jsonl
  official_results: official_results.csv
  stopwords: []
  output_dir: run
topic:
  keywords: [voteyes, novote, undecided]
  hashtags: [{TOPIC_HASHTAG}]
  tracked_user_ids: []
  window_start: "{_isoformat(WINDOW_START)}"
  window_end: "{_isoformat(WINDOW_END)}"
filtering:
  iqr_multiplier: 1.5
  bot_threshold: 40.0
  bot_backend: recorded_fixture
  fixture_miss_policy: error
  reference_time: "{_isoformat(REFERENCE_TIME)}"
embedding:
  dimension: 48
  window: 3
  negative_samples: 5
  epochs: 3
  initial_learning_rate: 0.025
  min_count: 5
  seed: 29
training:
  ratio: 0.8
  k_folds: 10
  regularization: 0.0001
  epochs: 50
  seed: 53
  relevance_per_class: 1000
  polarity_positive: 500
report:
  top_k: 5
  figures: true
sampling:
  n: null
  seed: 97
exclude_retweets: false
"""
    path = writer.out_dir / "config.yaml"
    writer.paths["config"] = path
    path.write_text(lines, encoding="utf-8")


def load_ground_truth_users(path: str | Path) -> dict[str, dict[str, str]]:
    """Read the per-user ground-truth CSV keyed by user_id."""
    with open(path, encoding="utf-8", newline="") as handle:
        return {row["user_id"]: row for row in csv.DictReader(handle)}
