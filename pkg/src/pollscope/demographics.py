"""Demographic extraction: gender, age, ethnicity and home location.

Every extractor records the provenance of its answer. External services
are replaced by offline stand-ins: a record/replay face-analysis client,
a first-name gender table, a character-n-gram name classifier and a local
gazetteer file.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Tweet, UserProfile
from .errors import InputOutputError, ValidationError

logger = logging.getLogger(__name__)

GENDER_UNKNOWN = "unknown"
SOURCE_FACE = "face_service"
SOURCE_NAME = "name_table"
SOURCE_NONE = "none"
SOURCE_GEO = "geo_majority"
SOURCE_PROFILE = "profile_text"

AGE_BUCKETS = ("under18", "b18_30", "b31_45", "b46_65", "over65", "unknown")

_EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GenderResult:
    value: str  # male | female | unknown
    source: str  # face_service | name_table | none
    confidence: float


@dataclass(frozen=True)
class AgeResult:
    years: int | None
    bucket: str


@dataclass(frozen=True)
class EthnicityResult:
    label: str
    confidence: float
    path: tuple[str, ...]


@dataclass(frozen=True)
class LocationResult:
    country: str | None = None
    region: str | None = None
    city: str | None = None
    source: str = SOURCE_NONE
    supporting_count: int = 0


@dataclass(frozen=True)
class Face:
    gender: str | None
    age: int | None
    confidence: float


def age_bucket(years: int) -> str:
    """Bucket a face-estimated age: <18, 18-30, 31-45, 46-65, >65."""
    if years < 18:
        return "under18"
    if years <= 30:
        return "b18_30"
    if years <= 45:
        return "b31_45"
    if years <= 65:
        return "b46_65"
    return "over65"


class RecordedFaceClient:
    """Replays face-analysis responses recorded per image reference.

    Fixture format: one JSON object per line with keys ``image_ref`` and
    ``faces`` (list of {gender, age, confidence}). An image with no record
    behaves like a transport failure: the caller gets no result.
    """

    def __init__(self, records: dict[str, tuple[Face, ...]]):
        self.records = records

    @classmethod
    def load(cls, path: str | Path) -> "RecordedFaceClient":
        records: dict[str, tuple[Face, ...]] = {}
        try:
            handle = open(path, encoding="utf-8")
        except OSError as exc:
            raise InputOutputError(f"cannot read face fixture {path}: {exc}") from exc
        with handle:
            for lineno, line in enumerate(handle, start=1):
                try:
                    obj = json.loads(line)
                    faces = tuple(
                        Face(
                            gender=f.get("gender"),
                            age=int(f["age"]) if f.get("age") is not None else None,
                            confidence=float(f.get("confidence", 0.0)),
                        )
                        for f in obj["faces"]
                    )
                    records[str(obj["image_ref"])] = faces
                except (ValueError, KeyError, TypeError) as exc:
                    raise InputOutputError(f"{path}:{lineno}: bad face record ({exc})") from exc
        return cls(records)

    def analyze(self, image_ref: str) -> tuple[Face, ...] | None:
        return self.records.get(image_ref)


def load_name_gender_table(path: str | Path) -> dict[str, tuple[str, float]]:
    """Load a CSV of (first_name, gender, confidence) keyed by folded name."""
    table: dict[str, tuple[str, float]] = {}
    try:
        handle = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputOutputError(f"cannot read name-gender table {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        for row in reader:
            try:
                table[row["first_name"].casefold()] = (row["gender"], float(row["confidence"]))
            except (KeyError, ValueError, TypeError, AttributeError) as exc:
                raise InputOutputError(f"{path}: bad name-gender row {row} ({exc})") from exc
    return table


def _single_face(faces: tuple[Face, ...] | None) -> Face | None:
    if faces is not None and len(faces) == 1:
        return faces[0]
    return None


def extract_gender(
    profile: UserProfile,
    face_client: RecordedFaceClient | None,
    name_table: dict[str, tuple[str, float]],
) -> GenderResult:
    """Gender from the profile image if exactly one face carries one,
    otherwise from the first name, otherwise unknown.

    Face-client failures are logged and treated as "no face result"; they
    never abort the pipeline. The two sources never mix: the first one
    that answers is the recorded provenance.
    """
    if profile.profile_image_ref and face_client is not None:
        try:
            faces = face_client.analyze(profile.profile_image_ref)
        except Exception as exc:  # transport failure: fall through to names
            logger.warning("face client failed for %s: %s", profile.user_id, exc)
            faces = None
        face = _single_face(faces)
        if face is not None and face.gender:
            return GenderResult(face.gender, SOURCE_FACE, face.confidence)
    first = profile.display_name.split()[0].casefold() if profile.display_name.split() else ""
    entry = name_table.get(first)
    if entry is not None:
        return GenderResult(entry[0], SOURCE_NAME, entry[1])
    return GenderResult(GENDER_UNKNOWN, SOURCE_NONE, 0.0)


def extract_age(profile: UserProfile, face_client: RecordedFaceClient | None) -> AgeResult:
    """Age from a single-face image; there is no name fallback for age."""
    if profile.profile_image_ref and face_client is not None:
        try:
            faces = face_client.analyze(profile.profile_image_ref)
        except Exception as exc:
            logger.warning("face client failed for %s: %s", profile.user_id, exc)
            faces = None
        face = _single_face(faces)
        if face is not None and face.age is not None:
            return AgeResult(face.age, age_bucket(face.age))
    return AgeResult(None, "unknown")


# --- name-ethnicity classifier -------------------------------------------


@dataclass
class NameEthnicityModel:
    """Multinomial model over padded character n-grams of names.

    Hierarchical label sets are written as '/'-separated paths
    ("europe/italian"); flat labels yield single-element paths.
    """

    ngram_order: int
    class_labels: list[str]
    log_priors: dict[str, float]
    log_likelihoods: dict[str, dict[str, float]]
    smoothing: float
    vocabulary: frozenset[str] = field(default_factory=frozenset)


def _name_ngrams(name: str, order: int) -> list[str]:
    padded = "^" * (order - 1) + name.casefold() + "$" * (order - 1)
    if len(padded) < order:
        return []
    return [padded[i : i + order] for i in range(len(padded) - order + 1)]


def train_name_classifier(
    labeled_names: Iterable[tuple[str, str]],
    ngram_order: int = 3,
    smoothing: float = 1.0,
) -> NameEthnicityModel:
    """Fit the n-gram model with additive smoothing.

    Order of the training examples does not matter: only per-class n-gram
    counts and class frequencies enter the model.
    """
    if smoothing <= 0:
        raise ValidationError("smoothing must be positive")
    class_examples: Counter[str] = Counter()
    gram_counts: dict[str, Counter[str]] = {}
    for name, label in labeled_names:
        class_examples[label] += 1
        gram_counts.setdefault(label, Counter()).update(_name_ngrams(name, ngram_order))
    if len(class_examples) < 2:
        raise ValidationError("need at least two classes to train the name classifier")
    vocabulary = frozenset(g for counts in gram_counts.values() for g in counts)
    total_examples = sum(class_examples.values())
    labels = sorted(class_examples)
    log_priors = {c: math.log(class_examples[c] / total_examples) for c in labels}
    log_likelihoods: dict[str, dict[str, float]] = {}
    for c in labels:
        counts = gram_counts[c]
        denom = sum(counts.values()) + smoothing * len(vocabulary)
        log_likelihoods[c] = {g: math.log((counts[g] + smoothing) / denom) for g in vocabulary}
    return NameEthnicityModel(
        ngram_order=ngram_order,
        class_labels=labels,
        log_priors=log_priors,
        log_likelihoods=log_likelihoods,
        smoothing=smoothing,
        vocabulary=vocabulary,
    )


def classify_ethnicity(name: str, model: NameEthnicityModel) -> EthnicityResult:
    """Posterior argmax over class labels; ties go to the smaller label.

    N-grams never seen in training are ignored, so a fully unseen name
    falls back to the prior. An empty name yields an unassigned result.
    """
    if not name.strip():
        return EthnicityResult(label="", confidence=0.0, path=())
    grams = [g for g in _name_ngrams(name, model.ngram_order) if g in model.vocabulary]
    scores = {
        c: model.log_priors[c] + sum(model.log_likelihoods[c][g] for g in grams)
        for c in model.class_labels
    }
    peak = max(scores.values())
    total = sum(math.exp(s - peak) for s in scores.values())
    best = None
    for c in model.class_labels:  # sorted, so ties resolve lexicographically
        if best is None or scores[c] > scores[best]:
            best = c
    confidence = math.exp(scores[best] - peak) / total
    return EthnicityResult(label=best, confidence=confidence, path=tuple(best.split("/")))


def load_labeled_names(path: str | Path) -> list[tuple[str, str]]:
    """Load (name, class) training rows from a CSV with a header."""
    rows: list[tuple[str, str]] = []
    try:
        handle = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputOutputError(f"cannot read labeled-names file {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        for row in reader:
            if not row.get("name") or not row.get("class"):
                raise InputOutputError(f"{path}: labeled-names row missing name/class: {row}")
            rows.append((row["name"], row["class"]))
    return rows


# --- gazetteer and location resolution ------------------------------------


def normalize_place(text: str) -> str:
    """Case-fold and replace punctuation with spaces, collapsing runs."""
    folded = text.casefold()
    cleaned = "".join(ch if ch.isalnum() or ch.isspace() else " " for ch in folded)
    return " ".join(cleaned.split())


@dataclass(frozen=True)
class GazetteerEntry:
    name: str
    alternates: tuple[str, ...]
    country: str
    region: str | None
    city: str | None
    latitude: float
    longitude: float
    population: int

    def place(self) -> tuple[str, str | None, str | None]:
        return (self.country, self.region, self.city)


class Gazetteer:
    """Offline place-name and coordinate lookup over a CSV table."""

    def __init__(self, entries: Sequence[GazetteerEntry]):
        self.entries = list(entries)
        self._by_name: dict[str, list[GazetteerEntry]] = {}
        for entry in self.entries:
            for surface in (entry.name, *entry.alternates):
                key = normalize_place(surface)
                if key:
                    self._by_name.setdefault(key, []).append(entry)
        self._lat = np.radians(np.array([e.latitude for e in self.entries]))
        self._lon = np.radians(np.array([e.longitude for e in self.entries]))

    @classmethod
    def load(cls, path: str | Path) -> "Gazetteer":
        entries: list[GazetteerEntry] = []
        try:
            handle = open(path, encoding="utf-8", newline="")
        except OSError as exc:
            raise InputOutputError(f"cannot read gazetteer {path}: {exc}") from exc
        with handle:
            reader = csv.DictReader(handle)
            for row in reader:
                try:
                    city = row["city"] or None
                    region = row["region"] or None
                    if city and not region:
                        raise ValueError("city-level entry lacks a region")
                    entries.append(
                        GazetteerEntry(
                            name=row["name"],
                            alternates=tuple(a for a in row["alternate_names"].split("|") if a),
                            country=row["country"],
                            region=region,
                            city=city,
                            latitude=float(row["latitude"]),
                            longitude=float(row["longitude"]),
                            population=int(row["population"]),
                        )
                    )
                except (KeyError, ValueError, TypeError) as exc:
                    raise InputOutputError(f"{path}: bad gazetteer row {row} ({exc})") from exc
        return cls(entries)

    def lookup_text(self, text: str) -> GazetteerEntry | None:
        """Resolve free location text to the best-matching entry.

        Tries the whole normalized text first, then each comma-separated
        component left to right ("Milano, Italia" resolves via "milano").
        Among entries matching one key, the most populous wins.
        """
        if not text or not text.strip():
            return None
        keys = [normalize_place(text)]
        keys.extend(normalize_place(part) for part in text.split(","))
        for key in keys:
            candidates = self._by_name.get(key)
            if candidates:
                return max(candidates, key=lambda e: e.population)
        return None

    def nearest(self, latitude: float, longitude: float, max_km: float = 50.0) -> GazetteerEntry | None:
        """Closest entry by great-circle distance, or None beyond max_km."""
        if not self.entries:
            return None
        lat = math.radians(latitude)
        lon = math.radians(longitude)
        dlat = self._lat - lat
        dlon = self._lon - lon
        a = np.sin(dlat / 2.0) ** 2 + math.cos(lat) * np.cos(self._lat) * np.sin(dlon / 2.0) ** 2
        dist = 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))
        idx = int(np.argmin(dist))
        if dist[idx] > max_km:
            return None
        return self.entries[idx]


def gazetteer_lookup(text: str, gazetteer: Gazetteer) -> tuple[str, str | None, str | None] | None:
    """Free-text place lookup returning (country, region, city), or None."""
    entry = gazetteer.lookup_text(text)
    return entry.place() if entry else None


def resolve_location(
    user: UserProfile,
    user_tweets: Sequence[Tweet],
    gazetteer: Gazetteer,
    radius_km: float = 50.0,
) -> LocationResult:
    """Home location by majority vote over geotagged tweets, else profile text.

    Each geotag maps to the nearest gazetteer entry within ``radius_km``
    (no entry means no vote). Votes are counted at city level first; ties
    escalate to region level, then country level, and a residual tie is
    broken by the most recent geotagged tweet's resolved place.
    """
    votes: list[tuple[Tweet, tuple[str, str | None, str | None]]] = []
    for tweet in sorted((t for t in user_tweets if t.geo), key=lambda t: t.created_at):
        entry = gazetteer.nearest(tweet.geo[0], tweet.geo[1], max_km=radius_km)
        if entry is not None:
            votes.append((tweet, entry.place()))
    if votes:
        return _majority_location(votes)
    if user.profile_location_text:
        entry = gazetteer.lookup_text(user.profile_location_text)
        if entry is not None:
            country, region, city = entry.place()
            return LocationResult(country, region, city, SOURCE_PROFILE, 0)
    return LocationResult()


def _majority_location(
    votes: list[tuple[Tweet, tuple[str, str | None, str | None]]],
) -> LocationResult:
    levels = (
        lambda p: p,  # (country, region, city)
        lambda p: (p[0], p[1], None),
        lambda p: (p[0], None, None),
    )
    for project in levels:
        counts = Counter(project(place) for _, place in votes)
        top = counts.most_common()
        if len(top) == 1 or top[0][1] > top[1][1]:
            (country, region, city), n = top[0]
            return LocationResult(country, region, city, SOURCE_GEO, n)
    # full three-way deadlock: fall back to the most recent tweet's place
    _, place = votes[-1]
    city_counts = Counter(p for _, p in votes)
    return LocationResult(place[0], place[1], place[2], SOURCE_GEO, city_counts[place])


# --- per-user assembly ------------------------------------------------------


@dataclass(frozen=True)
class DemographicRecord:
    user_id: str
    gender: GenderResult
    age: AgeResult
    ethnicity: EthnicityResult | None
    location: LocationResult


def extract_record(
    profile: UserProfile,
    user_tweets: Sequence[Tweet],
    face_client: RecordedFaceClient | None,
    name_table: dict[str, tuple[str, float]],
    ethnicity_model: NameEthnicityModel | None,
    gazetteer: Gazetteer,
    radius_km: float = 50.0,
) -> DemographicRecord:
    """Run every extractor for one user."""
    ethnicity = None
    if ethnicity_model is not None:
        ethnicity = classify_ethnicity(profile.display_name, ethnicity_model)
    return DemographicRecord(
        user_id=profile.user_id,
        gender=extract_gender(profile, face_client, name_table),
        age=extract_age(profile, face_client),
        ethnicity=ethnicity,
        location=resolve_location(profile, user_tweets, gazetteer, radius_km),
    )


DEMOGRAPHICS_CSV_HEADER = [
    "user_id",
    "gender",
    "gender_source",
    "gender_confidence",
    "age_years",
    "age_bucket",
    "ethnicity",
    "ethnicity_confidence",
    "country",
    "region",
    "city",
    "location_source",
    "location_supporting_count",
]


def write_demographics_csv(path: str | Path, records: Iterable[DemographicRecord]) -> None:
    try:
        handle = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputOutputError(f"cannot write demographics file {path}: {exc}") from exc
    with handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(DEMOGRAPHICS_CSV_HEADER)
        for r in records:
            eth = r.ethnicity
            writer.writerow([
                r.user_id,
                r.gender.value,
                r.gender.source,
                f"{r.gender.confidence:.4f}",
                r.age.years if r.age.years is not None else "",
                r.age.bucket,
                eth.label if eth and eth.label else "",
                f"{eth.confidence:.4f}" if eth and eth.label else "",
                r.location.country or "",
                r.location.region or "",
                r.location.city or "",
                r.location.source,
                r.location.supporting_count,
            ])
