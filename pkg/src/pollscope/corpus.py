"""Ingestion, topic matching and tokenization of archived social posts.

Input files are UTF-8, line-delimited JSON, one record per line. Malformed
lines are skipped and counted, never fatal; unreadable files are fatal.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from .errors import InputOutputError, ValidationError

logger = logging.getLogger(__name__)

TokenizedText = list[str]

_URL_PREFIXES = ("http://", "https://", "www.")


def parse_utc(value: str) -> datetime:
    """Parse an ISO-8601 timestamp, accepting a trailing 'Z', into UTC."""
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    screen_name: str
    display_name: str
    created_at: datetime
    profile_location_text: str | None = None
    profile_image_ref: str | None = None
    post_count: int = 0


@dataclass(frozen=True)
class Tweet:
    tweet_id: str
    user_id: str
    created_at: datetime
    text: str
    hashtags: tuple[str, ...] = ()
    geo: tuple[float, float] | None = None
    is_retweet: bool = False


@dataclass(frozen=True)
class TopicConfig:
    """Keywords/hashtags/accounts that define the tracked topic.

    Keywords and hashtags are stored case-folded; hashtags carry no '#'.
    """

    keywords: tuple[str, ...] = ()
    hashtags: tuple[str, ...] = ()
    tracked_user_ids: frozenset[str] = frozenset()
    window_start: datetime | None = None
    window_end: datetime | None = None

    def __post_init__(self):
        if not (self.keywords or self.hashtags or self.tracked_user_ids):
            raise ValidationError("topic config needs keywords, hashtags or tracked users")
        if self.window_start is None or self.window_end is None:
            raise ValidationError("topic config needs a collection window")
        if not self.window_start < self.window_end:
            raise ValidationError("collection window start must precede end")


@dataclass
class UserCatalog:
    """Profiles keyed by user_id, plus ingestion bookkeeping."""

    users: dict[str, UserProfile] = field(default_factory=dict)
    skipped: int = 0
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[UserProfile]:
        return iter(self.users.values())

    def __contains__(self, user_id: str) -> bool:
        return user_id in self.users

    def get(self, user_id: str) -> UserProfile | None:
        return self.users.get(user_id)


def _parse_user_line(line: str) -> UserProfile:
    obj = json.loads(line)
    user_id = str(obj["id"])
    if not user_id:
        raise ValueError("empty user id")
    post_count = int(obj.get("post_count", 0))
    if post_count < 0:
        raise ValueError("negative post_count")
    return UserProfile(
        user_id=user_id,
        screen_name=str(obj.get("screen_name", "")),
        display_name=str(obj.get("name", "")),
        created_at=parse_utc(obj["created_at"]),
        profile_location_text=obj.get("location") or None,
        profile_image_ref=obj.get("image_url") or None,
        post_count=post_count,
    )


def load_users(path: str | Path) -> UserCatalog:
    """Load a line-delimited user file into a catalog.

    Malformed lines are skipped and counted. A record whose user_id was
    already seen is rejected (the first record wins) and counted both as a
    duplicate and as skipped, so valid + skipped always equals line count.
    """
    catalog = UserCatalog()
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputOutputError(f"cannot read user file {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            try:
                profile = _parse_user_line(line)
            except (ValueError, KeyError, TypeError) as exc:
                catalog.skipped += 1
                logger.warning("%s:%d: skipping malformed user record (%s)", path, lineno, exc)
                continue
            if profile.user_id in catalog.users:
                catalog.skipped += 1
                catalog.duplicates += 1
                logger.warning("%s:%d: duplicate user_id %s rejected", path, lineno, profile.user_id)
                continue
            catalog.users[profile.user_id] = profile
    return catalog


def _parse_tweet_line(line: str) -> Tweet:
    obj = json.loads(line)
    tweet_id = str(obj["id"])
    user_id = str(obj["user_id"])
    if not tweet_id or not user_id:
        raise ValueError("empty id")
    geo = None
    lat, lon = obj.get("lat"), obj.get("lon")
    if lat is not None or lon is not None:
        if lat is None or lon is None:
            raise ValueError("geotag needs both lat and lon")
        lat, lon = float(lat), float(lon)
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ValueError(f"geotag out of range ({lat}, {lon})")
        geo = (lat, lon)
    hashtags = tuple(str(h).lstrip("#").casefold() for h in obj.get("hashtags", ()))
    return Tweet(
        tweet_id=tweet_id,
        user_id=user_id,
        created_at=parse_utc(obj["created_at"]),
        text=str(obj["text"]),
        hashtags=hashtags,
        geo=geo,
        is_retweet=bool(obj.get("retweet", False)),
    )


class TweetStream:
    """Single-pass iterator over a line-delimited tweet file.

    Records stream in file order and one at a time, so memory use does not
    grow with file size. ``skipped`` and ``yielded`` update live during
    iteration; they reset whenever a fresh iteration starts.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.skipped = 0
        self.yielded = 0
        if not self.path.is_file():
            raise InputOutputError(f"cannot read tweet file {path}")

    def __iter__(self) -> Iterator[Tweet]:
        self.skipped = 0
        self.yielded = 0
        try:
            handle = open(self.path, encoding="utf-8")
        except OSError as exc:
            raise InputOutputError(f"cannot read tweet file {self.path}: {exc}") from exc
        with handle:
            for lineno, line in enumerate(handle, start=1):
                try:
                    tweet = _parse_tweet_line(line)
                except (ValueError, KeyError, TypeError) as exc:
                    self.skipped += 1
                    logger.warning("%s:%d: skipping malformed tweet (%s)", self.path, lineno, exc)
                    continue
                self.yielded += 1
                yield tweet


def load_tweets(path: str | Path) -> TweetStream:
    """Open a tweet file for streaming iteration."""
    return TweetStream(path)


def match_topic(tweet: Tweet, config: TopicConfig) -> bool:
    """Decide whether a tweet belongs to the tracked topic.

    True iff the tweet falls inside the collection window (inclusive) and
    any config hashtag appears in its hashtags, any config keyword occurs
    as a case-folded substring of its text, or its author is tracked.
    """
    if not config.window_start <= tweet.created_at <= config.window_end:
        return False
    if tweet.user_id in config.tracked_user_ids:
        return True
    if any(h in tweet.hashtags for h in config.hashtags):
        return True
    folded = tweet.text.casefold()
    return any(k in folded for k in config.keywords)


def preprocess(text: str, stopwords: frozenset[str] | set[str] = frozenset()) -> TokenizedText:
    """Tokenize text for embedding and classification.

    Splits on whitespace, drops URL tokens (http://, https://, www.) before
    any character stripping, removes '#'/'@' prefixes but keeps the rest of
    the token, strips punctuation and special characters (anything not a
    Unicode letter or digit), case-folds, and drops stop words. The result
    may be empty. Idempotent on its own space-joined output.
    """
    tokens: TokenizedText = []
    for raw in text.split():
        folded = raw.casefold()
        if folded.startswith(_URL_PREFIXES):
            continue
        folded = folded.lstrip("#@")
        cleaned = "".join(ch for ch in folded if ch.isalnum())
        if not cleaned or cleaned in stopwords:
            continue
        tokens.append(cleaned)
    return tokens


def load_stopwords(paths: list[str | Path]) -> frozenset[str]:
    """Union case-folded stop words from one-word-per-line files."""
    words: set[str] = set()
    for path in paths:
        try:
            content = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputOutputError(f"cannot read stop-word file {path}: {exc}") from exc
        words.update(w.strip().casefold() for w in content.splitlines() if w.strip())
    return frozenset(words)
