import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from pollscope.corpus import Tweet, UserProfile


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


REFERENCE = utc(2017, 10, 2)


def make_user(user_id="u1", months=12, post_count=100, **overrides) -> UserProfile:
    fields = {
        "user_id": user_id,
        "screen_name": user_id,
        "display_name": "Maria Rossi",
        "created_at": REFERENCE - timedelta(days=months * 30 + 5),
        "profile_location_text": None,
        "profile_image_ref": None,
        "post_count": post_count,
    }
    fields.update(overrides)
    return UserProfile(**fields)


def make_tweet(tweet_id="t1", user_id="u1", text="hello world", **overrides) -> Tweet:
    fields = {
        "tweet_id": tweet_id,
        "user_id": user_id,
        "created_at": utc(2017, 8, 15, 12, 0, 0),
        "text": text,
        "hashtags": (),
        "geo": None,
        "is_retweet": False,
    }
    fields.update(overrides)
    return Tweet(**fields)


def write_jsonl(path: Path, records) -> Path:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
    return path


@pytest.fixture
def tweet_record():
    def build(tweet_id="t1", user_id="u1", **overrides):
        record = {
            "id": tweet_id,
            "user_id": user_id,
            "created_at": "2017-08-15T12:00:00Z",
            "text": "hello world",
            "hashtags": [],
            "retweet": False,
        }
        record.update(overrides)
        return record

    return build


@pytest.fixture
def user_record():
    def build(user_id="u1", **overrides):
        record = {
            "id": user_id,
            "screen_name": user_id,
            "name": "Maria Rossi",
            "created_at": "2016-01-01T00:00:00Z",
            "post_count": 10,
        }
        record.update(overrides)
        return record

    return build
