"""Two-step user filtering: activity-rate outlier removal, then bot removal.

Outliers are users whose account-age-normalized post volume exceeds the
upper IQR fence computed over the whole catalog. Bot scores come from a
pluggable backend: a recorded fixture (replay of an external scoring
service) or a clearly-non-faithful local heuristic.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Tweet, UserProfile
from .errors import InputOutputError, ValidationError

logger = logging.getLogger(__name__)

KEPT = "kept"
OUTLIER_REMOVED = "outlier_removed"
BOT_REMOVED = "bot_removed"

BACKEND_FIXTURE = "recorded_fixture"
BACKEND_HEURISTIC = "local_heuristic"


@dataclass(frozen=True)
class ActivityRate:
    user_id: str
    normalized_volume: float


@dataclass(frozen=True)
class IqrBounds:
    q1: float
    q3: float
    upper: float
    multiplier: float


@dataclass(frozen=True)
class BotScore:
    user_id: str
    score: float
    backend: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 100.0:
            raise ValidationError(f"bot score {self.score} outside [0, 100]")


@dataclass(frozen=True)
class FilterVerdict:
    user_id: str
    stage: str
    rate: ActivityRate | None = None
    bot: BotScore | None = None

    def __post_init__(self):
        if self.stage == OUTLIER_REMOVED and self.rate is None:
            raise ValidationError("outlier verdict must carry the activity rate")
        if self.stage == BOT_REMOVED and self.bot is None:
            raise ValidationError("bot verdict must carry the bot score")


def account_age_months(created_at: datetime, reference_time: datetime) -> int:
    """Whole 30-day months between account creation and the reference time."""
    if created_at > reference_time:
        raise ValidationError(f"created_at {created_at} is after reference time {reference_time}")
    return (reference_time - created_at).days // 30


def activity_rate(user: UserProfile, reference_time: datetime) -> ActivityRate:
    """Posts per account-month, with the age floored at one month."""
    months = max(account_age_months(user.created_at, reference_time), 1)
    return ActivityRate(user.user_id, user.post_count / months)


def _percentile(ordered: Sequence[float], fraction: float) -> float:
    # Linear interpolation between order statistics over a pre-sorted list.
    h = (len(ordered) - 1) * fraction
    lo = math.floor(h)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (h - lo) * (ordered[hi] - ordered[lo])


def iqr_bounds(values: Iterable[float], multiplier: float = 1.5) -> IqrBounds:
    """Quartiles and the upper Tukey fence q3 + multiplier * (q3 - q1)."""
    if multiplier <= 0:
        raise ValidationError("IQR multiplier must be positive")
    ordered = sorted(values)
    if not ordered:
        raise ValidationError("cannot compute quartiles of an empty multiset")
    q1 = _percentile(ordered, 0.25)
    q3 = _percentile(ordered, 0.75)
    return IqrBounds(q1=q1, q3=q3, upper=q3 + multiplier * (q3 - q1), multiplier=multiplier)


def filter_outliers(
    users: Iterable[UserProfile],
    reference_time: datetime,
    multiplier: float = 1.5,
) -> tuple[list[UserProfile], list[FilterVerdict], IqrBounds]:
    """Split a catalog into kept users and outlier verdicts.

    The fence is computed over all users' normalized volumes; a user is
    removed iff their volume is strictly greater than the upper bound.
    """
    users = list(users)
    if not users:
        raise ValidationError("cannot filter an empty catalog")
    rates = [activity_rate(u, reference_time) for u in users]
    bounds = iqr_bounds((r.normalized_volume for r in rates), multiplier)
    kept: list[UserProfile] = []
    removed: list[FilterVerdict] = []
    for user, rate in zip(users, rates):
        if rate.normalized_volume > bounds.upper:
            removed.append(FilterVerdict(user.user_id, OUTLIER_REMOVED, rate=rate))
        else:
            kept.append(user)
    return kept, removed, bounds


class FixtureScorer:
    """Replays bot scores recorded in a line-delimited fixture file."""

    backend = BACKEND_FIXTURE

    def __init__(self, scores: dict[str, float]):
        self.scores = scores

    @classmethod
    def load(cls, path: str | Path) -> "FixtureScorer":
        scores: dict[str, float] = {}
        try:
            handle = open(path, encoding="utf-8")
        except OSError as exc:
            raise InputOutputError(f"cannot read bot-score fixture {path}: {exc}") from exc
        with handle:
            for lineno, line in enumerate(handle, start=1):
                try:
                    obj = json.loads(line)
                    scores[str(obj["user_id"])] = float(obj["score"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise InputOutputError(f"{path}:{lineno}: bad fixture record ({exc})") from exc
        return cls(scores)

    def score(self, user: UserProfile, tweets: Sequence[Tweet]) -> float | None:
        return self.scores.get(user.user_id)


class HeuristicScorer:
    """Deterministic 0-100 score from language-independent signals only.

    Not a faithful stand-in for any external scoring service; it exists so
    the pipeline can run end to end without recorded fixtures. The score is

        100 * (0.45 * interval_regularity + 0.35 * retweet_ratio
               + 0.20 * profile_incompleteness)

    where interval_regularity is 1 minus the coefficient of variation of
    the gaps between consecutive posts (clamped to [0, 1], and 0.5 when
    fewer than two gaps exist), retweet_ratio is the fraction of retweets,
    and profile_incompleteness is the fraction of the optional profile
    fields (location text, profile image) that are missing. A user with no
    tweets has no behavioral evidence and scores exactly 50.
    """

    backend = BACKEND_HEURISTIC

    def score(self, user: UserProfile, tweets: Sequence[Tweet]) -> float:
        if not tweets:
            return 50.0
        times = sorted(t.created_at for t in tweets)
        gaps = [(b - a).total_seconds() for a, b in zip(times, times[1:])]
        if len(gaps) < 2:
            regularity = 0.5
        else:
            mean = statistics.fmean(gaps)
            if mean == 0.0:
                regularity = 1.0  # burst posting is maximally regular
            else:
                cv = statistics.pstdev(gaps) / mean
                regularity = 1.0 - min(cv, 1.0)
        retweet_ratio = sum(1 for t in tweets if t.is_retweet) / len(tweets)
        missing = (user.profile_location_text is None) + (user.profile_image_ref is None)
        incompleteness = missing / 2.0
        raw = 100.0 * (0.45 * regularity + 0.35 * retweet_ratio + 0.20 * incompleteness)
        return min(max(raw, 0.0), 100.0)


def score_bot(
    user: UserProfile,
    tweets: Sequence[Tweet],
    scorer,
    on_miss: str = "error",
) -> BotScore:
    """Score one user with the configured backend.

    ``on_miss`` applies to fixture backends that return None for unknown
    users: 'error' raises, 'heuristic' falls back to the local heuristic.
    """
    value = scorer.score(user, tweets)
    if value is None:
        if on_miss == "heuristic":
            fallback = HeuristicScorer()
            return BotScore(user.user_id, fallback.score(user, tweets), fallback.backend)
        raise ValidationError(f"no recorded bot score for user {user.user_id}")
    return BotScore(user.user_id, float(value), scorer.backend)


def filter_bots(
    users: Iterable[UserProfile],
    scores: dict[str, BotScore],
    threshold: float = 40.0,
) -> tuple[list[UserProfile], list[FilterVerdict]]:
    """Split users into humans and bot verdicts; removal needs score > threshold."""
    users = list(users)
    missing = sorted(u.user_id for u in users if u.user_id not in scores)
    if missing:
        raise ValidationError(f"missing bot scores for users: {', '.join(missing)}")
    humans: list[UserProfile] = []
    removed: list[FilterVerdict] = []
    for user in users:
        bot = scores[user.user_id]
        if bot.score > threshold:
            removed.append(FilterVerdict(user.user_id, BOT_REMOVED, bot=bot))
        else:
            humans.append(user)
    return humans, removed


def write_verdicts_csv(path: str | Path, verdicts: Iterable[FilterVerdict]) -> None:
    """Export verdicts with the scores/rates that justified each decision."""
    try:
        handle = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputOutputError(f"cannot write verdict file {path}: {exc}") from exc
    with handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["user_id", "stage", "normalized_volume", "bot_score", "backend"])
        for v in verdicts:
            writer.writerow([
                v.user_id,
                v.stage,
                f"{v.rate.normalized_volume:.6f}" if v.rate else "",
                f"{v.bot.score:.2f}" if v.bot else "",
                v.bot.backend if v.bot else "",
            ])
