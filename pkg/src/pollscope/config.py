"""Pipeline configuration: one YAML file with per-stage sections.

Relative paths are resolved against the directory holding the config
file. Validation collects every violation before failing, so a bad config
reports all its problems at once. Every constant the pipeline relies on
(bot threshold 40, 80/20 split, 10 folds, top-5 categories, IQR
multiplier 1.5) lives here as a default, never hardcoded in stage code.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import yaml

from .corpus import TopicConfig, parse_utc
from .embedding import EmbeddingParams
from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

BACKENDS = ("recorded_fixture", "local_heuristic")
MISS_POLICIES = ("error", "heuristic")
REPORT_FORMATS = ("csv", "structured_text")


@dataclass
class PathsConfig:
    users: Path | None = None
    tweets: Path | None = None
    bot_fixture: Path | None = None
    face_fixture: Path | None = None
    name_gender_table: Path | None = None
    labeled_names: Path | None = None
    gazetteer: Path | None = None
    labeled_tweets: Path | None = None
    official_results: Path | None = None
    stopwords: list[Path] = field(default_factory=list)
    output_dir: Path = Path("out")


@dataclass
class FilteringConfig:
    iqr_multiplier: float = 1.5
    bot_threshold: float = 40.0
    bot_backend: str = "recorded_fixture"
    fixture_miss_policy: str = "error"
    reference_time: datetime | None = None  # defaults to the topic window end


@dataclass
class TrainingConfig:
    ratio: float = 0.8
    k_folds: int = 10
    regularization: float = 1e-4
    epochs: int = 50
    seed: int = 0
    relevance_per_class: int = 1000
    polarity_positive: int = 500


@dataclass
class ReportConfig:
    top_k: int = 5
    figures: bool = True
    format: str = "csv"


@dataclass
class SamplingConfig:
    n: int | None = None
    seed: int = 0


@dataclass
class PipelineConfig:
    paths: PathsConfig
    topic: TopicConfig
    filtering: FilteringConfig
    embedding: EmbeddingParams
    training: TrainingConfig
    report: ReportConfig
    sampling: SamplingConfig
    exclude_retweets: bool = False
    source: Path | None = None
    snapshot: dict = field(default_factory=dict)

    def override_output(self, output_dir: str | Path) -> None:
        self.paths.output_dir = Path(output_dir)

    def override_seed(self, seed: int) -> None:
        """Apply one global seed to every seeded stage."""
        self.embedding = EmbeddingParams(
            **{**_params_dict(self.embedding), "seed": seed}
        )
        self.training.seed = seed
        self.sampling.seed = seed


def _params_dict(params: EmbeddingParams) -> dict:
    return {
        "dimension": params.dimension,
        "window": params.window,
        "negative_samples": params.negative_samples,
        "epochs": params.epochs,
        "initial_learning_rate": params.initial_learning_rate,
        "min_count": params.min_count,
        "seed": params.seed,
    }


def _resolve(base: Path, value) -> Path:
    path = Path(str(value))
    return path if path.is_absolute() else base / path


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a pipeline config file."""
    config_path = Path(path)
    try:
        raw = yaml.safe_load(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")

    base = config_path.parent
    violations: list[str] = []

    def section(name: str) -> dict:
        value = raw.get(name) or {}
        if not isinstance(value, dict):
            violations.append(f"section '{name}' must be a mapping")
            return {}
        return value

    paths_raw = section("paths")
    paths = PathsConfig()
    for key in (
        "users", "tweets", "bot_fixture", "face_fixture", "name_gender_table",
        "labeled_names", "gazetteer", "labeled_tweets", "official_results",
    ):
        if paths_raw.get(key):
            resolved = _resolve(base, paths_raw[key])
            if not resolved.exists():
                violations.append(f"paths.{key}: {resolved} does not exist")
            setattr(paths, key, resolved)
    for entry in paths_raw.get("stopwords") or []:
        resolved = _resolve(base, entry)
        if not resolved.exists():
            violations.append(f"paths.stopwords: {resolved} does not exist")
        paths.stopwords.append(resolved)
    paths.output_dir = _resolve(base, paths_raw.get("output_dir", "out"))

    topic_raw = section("topic")
    topic = None
    try:
        start = parse_utc(str(topic_raw["window_start"])) if "window_start" in topic_raw else None
        end = parse_utc(str(topic_raw["window_end"])) if "window_end" in topic_raw else None
        topic = TopicConfig(
            keywords=tuple(str(k).casefold() for k in topic_raw.get("keywords") or ()),
            hashtags=tuple(str(h).lstrip("#").casefold() for h in topic_raw.get("hashtags") or ()),
            tracked_user_ids=frozenset(str(u) for u in topic_raw.get("tracked_user_ids") or ()),
            window_start=start,
            window_end=end,
        )
    except (ValidationError, ValueError, KeyError) as exc:
        violations.append(f"topic: {exc}")

    filtering_raw = section("filtering")
    filtering = FilteringConfig()
    filtering.iqr_multiplier = float(filtering_raw.get("iqr_multiplier", filtering.iqr_multiplier))
    filtering.bot_threshold = float(filtering_raw.get("bot_threshold", filtering.bot_threshold))
    filtering.bot_backend = str(filtering_raw.get("bot_backend", filtering.bot_backend))
    filtering.fixture_miss_policy = str(
        filtering_raw.get("fixture_miss_policy", filtering.fixture_miss_policy)
    )
    if filtering.iqr_multiplier <= 0:
        violations.append("filtering.iqr_multiplier must be positive")
    if not 0.0 <= filtering.bot_threshold <= 100.0:
        violations.append("filtering.bot_threshold must lie in [0, 100]")
    if filtering.bot_backend not in BACKENDS:
        violations.append(f"filtering.bot_backend must be one of {BACKENDS}")
    if filtering.fixture_miss_policy not in MISS_POLICIES:
        violations.append(f"filtering.fixture_miss_policy must be one of {MISS_POLICIES}")
    if "reference_time" in filtering_raw:
        try:
            filtering.reference_time = parse_utc(str(filtering_raw["reference_time"]))
        except ValueError as exc:
            violations.append(f"filtering.reference_time: {exc}")
    elif topic is not None:
        filtering.reference_time = topic.window_end

    embedding_raw = section("embedding")
    embedding = None
    try:
        defaults = _params_dict(EmbeddingParams())
        defaults.update({k: v for k, v in embedding_raw.items() if k in defaults})
        embedding = EmbeddingParams(**defaults)
    except (ValidationError, TypeError, ValueError) as exc:
        violations.append(f"embedding: {exc}")

    training_raw = section("training")
    training = TrainingConfig()
    for key in ("ratio", "regularization"):
        if key in training_raw:
            setattr(training, key, float(training_raw[key]))
    for key in ("k_folds", "epochs", "seed", "relevance_per_class", "polarity_positive"):
        if key in training_raw:
            setattr(training, key, int(training_raw[key]))
    if not 0.0 < training.ratio < 1.0:
        violations.append("training.ratio must lie strictly between 0 and 1")
    if training.k_folds < 2:
        violations.append("training.k_folds must be at least 2")
    if training.regularization <= 0:
        violations.append("training.regularization must be positive")
    if training.epochs < 1:
        violations.append("training.epochs must be at least 1")
    if training.relevance_per_class < 1 or training.polarity_positive < 1:
        violations.append("training set sizes must be positive")

    report_raw = section("report")
    report = ReportConfig()
    report.top_k = int(report_raw.get("top_k", report.top_k))
    report.figures = bool(report_raw.get("figures", report.figures))
    report.format = str(report_raw.get("format", report.format))
    if report.top_k < 1:
        violations.append("report.top_k must be at least 1")
    if report.format not in REPORT_FORMATS:
        violations.append(f"report.format must be one of {REPORT_FORMATS}")

    sampling_raw = section("sampling")
    sampling = SamplingConfig()
    if sampling_raw.get("n") is not None:
        sampling.n = int(sampling_raw["n"])
        if sampling.n < 0:
            violations.append("sampling.n must be non-negative")
    sampling.seed = int(sampling_raw.get("seed", sampling.seed))

    if violations:
        raise ConfigError("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))

    return PipelineConfig(
        paths=paths,
        topic=topic,
        filtering=filtering,
        embedding=embedding,
        training=training,
        report=report,
        sampling=sampling,
        exclude_retweets=bool(raw.get("exclude_retweets", False)),
        source=config_path,
        snapshot=raw,
    )
