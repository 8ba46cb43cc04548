"""Command-line front end for the pipeline.

Subcommands map one-to-one onto pipeline stages; ``run all`` executes the
whole sequence. Exit codes: 0 success, 2 configuration error, 3 missing
precondition, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config
from .errors import ConfigError, InputOutputError, PipelineError, PreconditionError, ValidationError
from .stages import STAGE_ORDER, run_stages, sample_users
from .synthgen import SynthSpec, generate

logger = logging.getLogger(__name__)

LOCK_FILE = ".lock"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pollscope",
        description="Model social-media users around a polarized political event.",
    )
    parser.add_argument("--config", help="pipeline config file (YAML)")
    parser.add_argument("--output", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="override every stage seed")
    parser.add_argument(
        "--log-level", default="warning", choices=["debug", "info", "warning", "error"]
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    for name, description in (
        ("ingest", "load and validate archives, match the topic"),
        ("filter", "remove outlier and bot accounts"),
        ("demographics", "extract gender, age, ethnicity and location"),
        ("embed", "train word embeddings on kept users' tweets"),
        ("train", "train the relevance and polarity predictors"),
        ("classify", "assign per-user polarity by majority vote"),
        ("report", "aggregate reports, comparisons and figures"),
    ):
        sub.add_parser(name, help=description)

    run_p = sub.add_parser("run", help="run several stages in pipeline order")
    run_p.add_argument("stages", nargs="+", metavar="stage", help="'all' or stage names")

    synth_p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    synth_p.add_argument("--users", type=int, default=1000)
    synth_p.add_argument("--bot-fraction", type=float, default=0.1)
    synth_p.add_argument("--outlier-fraction", type=float, default=0.1)
    synth_p.add_argument("--tweets-min", type=int, default=12)
    synth_p.add_argument("--tweets-max", type=int, default=24)
    synth_p.add_argument("--mix", type=float, nargs=3, default=(0.35, 0.40, 0.25),
                         metavar=("POS", "NEG", "NEU"))

    sample_p = sub.add_parser("sample", help="sample users uniformly without replacement")
    sample_p.add_argument("--n", type=int, required=True)
    sample_p.add_argument("--input", help="user file (defaults to kept users in the output dir)")
    sample_p.add_argument("--out", help="destination file (defaults to sampled_users.jsonl)")
    return parser


def _load_pipeline_config(args) -> PipelineConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.output:
        cfg.override_output(args.output)
    if args.seed is not None:
        cfg.override_seed(args.seed)
    return cfg


class _OutputLock:
    """Guards one output directory against concurrent runs."""

    def __init__(self, output_dir: Path):
        self.path = output_dir / LOCK_FILE

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with open(self.path, "x", encoding="utf-8") as handle:
                handle.write(str(os.getpid()))
        except FileExistsError:
            raise PreconditionError(
                f"output directory is locked by another run ({self.path}); delete the lock if stale"
            ) from None
        return self

    def __exit__(self, *exc_info):
        self.path.unlink(missing_ok=True)


def _run_synth(args) -> int:
    out_dir = Path(args.output) if args.output else Path("synth_data")
    spec = SynthSpec(
        n_users=args.users,
        bot_fraction=args.bot_fraction,
        outlier_fraction=args.outlier_fraction,
        polarity_mix=tuple(args.mix),
        tweets_per_user=(args.tweets_min, args.tweets_max),
        seed=args.seed if args.seed is not None else 7,
    )
    result = generate(spec, out_dir)
    print(f"synthetic corpus written to {result.out_dir}")
    print(f"  users={result.counts['users']} tweets={result.counts['tweets']} "
          f"bots={result.counts['bots']} outliers={result.counts['outliers']}")
    print(f"  pipeline config: {result.paths['config']}")
    return 0


def _run_sample(args) -> int:
    cfg = _load_pipeline_config(args)
    source = Path(args.input) if args.input else cfg.paths.output_dir / "users_kept.jsonl"
    if not source.exists():
        raise PreconditionError(f"missing user file to sample from: {source}")
    lines = source.read_text(encoding="utf-8").splitlines()
    import json

    ids = [str(json.loads(line)["id"]) for line in lines if line.strip()]
    chosen = set(sample_users(ids, args.n, cfg.sampling.seed))
    dest = Path(args.out) if args.out else cfg.paths.output_dir / "sampled_users.jsonl"
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", encoding="utf-8", newline="\n") as handle:
        for line in lines:
            if line.strip() and str(json.loads(line)["id"]) in chosen:
                handle.write(line + "\n")
    print(f"sampled {args.n} of {len(ids)} users -> {dest}")
    return 0


def _run_pipeline(args, names: list[str]) -> int:
    cfg = _load_pipeline_config(args)
    for name in names:
        if name not in STAGE_ORDER:
            raise ConfigError(f"unknown stage {name!r}; choose from {', '.join(STAGE_ORDER)}")
    with _OutputLock(cfg.paths.output_dir):
        records = run_stages(cfg, names)
    for name in names:
        counts = records[name]["counts"]
        summary = " ".join(f"{k}={v}" for k, v in counts.items())
        print(f"{name}: {summary}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return _run_synth(args)
        if args.command == "sample":
            return _run_sample(args)
        if args.command == "run":
            names = list(STAGE_ORDER) if args.stages == ["all"] else args.stages
            return _run_pipeline(args, names)
        return _run_pipeline(args, [args.command])
    except ConfigError as exc:
        logger.error("%s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return 3
    except (InputOutputError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
