"""Exception types shared by every pipeline stage."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for errors raised by pollscope code.

    ``exit_code`` is what the CLI returns when the error escapes a stage.
    """

    exit_code = 1


class ValidationError(PipelineError, ValueError):
    """An argument, record or parameter violates a documented invariant."""

    exit_code = 2


class ConfigError(PipelineError):
    """The run configuration is incomplete or inconsistent.

    The message lists every violation found, one per line.
    """

    exit_code = 2


class PreconditionError(PipelineError):
    """A stage was invoked before the artifacts it consumes exist."""

    exit_code = 3


class InputOutputError(PipelineError):
    """A file could not be read, written or parsed."""

    exit_code = 4
