"""Exception hierarchy shared across the engine.

The split mirrors how callers must react: configuration problems are
operator mistakes, data errors travel with the offending record, input
errors are caller bugs, and stage/backend errors are retryable by the
job queue.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(EngineError):
    """Invalid configuration: bad backbone, missing crops, bad model spec."""


class InputError(EngineError):
    """Caller passed an argument violating an operation precondition."""


class NotFoundError(EngineError):
    """A referenced entity (taxon, session, job) does not exist."""


class DataIntegrityError(EngineError):
    """Stored data violates an invariant (broken lineage, unknown key)."""


class ParseError(EngineError):
    """An archive or descriptor could not be parsed."""


class StageError(EngineError):
    """A model backend failed to load or run.

    Carries the model URI so queue retries and status displays can name
    the culprit.
    """

    def __init__(self, message: str, model_uri: str = ""):
        super().__init__(message)
        self.model_uri = model_uri


class IllegalTransitionError(EngineError):
    """A job state transition outside the legal state machine."""
