"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class AntkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AntkitError):
    """Invalid or inconsistent configuration."""


class DataError(AntkitError):
    """Base class for data ingestion and validation errors."""


class InvalidLabel(DataError):
    """A label string or id is empty, malformed, or outside the taxonomy."""


class DuplicateLabel(DataError):
    """A vocabulary contains duplicate entries."""


class ParseError(DataError):
    """A data file line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ShapeError(DataError):
    """Sequence lengths do not match the expected shape."""


class MissingPrediction(DataError):
    """An evaluation instance has no corresponding prediction."""

    def __init__(self, instance_id: str):
        super().__init__(f"no prediction for instance {instance_id!r}")
        self.instance_id = instance_id


class EmptyCorpus(DataError):
    """A model was asked to train on an empty corpus."""


class TrainingDiverged(AntkitError):
    """Training produced a non-finite loss."""


class ConfigMismatch(ConfigError):
    """A model was used with data or settings it was not trained for."""


class NeedExamples(ConfigError):
    """A prompt builder requires at least one in-context example."""


class DegenerateCounterfactual(ConfigError):
    """A counterfactual pair was requested with identical goals."""


class EndpointError(AntkitError):
    """Base class for LLM endpoint failures."""


class EndpointUnavailable(EndpointError):
    """All retry attempts against the endpoint failed."""


class AuthError(EndpointError):
    """The endpoint rejected the credentials; not retried."""
