"""Shared exception types."""


class AnimatError(Exception):
    """Base class for package errors."""


class ParseError(AnimatError):
    """Malformed event file; message carries the 1-based line number."""


class ValidationError(AnimatError):
    """Structurally valid input that violates a domain invariant."""


class SchemaError(AnimatError):
    """Serialized document with a wrong version or broken invariants."""


class TrainingDiverged(AnimatError):
    """Non-finite values detected during a learner update."""
