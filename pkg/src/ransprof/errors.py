"""Exception types shared across the toolkit.

Domain failures raise RansprofError subclasses so the CLI can map them to
exit code 1 while genuine usage mistakes stay on argparse's exit code 2.
"""

from __future__ import annotations


class RansprofError(Exception):
    """Base class for all domain errors raised by this package."""


class ValidationError(RansprofError):
    """A value violates a documented invariant (bad path, bad status, ...)."""


class ParseError(RansprofError):
    """A serialized document could not be parsed.

    The message names the offending field or path so failures in large
    documents stay diagnosable.
    """


class AlgorithmMismatchError(RansprofError):
    """Two reports (or a report and an expectation) disagree on the digest."""


class StorageError(RansprofError):
    """A result-store operation failed (duplicate session, bad layout, ...)."""


class OrchestrationError(RansprofError):
    """A session or battery could not run (backend failure, bad spec, ...)."""


class AirGapViolation(OrchestrationError):
    """A network-capable backend call happened inside the isolation window."""
