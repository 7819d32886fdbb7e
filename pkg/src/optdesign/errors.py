"""Exception types raised by optdesign."""

from __future__ import annotations


class OptDesignError(Exception):
    """Base class for all package errors."""


class DesignSpaceError(OptDesignError, ValueError):
    """A design point lies outside the region where the model is defined.

    Attributes
    ----------
    verdict : Feasibility or None
        The feasibility verdict that triggered the error.
    """

    def __init__(self, message: str, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class SingularDesignError(OptDesignError, ValueError):
    """The Fisher information of a design is singular where it must not be."""


class InfeasibleDesignError(OptDesignError, ValueError):
    """No design on the given candidate set has a nonsingular information matrix.

    Attributes
    ----------
    report : RankReport or None
        Rank diagnostics for the candidate set, when available.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedModelError(OptDesignError, ValueError):
    """The requested operation is not available for this model family."""
