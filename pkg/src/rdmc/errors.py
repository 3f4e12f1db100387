"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`RdmcError` so the CLI can
separate computation failures (exit code 1) from usage mistakes (exit code 2,
handled by argparse before any of these can occur).
"""

from __future__ import annotations


class RdmcError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(RdmcError):
    """A column mapping refers to columns the file does not provide."""


class ParseError(RdmcError):
    """A cell could not be parsed; the message names the row and column."""


class ValidationError(RdmcError):
    """A dataset failed a fatal structural check.

    Carries the list of findings that triggered the failure.
    """

    def __init__(self, message: str, findings: tuple = ()) -> None:
        super().__init__(message)
        self.findings = tuple(findings)


class DomainError(RdmcError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigurationError(RdmcError):
    """An estimator was invoked without the inputs its method requires."""


class PerfectSeparationError(RdmcError):
    """The group indicator is perfectly predicted; the likelihood has no maximum."""

    def __init__(self, message: str, direction=None) -> None:
        super().__init__(message)
        self.direction = direction


class RankError(RdmcError):
    """A design matrix is rank deficient for the requested fit."""


class SampleSizeError(RdmcError):
    """Fewer observations than parameters."""


class InsufficientSupportError(RdmcError):
    """Fewer than two distinct sample points carry positive weight."""


class ConditioningError(RdmcError):
    """The local normal equations are numerically singular."""


class AlignmentError(RdmcError):
    """Two curves do not share a grid, or a grid violates its domain."""


class BandwidthInfeasibleError(RdmcError):
    """Every leave-one-out fit failed at this bandwidth."""


class BandwidthSelectionError(RdmcError):
    """No bandwidth in the search grid produced a usable score."""

    def __init__(self, message: str, diagnostics: tuple = ()) -> None:
        super().__init__(message)
        self.diagnostics = tuple(diagnostics)


class DegenerateSampleError(RdmcError):
    """A sample has too little variation to support density estimation."""


class DensityFloorError(RdmcError):
    """The density estimate at an evaluation point is numerically zero."""


class UnreliableIseError(RdmcError):
    """Too many curve values are missing for the integral to mean anything."""
