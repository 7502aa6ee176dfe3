"""Exception types raised across the fitting pipeline.

Every error derives from :class:`RveError`. The pipeline driver tags
exceptions with the stage that raised them so CLI messages can point at
the failing step.
"""


class RveError(Exception):
    """Base class for all package errors."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        base = super().__str__()
        if self.stage:
            return f"[{self.stage}] {base}"
        return base


# --- data ingestion ---------------------------------------------------------

class MalformedCsv(RveError):
    """Row length mismatch or unparseable cell in the input CSV."""


class MissingColumn(RveError):
    """A referenced column is absent from the input."""


class NonPositiveVariance(RveError):
    """A sampling variance is zero or negative."""


class FormulaError(RveError):
    """Formula text does not match the grammar (position-annotated)."""

    def __init__(self, message, position=None, stage=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message, stage=stage)
        self.position = position


class UnknownTermForm(FormulaError):
    """A term is syntactically valid but not one of the supported forms."""


class UnknownColumn(RveError):
    """Formula references a column the dataset does not have."""


class LengthMismatch(RveError):
    """Paired vectors have different lengths."""


# --- numerics ---------------------------------------------------------------

class RankDeficientDesign(RveError):
    """X'WX is numerically singular."""

    def __init__(self, message, offending=(), stage=None):
        super().__init__(message, stage=stage)
        self.offending = tuple(offending)


class SingularCrossProduct(RveError):
    """X'WX from a preliminary fit is not invertible."""


class DegenerateMoments(RveError):
    """The 2x2 method-of-moments system is numerically singular."""


class NotSymmetric(RveError):
    """Matrix asymmetry exceeds tolerance before symmetrization."""


class TooFewStudies(RveError):
    """Too few studies (clusters) for the requested estimator."""


class MissingUserWeights(RveError):
    """User-weighted model requested but weights absent on some rows."""


class NonPositiveWeight(RveError):
    """A user weight is zero or negative."""


class WrongModel(RveError):
    """Operation requires a different weighting model."""


class MissingLabelColumn(RveError):
    """Forest plot label column absent from the dataset."""


class InvalidDf(RveError):
    """Degrees of freedom must be strictly positive."""


class InvalidCovariance(RveError):
    """Simulation covariance parameters do not yield a PSD matrix."""


class DegenerateAdjustment(UserWarning):
    """A study's adjustment matrix collapsed to zero (pseudo-inverse path)."""
