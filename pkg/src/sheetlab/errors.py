"""Exception types shared across sheetlab modules."""


class SheetlabError(Exception):
    """Base class for all sheetlab errors."""


class NotPSD(SheetlabError):
    """Covariance matrix could not be factorized even at the largest jitter."""


class SingularObservation(SheetlabError):
    """The observed covariance block is not invertible."""


class DimensionTooLarge(SheetlabError):
    """Dense covariance exceeds the exact-sampling size cap."""


class DimMismatch(SheetlabError, ValueError):
    """Parameter points or arrays with incompatible dimensions."""


class DomainError(SheetlabError, ValueError):
    """Input lies outside the domain where an identity or formula applies."""


class GridTooLarge(SheetlabError):
    """Grid node count exceeds the configured cap."""


class OutOfBox(DomainError):
    """Parameter point outside the box it is interpolated in."""


class IndexMismatch(SheetlabError, ValueError):
    """Corner values do not match the expected corner count."""


class SNotAdmissible(DomainError):
    """Observation point is not in the conditioning set S."""


class GridMissingCorners(SheetlabError):
    """The grid does not contain the nodes needed to pin the field."""


class ResolutionTooCoarse(SheetlabError):
    """Grid spacing too coarse for the requested parameter separation."""


class CountOverflow(SheetlabError):
    """Covering count exceeds the cap; carries the analytic estimate."""

    def __init__(self, message, analytic):
        super().__init__(message)
        self.analytic = analytic


class ContractViolation(SheetlabError):
    """A numerical postcondition failed; ``name`` identifies which one."""

    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.name = name
