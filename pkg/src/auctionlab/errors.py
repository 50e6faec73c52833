"""Exception types shared across the package."""


class AuctionLabError(Exception):
    """Base class for all auctionlab errors."""


# --- order book ---

class AuctionClosed(AuctionLabError):
    """Operation attempted on a closed auction."""


class ImbalanceWorsening(AuctionLabError):
    """Event rejected in the restricted phase because it would not reduce |imbalance|."""


class DuplicateId(AuctionLabError):
    """Order id was already used in this auction."""


class UnknownId(AuctionLabError):
    """Cancel referenced an id that is not resident."""


class BackwardTransition(AuctionLabError):
    """Phase transitions only move forward (open -> restricted -> closed)."""


# --- flow generation ---

class InvalidParams(AuctionLabError):
    """Generator parameters violate their invariants."""


# --- ingestion ---

class SchemaError(AuctionLabError):
    """Input file does not match the expected CSV schema."""


class NonMonotoneTime(AuctionLabError):
    """Update times within one (asset, date, side) group are not strictly increasing."""


# --- fitting ---

class TooFewPoints(AuctionLabError):
    """Not enough (distinct) observations for the requested fit."""


class NonConvergence(AuctionLabError):
    """Numerical likelihood maximization did not converge."""


class MismatchedSupport(AuctionLabError):
    """Two fits being compared do not share the same tail support."""


class SingularDesign(AuctionLabError):
    """Polynomial design matrix is singular (collinear abscissae)."""


class NonPositiveValue(AuctionLabError):
    """Log-log fit received a non-positive ordinate or abscissa."""


# --- metrics ---

class ZeroTotal(AuctionLabError):
    """Volume ratio requested against a zero total volume."""


class EmptyGroup(AuctionLabError):
    """An aggregation group has no usable rows."""


class MissingFinalVolume(AuctionLabError):
    """Estimator requires a positive final auction volume."""


class ZeroVariance(AuctionLabError):
    """Indicative price never moved; dispersion normalization undefined."""


class NoQuotes(AuctionLabError):
    """Series carries no aligned quote annotations."""
