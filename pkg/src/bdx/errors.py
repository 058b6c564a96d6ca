"""Exception hierarchy.

Everything raised on purpose by this package derives from ``BdxError`` so
callers can catch one base class at CLI boundaries.
"""


class BdxError(Exception):
    """Base class for all package-specific errors."""


class InfeasibleWeightsError(BdxError):
    """No weight vector satisfies the requested constraints."""


class StageCapError(BdxError):
    """A registry build exceeded its node or stage budget."""


class PeakDeficitError(BdxError):
    """No coordinate functional achieves the guaranteed fraction of the norm."""


class SupplyExhaustedError(BdxError):
    """A block-building recipe ran out of raw vectors before reaching its target."""


class MissingEstimateError(BdxError):
    """An estimate step needs a calibration constant that was never computed."""


class NotProperError(BdxError):
    """A functional tree violates the normal form expected here."""
