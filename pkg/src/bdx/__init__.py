"""Numerical laboratory for a Tsirelson-type norm and a dual extension scheme.

The package has three layers:

1. ``tsirelson`` — a mixed-Tsirelson norm on finitely supported sequences,
   computed exactly by dynamic programming over interval partitions, plus
   functional-tree utilities (evaluation, properization, branching chains).
2. ``bd_core`` — a stage-by-stage construction of a biorthogonal system with
   extension operators, sup-norm evaluation and finite-dimensional
   decomposition projections.
3. ``analysis`` / ``estimates`` — decompositions of the norming functionals
   (evaluation and tree analyses) and the constructive lower/upper norm
   estimates that sandwich block sequences between l_r multiples.

``weights`` holds the parameter algebra shared by all layers; ``cli`` exposes
the whole thing as a command line tool.
"""

from bdx.weights import (
    Params,
    ValidationReport,
    make_params,
    validate,
    derive_weights,
    example_params,
)
from bdx.errors import (
    BdxError,
    InfeasibleWeightsError,
    StageCapError,
    PeakDeficitError,
    SupplyExhaustedError,
    MissingEstimateError,
    NotProperError,
)

__all__ = [
    "Params",
    "ValidationReport",
    "make_params",
    "validate",
    "derive_weights",
    "example_params",
    "BdxError",
    "InfeasibleWeightsError",
    "StageCapError",
    "PeakDeficitError",
    "SupplyExhaustedError",
    "MissingEstimateError",
    "NotProperError",
]

__version__ = "0.1.0"
