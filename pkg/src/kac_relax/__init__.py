"""Kac equation relaxation laboratory: Wild sums, McKean trees and explicit bounds."""

from .errors import (
    ConfigError,
    DomainTruncationError,
    GridIncompatibilityError,
    InsufficientDataError,
    InternalInconsistencyError,
    InversionQualityError,
    KacRelaxError,
    NumericalQualityError,
    ParameterError,
    ResourceLimitError,
    UnsupportedOperationError,
)
from .initial_data import InitialDatum, MomentSet, TailProfile, eval_cf, make_datum, moments, symmetrize, tail_profile

__version__ = "0.1.0"
