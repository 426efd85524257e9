"""Bounded approximate aggregate queries over 1-d and pairwise histograms."""

from .model import (
    AQPResult,
    ColumnSpec,
    EncodedTable,
    Histogram1D,
    Histogram2D,
    Kind,
    Params,
    QueryPlan,
    Synopsis,
)
from .construct import build_pairwise_hist

__all__ = [
    "AQPResult",
    "ColumnSpec",
    "EncodedTable",
    "Histogram1D",
    "Histogram2D",
    "Kind",
    "Params",
    "QueryPlan",
    "Synopsis",
    "build_pairwise_hist",
]
