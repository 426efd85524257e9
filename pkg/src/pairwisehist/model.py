"""Shared domain types for the PairwiseHist synopsis.

Everything lives in the encoded (non-negative integer) domain produced by
:mod:`pairwisehist.preprocess`, except :class:`AQPResult`, which is decoded
back to raw units at the API boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

AGGREGATES = ("COUNT", "SUM", "AVG", "MIN", "MAX", "MEDIAN", "VAR")
RANGE_OPS = ("<", ">", "<=", ">=")
EQUALITY_OPS = ("=", "!=")
NULL_OPS = ("IS NULL", "IS NOT NULL")

# two-sided 98% standard-normal quantile
Z98 = 2.326


class Kind(str, Enum):
    INTEGER = "integer"
    DECIMAL = "decimal"
    CATEGORICAL = "categorical"
    DATETIME = "datetime"


@dataclass(frozen=True)
class Params:
    """Construction parameters: row counts, split threshold and test level."""

    N: int
    Ns: int
    M: int
    alpha: float
    d: int

    def __post_init__(self):
        if not 0 < self.Ns <= self.N:
            raise ValueError(f"need 0 < Ns <= N, got Ns={self.Ns}, N={self.N}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 1 < self.M <= self.Ns:
            raise ValueError(f"need 1 < M <= Ns, got M={self.M}")
        if self.d < 1:
            raise ValueError("need at least one column")

    @property
    def rho(self) -> float:
        return self.Ns / self.N


@dataclass(frozen=True)
class ColumnSpec:
    """Reversible per-column encoding.

    ``offset`` is expressed in scaled units, i.e. ``encoded = round(raw * scale) - offset``.
    """

    column_id: int
    kind: Kind
    offset: int = 0
    scale: int = 1
    category_ranks: Optional[Dict[str, int]] = None
    null_code: Optional[int] = None
    byte_depth: int = 1
    max_code: int = 0
    name: str = ""

    @property
    def is_categorical(self) -> bool:
        return self.kind is Kind.CATEGORICAL

    @property
    def labels(self) -> List[str]:
        """Category labels ordered by rank."""
        if self.category_ranks is None:
            return []
        return sorted(self.category_ranks, key=self.category_ranks.__getitem__)


@dataclass(frozen=True)
class BinMeta:
    v_min: float
    v_max: float
    u: int
    h: int
    c: float
    c_lo: float
    c_hi: float


def derive_bin_midpoint(meta: BinMeta) -> float:
    if meta.h <= 0:
        raise ValueError("empty bin has no midpoint")
    return (meta.v_min + meta.v_max) / 2.0


@dataclass
class BinTable:
    """Per-bin metadata stored column-wise (parallel arrays, one entry per bin)."""

    v_min: np.ndarray
    v_max: np.ndarray
    u: np.ndarray
    h: np.ndarray
    c: np.ndarray
    c_lo: np.ndarray
    c_hi: np.ndarray

    def __len__(self) -> int:
        return len(self.v_min)

    def meta(self, t: int) -> BinMeta:
        return BinMeta(
            float(self.v_min[t]), float(self.v_max[t]), int(self.u[t]), int(self.h[t]),
            float(self.c[t]), float(self.c_lo[t]), float(self.c_hi[t]),
        )

    @property
    def bins(self) -> List[BinMeta]:
        return [self.meta(t) for t in range(len(self))]


@dataclass
class Histogram1D:
    column_id: int
    edges: np.ndarray  # k + 1 strictly increasing integer edges, bins are [e_t, e_t+1)
    table: BinTable

    @property
    def k(self) -> int:
        return len(self.table)

    @property
    def counts(self) -> np.ndarray:
        return self.table.h

    @property
    def bins(self) -> List[BinMeta]:
        return self.table.bins


@dataclass
class Histogram2D:
    """Pairwise histogram with ``row`` < ``col``; edges refine the 1-d edges."""

    row: int
    col: int
    edges_row: np.ndarray
    edges_col: np.ndarray
    counts: np.ndarray  # shape (k_row, k_col)
    meta_row: BinTable
    meta_col: BinTable

    @property
    def shape(self) -> Tuple[int, int]:
        return self.counts.shape


@dataclass
class Synopsis:
    params: Params
    columns: List[ColumnSpec]
    hists1d: List[Histogram1D]
    hists2d: Dict[Tuple[int, int], Histogram2D]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    def column_index(self, name: str) -> int:
        for spec in self.columns:
            if spec.name == name:
                return spec.column_id
        raise KeyError(f"unknown column {name!r}")

    def pair(self, i: int, j: int) -> Histogram2D:
        key = (i, j) if i < j else (j, i)
        try:
            return self.hists2d[key]
        except KeyError:
            raise RuntimeError(f"synopsis invariant violated: no 2-d histogram for {key}") from None


@dataclass
class EncodedTable:
    """Column-major encoded dataset with its per-column specs."""

    columns: List[np.ndarray]
    specs: List[ColumnSpec]

    def __post_init__(self):
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise ValueError(f"columns have differing lengths: {sorted(lengths)}")
        if len(self.columns) != len(self.specs):
            raise ValueError("one spec per column required")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def names(self) -> List[str]:
        return [s.name for s in self.specs]

    def null_mask(self, i: int) -> np.ndarray:
        code = self.specs[i].null_code
        if code is None:
            return np.zeros(self.n_rows, dtype=bool)
        return np.asarray(self.columns[i]) == code


# --- query plans -----------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    column: int
    op: str
    literal: Optional[float] = None


@dataclass(frozen=True)
class BoolNode:
    kind: str  # "AND" | "OR"
    children: Tuple["Predicate", ...]


Predicate = Union[Condition, BoolNode]


@dataclass(frozen=True)
class QueryPlan:
    aggregation: str
    agg_column: Optional[int]
    predicate: Optional[Predicate] = None
    group_by: Optional[int] = None

    def columns(self) -> List[int]:
        """Columns referenced by the predicate, in first-seen order."""
        seen: List[int] = []

        def walk(node):
            if isinstance(node, Condition):
                if node.column not in seen:
                    seen.append(node.column)
            else:
                for child in node.children:
                    walk(child)

        if self.predicate is not None:
            walk(self.predicate)
        return seen


@dataclass
class CoverageVector:
    column_id: int
    beta: np.ndarray
    beta_lo: np.ndarray
    beta_hi: np.ndarray


@dataclass
class WeightingsVector:
    column_id: int
    w: np.ndarray
    w_lo: np.ndarray
    w_hi: np.ndarray


@dataclass
class AggregationWork:
    """Intermediate quantities kept for inspection of MIN/MAX/MEDIAN/VAR."""

    t_star: Optional[int] = None
    f_key: Optional[float] = None
    xi_lo: Optional[np.ndarray] = None
    xi_hi: Optional[np.ndarray] = None
    a: Optional[int] = None
    b: Optional[int] = None
    s: Optional[int] = None
    delta: Optional[float] = None
    Delta: Optional[float] = None
    chi_crit: Optional[float] = None
    z98: float = Z98


@dataclass
class AQPResult:
    """Bounded estimate; ``estimate is None`` marks an empty selection."""

    estimate: Optional[float]
    lower: Optional[float]
    upper: Optional[float]
    per_group: Optional[Dict[str, "AQPResult"]] = None
    work: Optional[AggregationWork] = field(default=None, repr=False, compare=False)

    @property
    def empty(self) -> bool:
        return self.estimate is None

    def as_tuple(self) -> Tuple[Optional[float], Optional[float], Optional[float]]:
        return (self.estimate, self.lower, self.upper)


def empty_result() -> AQPResult:
    return AQPResult(None, None, None)


def as_int_array(values: Sequence) -> np.ndarray:
    return np.asarray(values, dtype=np.int64)
