"""Query execution over a synopsis: coverage, weightings and aggregation.

Coverage is the per-bin probability that a tuple satisfies a condition.
Conditions on a column other than the aggregation column are carried into
the aggregation dimension through the pairwise count matrix; AND / OR nodes
combine the resulting per-bin probabilities under conditional independence.
Conditions on the same column directly under one AND / OR are consolidated
first so that they are never treated as independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .construct import chi_squared_critical, terrell_scott_subbins
from .model import (
    EQUALITY_OPS,
    NULL_OPS,
    RANGE_OPS,
    Z98,
    AggregationWork,
    AQPResult,
    BinTable,
    BoolNode,
    ColumnSpec,
    Condition,
    CoverageVector,
    Histogram1D,
    Kind,
    Predicate,
    QueryPlan,
    Synopsis,
    WeightingsVector,
    empty_result,
)
from .parser import QueryShapeError, parse_query

WIDENING_MODES = ("printed", "binomial-count")
_EPS = 1e-9

# --- interval algebra for range conditions ---------------------------------

Interval = Tuple[float, bool, float, bool]  # (lo, lo_closed, hi, hi_closed)


class IntervalSet:
    """Finite union of disjoint intervals on the real line."""

    def __init__(self, intervals: Sequence[Interval] = ()):
        self.intervals: List[Interval] = _normalise(list(intervals))

    @classmethod
    def from_condition(cls, cond: Condition) -> "IntervalSet":
        x = float(cond.literal)
        return cls([{
            "<": (-math.inf, False, x, False),
            "<=": (-math.inf, False, x, True),
            ">": (x, False, math.inf, False),
            ">=": (x, True, math.inf, False),
        }[cond.op]])

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a in self.intervals:
            for b in other.intervals:
                lo, lo_c = max((a[0], a[1]), (b[0], b[1]), key=lambda p: (p[0], not p[1]))
                hi, hi_c = min((a[2], a[3]), (b[2], b[3]), key=lambda p: (p[0], p[1]))
                if lo < hi or (lo == hi and lo_c and hi_c):
                    out.append((lo, lo_c, hi, hi_c))
        return IntervalSet(out)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.intervals + other.intervals)

    def contains(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        hit = np.zeros(v.shape, dtype=bool)
        for lo, lo_c, hi, hi_c in self.intervals:
            above = v >= lo if lo_c else v > lo
            below = v <= hi if hi_c else v < hi
            hit |= above & below
        return hit

    def measure_within(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Length of the set intersected with each ``[a_t, b_t]``."""
        total = np.zeros(np.shape(a), dtype=float)
        for lo, _, hi, _ in self.intervals:
            total += np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
        return total


def _normalise(intervals: List[Interval]) -> List[Interval]:
    intervals = sorted(intervals, key=lambda iv: (iv[0], not iv[1]))
    merged: List[Interval] = []
    for iv in intervals:
        if merged:
            lo, lo_c, hi, hi_c = merged[-1]
            if iv[0] < hi or (iv[0] == hi and (hi_c or iv[1])):
                if (iv[2], iv[3]) > (hi, hi_c) if iv[2] == hi else iv[2] > hi:
                    hi, hi_c = iv[2], iv[3]
                merged[-1] = (lo, lo_c, hi, hi_c)
                continue
        merged.append(iv)
    return merged


# --- coverage ----------------------------------------------------------------


def _range_coverage(iset: IntervalSet, table: BinTable) -> np.ndarray:
    v_min = table.v_min.astype(float)
    v_max = table.v_max.astype(float)
    sat_lo = iset.contains(v_min)
    sat_hi = iset.contains(v_max)
    width = v_max - v_min
    beta = np.where(width > 0, iset.measure_within(v_min, v_max) / np.where(width > 0, width, 1.0), 0.0)
    beta = np.clip(beta, 0.0, 1.0)
    two = table.u == 2
    beta = np.where(two, (sat_lo.astype(float) + sat_hi) / 2.0, beta)
    single = (table.u <= 1) | (width == 0)
    beta = np.where(single, sat_lo.astype(float), beta)
    return np.where(table.u == 0, 0.0, beta)


def _equality_coverage(literal: float, table: BinTable) -> np.ndarray:
    inside = (table.v_min <= literal) & (literal <= table.v_max) & (float(literal).is_integer())
    u = np.maximum(table.u, 1)
    return np.where(inside & (table.u > 0), 1.0 / u, 0.0)


def coverage(condition: Condition, hist) -> np.ndarray:
    """Per-bin probability that a tuple in the bin satisfies ``condition``.

    ``hist`` is a :class:`Histogram1D` or any :class:`BinTable`.
    """
    table = hist.table if isinstance(hist, Histogram1D) else hist
    if condition.op in RANGE_OPS:
        return _range_coverage(IntervalSet.from_condition(condition), table)
    if condition.op == "=":
        return _equality_coverage(condition.literal, table)
    if condition.op == "!=":
        return np.where(table.u > 0, 1.0 - _equality_coverage(condition.literal, table), 0.0)
    raise ValueError(f"coverage undefined for {condition.op}")


def coverage_bounds(beta, h, u, M: int, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper coverage bounds per bin from the partial-count bounds."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), beta.shape)
    u = np.broadcast_to(np.asarray(u, dtype=np.int64), beta.shape)
    lo = beta.copy()
    hi = beta.copy()
    partial = (beta > 0.0) & (beta < 1.0)
    small = partial & (h < M)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo[small] = 1.0 / h[small]
        hi[small] = 1.0 - 1.0 / h[small]
    for t in np.flatnonzero(partial & (h >= M)):
        s = terrell_scott_subbins(max(int(u[t]), 2))
        chi = chi_squared_critical(s, alpha)
        a = math.floor(beta[t] * s + _EPS)
        b = math.ceil(beta[t] * s - _EPS)
        lo[t] = 0.0 if a == 0 else (a / s) * (1.0 - math.sqrt(chi * (s - a) / (h[t] * a)))
        hi[t] = (b / s) * (1.0 + math.sqrt(chi * (s - b) / (h[t] * b)))
    lo = np.minimum(np.clip(lo, 0.0, 1.0), beta)
    hi = np.maximum(np.clip(hi, 0.0, 1.0), beta)
    return lo, hi


def _with_bounds(column_id: int, beta: np.ndarray, table: BinTable, M: int, alpha: float) -> CoverageVector:
    lo, hi = coverage_bounds(beta, table.h, table.u, M, alpha)
    return CoverageVector(column_id, beta, lo, hi)


def consolidate_same_column(
    conditions: Sequence[Condition], combinator: str, hist, M: int = 10**18, alpha: float = 0.001,
) -> CoverageVector:
    """Merge same-column conditions under one AND / OR into a single coverage vector.

    Pure range groups are combined exactly as interval intersections / unions;
    groups containing (in)equality fall back to the independence product.
    """
    table = hist.table if isinstance(hist, Histogram1D) else hist
    column_id = conditions[0].column
    if all(c.op in RANGE_OPS for c in conditions):
        iset = IntervalSet.from_condition(conditions[0])
        for c in conditions[1:]:
            other = IntervalSet.from_condition(c)
            iset = iset.intersect(other) if combinator == "AND" else iset.union(other)
        beta = _range_coverage(iset, table)
    else:
        betas = [coverage(c, table) for c in conditions]
        if combinator == "AND":
            beta = np.prod(betas, axis=0)
        else:
            beta = 1.0 - np.prod([1.0 - b for b in betas], axis=0)
    return _with_bounds(column_id, beta, table, M, alpha)


# --- weightings ----------------------------------------------------------------


@dataclass
class _PairView:
    """Pairwise counts oriented with the aggregation column on the rows."""

    counts: np.ndarray  # (k_row_refined, k_col_refined), float
    row_to_bin: np.ndarray  # refined row -> 1-d bin of the aggregation column
    col_table: BinTable
    row_present: np.ndarray  # per 1-d bin: rows non-null in the other column


def _pair_view(synopsis: Synopsis, i: int, j: int) -> _PairView:
    key = ("pair", i, j)
    view = synopsis._cache.get(key)
    if view is not None:
        return view
    pair = synopsis.pair(i, j)
    if pair.row == i:
        counts, edges_row, col_table = pair.counts, pair.edges_row, pair.meta_col
    else:
        counts, edges_row, col_table = pair.counts.T, pair.edges_col, pair.meta_row
    edges_i = synopsis.hists1d[i].edges
    row_to_bin = np.searchsorted(edges_i, edges_row[:-1], side="right") - 1
    k_i = synopsis.hists1d[i].k
    counts = np.ascontiguousarray(counts, dtype=float)
    present = np.bincount(row_to_bin, weights=counts.sum(axis=1), minlength=k_i)
    view = _PairView(counts, row_to_bin, col_table, present)
    synopsis._cache[key] = view
    return view


class _Evaluator:
    def __init__(self, synopsis: Synopsis, agg_col: int):
        self.syn = synopsis
        self.i = agg_col
        self.hist = synopsis.hists1d[agg_col]
        self.h = self.hist.counts.astype(float)
        self.safe_h = np.where(self.h > 0, self.h, 1.0)
        self.M = synopsis.params.M
        self.alpha = synopsis.params.alpha

    def _table_for(self, j: int) -> BinTable:
        return self.hist.table if j == self.i else _pair_view(self.syn, self.i, j).col_table

    def _transform(self, cov: CoverageVector) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map column-j coverage to per-bin probabilities on the aggregation column."""
        j = cov.column_id
        if j == self.i:
            return cov.beta, cov.beta_lo, cov.beta_hi
        view = _pair_view(self.syn, self.i, j)
        k = self.hist.k
        out = []
        for beta in (cov.beta, cov.beta_lo, cov.beta_hi):
            rows = view.counts @ beta
            out.append(np.bincount(view.row_to_bin, weights=rows, minlength=k) / self.safe_h)
        return tuple(np.clip(p, 0.0, 1.0) for p in out)

    def _null_probability(self, cond: Condition):
        j = cond.column
        if j == self.i:
            p = np.zeros(self.hist.k) if cond.op == "IS NULL" else np.ones(self.hist.k)
        else:
            present = _pair_view(self.syn, self.i, j).row_present / self.safe_h
            present = np.clip(present, 0.0, 1.0)
            p = present if cond.op == "IS NOT NULL" else 1.0 - present
        return p, p, p

    def leaf(self, cond: Condition):
        if cond.op in NULL_OPS:
            return self._null_probability(cond)
        table = self._table_for(cond.column)
        return self._transform(_with_bounds(cond.column, coverage(cond, table), table, self.M, self.alpha))

    def group(self, conds: List[Condition], kind: str):
        table = self._table_for(conds[0].column)
        return self._transform(consolidate_same_column(conds, kind, table, self.M, self.alpha))

    def node(self, node: Predicate):
        if isinstance(node, Condition):
            return self.leaf(node)
        groups: Dict[int, List[Condition]] = {}
        parts = []
        for child in node.children:
            if isinstance(child, Condition) and child.op not in NULL_OPS:
                groups.setdefault(child.column, []).append(child)
            else:
                parts.append(self.node(child))
        for conds in groups.values():
            parts.append(self.leaf(conds[0]) if len(conds) == 1 else self.group(conds, node.kind))
        stacked = [np.stack(vectors) for vectors in zip(*parts)]
        if node.kind == "AND":
            return tuple(v.prod(axis=0) for v in stacked)
        return tuple(1.0 - (1.0 - v).prod(axis=0) for v in stacked)


def count_column(plan: QueryPlan, synopsis: Synopsis) -> int:
    """Aggregation dimension for COUNT(*): a column without nulls, most bins first."""
    candidates = plan.columns() or list(range(synopsis.params.d))
    full = [c for c in candidates if synopsis.hists1d[c].counts.sum() == synopsis.params.Ns]
    if not full:
        full = [c for c in range(synopsis.params.d) if synopsis.hists1d[c].counts.sum() == synopsis.params.Ns]
    pool = full or candidates
    return max(pool, key=lambda c: (synopsis.hists1d[c].k, -c))


def weightings(
    plan: QueryPlan, synopsis: Synopsis, widening: str = "printed", agg_col: Optional[int] = None,
) -> WeightingsVector:
    """Estimated satisfying tuple counts per bin of the aggregation column, with bounds."""
    if widening not in WIDENING_MODES:
        raise ValueError(f"widening must be one of {WIDENING_MODES}")
    if agg_col is None:
        agg_col = plan.agg_column if plan.agg_column is not None else count_column(plan, synopsis)
    ev = _Evaluator(synopsis, agg_col)
    h = ev.h
    if plan.predicate is None:
        return WeightingsVector(agg_col, h.copy(), h.copy(), h.copy())
    p, p_lo, p_hi = ev.node(plan.predicate)
    w = p * h
    w_lo = np.minimum(p_lo * h, w)
    w_hi = np.maximum(p_hi * h, w)
    params = synopsis.params
    if params.Ns < params.N:
        fpc = (params.N - params.Ns) / (params.N - 1)
        b_lo = w_lo / ev.safe_h
        b_hi = w_hi / ev.safe_h
        r_lo = np.sqrt(np.clip(b_lo * (1.0 - b_lo), 0.0, None) * fpc)
        r_hi = np.sqrt(np.clip(b_hi * (1.0 - b_hi), 0.0, None) * fpc)
        if widening == "binomial-count":
            r_lo = r_lo * np.sqrt(h)
            r_hi = r_hi * np.sqrt(h)
        w_lo = np.clip(w_lo - Z98 * r_lo, 0.0, h)
        w_hi = np.clip(w_hi + Z98 * r_hi, 0.0, h)
    return WeightingsVector(agg_col, w, w_lo, w_hi)


# --- aggregation -----------------------------------------------------------------


def _decode(spec: Optional[ColumnSpec], v: float) -> float:
    if spec is None:
        return float(v)
    return (float(v) + spec.offset) / spec.scale


def _sandwich(est: float, lo: float, hi: float) -> AQPResult:
    return AQPResult(float(est), float(min(lo, est)), float(max(hi, est)))


def estimate_count(wv: WeightingsVector, rho: float) -> AQPResult:
    return _sandwich(wv.w.sum() / rho, wv.w_lo.sum() / rho, wv.w_hi.sum() / rho)


def estimate_sum(wv: WeightingsVector, table: BinTable, rho: float, spec: Optional[ColumnSpec] = None) -> AQPResult:
    if spec is not None and spec.is_categorical:
        raise QueryShapeError("SUM undefined for categorical")
    off = spec.offset if spec is not None else 0
    scale = spec.scale if spec is not None else 1
    c = (table.c + off) / scale
    c_lo = (table.c_lo + off) / scale
    c_hi = (table.c_hi + off) / scale
    est = wv.w @ c
    # per bin, the smaller / larger of the two weighting extremes (the printed
    # w-.c- and w+.c+ whenever values are non-negative)
    lo = np.minimum(wv.w_lo * c_lo, wv.w_hi * c_lo).sum()
    hi = np.maximum(wv.w_lo * c_hi, wv.w_hi * c_hi).sum()
    return _sandwich(est / rho, lo / rho, hi / rho)


def _weighted_mean(w: np.ndarray, x: np.ndarray) -> Optional[float]:
    total = w.sum()
    return None if total <= 0 else float(w @ x / total)


def estimate_avg(wv: WeightingsVector, table: BinTable, spec: Optional[ColumnSpec] = None) -> AQPResult:
    if spec is not None and spec.is_categorical:
        raise QueryShapeError("AVG undefined for categorical")
    est = _weighted_mean(wv.w, table.c)
    if est is None:
        return empty_result()
    lows = [m for m in (_weighted_mean(w, table.c_lo) for w in (wv.w_lo, wv.w_hi)) if m is not None]
    highs = [m for m in (_weighted_mean(w, table.c_hi) for w in (wv.w_lo, wv.w_hi)) if m is not None]
    lo = min(lows) if lows else est
    hi = max(highs) if highs else est
    return _sandwich(_decode(spec, est), _decode(spec, lo), _decode(spec, hi))


def _subbin_geometry(table: BinTable, t: int) -> Tuple[int, float]:
    s = terrell_scott_subbins(max(int(table.u[t]), 2))
    return s, float(table.v_max[t] - table.v_min[t]) / s


def estimate_extremum(
    kind: str,
    wv: WeightingsVector,
    table: BinTable,
    M: int,
    single_column: bool,
    spec: Optional[ColumnSpec] = None,
) -> AQPResult:
    """MIN / MAX from the first / last bin holding selected tuples."""
    if kind not in ("MIN", "MAX"):
        raise ValueError(kind)
    if spec is not None and spec.is_categorical:
        raise QueryShapeError(f"{kind} undefined for categorical")
    w, w_lo, w_hi = wv.w, wv.w_lo, wv.w_hi
    if w.sum() <= 0:
        return empty_result()
    u, h, v_min, v_max = table.u, table.h, table.v_min.astype(float), table.v_max.astype(float)
    filled = np.flatnonzero(h > 0)
    pick = (lambda idx: int(idx[0])) if kind == "MIN" else (lambda idx: int(idx[-1]))
    near, far = (v_min, v_max) if kind == "MIN" else (v_max, v_min)

    t_est = pick(np.flatnonzero(w > 0))
    special = single_column and u[t_est] == 2 and w[t_est] < h[t_est] / 2.0
    est = far[t_est] if special else near[t_est]

    # bound on the optimistic side: any bin that might hold a selected tuple
    t_wide = pick(np.flatnonzero(w_hi > 0))
    special = single_column and u[t_wide] == 2 and w_hi[t_wide] < h[t_wide] / 5.0
    wide = far[t_wide] if special else near[t_wide]

    # bound on the conservative side: a bin that almost surely holds one
    confident = np.flatnonzero(w_lo > 0.5)
    work = AggregationWork(t_star=t_est)
    if len(confident) == 0:
        tight = v_max[filled].max() if kind == "MIN" else v_min[filled].min()
    else:
        t = pick(confident)
        tight = far[t]
        if single_column and u[t] > 2 and h[t] > M:
            s, delta = _subbin_geometry(table, t)
            a = math.floor(s * w_lo[t] / h[t])
            tight = far[t] - a * delta if kind == "MIN" else far[t] + a * delta
            work = AggregationWork(t_star=t_est, a=a, s=s, delta=delta, Delta=float(v_max[t] - v_min[t]))
    lo, hi = (wide, tight) if kind == "MIN" else (tight, wide)
    res = _sandwich(_decode(spec, est), _decode(spec, lo), _decode(spec, hi))
    res.work = work
    return res


def _median_bin(w: np.ndarray) -> Optional[int]:
    total = w.sum()
    if total <= 0:
        return None
    cum = np.cumsum(w) / total
    return int(np.searchsorted(cum, 0.5 - 1e-12, side="left"))


def estimate_median(wv: WeightingsVector, table: BinTable, spec: Optional[ColumnSpec] = None) -> AQPResult:
    if spec is not None and spec.is_categorical:
        raise QueryShapeError("MEDIAN undefined for categorical")
    w = wv.w
    t = _median_bin(w)
    if t is None:
        return empty_result()
    t = min(t, len(w) - 1)
    before = w[:t].sum()
    f = (w.sum() / 2.0 - before) / w[t]
    v_lo, v_hi = float(table.v_min[t]), float(table.v_max[t])
    if table.u[t] == 2:
        est = v_lo if f < 0.5 else v_hi
    else:
        est = v_lo + (v_hi - v_lo) * f
    cands = [t] + [c for c in (_median_bin(wv.w_lo), _median_bin(wv.w_hi)) if c is not None]
    cands = [min(c, len(w) - 1) for c in cands]
    res = _sandwich(_decode(spec, est), _decode(spec, table.v_min[min(cands)]), _decode(spec, table.v_max[max(cands)]))
    res.work = AggregationWork(t_star=t, f_key=float(f), Delta=v_hi - v_lo)
    return res


def _variance(w: np.ndarray, x: np.ndarray) -> Optional[float]:
    total = w.sum()
    if total <= 0:
        return None
    mean = w @ x / total
    return float(max(w @ (x * x) / total - mean * mean, 0.0))


def estimate_var(wv: WeightingsVector, table: BinTable, spec: Optional[ColumnSpec] = None) -> AQPResult:
    if spec is not None and spec.is_categorical:
        raise QueryShapeError("VAR undefined for categorical")
    c = table.c
    est = _variance(wv.w, c)
    if est is None:
        return empty_result()
    avg = float(wv.w @ c / wv.w.sum())
    v_min = table.v_min.astype(float)
    v_max = table.v_max.astype(float)
    xi_lo = np.where(v_max < avg, v_max, np.where(v_min > avg, v_min, avg))
    xi_hi = np.where(np.abs(avg - v_min) > np.abs(v_max - avg), v_min, v_max)
    lows = [v for v in (_variance(w, xi_lo) for w in (wv.w_lo, wv.w_hi)) if v is not None]
    highs = [v for v in (_variance(w, xi_hi) for w in (wv.w_lo, wv.w_hi)) if v is not None]
    lo = max(min(lows), 0.0) if lows else est
    hi = max(highs) if highs else est
    sq = float(spec.scale) ** 2 if spec is not None else 1.0
    res = _sandwich(est / sq, lo / sq, hi / sq)
    res.work = AggregationWork(xi_lo=xi_lo, xi_hi=xi_hi)
    return res


# --- orchestration ---------------------------------------------------------------


def is_single_column(plan: QueryPlan) -> bool:
    cols = plan.columns()
    return plan.agg_column is not None and all(c == plan.agg_column for c in cols)


def _execute_ungrouped(plan: QueryPlan, synopsis: Synopsis, widening: str) -> AQPResult:
    params = synopsis.params
    wv = weightings(plan, synopsis, widening)
    agg = plan.aggregation
    if agg == "COUNT":
        return estimate_count(wv, params.rho)
    spec = synopsis.columns[plan.agg_column]
    if spec.is_categorical:
        raise QueryShapeError(f"{agg} undefined for categorical")
    table = synopsis.hists1d[plan.agg_column].table
    if agg == "SUM":
        return estimate_sum(wv, table, params.rho, spec)
    if agg == "AVG":
        return estimate_avg(wv, table, spec)
    if agg in ("MIN", "MAX"):
        return estimate_extremum(agg, wv, table, params.M, is_single_column(plan), spec)
    if agg == "MEDIAN":
        return estimate_median(wv, table, spec)
    if agg == "VAR":
        return estimate_var(wv, table, spec)
    raise QueryShapeError(f"unsupported query shape: aggregate {agg}")


def execute(plan: QueryPlan, synopsis: Synopsis, widening: str = "printed") -> AQPResult:
    """Run a parsed plan; GROUP BY expands into one run per category value."""
    result = _execute_ungrouped(QueryPlan(plan.aggregation, plan.agg_column, plan.predicate), synopsis, widening)
    if plan.group_by is None:
        return result
    spec = synopsis.columns[plan.group_by]
    groups = {}
    for label in spec.labels:
        cond = Condition(plan.group_by, "=", float(spec.category_ranks[label]))
        pred = cond if plan.predicate is None else BoolNode("AND", (plan.predicate, cond))
        groups[label] = _execute_ungrouped(QueryPlan(plan.aggregation, plan.agg_column, pred), synopsis, widening)
    result.per_group = groups
    return result


def run_query(text: str, synopsis: Synopsis, widening: str = "printed") -> AQPResult:
    return execute(parse_query(text, synopsis), synopsis, widening)
