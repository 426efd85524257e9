"""Benchmark harness: CSV ingestion, exact full-scan oracle, query generation, reports."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Sequence

import numpy as np

from .construct import build_pairwise_hist
from .model import AGGREGATES, BoolNode, Condition, EncodedTable, Kind, Params, Predicate, QueryPlan
from .parser import parse_query
from .preprocess import decode_value, detect_kind, encode_column, infer_column_spec
from .query import execute
from .storage import serialize

REL_EPS = 1e-12


class IngestError(ValueError):
    """Unreadable or malformed CSV input."""


# --- ingestion ------------------------------------------------------------------


def encode_table(raw_columns: Sequence[Sequence], names: Sequence[str], hints: Optional[Dict[str, Kind]] = None) -> EncodedTable:
    """Infer a spec per column and encode; mixed columns fall back to categorical."""
    hints = hints or {}
    specs, cols = [], []
    for i, (raw, name) in enumerate(zip(raw_columns, names)):
        kind = hints.get(name)
        if kind is None:
            try:
                kind = detect_kind(raw)
            except ValueError:
                kind = Kind.CATEGORICAL
        spec = infer_column_spec(raw, kind, column_id=i, name=name)
        specs.append(spec)
        cols.append(encode_column(raw, spec))
    return EncodedTable(cols, specs)


def ingest_csv(path, schema_hints: Optional[Dict[str, Kind]] = None) -> EncodedTable:
    """Read a headed CSV; empty fields are missing values."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestError(f"{path}: empty file") from None
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise IngestError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
                rows.append(row)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from None
    except csv.Error as exc:
        raise IngestError(f"{path}: {exc}") from None
    if not rows:
        raise IngestError(f"{path}: no data rows")
    raw_columns = [list(col) for col in zip(*rows)]
    return encode_table(raw_columns, [h.strip() for h in header], schema_hints)


def make_desk_table(n: int = 100_000, seed: int = 0) -> EncodedTable:
    """Synthetic table with two uniform numeric, one skewed numeric and one categorical column."""
    rng = np.random.default_rng(seed)
    uniform_int = rng.integers(0, 1000, n)
    uniform_dec = np.round(rng.uniform(0, 500, n), 2)
    skewed = np.round(rng.lognormal(3.0, 1.0, n)).astype(np.int64)
    category = rng.choice(np.array(["north", "south", "east", "west"]), n, p=[0.4, 0.3, 0.2, 0.1])
    raw = [uniform_int.tolist(), [f"{v:.2f}" for v in uniform_dec], skewed.tolist(), category.tolist()]
    return encode_table(raw, ["qty", "price", "delay", "region"],
                        {"price": Kind.DECIMAL})


# --- exact oracle -------------------------------------------------------------------


@dataclass
class ExactResult:
    value: Optional[float]
    per_group: Optional[Dict[str, Optional[float]]] = None


def predicate_mask(table: EncodedTable, node: Optional[Predicate]) -> np.ndarray:
    """Rows satisfying ``node`` under SQL semantics (comparisons with null are false)."""
    if node is None:
        return np.ones(table.n_rows, dtype=bool)
    if isinstance(node, BoolNode):
        masks = [predicate_mask(table, child) for child in node.children]
        return np.logical_and.reduce(masks) if node.kind == "AND" else np.logical_or.reduce(masks)
    col = np.asarray(table.columns[node.column])
    null = table.null_mask(node.column)
    if node.op == "IS NULL":
        return null
    if node.op == "IS NOT NULL":
        return ~null
    x = node.literal
    hit = {
        "<": col < x, "<=": col <= x, ">": col > x, ">=": col >= x,
        "=": col == x, "!=": col != x,
    }[node.op]
    return hit & ~null


def _aggregate(values: np.ndarray, agg: str, spec) -> Optional[float]:
    n = len(values)
    if agg == "COUNT":
        return float(n)
    if agg == "SUM" and n == 0:
        return 0.0
    if n == 0:
        return None
    off, scale = spec.offset, spec.scale
    if agg == "SUM":
        return float((int(values.sum()) + n * off) / scale)
    if agg == "AVG":
        return float((values.mean() + off) / scale)
    if agg == "MIN":
        return float((values.min() + off) / scale)
    if agg == "MAX":
        return float((values.max() + off) / scale)
    if agg == "MEDIAN":
        return float((np.sort(values)[math.ceil(n / 2) - 1] + off) / scale)
    if agg == "VAR":
        return float(values.astype(float).var() / scale ** 2)
    raise ValueError(agg)


def exact_oracle(table: EncodedTable, plan: QueryPlan) -> ExactResult:
    """Full-scan evaluation in the encoded domain, decoded like the estimator."""
    mask = predicate_mask(table, plan.predicate)
    if plan.agg_column is None:
        values, spec = np.zeros(table.n_rows, dtype=np.int64), None
    else:
        mask = mask & ~table.null_mask(plan.agg_column)
        values, spec = np.asarray(table.columns[plan.agg_column]), table.specs[plan.agg_column]
    result = ExactResult(_aggregate(values[mask], plan.aggregation, spec))
    if plan.group_by is not None:
        gspec = table.specs[plan.group_by]
        gcol = np.asarray(table.columns[plan.group_by])
        result.per_group = {
            label: _aggregate(values[mask & (gcol == gspec.category_ranks[label])], plan.aggregation, spec)
            for label in gspec.labels
        }
    return result


# --- query generation ---------------------------------------------------------------


def _literal_text(code: int, spec) -> str:
    if spec.is_categorical:
        return "'" + spec.labels[code].replace("'", "''") + "'"
    if spec.kind is Kind.DATETIME:
        return "'" + decode_value(code, spec).isoformat() + "'"
    if spec.kind is Kind.DECIMAL:
        return str(Decimal(code + spec.offset) / spec.scale)
    return str(code + spec.offset)


def _quote(name: str) -> str:
    return name if name.isidentifier() else f'"{name}"'


def generate_queries(
    table: EncodedTable,
    count: int,
    seed: int = 0,
    min_selectivity: float = 1e-5,
    aggregates: Sequence[str] = ("COUNT", "SUM", "AVG"),
    max_conditions: int = 1,
    table_name: str = "t",
) -> List[str]:
    """Seeded random queries whose oracle selectivity meets ``min_selectivity``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    for agg in aggregates:
        if agg not in AGGREGATES:
            raise ValueError(f"unknown aggregate {agg}")
    rng = np.random.default_rng(seed)
    specs = table.specs
    numeric = [s.column_id for s in specs if not s.is_categorical]
    usable = [a for a in aggregates if a == "COUNT" or numeric]
    if not usable:
        raise ValueError("no numeric column for the requested aggregates")
    present = [np.flatnonzero(~table.null_mask(i)) for i in range(len(specs))]
    candidates = [i for i in range(len(specs)) if len(present[i])]
    out: List[str] = []
    for _ in range(1000 * count):
        agg = usable[rng.integers(len(usable))]
        target = "*" if agg == "COUNT" else _quote(specs[numeric[rng.integers(len(numeric))]].name)
        parts = []
        for n in range(int(rng.integers(1, max_conditions + 1))):
            col = candidates[rng.integers(len(candidates))]
            spec = specs[col]
            code = int(table.columns[col][present[col][rng.integers(len(present[col]))]])
            ops = ("=", "!=") if spec.is_categorical else ("<", "<=", ">", ">=")
            op = ops[rng.integers(len(ops))]
            if n:
                parts.append("AND" if rng.random() < 0.5 else "OR")
            parts.append(f"{_quote(spec.name)} {op} {_literal_text(code, spec)}")
        text = f"SELECT {agg}({target}) FROM {table_name} WHERE {' '.join(parts)}"
        plan = parse_query(text, specs)
        mask = predicate_mask(table, plan.predicate)
        if plan.agg_column is not None:
            mask &= ~table.null_mask(plan.agg_column)
        if mask.sum() >= max(1, min_selectivity * table.n_rows):
            out.append(text)
            if len(out) == count:
                return out
    raise RuntimeError(f"could not reach selectivity {min_selectivity} after {1000 * count} draws")


# --- benchmark --------------------------------------------------------------------------


@dataclass
class QueryRecord:
    query: str
    aggregation: str
    estimate: Optional[float]
    lower: Optional[float]
    upper: Optional[float]
    exact: Optional[float]
    relative_error: Optional[float]
    bound_correct: bool
    latency_ms: Optional[float] = None
    latency_exec_ms: Optional[float] = None


@dataclass
class BenchReport:
    per_query: List[QueryRecord]
    summary: Dict[str, object] = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"record": "query", **_drop_none_timing(asdict(r))}, sort_keys=True) for r in self.per_query]
        lines.append(json.dumps({"record": "summary", **self.summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    def to_text(self) -> str:
        rows = [f"{'aggregate':<10}{'n':>6}{'median err %':>14}{'mean err %':>12}"]
        for agg, stats in sorted(self.summary.get("per_aggregate", {}).items()):
            rows.append(f"{agg:<10}{stats['n']:>6}{_pct(stats['median_rel_error'], 100):>14}"
                        f"{_pct(stats['mean_rel_error'], 100):>12}")
        s = self.summary
        rows.append(f"bound correct rate: {_pct(s.get('bound_correct_rate'), 100, 1)}%")
        rows.append(f"median bound width: {_pct(s.get('median_bound_width_pct'), 1, 2)}% of exact")
        rows.append(f"synopsis bytes: {s.get('synopsis_bytes')}")
        if "construction_seconds" in s:
            rows.append(f"construction: {s['construction_seconds']:.3f} s")
        if "median_latency_ms" in s:
            rows.append(f"median latency: {_pct(s['median_latency_ms'])} ms (parse-inclusive), "
                        f"{_pct(s['median_latency_exec_ms'])} ms (execution only)")
        return "\n".join(rows)


def _drop_none_timing(record: dict) -> dict:
    return {k: v for k, v in record.items() if not (k.startswith("latency") and v is None)}


def relative_error(estimate: Optional[float], exact: Optional[float]) -> Optional[float]:
    if estimate is None or exact is None:
        return 0.0 if estimate is None and exact is None else None
    return abs(estimate - exact) / max(abs(exact), REL_EPS)


def bound_correct(lower, upper, exact) -> bool:
    if exact is None:
        return lower is None
    return lower is not None and lower <= exact <= upper


def _median(values) -> Optional[float]:
    return float(np.median(values)) if len(values) else None


def _mean(values) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def _pct(value: Optional[float], factor: float = 1.0, digits: int = 3) -> str:
    return "n/a" if value is None else f"{factor * value:.{digits}f}"


def run_benchmark(
    table: EncodedTable,
    params: Params,
    queries: Sequence[str],
    seed: int = 0,
    report_path=None,
    deterministic: bool = False,
    widening: str = "printed",
) -> BenchReport:
    """Build, serialize and query a synopsis, scoring each query against the oracle.

    ``deterministic`` drops wall-clock fields so the report is reproducible byte for byte.
    """
    t0 = time.perf_counter()
    synopsis = build_pairwise_hist(table, params, seed=seed)
    build_seconds = time.perf_counter() - t0
    size = len(serialize(synopsis))

    records = []
    for text in queries:
        t0 = time.perf_counter()
        plan = parse_query(text, synopsis)
        t1 = time.perf_counter()
        res = execute(plan, synopsis, widening)
        t2 = time.perf_counter()
        exact = exact_oracle(table, plan).value
        records.append(QueryRecord(
            text, plan.aggregation, res.estimate, res.lower, res.upper, exact,
            relative_error(res.estimate, exact), bound_correct(res.lower, res.upper, exact),
            None if deterministic else 1e3 * (t2 - t0), None if deterministic else 1e3 * (t2 - t1),
        ))

    per_agg = {}
    for agg in sorted({r.aggregation for r in records}):
        errs = [r.relative_error for r in records if r.aggregation == agg and r.relative_error is not None]
        per_agg[agg] = {"n": sum(r.aggregation == agg for r in records),
                        "median_rel_error": _median(errs), "mean_rel_error": _mean(errs)}
    widths = [100 * (r.upper - r.lower) / max(abs(r.exact), REL_EPS)
              for r in records if r.exact is not None and r.lower is not None]
    summary = {
        "queries": len(records),
        "per_aggregate": per_agg,
        "median_rel_error": _median([r.relative_error for r in records if r.relative_error is not None]),
        "bound_correct_rate": _mean([r.bound_correct for r in records]),
        "median_bound_width_pct": _median(widths),
        "synopsis_bytes": size,
        "bins_1d": [h.k for h in synopsis.hists1d],
    }
    if not deterministic:
        summary["construction_seconds"] = build_seconds
        summary["median_latency_ms"] = _median([r.latency_ms for r in records])
        summary["median_latency_exec_ms"] = _median([r.latency_exec_ms for r in records])
    report = BenchReport(records, summary)
    if report_path is not None:
        report.write(report_path)
    return report
