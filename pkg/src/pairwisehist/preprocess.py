"""Reversible per-column encoding into a non-negative integer domain.

Numeric columns are scaled to integers and shifted so their minimum is 0,
categorical columns are replaced by frequency ranks, datetimes become epoch
seconds. Missing cells map to a reserved code one past the largest value.
"""

from __future__ import annotations

import calendar
import datetime as dt
from collections import Counter
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .model import ColumnSpec, Kind

MAX_DECIMALS = 9
_BYTE_DEPTHS = (1, 2, 4, 8)


def is_missing(cell) -> bool:
    if cell is None:
        return True
    if isinstance(cell, str):
        return cell.strip() == ""
    if isinstance(cell, float) and cell != cell:
        return True
    return False


def _as_decimal(cell) -> Optional[Decimal]:
    if isinstance(cell, bool):
        return None
    if isinstance(cell, (int, np.integer)):
        return Decimal(int(cell))
    if isinstance(cell, (float, np.floating)):
        return Decimal(repr(float(cell)))
    if isinstance(cell, Decimal):
        return cell
    if isinstance(cell, str):
        try:
            d = Decimal(cell.strip())
        except InvalidOperation:
            return None
        return d if d.is_finite() else None
    return None


def _as_datetime(cell) -> Optional[dt.datetime]:
    if isinstance(cell, dt.datetime):
        return cell
    if isinstance(cell, dt.date):
        return dt.datetime(cell.year, cell.month, cell.day)
    if isinstance(cell, str):
        text = cell.strip()
        if len(text) < 8 or not text[:4].isdigit():
            return None
        try:
            return dt.datetime.fromisoformat(text.replace("Z", "+00:00"))
        except ValueError:
            return None
    return None


def _epoch_seconds(value: dt.datetime) -> int:
    if value.tzinfo is not None:
        value = value.astimezone(dt.timezone.utc).replace(tzinfo=None)
    return calendar.timegm(value.timetuple())


def _decimals(d: Decimal) -> int:
    exponent = d.normalize().as_tuple().exponent
    return max(0, -int(exponent))


def detect_kind(cells: Iterable) -> Kind:
    """Classify non-missing cells; raises on numeric/text mixtures."""
    numeric = text = dates = 0
    integral = True
    for cell in cells:
        if is_missing(cell):
            continue
        d = _as_decimal(cell)
        if d is not None:
            numeric += 1
            if _decimals(d) > 0:
                integral = False
            continue
        if _as_datetime(cell) is not None:
            dates += 1
        else:
            text += 1
    if numeric and (text or dates):
        raise ValueError("ambiguous column kind")
    if numeric:
        return Kind.INTEGER if integral else Kind.DECIMAL
    if dates and not text:
        return Kind.DATETIME
    return Kind.CATEGORICAL


def _byte_depth(largest: int) -> int:
    for m in _BYTE_DEPTHS:
        if largest < 256 ** m:
            return m
    raise ValueError(f"value {largest} does not fit in 8 bytes")


def _scaled(cell, kind: Kind, scale: int) -> int:
    if kind is Kind.DATETIME:
        value = _as_datetime(cell)
        if value is None:
            raise ValueError(f"not a datetime: {cell!r}")
        return _epoch_seconds(value)
    d = _as_decimal(cell)
    if d is None:
        raise ValueError(f"not numeric: {cell!r}")
    return int((d * scale).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def infer_column_spec(
    raw_values: Sequence,
    declared_kind: Optional[Kind] = None,
    column_id: int = 0,
    name: str = "",
) -> ColumnSpec:
    if len(raw_values) == 0:
        raise ValueError("cannot infer a column spec from no values")
    kind = Kind(declared_kind) if declared_kind is not None else detect_kind(raw_values)
    present = [c for c in raw_values if not is_missing(c)]
    has_null = len(present) < len(raw_values)
    name = name or f"c{column_id}"

    if kind is Kind.CATEGORICAL:
        freq = Counter(str(c) for c in present)
        ordered = sorted(freq, key=lambda label: (-freq[label], label))
        ranks = {label: r for r, label in enumerate(ordered)}
        max_code = len(ranks) - 1 if ranks else 0
        null_code = len(ranks) if has_null else None
        depth = _byte_depth(max(max_code + 1, null_code or 0))
        return ColumnSpec(column_id, kind, 0, 1, ranks, null_code, depth, max_code, name)

    scale = 1
    if kind is Kind.DECIMAL:
        digits = 0
        for c in present:
            d = _as_decimal(c)
            if d is None:
                raise ValueError("ambiguous column kind")
            digits = max(digits, _decimals(d))
        scale = 10 ** min(digits, MAX_DECIMALS)
    scaled = [_scaled(c, kind, scale) for c in present]
    offset = min(scaled) if scaled else 0
    max_code = (max(scaled) - offset) if scaled else 0
    null_code = max_code + 1 if has_null else None
    depth = _byte_depth(max(max_code + 1, null_code or 0))
    return ColumnSpec(column_id, kind, offset, scale, None, null_code, depth, max_code, name)


def encode_value(cell, spec: ColumnSpec) -> int:
    if is_missing(cell):
        if spec.null_code is None:
            raise ValueError("missing value in a column declared without nulls")
        return spec.null_code
    if spec.is_categorical:
        try:
            return spec.category_ranks[str(cell)]
        except KeyError:
            raise ValueError(f"unknown category {cell!r}") from None
    code = _scaled(cell, spec.kind, spec.scale) - spec.offset
    if code < 0:
        raise ValueError(f"value precedes declared minimum: {cell!r}")
    return code


def encode_column(raw_values: Sequence, spec: ColumnSpec) -> np.ndarray:
    return np.fromiter((encode_value(c, spec) for c in raw_values), dtype=np.int64, count=len(raw_values))


def decode_value(code: int, spec: ColumnSpec):
    """Inverse of :func:`encode_value`; returns ``None`` for the null code."""
    code = int(code)
    if spec.null_code is not None and code == spec.null_code:
        return None
    if spec.is_categorical:
        return spec.labels[code]
    raw = code + spec.offset
    if spec.kind is Kind.DATETIME:
        return dt.datetime(1970, 1, 1) + dt.timedelta(seconds=raw)
    if spec.kind is Kind.INTEGER:
        return raw
    return float(Decimal(raw) / spec.scale)


def decode_column(codes: Iterable[int], spec: ColumnSpec) -> List:
    return [decode_value(c, spec) for c in codes]


def to_raw_scalar(value: float, spec: ColumnSpec) -> float:
    """Map an encoded-domain location (possibly fractional) to raw units as a float."""
    return (value + spec.offset) / spec.scale


def transform_literal(literal, op: str, spec: ColumnSpec) -> float:
    """Move a predicate literal into the encoded domain.

    Range literals are shifted and scaled without rounding so that the
    comparison keeps its raw-domain meaning on integer codes. Unknown
    categories map to -1, which no encoded value equals.
    """
    if spec.is_categorical:
        if op not in ("=", "!="):
            raise ValueError(f"operator {op} is not supported on categorical column {spec.name!r}")
        return float(spec.category_ranks.get(str(literal), -1))
    if spec.kind is Kind.DATETIME:
        value = _as_datetime(literal)
        if value is None:
            raise ValueError(f"literal {literal!r} is not a datetime")
        return float(_epoch_seconds(value) - spec.offset)
    d = _as_decimal(literal)
    if d is None:
        raise ValueError(f"literal {literal!r} is not numeric")
    return float(d * spec.scale - spec.offset)
