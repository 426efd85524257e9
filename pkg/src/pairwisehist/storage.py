"""Bit-exact binary format for a synopsis.

Layout (all multi-byte integers little-endian, bit fields MSB-first)::

    "PWH1"
    params      N u64 | Ns u64 | M u32 | alpha f64 | d u8 | byte depth u8 * d
    1-d blocks  per column: k u16 | upper edges | mins | maxs  (m bytes each) | uniques u32
    2-d blocks  per pair i<j: new-edge count u16 per dimension, then per
                dimension: new edges | mins | maxs (m bytes each) | uniques u32
    counts      per column (k x 1) then per pair (k_row x k_col, row-major):
                l_h u8 | I_h u8 | dense bits  or  theta u32 | riceK u8 | Rice-coded
                position deltas interleaved with l_h-bit counts
    catalog     u32 length | UTF-8 JSON column specs

For a new edge splitting a 1-d bin, ``mins`` holds the minimum of the piece
to its right and ``maxs`` / ``uniques`` describe the piece to its left. The
remaining piece statistics follow from the parent 1-d bin, so the block is
lossless. Midpoints and centre bounds are recomputed on load.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .construct import make_bin_table
from .model import ColumnSpec, Histogram1D, Histogram2D, Kind, Params, Synopsis

MAGIC = b"PWH1"
PARAMS_FIXED = 29
_PARAMS = struct.Struct("<QQIdB")
_INT_FMT = {1: "<u1", 2: "<u2", 4: "<u4", 8: "<u8"}


class StorageError(ValueError):
    """Malformed or truncated synopsis bytes; the message names the block."""


# --- bit packing -----------------------------------------------------------


class BitWriter:
    """Accumulates bits MSB-first."""

    def __init__(self):
        self._bits: List[int] = []

    def write(self, value: int, width: int) -> None:
        for shift in range(width - 1, -1, -1):
            self._bits.append((value >> shift) & 1)

    def write_unary(self, q: int) -> None:
        self._bits.extend([1] * q)
        self._bits.append(0)

    def __len__(self) -> int:
        return len(self._bits)

    def to_bytes(self) -> bytes:
        return np.packbits(np.array(self._bits, dtype=np.uint8)).tobytes()


class BitReader:
    def __init__(self, data: bytes, n_bits: int = None):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self._n = len(self._bits) if n_bits is None else n_bits
        self.pos = 0

    def read(self, width: int) -> int:
        if self.pos + width > self._n:
            raise StorageError("bit stream exhausted")
        value = 0
        for b in self._bits[self.pos:self.pos + width]:
            value = (value << 1) | int(b)
        self.pos += width
        return value

    def read_unary(self) -> int:
        q = 0
        while True:
            if self.pos >= self._n:
                raise StorageError("bit stream exhausted")
            bit = self._bits[self.pos]
            self.pos += 1
            if bit == 0:
                return q
            q += 1


def golomb_encode(values: Sequence[int], rice_k: int, writer: BitWriter = None) -> BitWriter:
    """Rice code: quotient ``v >> k`` in unary, then ``k`` remainder bits."""
    if rice_k < 0:
        raise ValueError("riceK must be non-negative")
    writer = writer if writer is not None else BitWriter()
    mask = (1 << rice_k) - 1
    for v in values:
        v = int(v)
        if v < 0:
            raise ValueError("Golomb coding needs non-negative values")
        writer.write_unary(v >> rice_k)
        writer.write(v & mask, rice_k)
    return writer


def golomb_decode(bits, rice_k: int, n: int) -> List[int]:
    """Inverse of :func:`golomb_encode`; ``bits`` is a reader or raw bytes."""
    reader = bits if isinstance(bits, BitReader) else BitReader(bits)
    return [(reader.read_unary() << rice_k) | reader.read(rice_k) for _ in range(n)]


def _pack_fixed(values: np.ndarray, width: int) -> bytes:
    if len(values) == 0:
        return b""
    be = values.astype(">u8").view(np.uint8).reshape(-1, 8)
    bits = np.unpackbits(be, axis=1)[:, 64 - width:]
    return np.packbits(bits.reshape(-1)).tobytes()


def _unpack_fixed(data: bytes, width: int, n: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[: n * width].reshape(n, width)
    full = np.zeros((n, 64), dtype=np.uint8)
    full[:, 64 - width:] = bits
    return np.packbits(full, axis=1).view(">u8").reshape(n).astype(np.int64)


# --- counts blocks -----------------------------------------------------------


@dataclass(frozen=True)
class CountsEncoding:
    indicator: int  # 0 dense, 1 sparse
    bits_per_count: int
    nonzero: int = 0
    rice_k: int = 0


def bits_per_count(counts: np.ndarray) -> int:
    top = int(counts.max()) if counts.size else 0
    return max(1, math.ceil(math.log2(1 + top)))


def dense_size(n_cells: int, ell: int) -> int:
    return 2 + (n_cells * ell + 7) // 8


def choose_counts_encoding(counts: np.ndarray) -> Tuple[CountsEncoding, bytes]:
    """Encode a count matrix densely or sparsely, whichever is smaller (dense on ties)."""
    flat = np.asarray(counts, dtype=np.int64).reshape(-1)
    ell = bits_per_count(flat)
    dense = bytes([ell, 0]) + _pack_fixed(flat, ell)
    pos = np.flatnonzero(flat)
    deltas = np.diff(np.concatenate([[-1], pos]))
    rice_k = max(0, int(math.floor(math.log2(deltas.mean())))) if len(deltas) else 0
    writer = BitWriter()
    mask = (1 << rice_k) - 1
    for delta, value in zip(deltas.tolist(), flat[pos].tolist()):
        writer.write_unary(delta >> rice_k)
        writer.write(delta & mask, rice_k)
        writer.write(value, ell)
    sparse = bytes([ell, 1]) + struct.pack("<IB", len(pos), rice_k) + writer.to_bytes()
    if len(sparse) < len(dense):
        return CountsEncoding(1, ell, len(pos), rice_k), sparse
    return CountsEncoding(0, ell), dense


class _Cursor:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int, block: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise StorageError(f"truncated {block}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: struct.Struct, block: str):
        return fmt.unpack(self.take(fmt.size, block))

    def ints(self, n: int, width: int, block: str) -> np.ndarray:
        raw = self.take(n * width, block)
        return np.frombuffer(raw, dtype=_INT_FMT[width]).astype(np.int64)


def _read_counts(cur: _Cursor, n_cells: int, block: str) -> np.ndarray:
    ell, indicator = cur.take(2, block)
    if not 1 <= ell <= 64 or indicator not in (0, 1):
        raise StorageError(f"corrupt header in {block}")
    if indicator == 0:
        return _unpack_fixed(cur.take((n_cells * ell + 7) // 8, block), ell, n_cells)
    theta, rice_k = cur.unpack(struct.Struct("<IB"), block)
    if theta > n_cells:
        raise StorageError(f"inconsistent nonzero count in {block}")
    # the payload length is only known after decoding; it never exceeds the dense size
    reader = BitReader(cur.data[cur.pos:cur.pos + dense_size(n_cells, ell)])
    out = np.zeros(n_cells, dtype=np.int64)
    pos = -1
    try:
        for _ in range(theta):
            pos += (reader.read_unary() << rice_k) | reader.read(rice_k)
            if pos >= n_cells:
                raise StorageError(f"position out of range in {block}")
            out[pos] = reader.read(ell)
    except StorageError as exc:
        if "exhausted" in str(exc):
            raise StorageError(f"truncated {block}") from None
        raise
    cur.pos += (reader.pos + 7) // 8
    return out


# --- column catalog -----------------------------------------------------------


def _spec_to_json(spec: ColumnSpec) -> dict:
    return {
        "name": spec.name, "kind": spec.kind.value, "offset": spec.offset, "scale": spec.scale,
        "labels": spec.labels if spec.is_categorical else None,
        "null_code": spec.null_code, "max_code": spec.max_code,
    }


def _spec_from_json(i: int, obj: dict, depth: int) -> ColumnSpec:
    labels = obj.get("labels")
    ranks = {label: r for r, label in enumerate(labels)} if labels is not None else None
    return ColumnSpec(i, Kind(obj["kind"]), obj["offset"], obj["scale"], ranks,
                      obj["null_code"], depth, obj["max_code"], obj["name"])


# --- serialize -------------------------------------------------------------------


def _int_bytes(values, width: int, block: str) -> bytes:
    arr = np.asarray(values, dtype=np.int64)
    if len(arr) and (arr.min() < 0 or (width < 8 and arr.max() >= 256 ** width)):
        raise RuntimeError(f"synopsis invariant violated: value exceeds byte depth in {block}")
    return arr.astype(_INT_FMT[width]).tobytes()


def _new_edge_fields(parent: Histogram1D, edges: np.ndarray, meta) -> Tuple[np.ndarray, ...]:
    """Positions of refined edges absent from the 1-d edges, with their stored stats."""
    is_new = ~np.isin(edges[1:-1], parent.edges)
    idx = np.flatnonzero(is_new) + 1  # edge index within ``edges``
    # piece left of edge idx is bin idx-1, right is bin idx
    return edges[idx], meta.v_min[idx], meta.v_max[idx - 1], meta.u[idx - 1]


def _sections(synopsis: Synopsis) -> Dict[str, bytes]:
    p = synopsis.params
    depths = [s.byte_depth for s in synopsis.columns]
    params = _PARAMS.pack(p.N, p.Ns, p.M, p.alpha, p.d) + bytes(depths)

    one_d = bytearray()
    for i, h in enumerate(synopsis.hists1d):
        m = depths[i]
        if h.k >= 2 ** 16:
            raise RuntimeError(f"synopsis invariant violated: column {i} has {h.k} bins")
        t = h.table
        block = f"1-d block for column {i}"
        one_d += struct.pack("<H", h.k)
        one_d += _int_bytes(h.edges[1:], m, block) + _int_bytes(t.v_min, m, block)
        one_d += _int_bytes(t.v_max, m, block) + _int_bytes(t.u, 4, block)

    two_d = bytearray()
    counts = bytearray()
    for h in synopsis.hists1d:
        counts += choose_counts_encoding(h.counts)[1]
    for (i, j), pair in sorted(synopsis.hists2d.items()):
        fields = [
            _new_edge_fields(synopsis.hists1d[i], pair.edges_row, pair.meta_row),
            _new_edge_fields(synopsis.hists1d[j], pair.edges_col, pair.meta_col),
        ]
        two_d += struct.pack("<HH", len(fields[0][0]), len(fields[1][0]))
        for col, (edges, mins, maxs, uniq) in zip((i, j), fields):
            m = depths[col]
            block = f"2-d block for pair ({i},{j})"
            two_d += _int_bytes(edges, m, block) + _int_bytes(mins, m, block)
            two_d += _int_bytes(maxs, m, block) + _int_bytes(uniq, 4, block)
        counts += choose_counts_encoding(pair.counts)[1]

    catalog = json.dumps([_spec_to_json(s) for s in synopsis.columns], sort_keys=True).encode()
    return {
        "magic": MAGIC, "params": params, "hists1d": bytes(one_d), "hists2d": bytes(two_d),
        "counts": bytes(counts), "catalog": struct.pack("<I", len(catalog)) + catalog,
    }


def serialize(synopsis: Synopsis) -> bytes:
    return b"".join(_sections(synopsis).values())


def size_breakdown(synopsis: Synopsis) -> Dict[str, int]:
    """Bytes per section; ``body`` excludes the magic and the column catalog."""
    sizes = {name: len(data) for name, data in _sections(synopsis).items()}
    sizes["body"] = sizes["params"] + sizes["hists1d"] + sizes["hists2d"] + sizes["counts"]
    sizes["total"] = sum(v for k, v in sizes.items() if k != "body")
    return sizes


def storage_upper_bound(synopsis: Synopsis) -> int:
    """Closed-form size bound; diagonal count terms use the k x 1 count vectors."""
    d = synopsis.params.d
    total = 29 + d + 4 * d * d
    for i in range(d):
        m = synopsis.columns[i].byte_depth
        k_i = synopsis.hists1d[i].k
        refined = k_i  # j == i
        for j in range(d):
            if j != i:
                pair = synopsis.pair(i, j)
                refined += len(pair.edges_row if pair.row == i else pair.edges_col) - 1
        total += (3 * m + 4) * (refined - (d - 1) * k_i)
        for j in range(d):
            if j == i:
                cells, counts = k_i, synopsis.hists1d[i].counts
            else:
                counts = synopsis.pair(i, j).counts
                cells = counts.size
            total += math.ceil(cells * bits_per_count(counts) / 8)
    return total


# --- deserialize -------------------------------------------------------------------


def _rebuild_dimension(parent: Histogram1D, new_edges, mins, maxs, uniq):
    """Refined edges and (v_min, v_max, u) per piece for one dimension."""
    edges = np.union1d(parent.edges, new_edges).astype(np.int64)
    if len(edges) != len(parent.edges) + len(new_edges):
        raise StorageError("inconsistent new edges")
    k = len(edges) - 1
    pt = parent.table
    v_min = np.empty(k, dtype=np.int64)
    v_max = np.empty(k, dtype=np.int64)
    u = np.empty(k, dtype=np.int64)
    n = 0
    for t in range(parent.k):
        first = int(np.searchsorted(edges, parent.edges[t]))
        last = int(np.searchsorted(edges, parent.edges[t + 1])) - 1
        for p in range(first, last):
            v_max[p], u[p], v_min[p + 1] = maxs[n], uniq[n], mins[n]
            n += 1
        u[last] = pt.u[t] - u[first:last].sum()
        if u[last] < 0:
            raise StorageError("inconsistent unique counts")
        v_min[first] = pt.v_min[t] if u[first] > 0 else edges[first]
        v_max[last] = pt.v_max[t] if u[last] > 0 else edges[last + 1]
    return edges, v_min, v_max, u


def deserialize(data: bytes) -> Synopsis:
    if data[:4] != MAGIC:
        raise StorageError("bad magic")
    cur = _Cursor(data, 4)
    N, Ns, M, alpha, d = cur.unpack(_PARAMS, "parameter block")
    depths = list(cur.take(d, "parameter block"))
    if any(m not in _INT_FMT for m in depths):
        raise StorageError("corrupt byte depth in parameter block")
    params = Params(N, Ns, M, alpha, d)

    raw1d = []
    for i in range(d):
        block = f"1-d block for column {i}"
        (k,) = cur.unpack(struct.Struct("<H"), block)
        if k == 0:
            raise StorageError(f"inconsistent k in {block}")
        m = depths[i]
        upper = cur.ints(k, m, block)
        v_min, v_max = cur.ints(k, m, block), cur.ints(k, m, block)
        u = cur.ints(k, 4, block)
        edges = np.concatenate([[v_min[0]], upper]).astype(np.int64)
        if np.any(np.diff(edges) <= 0):
            raise StorageError(f"edges not increasing in {block}")
        raw1d.append((edges, v_min, v_max, u))

    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    raw2d = {}
    for i, j in pairs:
        block = f"2-d block for pair ({i},{j})"
        n_row, n_col = cur.unpack(struct.Struct("<HH"), block)
        dims = []
        for col, n in ((i, n_row), (j, n_col)):
            m = depths[col]
            dims.append((cur.ints(n, m, block), cur.ints(n, m, block), cur.ints(n, m, block),
                         cur.ints(n, 4, block)))
        raw2d[(i, j)] = dims

    counts1d = []
    for i in range(d):
        k = len(raw1d[i][0]) - 1
        counts1d.append(_read_counts(cur, k, f"counts block for column {i}"))

    hists1d = []
    for i, (edges, v_min, v_max, u) in enumerate(raw1d):
        table = make_bin_table(v_min, v_max, u, counts1d[i], M, alpha)
        hists1d.append(Histogram1D(i, edges, table))

    hists2d = {}
    for i, j in pairs:
        block = f"counts block for pair ({i},{j})"
        try:
            er, vr_min, vr_max, ur = _rebuild_dimension(hists1d[i], *raw2d[(i, j)][0])
            ec, vc_min, vc_max, uc = _rebuild_dimension(hists1d[j], *raw2d[(i, j)][1])
        except StorageError as exc:
            raise StorageError(f"{exc} in 2-d block for pair ({i},{j})") from None
        kr, kc = len(er) - 1, len(ec) - 1
        counts = _read_counts(cur, kr * kc, block).reshape(kr, kc)
        meta_row = make_bin_table(vr_min, vr_max, ur, counts.sum(axis=1), M, alpha)
        meta_col = make_bin_table(vc_min, vc_max, uc, counts.sum(axis=0), M, alpha)
        hists2d[(i, j)] = Histogram2D(i, j, er, ec, counts, meta_row, meta_col)

    (length,) = cur.unpack(struct.Struct("<I"), "catalog")
    try:
        catalog = json.loads(cur.take(length, "catalog").decode())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise StorageError("corrupt catalog") from None
    if len(catalog) != d:
        raise StorageError("catalog column count mismatch")
    specs = [_spec_from_json(i, obj, depths[i]) for i, obj in enumerate(catalog)]
    return Synopsis(params, specs, hists1d, hists2d)


def save(synopsis: Synopsis, path) -> int:
    data = serialize(synopsis)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load(path) -> Synopsis:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
