"""Synopsis construction: hypothesis-test-driven bin refinement.

Bins are half-open integer intervals ``[eL, eR)``. A bin is split at its
midpoint while it holds at least ``M`` points, more than one distinct value
and fails a chi-squared test of uniformity over ``s`` equal-width sub-bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaincc

from .model import BinTable, EncodedTable, Histogram1D, Histogram2D, Params, Synopsis


@dataclass
class RefineResult1D:
    upper_edges: List[int]
    v_mins: List[int]
    v_maxs: List[int]
    uniques: List[int]

    def extend(self, other: "RefineResult1D") -> None:
        self.upper_edges += other.upper_edges
        self.v_mins += other.v_mins
        self.v_maxs += other.v_maxs
        self.uniques += other.uniques


def terrell_scott_subbins(u: int) -> int:
    """Smallest ``s`` with ``s**3 >= 2u`` (exact integer cube root ceiling)."""
    if u < 2:
        raise ValueError("uniformity test undefined for fewer than two unique values")
    target = 2 * u
    s = max(2, int(round(target ** (1.0 / 3.0))))
    while s ** 3 < target:
        s += 1
    while s > 2 and (s - 1) ** 3 >= target:
        s -= 1
    return s


@lru_cache(maxsize=4096)
def chi_squared_critical(s: int, alpha: float) -> float:
    """Upper-``alpha`` critical value of chi-squared with ``s - 1`` degrees of freedom."""
    if s < 2:
        raise ValueError("need at least two sub-bins")
    if alpha >= 1.0:
        return 0.0
    k = (s - 1) / 2.0

    def tail(x):
        return gammaincc(k, x / 2.0) - alpha

    hi = max(1.0, 2.0 * (s - 1))
    while tail(hi) > 0:
        hi *= 2.0
    return float(brentq(tail, 0.0, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500))


def subbin_counts(values: np.ndarray, e_lo: int, e_hi: int, s: int) -> np.ndarray:
    width = e_hi - e_lo
    if width <= 0:
        raise ValueError("degenerate bin")
    r = ((np.asarray(values, dtype=np.int64) - e_lo) * s) // width
    np.clip(r, 0, s - 1, out=r)
    return np.bincount(r, minlength=s)


def chi_squared_statistic(values: np.ndarray, e_lo: int, e_hi: int, s: int) -> float:
    counts = subbin_counts(values, e_lo, e_hi, s)
    expected = len(values) / s
    return float(((counts - expected) ** 2).sum() / expected)


def is_uniform(values: np.ndarray, e_lo: int, e_hi: int, u: int, alpha: float) -> bool:
    s = terrell_scott_subbins(u)
    return chi_squared_statistic(values, e_lo, e_hi, s) <= chi_squared_critical(s, alpha)


def _split_point(e_lo: int, e_hi: int) -> Optional[int]:
    z = (e_lo + e_hi) // 2
    return z if e_lo < z < e_hi else None


def _distinct(sorted_values: np.ndarray) -> int:
    if len(sorted_values) == 0:
        return 0
    return 1 + int(np.count_nonzero(np.diff(sorted_values)))


def refine_bin_1d(e_lo: int, e_hi: int, values, M: int, alpha: float) -> RefineResult1D:
    """Recursively split ``[e_lo, e_hi)`` until every leaf is uniform or small."""
    x = np.sort(np.asarray(values, dtype=np.int64))
    out = RefineResult1D([], [], [], [])
    _refine_sorted(int(e_lo), int(e_hi), x, M, alpha, out)
    return out


def _refine_sorted(e_lo: int, e_hi: int, x: np.ndarray, M: int, alpha: float, out: RefineResult1D) -> None:
    n = len(x)
    if n == 0:
        out.extend(RefineResult1D([e_hi], [e_lo], [e_hi], [0]))
        return
    n_u = _distinct(x)
    if n_u == 1:
        out.extend(RefineResult1D([e_hi], [int(x[0])], [int(x[0])], [1]))
        return
    z = _split_point(e_lo, e_hi)
    if n < M or z is None or is_uniform(x, e_lo, e_hi, n_u, alpha):
        out.extend(RefineResult1D([e_hi], [int(x[0])], [int(x[-1])], [n_u]))
        return
    cut = int(np.searchsorted(x, z, side="left"))
    _refine_sorted(e_lo, z, x[:cut], M, alpha, out)
    _refine_sorted(z, e_hi, x[cut:], M, alpha, out)


def _marginal_test(x: np.ndarray, e_lo: int, e_hi: int, alpha: float) -> Tuple[bool, float]:
    u = len(np.unique(x))
    if u < 2:
        return True, 0.0
    s = terrell_scott_subbins(u)
    chi = chi_squared_statistic(x, e_lo, e_hi, s)
    return chi <= chi_squared_critical(s, alpha), chi


def refine_bin_2d(
    e_lo_i: int, e_hi_i: int, e_lo_j: int, e_hi_j: int,
    xi, xj, M: int, alpha: float,
) -> Tuple[List[int], List[int]]:
    """Split a 2-d bin along its least uniform marginal until both pass or few points remain.

    Returns the sorted new edges for each dimension.
    """
    new_i: set = set()
    new_j: set = set()
    stack = [(int(e_lo_i), int(e_hi_i), int(e_lo_j), int(e_hi_j),
              np.asarray(xi, dtype=np.int64), np.asarray(xj, dtype=np.int64))]
    while stack:
        a_lo, a_hi, b_lo, b_hi, pi, pj = stack.pop()
        ok_i, chi_i = _marginal_test(pi, a_lo, a_hi, alpha)
        ok_j, chi_j = _marginal_test(pj, b_lo, b_hi, alpha)
        if ok_i and ok_j:
            continue
        if not ok_i and (ok_j or chi_i >= chi_j):
            order = ("i", "j")
        else:
            order = ("j", "i")
        for dim in order:
            if dim == "i" and not ok_i and (z := _split_point(a_lo, a_hi)) is not None:
                new_i.add(z)
                left = pi < z
                halves = [(a_lo, z, b_lo, b_hi, pi[left], pj[left]),
                          (z, a_hi, b_lo, b_hi, pi[~left], pj[~left])]
                break
            if dim == "j" and not ok_j and (z := _split_point(b_lo, b_hi)) is not None:
                new_j.add(z)
                left = pj < z
                halves = [(a_lo, a_hi, b_lo, z, pi[left], pj[left]),
                          (a_lo, a_hi, z, b_hi, pi[~left], pj[~left])]
                break
        else:
            continue
        stack.extend(h for h in reversed(halves) if len(h[4]) > M)
    return sorted(new_i), sorted(new_j)


def weighted_centre_bounds(
    h: int, v_min: float, v_max: float, u: int, M: int, alpha: float, quantum: float = 1.0,
) -> Tuple[float, float]:
    """Bounds on the mean position of a bin's points, clamped into ``[v_min, v_max]``."""
    if h <= 0:
        raise ValueError("empty bin")
    if h < M:
        shift = (u - 1) * u * quantum / (2.0 * h)
        lo, hi = v_min + shift, v_max - shift
    else:
        s = terrell_scott_subbins(max(u, 2))
        delta = (v_max - v_min) / s
        radical = (delta / 6.0) * math.sqrt(3.0 * chi_squared_critical(s, alpha) * (s * s - 1) / h)
        lo = v_min + (s - 1) * delta / 2.0 - radical
        hi = v_min + (s + 1) * delta / 2.0 + radical
    mid = (v_min + v_max) / 2.0
    lo = min(max(lo, v_min), mid)
    hi = max(min(hi, v_max), mid)
    return lo, hi


def make_bin_table(v_min, v_max, u, h, M: int, alpha: float) -> BinTable:
    """Attach midpoints and weighted-centre bounds to raw per-bin metadata."""
    v_min = np.asarray(v_min, dtype=np.int64)
    v_max = np.asarray(v_max, dtype=np.int64)
    u = np.asarray(u, dtype=np.int64)
    h = np.asarray(h, dtype=np.int64)
    c = (v_min + v_max) / 2.0
    c_lo = c.copy()
    c_hi = c.copy()
    for t in np.flatnonzero((h > 0) & (u > 0)):
        c_lo[t], c_hi[t] = weighted_centre_bounds(int(h[t]), float(v_min[t]), float(v_max[t]),
                                                  int(u[t]), M, alpha)
    return BinTable(v_min, v_max, u, h, c, c_lo, c_hi)


# --- synopsis assembly -----------------------------------------------------


def draw_sample(table: EncodedTable, Ns: int, seed: int = 0) -> List[np.ndarray]:
    """Uniform sample of ``Ns`` rows without replacement, in original row order."""
    n = table.n_rows
    if Ns > n:
        raise ValueError(f"sample size {Ns} exceeds row count {n}")
    if Ns == n:
        return [np.asarray(c, dtype=np.int64) for c in table.columns]
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=Ns, replace=False))
    return [np.asarray(c, dtype=np.int64)[idx] for c in table.columns]


def non_null(values: np.ndarray, null_code: Optional[int]) -> np.ndarray:
    if null_code is None:
        return values
    return values[values != null_code]


def downsample_edges(edges: Sequence[int], v_lo: int, v_hi: int, target: int) -> np.ndarray:
    """Clip candidate edges to ``[v_lo, v_hi]`` and keep every ``ceil(len/target)``-th one."""
    e = np.unique(np.asarray(edges, dtype=np.int64))
    e = e[(e > v_lo) & (e < v_hi)]
    if target > 0 and len(e) > target:
        step = math.ceil(len(e) / target)
        e = e[::step]
    return np.concatenate([[v_lo], e, [v_hi]]).astype(np.int64)


def _interval_meta(sorted_x: np.ndarray, distinct_id: np.ndarray, edges: np.ndarray):
    """min / max / unique count of the sorted sample inside each ``[e_t, e_t+1)``."""
    pos = np.searchsorted(sorted_x, edges, side="left")
    lo, hi = pos[:-1], pos[1:]
    filled = hi > lo
    k = len(edges) - 1
    v_min = edges[:-1].copy()
    v_max = edges[1:].copy()
    u = np.zeros(k, dtype=np.int64)
    if filled.any():
        v_min[filled] = sorted_x[lo[filled]]
        v_max[filled] = sorted_x[hi[filled] - 1]
        u[filled] = distinct_id[hi[filled] - 1] - distinct_id[lo[filled]] + 1
    return v_min, v_max, u, (hi - lo).astype(np.int64)


def build_histogram_1d(
    column_id: int, values: np.ndarray, M: int, alpha: float, initial_edges=None,
) -> Histogram1D:
    x = np.sort(values)
    if len(x) == 0:
        table = make_bin_table([0], [1], [0], [0], M, alpha)
        return Histogram1D(column_id, np.array([0, 1], dtype=np.int64), table)
    v_lo, v_hi = int(x[0]), int(x[-1]) + 1
    if initial_edges is None:
        init = np.array([v_lo, v_hi], dtype=np.int64)
    else:
        init = downsample_edges(initial_edges, v_lo, v_hi, math.ceil(len(x) / M))
    res = RefineResult1D([], [], [], [])
    pos = np.searchsorted(x, init, side="left")
    for t in range(len(init) - 1):
        _refine_sorted(int(init[t]), int(init[t + 1]), x[pos[t]:pos[t + 1]], M, alpha, res)
    edges = np.array([v_lo] + res.upper_edges, dtype=np.int64)
    counts = np.diff(np.searchsorted(x, edges, side="left"))
    table = make_bin_table(res.v_mins, res.v_maxs, res.uniques, counts, M, alpha)
    return Histogram1D(column_id, edges, table)


def _locate(edges: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, x, side="right") - 1


def build_histogram_2d(
    i: int, j: int, xi: np.ndarray, xj: np.ndarray,
    hist_i: Histogram1D, hist_j: Histogram1D,
    sorted_i: Tuple[np.ndarray, np.ndarray], sorted_j: Tuple[np.ndarray, np.ndarray],
    M: int, alpha: float,
) -> Histogram2D:
    """Pairwise histogram over rows non-null in both columns (``i < j``)."""
    ei, ej = hist_i.edges, hist_j.edges
    ki, kj = len(ei) - 1, len(ej) - 1
    new_i: set = set()
    new_j: set = set()
    if len(xi):
        cell = _locate(ei, xi) * kj + _locate(ej, xj)
        order = np.argsort(cell, kind="stable")
        bounds = np.searchsorted(cell[order], np.arange(ki * kj + 1))
        for c in np.flatnonzero(np.diff(bounds) > M):
            ti, tj = divmod(int(c), kj)
            sel = order[bounds[c]:bounds[c + 1]]
            a, b = refine_bin_2d(ei[ti], ei[ti + 1], ej[tj], ej[tj + 1], xi[sel], xj[sel], M, alpha)
            new_i.update(a)
            new_j.update(b)
    edges_row = np.union1d(ei, np.array(sorted(new_i), dtype=np.int64)).astype(np.int64)
    edges_col = np.union1d(ej, np.array(sorted(new_j), dtype=np.int64)).astype(np.int64)
    kr, kc = len(edges_row) - 1, len(edges_col) - 1
    if len(xi):
        flat = _locate(edges_row, xi) * kc + _locate(edges_col, xj)
        counts = np.bincount(flat, minlength=kr * kc).reshape(kr, kc).astype(np.int64)
    else:
        counts = np.zeros((kr, kc), dtype=np.int64)
    vr = _interval_meta(*sorted_i, edges_row)[:3]
    vc = _interval_meta(*sorted_j, edges_col)[:3]
    meta_row = make_bin_table(*vr, counts.sum(axis=1), M, alpha)
    meta_col = make_bin_table(*vc, counts.sum(axis=0), M, alpha)
    return Histogram2D(i, j, edges_row, edges_col, counts, meta_row, meta_col)


def sorted_with_ids(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.sort(values)
    ids = np.zeros(len(x), dtype=np.int64)
    if len(x) > 1:
        ids[1:] = np.cumsum(np.diff(x) != 0)
    return x, ids


def build_pairwise_hist(
    table: EncodedTable,
    params: Params,
    initial_edges: Optional[Sequence[Optional[Sequence[int]]]] = None,
    seed: int = 0,
) -> Synopsis:
    """Build all 1-d and pairwise histograms from a seeded sample of ``table``."""
    if params.N != table.n_rows:
        raise ValueError(f"params.N={params.N} does not match table with {table.n_rows} rows")
    if params.d != len(table.columns):
        raise ValueError(f"params.d={params.d} does not match table with {len(table.columns)} columns")
    sample = draw_sample(table, params.Ns, seed)
    specs = table.specs
    M, alpha = params.M, params.alpha

    hists1d: List[Histogram1D] = []
    sorted_cols = []
    for i, spec in enumerate(specs):
        vals = non_null(sample[i], spec.null_code)
        init = initial_edges[i] if initial_edges is not None else None
        hists1d.append(build_histogram_1d(i, vals, M, alpha, init))
        sorted_cols.append(sorted_with_ids(vals))

    hists2d: Dict[Tuple[int, int], Histogram2D] = {}
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            mask = np.ones(params.Ns, dtype=bool)
            if specs[i].null_code is not None:
                mask &= sample[i] != specs[i].null_code
            if specs[j].null_code is not None:
                mask &= sample[j] != specs[j].null_code
            hists2d[(i, j)] = build_histogram_2d(
                i, j, sample[i][mask], sample[j][mask], hists1d[i], hists1d[j],
                sorted_cols[i], sorted_cols[j], M, alpha,
            )
    return Synopsis(params, list(specs), hists1d, hists2d)


def leaf_audit(hist: Histogram1D, values: np.ndarray, M: int, alpha: float) -> List[int]:
    """Indices of bins that should have been split (h >= M, u >= 2, not uniform)."""
    x = np.sort(values)
    pos = np.searchsorted(x, hist.edges, side="left")
    bad = []
    for t in range(hist.k):
        chunk = x[pos[t]:pos[t + 1]]
        u = _distinct(chunk)
        if len(chunk) >= M and u >= 2 and _split_point(int(hist.edges[t]), int(hist.edges[t + 1])) is not None:
            if not is_uniform(chunk, int(hist.edges[t]), int(hist.edges[t + 1]), u, alpha):
                bad.append(t)
    return bad
