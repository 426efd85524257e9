import numpy as np
import pytest

from pairwisehist.bench import encode_table, make_desk_table
from pairwisehist.construct import build_pairwise_hist, make_bin_table
from pairwisehist.model import ColumnSpec, Histogram1D, Histogram2D, Kind, Params, Synopsis


def transport(row_sums, col_sums):
    """Deterministic non-negative integer matrix with the given margins (northwest corner)."""
    rows, cols = list(row_sums), list(col_sums)
    assert sum(rows) == sum(cols)
    out = np.zeros((len(rows), len(cols)), dtype=np.int64)
    i = j = 0
    while i < len(rows) and j < len(cols):
        take = min(rows[i], cols[j])
        out[i, j] = take
        rows[i] -= take
        cols[j] -= take
        if rows[i] == 0:
            i += 1
        else:
            j += 1
    return out


# Worked flights example: column 1 is the aggregation
# column, column 2 is distance (offset 69), column 3 is air time (offset 25, x10).
FLIGHTS_H1 = [500, 566, 300]
FLIGHTS_H2 = [441, 385, 291, 168, 81]
FLIGHTS_H3 = [84, 112, 195, 168, 313, 223, 109, 37]
FLIGHTS_H13_ROWS = [454, 520, 267]


def _table(v_min, v_max, u, h, M=10_000, alpha=0.001):
    return make_bin_table(v_min, v_max, u, h, M, alpha)


@pytest.fixture(scope="session")
def flights_synopsis():
    """Hand-built synopsis whose distance bins span [100t, 100t + 100] exactly.

    Adjacent bins share an endpoint, which half-open integer bins built from
    data cannot produce, so the synopsis is assembled directly.
    """
    n = sum(FLIGHTS_H1)
    t2 = np.arange(5)
    t3 = np.arange(8)
    h1 = _table([0, 10, 20], [9, 19, 29], [10, 10, 10], FLIGHTS_H1)
    h2 = _table(100 * t2, 100 * t2 + 100, [50] * 5, FLIGHTS_H2)
    h3 = _table(400 * t3, 400 * t3 + 400, [30] * 8, FLIGHTS_H3)
    e1 = np.array([0, 10, 20, 30])
    e2 = np.arange(6) * 100
    e3 = np.arange(9) * 400
    hists1d = [Histogram1D(0, e1, h1), Histogram1D(1, e2, h2), Histogram1D(2, e3, h3)]
    H12 = transport(FLIGHTS_H1, FLIGHTS_H2)
    H13 = transport(FLIGHTS_H13_ROWS, FLIGHTS_H3)
    H23 = transport([FLIGHTS_H2[0] - 125] + FLIGHTS_H2[1:], FLIGHTS_H3)
    t1_13 = _table([0, 10, 20], [9, 19, 29], [10, 10, 10], H13.sum(axis=1))
    t2_23 = _table(100 * t2, 100 * t2 + 100, [50] * 5, H23.sum(axis=1))
    hists2d = {
        (0, 1): Histogram2D(0, 1, e1, e2, H12, h1, h2),
        (0, 2): Histogram2D(0, 2, e1, e3, H13, t1_13, h3),
        (1, 2): Histogram2D(1, 2, e2, e3, H23, t2_23, h3),
    }
    specs = [
        ColumnSpec(0, Kind.INTEGER, 0, 1, None, None, 1, 29, "x1"),
        ColumnSpec(1, Kind.INTEGER, 69, 1, None, None, 2, 500, "dist"),
        ColumnSpec(2, Kind.DECIMAL, 250, 10, None, 3201, 2, 3200, "air_time"),
    ]
    return Synopsis(Params(n, n, n, 0.001, 3), specs, hists1d, hists2d)


@pytest.fixture(scope="session")
def desk_table():
    return make_desk_table(100_000, seed=0)


@pytest.fixture(scope="session")
def desk_synopsis(desk_table):
    n = desk_table.n_rows
    return build_pairwise_hist(desk_table, Params(n, n, 1000, 0.001, 4), seed=0)


@pytest.fixture(scope="session")
def small_table():
    """2000-row mixed table with nulls in two columns."""
    rng = np.random.default_rng(7)
    n = 2000
    a = rng.integers(0, 100, n).tolist()
    b = [None if rng.random() < 0.05 else f"{v:.1f}" for v in rng.normal(50, 10, n)]
    c = rng.choice(["red", "green", "blue"], n, p=[0.5, 0.3, 0.2]).tolist()
    d = [None if rng.random() < 0.1 else int(v) for v in rng.exponential(20, n)]
    return encode_table([a, b, c, d], ["a", "b", "c", "d"])


@pytest.fixture(scope="session")
def small_synopsis(small_table):
    n = small_table.n_rows
    return build_pairwise_hist(small_table, Params(n, n, 50, 0.001, 4), seed=0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
