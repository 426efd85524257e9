"""Regenerate the storage conformance file used by the test suite.

The table mixes an independent column, a conditionally skewed one (2-d
refinement adds edges), a decimal and a column derived from it (sparse pair
counts), and a categorical. Only rerun after an intentional layout change.
"""

import argparse
from pathlib import Path

import numpy as np

from pairwisehist.bench import encode_table
from pairwisehist.construct import build_pairwise_hist
from pairwisehist.model import Params
from pairwisehist.storage import save

GOLDEN_PATH = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden.pwh"
SEED = 11
ROWS = 3000


def golden_table(n=ROWS, seed=SEED):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 1000, n)
    y = np.where(x < 500, rng.integers(0, 100, n), rng.integers(0, 1000, n))
    z = np.round(rng.lognormal(2, 1, n), 1)
    w = np.round(z * 3).astype(int)
    c = rng.choice(["a", "b", "c"], n, p=[0.6, 0.3, 0.1])
    cols = [x.tolist(), y.tolist(), [f"{v:.1f}" for v in z], w.tolist(), c.tolist()]
    return encode_table(cols, ["x", "y", "z", "w", "c"])


def golden_synopsis():
    table = golden_table()
    return build_pairwise_hist(table, Params(ROWS, ROWS, 30, 0.001, len(table.specs)), seed=SEED)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", type=Path, default=GOLDEN_PATH)
    args = ap.parse_args()
    n = save(golden_synopsis(), args.output)
    print(f"wrote {n} bytes to {args.output}")


if __name__ == "__main__":
    main()
