"""Desk-scale benchmark on the seeded synthetic table.

Builds a synopsis, runs generated queries through both the estimator and the
exact full scan, prints the summary table and optionally writes the JSON-lines
report.

    python scripts/run_benchmark.py --rows 100000 --queries 200 --report bench.jsonl
"""

import argparse
import math
from dataclasses import dataclass, fields

from pairwisehist.bench import generate_queries, make_desk_table, run_benchmark
from pairwisehist.model import AGGREGATES, Params


@dataclass
class BenchConfig:
    rows: int = 100_000
    samples: int = 0  # 0 means every row
    min_points: int = 1000
    alpha: float = 0.001
    queries: int = 200
    max_conditions: int = 1
    min_selectivity: float = 1e-5
    aggregates: str = "COUNT,SUM,AVG"
    seed: int = 0
    report: str = ""
    deterministic: bool = False


def parse_args() -> BenchConfig:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    for f in fields(BenchConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type is bool:
            ap.add_argument(flag, action="store_true")
        else:
            ap.add_argument(flag, type=type(f.default), default=f.default)
    return BenchConfig(**vars(ap.parse_args()))


def main():
    cfg = parse_args()
    aggregates = [a.strip().upper() for a in cfg.aggregates.split(",")]
    unknown = set(aggregates) - set(AGGREGATES)
    if unknown:
        raise SystemExit(f"unknown aggregates: {sorted(unknown)}")
    table = make_desk_table(cfg.rows, seed=cfg.seed)
    ns = cfg.samples or cfg.rows
    m = min(cfg.min_points or max(2, math.ceil(0.01 * ns)), ns)
    params = Params(cfg.rows, ns, m, cfg.alpha, len(table.specs))
    queries = generate_queries(table, cfg.queries, seed=cfg.seed, min_selectivity=cfg.min_selectivity,
                               aggregates=aggregates, max_conditions=cfg.max_conditions)
    report = run_benchmark(table, params, queries, seed=cfg.seed, report_path=cfg.report or None,
                           deterministic=cfg.deterministic)
    print(f"rows={cfg.rows} Ns={ns} M={m} alpha={cfg.alpha} queries={len(queries)}")
    print(report.to_text())


if __name__ == "__main__":
    main()
