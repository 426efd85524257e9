"""Command-line entry point ``pwh``.

Exit codes: 0 success, 2 unsupported query shape, 3 I/O or format errors.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from typing import List, Optional

from .bench import IngestError, generate_queries, ingest_csv, run_benchmark
from .construct import build_pairwise_hist
from .model import AGGREGATES, Params
from .parser import QueryShapeError
from .query import WIDENING_MODES, run_query
from .storage import StorageError, load, save, size_breakdown, storage_upper_bound

EXIT_QUERY = 2
EXIT_IO = 3


def _params(n_rows: int, d: int, samples: Optional[int], min_points: Optional[int], alpha: float) -> Params:
    ns = min(samples, n_rows) if samples else n_rows
    m = min_points if min_points else max(2, math.ceil(0.01 * ns))
    return Params(N=n_rows, Ns=ns, M=min(m, ns), alpha=alpha, d=d)


def _fmt(v) -> str:
    return "NULL" if v is None else f"{v:.6g}"


def cmd_build(args) -> int:
    table = ingest_csv(args.csv)
    params = _params(table.n_rows, len(table.columns), args.samples, args.min_points, args.alpha)
    t0 = time.perf_counter()
    synopsis = build_pairwise_hist(table, params, seed=args.seed)
    elapsed = time.perf_counter() - t0
    n = save(synopsis, args.output)
    print(f"built {args.output}: {n} bytes, {elapsed:.3f} s, bins per column {[h.k for h in synopsis.hists1d]}")
    return 0


def cmd_query(args) -> int:
    synopsis = load(args.synopsis)
    res = run_query(args.sql, synopsis, args.widening)
    if res.per_group is not None:
        for label, g in res.per_group.items():
            line = f"{label}\t{_fmt(g.estimate)}"
            print(line + (f"\t[{_fmt(g.lower)}, {_fmt(g.upper)}]" if args.bounds else ""))
        return 0
    print(_fmt(res.estimate) + (f"\t[{_fmt(res.lower)}, {_fmt(res.upper)}]" if args.bounds else ""))
    return 0


def cmd_bench(args) -> int:
    table = ingest_csv(args.csv)
    params = _params(table.n_rows, len(table.columns), args.samples, args.min_points, args.alpha)
    queries = generate_queries(table, args.queries, seed=args.seed, min_selectivity=args.min_selectivity,
                               aggregates=args.aggregates, max_conditions=args.max_conditions)
    report = run_benchmark(table, params, queries, seed=args.seed, report_path=args.report,
                           deterministic=args.deterministic, widening=args.widening)
    print(report.to_text())
    return 0


def cmd_inspect(args) -> int:
    synopsis = load(args.synopsis)
    p = synopsis.params
    print(f"N={p.N} Ns={p.Ns} M={p.M} alpha={p.alpha} d={p.d}")
    for name, size in size_breakdown(synopsis).items():
        print(f"{name:<10}{size:>10} bytes")
    print(f"{'bound':<10}{storage_upper_bound(synopsis):>10} bytes (body)")
    for spec, h in zip(synopsis.columns, synopsis.hists1d):
        print(f"column {spec.column_id} {spec.name!r} ({spec.kind.value}): k={h.k}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pwh", description="Histogram synopsis for approximate aggregate queries.")
    sub = ap.add_subparsers(dest="command", required=True)

    def sampling(p):
        p.add_argument("--samples", type=int, default=None, help="sample size (default: all rows)")
        p.add_argument("--min-points", type=int, default=None, help="split threshold M (default: 1%% of samples)")
        p.add_argument("--alpha", type=float, default=0.001, help="uniformity test significance")
        p.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("build", help="build a synopsis from a CSV file")
    b.add_argument("csv")
    b.add_argument("-o", "--output", required=True)
    sampling(b)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="run one SQL query against a synopsis")
    q.add_argument("synopsis")
    q.add_argument("sql")
    q.add_argument("--bounds", action="store_true", help="print lower and upper bounds")
    q.add_argument("--widening", choices=WIDENING_MODES, default="printed")
    q.set_defaults(func=cmd_query)

    r = sub.add_parser("bench", help="benchmark against an exact full scan")
    r.add_argument("csv")
    r.add_argument("--queries", type=int, default=100)
    r.add_argument("--min-selectivity", type=float, default=1e-5)
    r.add_argument("--aggregates", type=lambda s: [a.strip().upper() for a in s.split(",")],
                   default=["COUNT", "SUM", "AVG"], help=f"comma list from {','.join(AGGREGATES)}")
    r.add_argument("--max-conditions", type=int, default=1)
    r.add_argument("--report", default=None, help="write a JSON-lines report here")
    r.add_argument("--deterministic", action="store_true", help="omit timing fields from the report")
    r.add_argument("--widening", choices=WIDENING_MODES, default="printed")
    sampling(r)
    r.set_defaults(func=cmd_bench)

    i = sub.add_parser("inspect", help="print block sizes and bins per column")
    i.add_argument("synopsis")
    i.set_defaults(func=cmd_inspect)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QueryShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    except (OSError, IngestError, StorageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
