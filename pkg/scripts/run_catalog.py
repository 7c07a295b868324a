"""Run catalog examples and write one convergence CSV per example.

    python scripts/run_catalog.py                       # every example, N = 64, 128, 256
    python scripts/run_catalog.py ex1_dirichlet ex6_dupin --sizes 32 64 128
    python scripts/run_catalog.py --outdir results --parallel
"""

import argparse
import sys
from pathlib import Path

from kfbi.catalog import CATALOG, get_config
from kfbi.experiment import emit_table, format_rows, run_example


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="catalog examples (default: all)")
    p.add_argument("--sizes", type=int, nargs="+", default=None)
    p.add_argument("--outdir", default="results")
    p.add_argument("--parallel", action="store_true", help="run grid sizes in separate processes")
    args = p.parse_args(argv)

    names = args.names or list(CATALOG)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    failed = 0
    for name in names:
        cfg = get_config(name)
        if args.sizes:
            cfg = cfg.with_sizes(args.sizes)
        rows = run_example(cfg, parallel=args.parallel)
        print(f"== {name}")
        print(format_rows(rows))
        emit_table(rows, outdir / f"{name}.csv")
        failed += sum(not r.ok for r in rows)
    print(f"wrote {len(names)} tables to {outdir}/")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
