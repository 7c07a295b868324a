"""Reproduce the convergence tables for all examples and compare with published errors.

    python scripts/reproduce_tables.py              # N = 64, 128, 256
    python scripts/reproduce_tables.py --extended   # adds N = 512 and 1024 (slow)

Prints measured max errors next to the published N = 128 and 256 values and
writes every table to ``--outdir``.
"""

import argparse
import sys
from pathlib import Path

from kfbi.catalog import CATALOG, get_config
from kfbi.experiment import emit_table, format_rows, run_example

# published max errors at N = 128 and 256
PUBLISHED = {
    "ex1_dirichlet": (8.97e-5, 2.08e-5),
    "ex1_neumann": (3.37e-2, 1.02e-2),
    "ex2_helicoid": (8.70e-5, 2.36e-5),
    "ex4_paraboloid": (8.66e-4, 1.96e-4),
    "ex5_torus_g1": (2.12e-3, 3.56e-4),
    "ex6_dupin": (1.95e-3, 5.03e-4),
}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--extended", action="store_true", help="also run N = 512 and 1024")
    p.add_argument("--outdir", default="results/tables")
    args = p.parse_args(argv)

    sizes = (64, 128, 256, 512, 1024) if args.extended else (64, 128, 256)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = []
    for name in CATALOG:
        rows = run_example(get_config(name).with_sizes(sizes))
        emit_table(rows, outdir / f"{name}.csv")
        print(f"== {name}")
        print(format_rows(rows))
        if name in PUBLISHED:
            by_n = {r.N: r.max_error for r in rows if r.ok}
            ref = PUBLISHED[name]
            got = [by_n.get(N, float("nan")) for N in (128, 256)]
            summary.append(f"{name:18s} N=128 {got[0]:.2e} (pub {ref[0]:.2e})  "
                           f"N=256 {got[1]:.2e} (pub {ref[1]:.2e})")
    print("\n".join(["", "measured vs published"] + summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
