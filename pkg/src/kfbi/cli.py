"""Command-line entry point.

    kfbi solve <config|example> [-N 128]
    kfbi convergence <config|example> [--sizes 64 128 256] [--out table.csv] [--parallel]
    kfbi validate [--quick]
    kfbi list

On failure a single JSON object ``{"error": ..., "type": ...}`` is written to
stderr and the exit status is nonzero. ``KFBI_NUM_THREADS`` caps the number of
threads used by numba and the BLAS libraries.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

THREAD_ENV = "KFBI_NUM_THREADS"


def _cap_threads():
    n = os.environ.get(THREAD_ENV)
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = n


def _config(arg: str):
    from .catalog import CATALOG, get_config, load_config

    if arg in CATALOG:
        return get_config(arg)
    if not Path(arg).exists():
        raise FileNotFoundError(f"{arg!r} is neither a catalog example nor a config file")
    return load_config(arg)


def _emit_rows(rows, out):
    from .experiment import emit_table, format_rows

    print(format_rows(rows))
    if out:
        emit_table(rows, out)
        print(f"wrote {out}")
    failed = [r for r in rows if not r.ok]
    if failed:
        raise RuntimeError(f"{len(failed)} of {len(rows)} rows failed: {failed[0].error}")


def cmd_solve(args):
    from .experiment import run_example

    cfg = _config(args.config)
    N = args.N if args.N else max(cfg.grid_sizes)
    cfg = replace(cfg, grid_sizes=(N,), output=None)
    rows = run_example(cfg, dump_dir=args.dump)
    _emit_rows(rows, args.out)


def cmd_convergence(args):
    from .experiment import run_example

    cfg = _config(args.config)
    if args.sizes:
        cfg = cfg.with_sizes(args.sizes)
    out = args.out or cfg.output
    rows = run_example(replace(cfg, output=None), parallel=args.parallel, dump_dir=args.dump)
    _emit_rows(rows, out)


def cmd_validate(args):
    from .validation import run_all

    results = run_all(quick=args.quick)
    bad = 0
    for r in results:
        print(r.line())
        bad += not r.passed
    if bad:
        raise RuntimeError(f"{bad} validation checks failed")


def cmd_list(args):
    from .catalog import CATALOG

    for name, cfg in CATALOG.items():
        print(f"{name:22s} {cfg.kind:22s} {cfg.surface:12s} {cfg.curve}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kfbi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one configuration at one grid size")
    s.add_argument("config", help="catalog example name or INI config path")
    s.add_argument("-N", type=int, default=None, help="grid size (default: largest in the config)")
    s.add_argument("--out", default=None, help="CSV output path")
    s.add_argument("--dump", default=None, help="directory for field dumps")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("convergence", help="run a refinement sweep and write the table")
    c.add_argument("config")
    c.add_argument("--sizes", type=int, nargs="+", default=None)
    c.add_argument("--out", default=None)
    c.add_argument("--dump", default=None)
    c.add_argument("--parallel", action="store_true", help="run grid sizes in separate processes")
    c.set_defaults(func=cmd_convergence)

    v = sub.add_parser("validate", help="run the property checks")
    v.add_argument("--quick", action="store_true", help="coarser grids")
    v.set_defaults(func=cmd_validate)

    ls = sub.add_parser("list", help="list catalog examples")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    _cap_threads()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as one machine-readable line
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
