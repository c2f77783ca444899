"""Command-line front end.

Exit codes: 0 on success, 2 on invalid input (bad files, unknown config keys,
rejected regimes), 1 on any other error. Every artifact is written atomically
into ``--out`` and starts with the resolved config as ``#`` comment lines.
"""
from __future__ import annotations

import argparse
import os
import sys

COMMANDS = ("energy", "perimeter", "curvature", "flatness", "replace", "smooth", "minimize", "gamma",
            "eam-check", "regime")


def _common(p):
    p.add_argument("--config", help="INI-style config file")
    p.add_argument("--seed", type=int, help="seed for randomized commands")
    p.add_argument("--out", default=".", help="artifact directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    p.add_argument("--threads", type=int, help="cap worker threads (default: all cores)")


def build_parser():
    ap = argparse.ArgumentParser(prog="voidlattice", description="Discrete energies of lattices with voids.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("energy", help="elastic energy of an affine displacement")
    _common(p)
    p.add_argument("--set", help="void-set file")
    p.add_argument("--delta", type=float)

    p = sub.add_parser("perimeter", help="discrete perimeter of a void set")
    _common(p)
    p.add_argument("--set", required=True)
    p.add_argument("--neighbors", help="neighbour model file")

    p = sub.add_parser("curvature", help="curvature energy of a void set")
    _common(p)
    p.add_argument("--set", required=True)
    p.add_argument("--eta", type=int, help="mesoscale as a multiple of eps")
    p.add_argument("--gamma", type=float)
    p.add_argument("--q", type=float)

    p = sub.add_parser("flatness", help="flatness classification per eta-cube")
    _common(p)
    p.add_argument("--set", required=True)
    p.add_argument("--eta", type=int, required=True)

    p = sub.add_parser("replace", help="eta-scale replacement")
    _common(p)
    p.add_argument("--set", required=True)
    p.add_argument("--eta", type=int, required=True)

    p = sub.add_parser("smooth", help="mollified super-level cover of an eta-aligned set")
    _common(p)
    p.add_argument("--set", required=True)
    p.add_argument("--eta", type=int, required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--t", type=float, help="level in (0, 1); 'auto' scan if omitted and [smooth] t unset")
    p.add_argument("--grid", type=int, help="fine cells per eta-cube edge")
    p.add_argument("--replace", action="store_true", help="apply the eta-scale replacement first")

    p = sub.add_parser("minimize", help="minimise the elastic energy under an affine boundary datum")
    _common(p)
    p.add_argument("--set", help="void-set file")

    p = sub.add_parser("gamma", help="recovery-sequence convergence table")
    _common(p)
    p.add_argument("--set", help="void-set file describing the continuum void")

    p = sub.add_parser("eam-check", help="randomized checks of the 2D counting model")
    _common(p)
    p.add_argument("--window", default="32x32", help="WxH in lattice sites")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--eta", type=int, default=8, help="mesoscale as a multiple of eps")

    p = sub.add_parser("regime", help="suggested scaling regime and its monitors")
    _common(p)
    p.add_argument("--q", type=float)
    p.add_argument("--eps", help="list like '2^-6 2^-7 2^-8'")
    return ap


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        print("error: --threads must be positive", file=sys.stderr)
        raise SystemExit(2)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    # thread caps only take effect if set before numpy loads
    _set_threads(args.threads)
    from .io import ValidationError

    try:
        from . import commands

        return commands.run(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
