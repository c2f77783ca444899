"""Cauchy-Born deviation of minimisers, with and without a void box."""
import argparse
import time

import numpy as np

from voidlattice.elastic import CellEnergyModel
from voidlattice.gamma import cauchy_born_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--void", action="store_true", help="cut the box [3/8, 5/8)^3 out of the lattice")
    ap.add_argument("--eps", type=float, nargs="+", default=[1 / 8, 1 / 16])
    ap.add_argument("--skew", type=float, default=0.0, help="add a skew part of this size to F")
    args = ap.parse_args()

    F = np.array([[0.02, 0.01, 0.0], [0.01, -0.01, 0.0], [0.0, 0.0, 0.015]])
    F[0, 1] += args.skew
    F[1, 0] -= args.skew
    void = ((3 / 8,) * 3, (5 / 8,) * 3) if args.void else None
    t0 = time.perf_counter()
    rows = cauchy_born_experiment(F, args.eps, ((0, 0, 0), (1, 1, 1)), CellEnergyModel(), void_box=void)
    print("eps,delta,deviation,cells,energy,converged")
    for r in rows:
        print(f"{r.eps:.6g},{r.delta:.6g},{r.deviation:.3e},{r.cells},{r.energy:.6g},{r.converged}")
    print(f"# {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
