"""Recovery-sequence table for a box and an L-shaped void in 3D.

Prints perimeter gap and curvature energy per eps on the desk-scale
schedule. Pass --elastic to add the elastic columns (slower).
"""
import argparse
import itertools
import time

import numpy as np

from voidlattice.elastic import CellEnergyModel
from voidlattice.gamma import TABLE_COLUMNS, ExperimentModels, desk_regime, gamma_limsup_experiment
from voidlattice.lattice import VoxelSet
from voidlattice.surface import NeighborModel


def shapes():
    box = VoxelSet(0.5, np.array([(0, 0, 0)]), (0.5,) * 3)
    cells = [c for c in itertools.product(range(4), range(4), range(2)) if not (c[0] >= 2 and c[1] >= 2)]
    ell = VoxelSet(0.25, np.array(cells), (0.375,) * 3)
    return {
        "box": (box, ((1 / 8,) * 3, (7 / 8,) * 3)),
        "L": (ell, ((1 / 8,) * 3, (11 / 8, 11 / 8, 7 / 8))),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shape", choices=["box", "L"], default="box")
    ap.add_argument("--levels", type=int, default=5, help="number of eps halvings + 1 (max 5)")
    ap.add_argument("--diagonal", action="store_true", help="nearest + diagonal neighbours")
    ap.add_argument("--elastic", action="store_true")
    args = ap.parse_args()

    eps = [2.0 ** -k for k in range(4, 9)][: args.levels]
    eta = [1 / 8, 1 / 8, 1 / 16, 1 / 16, 1 / 32][: args.levels]
    E, omega = shapes()[args.shape]
    nb = NeighborModel.nearest_and_diagonal(3) if args.diagonal else NeighborModel.nearest(3)
    models = ExperimentModels(nb)
    if args.elastic:
        models = ExperimentModels(nb, CellEnergyModel(), np.diag([0.1, 0.0, 0.0]))
    t0 = time.perf_counter()
    rows = gamma_limsup_experiment(E, desk_regime(eps, eta), models, omega)
    print(",".join(TABLE_COLUMNS))
    for r in rows:
        print(",".join(f"{r[c]:.6g}" for c in TABLE_COLUMNS))
    print(f"# {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
