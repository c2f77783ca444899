"""Randomized checks of the 2D counting model: identity and neighbourhood lemma."""
import argparse

from voidlattice.curvature import CurvatureModel, eam_curvature_energy, eam_lemma_check, eam_phi
from voidlattice.sampling import make_rng, random_void_set_2d


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--eta", type=int, default=8)
    args = ap.parse_args()

    rng = make_rng(args.seed)
    model = CurvatureModel(1.0, float(args.eta), 2.0, "eam2d")
    window = ((0, 0), (args.size, args.size))
    worst = 0.0
    cex = []
    for k in range(args.trials):
        E = random_void_set_2d(rng, (args.size, args.size))
        p = eam_phi(E, window, model)
        worst = max(worst, abs(eam_curvature_energy(E, model, window) - p) / max(abs(p), 1e-300))
        cex += [(k, c) for c in eam_lemma_check(E, args.eta, 4)]
    print(f"trials {args.trials}, worst identity error {worst:.2e}, lemma counterexamples {len(cex)}")
    for k, c in cex[:10]:
        print("  trial", k, c)


if __name__ == "__main__":
    main()
