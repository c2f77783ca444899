"""Print the suggested scaling regime and its five monitors."""
import argparse

from voidlattice.gamma import MONITORS, suggest_regime


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, default=2.0)
    ap.add_argument("--kmin", type=int, default=6)
    ap.add_argument("--kmax", type=int, default=12)
    ap.add_argument("--s", type=float, default=0.9)
    args = ap.parse_args()

    eps = [2.0 ** -k for k in range(args.kmin, args.kmax + 1)]
    reg = suggest_regime(eps, args.q, args.s)
    cols = ["eps", "delta", "eta", "gamma"] + [m for m, _ in MONITORS if m != "eta"]
    print(",".join(cols))
    for row in reg.rows():
        print(",".join(f"{row[c]:.6g}" for c in cols))


if __name__ == "__main__":
    main()
