"""Transition frequencies versus flux and offset-charge modulation of the shipped device."""

import argparse

import numpy as np

from csfq.circuit import BiasPoint, charge_dispersion, diagonalize, paper_device, transition

GHZ = 2 * np.pi * 1e9


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=21)
    ap.add_argument("--span", type=float, default=2e-3, help="half-width of the flux sweep")
    ap.add_argument("--charge-grid", type=int, default=8)
    args = ap.parse_args()

    dev = paper_device()
    print("flux       f01_GHz    f12_GHz    f02_GHz")
    for f in np.linspace(0.5 - args.span, 0.5 + args.span, args.points):
        s = diagonalize(dev, BiasPoint(f), 3)
        w = [transition(s, *p) / GHZ for p in ((0, 1), (1, 2), (0, 2))]
        print(f"{f:.6f}  " + "  ".join(f"{x:9.5f}" for x in w))
    mods = charge_dispersion(dev, BiasPoint(0.5), grid=args.charge_grid, basis_size=12,
                             pairs=[(0, 1), (1, 2), (0, 2)])
    print("charge modulation at 0.5 flux (Hz): "
          + ", ".join(f"{p}: {m / (2 * np.pi):.1f}" for p, m in zip(("01", "12", "02"), mods)))


if __name__ == "__main__":
    main()
