"""Thermal-photon dephasing rate versus temperature and the temperatures matching two measured rates."""

import argparse

import numpy as np

from csfq.photon import (PAPER_CHI, PAPER_KAPPA, PAPER_OMEGA_R, PhotonNoiseParams, decay_rate,
                         n_thermal, required_temperature)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--temps-mk", type=float, nargs="+", default=[40, 60, 80, 100, 150, 200, 250, 300])
    args = ap.parse_args()

    print(f"resonator {PAPER_OMEGA_R / 2e9 / np.pi:.4f} GHz")
    print("T_mK   n_th       rate_kHz")
    for t in args.temps_mk:
        n = n_thermal(t * 1e-3, PAPER_OMEGA_R)
        p = PhotonNoiseParams.from_kappa(PAPER_OMEGA_R, PAPER_KAPPA, n, PAPER_CHI)
        print(f"{t:5.0f}  {n:.3e}  {decay_rate(p) / 1e3:9.3f}")
    for rate in (213e3, 4.68e3):
        print(f"rate {rate / 1e3:g} kHz needs {required_temperature(rate) * 1e3:.1f} mK")


if __name__ == "__main__":
    main()
