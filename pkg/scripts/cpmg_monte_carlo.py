"""Monte Carlo CPMG coherence against the closed form and the filter-function integral."""

import argparse

import numpy as np

from csfq.decoherence import PowerLawPSD, coherence_numeric, gamma_n
from csfq.noise_mc import CouplingSpec, coherence_curve

K1 = 7.29e11  # flux slope of omega01 at 0.501 flux quanta (rad/s per flux quantum)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pulses", type=int, nargs="+", default=[1, 10, 100])
    ap.add_argument("--traj", type=int, default=1024)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    flux_psd = PowerLawPSD(1.8e-14, 0.68)
    freq_psd = PowerLawPSD(flux_psd.a * K1**2, flux_psd.alpha)
    taus = np.array([1, 2, 5, 10, 20]) * 1e-6
    print("N    tau_us   mc       stderr   numeric  closed")
    for n in args.pulses:
        res = coherence_curve(flux_psd, CouplingSpec("linear", k1=K1), f"cpmg:{n}", taus, args.traj,
                              args.seed, max(512, 10 * n))
        for r in res:
            closed = np.exp(-(gamma_n(freq_psd.a, freq_psd.alpha, n) * r.tau) ** (1 + freq_psd.alpha))
            num = coherence_numeric(freq_psd, n, r.tau)
            print(f"{n:<4} {r.tau * 1e6:6.1f}   {r.coherence:.4f}   {r.stderr:.4f}   {num:.4f}   {closed:.4f}")


if __name__ == "__main__":
    main()
