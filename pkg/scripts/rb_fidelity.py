"""Randomized benchmarking of the calibrated single-qubit gates in several drive models."""

import argparse
import time
import warnings

from csfq.circuit import paper_device
from csfq.rb import PulseSpec, RbConfig, RbDevice, fit_rb, run_rb

MODES = {"rwa": dict(rwa=True), "cr": dict(rwa=False, counter_rotating=True), "3-level": dict(rwa=True, levels=3)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--modes", nargs="+", choices=list(MODES), default=list(MODES))
    ap.add_argument("--randomizations", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    dev = RbDevice.from_circuit(paper_device())
    pulses = PulseSpec.calibrated()
    for name in args.modes:
        cfg = RbConfig(randomizations=args.randomizations, seed=args.seed, **MODES[name])
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = run_rb(cfg, pulses, dev)
        fit = fit_rb(table.m, table.survival)
        extra = f", max p2 {table.p2.max():.3g}" if cfg.levels == 3 else ""
        print(f"{name:8s} F_ave = {100 * fit.f_ave:.3f} % +- {100 * fit.f_ave_stderr:.3f}{extra}, "
              f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
