"""Command-line entry point: ``csfq <subcommand> [options]``.

Every subcommand writes a column table (to ``--out`` or stdout) whose ``#``
header echoes the tool version, the subcommand and all parameters that
affect the result. Randomized subcommands require ``--seed``. Exit status is
0 on success, 2 on usage errors and 1 on errors raised while computing.
"""

import argparse
import sys
import warnings

import numpy as np

from csfq import __version__
from csfq.errors import CsfqError
from csfq.tables import manifest, read_table, write_table

GHZ = 2 * np.pi * 1e9
MHZ = 2 * np.pi * 1e6


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _on_off(text):
    if text.lower() in ("on", "yes", "true", "1"):
        return True
    if text.lower() in ("off", "no", "false", "0"):
        return False
    raise argparse.ArgumentTypeError("expected on or off")


def _device(args):
    from csfq.config import load_device_config, load_paper_config

    return load_paper_config() if args.device is None else load_device_config(args.device)


def _threads(args):
    from csfq._util import default_threads

    return default_threads() if args.threads is None else args.threads


def _need_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} is randomized and needs an explicit --seed")
    return args.seed


def _params(args, *skip):
    """Parameters echoed in the header: everything except I/O and thread settings."""
    drop = {"command", "func", "out", "threads"} | set(skip)
    return {k: v for k, v in vars(args).items() if k not in drop}


def _emit(args, columns, rows, extra=None):
    params = _params(args)
    if extra:
        params.update(extra)
    header = manifest(args.command, params)
    if args.out is None:
        write_table(sys.stdout, columns, rows, header)
    else:
        write_table(args.out, columns, rows, header)


def _print_kv(values):
    for k, v in values.items():
        print(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")


# subcommands -----------------------------------------------------------------

def cmd_spectrum(args):
    from csfq.circuit import BiasPoint, diagonalize

    dev = _device(args)
    if args.levels < 3:
        raise UsageError("--levels must be >= 3")
    fluxes = np.linspace(args.flux_from, args.flux_to, args.points)
    from csfq._util import pmap

    spectra = pmap(lambda f: diagonalize(dev.circuit, BiasPoint(f), args.levels, args.basis_size).energies,
                   fluxes, _threads(args))
    cols = ["flux", "f01_ghz", "f12_ghz", "f02_ghz"] + [f"f0{k}_ghz" for k in range(3, args.levels)]
    rows = []
    for f, e in zip(fluxes, spectra):
        w = (e - e[0]) / GHZ
        rows.append([f, w[1], w[2] - w[1], w[2]] + list(w[3:]))
    _emit(args, cols, rows)


def cmd_fit(args):
    from csfq.spectro_fit import SpectroscopyDataset, fit_junctions

    dev = _device(args)
    data = SpectroscopyDataset.read_csv(args.data)
    init = (args.jc_init * 1e6 if args.jc_init else dev.circuit.jc,
            args.alpha_init if args.alpha_init else dev.circuit.alpha_j)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit_junctions(data, dev.caps, init, area_large=dev.circuit.area_large,
                            c_tilde=dev.circuit.c_tilde, basis_size=args.basis_size,
                            max_iter=args.max_iter, threads=_threads(args))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _print_kv({"jc_ua_per_um2": res.jc / 1e6, "alpha_j": res.alpha_j, "rms_ghz": res.rms,
               "converged": res.converged, "n_iter": res.n_iter})
    if args.out is not None:
        rows = [[f, i, g, r] for i, (f, g, r) in
                enumerate(zip(data.flux, data.ghz, res.residuals))]
        write_table(args.out, ["flux", "row", "ghz", "residual_ghz"], rows,
                    manifest(args.command, _params(args)))


def cmd_coherence(args):
    from csfq.decoherence import PowerLawPSD, coherence_approx, coherence_numeric

    psd = PowerLawPSD(args.a, args.alpha)
    taus = np.linspace(args.tau_max / args.points, args.tau_max, args.points)
    rows = []
    for t in taus:
        row = [t, coherence_approx(psd, args.n, t)]
        if args.numeric:
            row.append(coherence_numeric(psd, args.n, t))
        rows.append(row)
    cols = ["tau", "coherence_approx"] + (["coherence_numeric"] if args.numeric else [])
    _emit(args, cols, rows)


def cmd_psd_extract(args):
    from csfq.decoherence import RateSet, fit_powerlaw_psd

    t = read_table(args.rates)
    if "n" not in t.columns or "gamma_hz" not in t.columns:
        raise UsageError("rates file needs columns n and gamma_hz")
    # the gamma_hz column holds decay rates in 1/s
    a, alpha = fit_powerlaw_psd(RateSet(t.column("n").astype(int), t.column("gamma_hz")))
    _print_kv({"a": a, "alpha": alpha})
    if args.out is not None:
        write_table(args.out, ["a", "alpha"], [[a, alpha]], manifest(args.command, _params(args)))


def _coupling(args):
    from csfq.noise_mc import CouplingSpec

    if args.coupling == "linear":
        return CouplingSpec("linear", k1=args.k)
    return CouplingSpec("quadratic", k2=args.k)


def cmd_mc(args):
    from csfq.decoherence import PowerLawPSD
    from csfq.noise_mc import coherence_curve, parse_sequence

    seed = _need_seed(args)
    psd = PowerLawPSD(args.psd_a, args.psd_alpha, omega_min=args.omega_min)
    n = parse_sequence(args.sequence)
    n_samples = args.samples if args.samples else max(512, 10 * n)
    res = coherence_curve(psd, _coupling(args), args.sequence, args.tau_list, args.traj, seed,
                          n_samples, _threads(args))
    _emit(args, ["tau", "coherence", "stderr"], [[r.tau, r.coherence, r.stderr] for r in res],
          {"samples": n_samples})


def cmd_histogram(args):
    from csfq.decoherence import PowerLawPSD
    from csfq.noise_mc import correlation_from_psd, frequency_histogram, sample_trajectories

    seed = _need_seed(args)
    psd = PowerLawPSD(args.psd_a, args.psd_alpha, omega_min=args.omega_min)
    cm = correlation_from_psd(psd, args.dt, args.samples)
    batch = sample_trajectories(cm, args.traj, seed, _threads(args))
    h = frequency_histogram(batch, _coupling(args), args.bins)
    rows = [[lo, hi, c] for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts)]
    _emit(args, ["bin_lo", "bin_hi", "count"], rows,
          {"result_mean": repr(h.mean), "result_variance": repr(h.variance),
           "result_skewness": repr(h.skewness), "result_skewness_stderr": repr(h.skewness_stderr)})


def _read_rates(path):
    from csfq.multilevel import RateMatrix

    t = read_table(path)
    if t.columns != ["from", "to", "rate"]:
        raise UsageError("rates file needs columns: from to rate")
    g = np.zeros((3, 3))
    for j, k, r in t.data:
        g[int(j), int(k)] = r
    return RateMatrix(g)


def cmd_relax(args):
    from csfq.multilevel import evolve_populations

    rates = _read_rates(args.rates)
    if len(args.p0) != 3:
        raise UsageError("--p0 needs three populations")
    t = np.linspace(0, args.t_max, args.points)
    p = evolve_populations(rates, args.p0, t)
    _emit(args, ["t", "p0", "p1", "p2"], [[ti, *pi] for ti, pi in zip(t, p)])


def cmd_fit_relax(args):
    from csfq.circuit import BiasPoint, diagonalize, transition
    from csfq.multilevel import RelaxationTrace, fit_relaxation

    t = read_table(args.traces)
    need = ["prepared", "t", "p0", "p1", "p2"]
    if t.columns != need:
        raise UsageError("traces file needs columns: " + " ".join(need))
    dev = _device(args)
    s = diagonalize(dev.circuit, BiasPoint(args.flux), 3)
    w12, w02 = transition(s, 1, 2), transition(s, 0, 2)
    traces = []
    for level in np.unique(t.column("prepared")).astype(int):
        sel = t.column("prepared") == level
        p_init = np.zeros(3)
        p_init[level] = 1.0
        traces.append(RelaxationTrace(p_init, t.column("t")[sel], t.data[sel][:, 2:5]))
    g21, g20 = fit_relaxation(traces, args.gamma10, args.gamma01, args.temp * 1e-3, w12, w02)
    from csfq.multilevel import boltzmann

    table = {"gamma01": args.gamma01, "gamma10": args.gamma10,
             "gamma12": g21 * boltzmann(w12, args.temp * 1e-3), "gamma21": g21,
             "gamma02": g20 * boltzmann(w02, args.temp * 1e-3), "gamma20": g20}
    _print_kv({k: float(v) for k, v in table.items()})
    if args.out is not None:
        write_table(args.out, ["from", "to", "rate"],
                    [[int(k[5]), int(k[6]), v] for k, v in table.items()],
                    manifest(args.command, _params(args)))


def cmd_photon(args):
    from csfq.photon import PAPER_OMEGA_R, PhotonNoiseParams, decay_rate, dephasing_decay, telegraph_coherence

    seed = _need_seed(args)
    omega_r = args.omega_r_ghz * GHZ if args.omega_r_ghz else PAPER_OMEGA_R
    params = PhotonNoiseParams.from_temperature(omega_r, args.kappa_mhz * MHZ, args.temp_mk * 1e-3,
                                                args.chi_mhz * MHZ)
    res = dephasing_decay(params, args.sequence, args.tau_list, args.traj, seed, _threads(args))
    exact = telegraph_coherence(params, args.sequence, res.taus)
    rate = decay_rate(params, args.sequence)
    rows = [[t, c, e, x] for t, c, e, x in zip(res.taus, res.coherence, res.stderr, exact)]
    _emit(args, ["tau", "coherence", "stderr", "coherence_exact"], rows,
          {"result_n_th": repr(params.n_th), "result_rate_per_s": repr(rate)})


def cmd_rb(args):
    from csfq.rb import DEFAULT_LENGTHS, PulseSpec, RbConfig, RbDevice, run_rb

    seed = _need_seed(args)
    dev = _device(args)
    pulses = dev.pulse if dev.pulse is not None else PulseSpec.calibrated()
    rwa = args.rwa if args.counter_rotating is None else not args.counter_rotating
    cfg = RbConfig(lengths=args.lengths or DEFAULT_LENGTHS, randomizations=args.randomizations,
                   levels=args.levels, rwa=rwa, counter_rotating=not rwa, seed=seed)
    if args.no_decoherence:
        cfg = cfg.without_decoherence()
    device = RbDevice.from_circuit(dev.circuit)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table = run_rb(cfg, pulses, device, threads=_threads(args))
    if caught:
        print(f"warning: {len(caught)} sequences ended with level-2 population above 1e-2", file=sys.stderr)
    rows = [[m, r, s, p] for m, r, s, p in zip(table.m, table.randomization, table.survival, table.p2)]
    _emit(args, ["m", "randomization", "survival", "p2"], rows)


def cmd_rb_fit(args):
    from csfq.rb import fit_rb

    t = read_table(args.table)
    fit = fit_rb(t.column("m"), t.column("survival"))
    _print_kv({"a0": fit.a0, "b0": fit.b0, "p": fit.p, "f_ave": fit.f_ave, "f_ave_stderr": fit.f_ave_stderr})
    if args.out is not None:
        write_table(args.out, ["a0", "b0", "p", "f_ave", "f_ave_stderr"],
                    [[fit.a0, fit.b0, fit.p, fit.f_ave, fit.f_ave_stderr]], manifest(args.command, _params(args)))


def read_targets(path):
    """Targets table with columns ``metric target weight upper``; metrics are named by index
    into :data:`csfq.design.METRIC_NAMES`, ``nan`` marks an absent entry."""
    from csfq.design import METRIC_NAMES, DesignTargets

    t = read_table(path)
    if t.columns != ["metric", "target", "weight", "upper"]:
        raise UsageError("targets file needs columns: metric target weight upper")
    values, weights, upper = {}, {}, {}
    for idx, target, weight, ub in t.data:
        name = METRIC_NAMES[int(idx)]
        if np.isfinite(target):
            values[name] = target
            weights[name] = weight
        if np.isfinite(ub):
            upper[name] = ub
    return DesignTargets(values, weights, upper)


def cmd_design(args):
    from csfq.design import NAMES, METRIC_NAMES, optimize, paper_targets

    seed = _need_seed(args)
    targets = paper_targets() if args.targets is None else read_targets(args.targets)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = optimize(targets, mode=args.mode, seed=seed, restarts=args.restarts, max_iter=args.max_iter,
                       threads=_threads(args))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    extra = {f"result_{n}": repr(float(v)) for n, v in zip(NAMES, res.best.as_array())}
    extra.update({f"result_{k}": repr(float(v)) for k, v in res.metrics.as_dict().items()})
    extra.update(result_objective=repr(res.objective), result_feasible=res.feasible)
    if res.target_match is not None:
        tm = res.target_match
        extra.update({f"unbounded_{n}": repr(float(v)) for n, v in zip(NAMES, tm.best.as_array())})
        extra.update({f"unbounded_{k}": repr(float(v)) for k, v in tm.metrics.as_dict().items()})
    rows = [[t["restart"], t["start_objective"], t["objective"], t["n_iter"], *t["x"]] for t in res.trace]
    _emit(args, ["restart", "start_objective", "objective", "n_iter", *NAMES], rows, extra)
    print(f"feasible = {res.feasible}", file=sys.stderr)


# parser ----------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--device", help="device parameter file (default: shipped device)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--out", help="output table path (default: stdout)")
    common.add_argument("--seed", type=int, help="random seed (required by randomized subcommands)")

    p = argparse.ArgumentParser(prog="csfq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"csfq {__version__}")
    sub = p.add_subparsers(dest="command", metavar="subcommand", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    s = add("spectrum", cmd_spectrum, "transition frequencies versus flux")
    s.add_argument("--flux-from", type=float, default=0.498)
    s.add_argument("--flux-to", type=float, default=0.502)
    s.add_argument("--points", type=int, default=41)
    s.add_argument("--levels", type=int, default=3)
    s.add_argument("--basis-size", type=int, default=12)

    s = add("fit", cmd_fit, "fit junction parameters to spectroscopy")
    s.add_argument("--data", required=True, help="CSV with header flux,tag,ghz[,weight]")
    s.add_argument("--jc-init", type=float, help="initial jc in uA/um^2")
    s.add_argument("--alpha-init", type=float)
    s.add_argument("--basis-size", type=int, default=10)
    s.add_argument("--max-iter", type=int, default=500)

    s = add("coherence", cmd_coherence, "analytic CPMG decay curve")
    s.add_argument("--a", type=float, required=True, help="PSD amplitude of the frequency noise")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--n", type=int, required=True, help="number of pi pulses")
    s.add_argument("--tau-max", type=float, required=True, help="s")
    s.add_argument("--points", type=int, default=50)
    s.add_argument("--numeric", action="store_true", help="add the filter-function integral")

    s = add("psd-extract", cmd_psd_extract, "power-law PSD from CPMG decay rates")
    s.add_argument("--rates", required=True, help="table with columns n gamma_hz")

    for name, func, help_ in (("mc", cmd_mc, "Monte Carlo dephasing under Gaussian noise"),
                              ("histogram", cmd_histogram, "histogram of noise-induced frequency shifts")):
        s = add(name, func, help_)
        s.add_argument("--psd-a", type=float, required=True)
        s.add_argument("--psd-alpha", type=float, required=True)
        s.add_argument("--omega-min", type=float, default=2 * np.pi, help="low PSD cutoff (rad/s)")
        s.add_argument("--coupling", choices=["linear", "quadratic"], default="linear")
        s.add_argument("--k", type=float, required=True, help="k1 (linear) or k2 (quadratic)")
        s.add_argument("--traj", type=int, default=1024)
        if name == "mc":
            s.add_argument("--sequence", default="ramsey", help="ramsey, echo or cpmg:N")
            s.add_argument("--tau-list", type=_floats, required=True, help="comma-separated, s")
            s.add_argument("--samples", type=int, help="time samples per trajectory")
        else:
            s.add_argument("--dt", type=float, required=True, help="s")
            s.add_argument("--samples", type=int, default=512)
            s.add_argument("--bins", type=int, default=50)

    s = add("relax", cmd_relax, "qutrit population relaxation")
    s.add_argument("--rates", required=True, help="table with columns from to rate (1/s)")
    s.add_argument("--p0", type=_floats, default=[0.0, 0.0, 1.0])
    s.add_argument("--t-max", type=float, required=True, help="s")
    s.add_argument("--points", type=int, default=101)

    s = add("fit-relax", cmd_fit_relax, "fit upper-level decay rates")
    s.add_argument("--traces", required=True, help="table with columns prepared t p0 p1 p2")
    s.add_argument("--gamma10", type=float, required=True)
    s.add_argument("--gamma01", type=float, required=True)
    s.add_argument("--temp", type=float, required=True, help="mK")
    s.add_argument("--flux", type=float, default=0.5)

    s = add("photon", cmd_photon, "thermal-photon dephasing")
    s.add_argument("--chi-mhz", type=float, default=0.5)
    s.add_argument("--kappa-mhz", type=float, default=0.6)
    s.add_argument("--temp-mk", type=float, required=True)
    s.add_argument("--omega-r-ghz", type=float, help="default: calibrated resonator frequency")
    s.add_argument("--sequence", default="ramsey")
    s.add_argument("--tau-list", type=_floats, required=True, help="comma-separated, s")
    s.add_argument("--traj", type=int, default=1024)

    s = add("rb", cmd_rb, "simulate randomized benchmarking")
    s.add_argument("--levels", type=int, choices=[2, 3], default=2)
    s.add_argument("--rwa", type=_on_off, default=True)
    s.add_argument("--counter-rotating", type=_on_off)
    s.add_argument("--lengths", type=_ints)
    s.add_argument("--randomizations", type=int, default=32)
    s.add_argument("--no-decoherence", action="store_true")

    s = add("rb-fit", cmd_rb_fit, "fit an RB survival table")
    s.add_argument("--table", required=True)

    s = add("design", cmd_design, "search the six-parameter design space")
    s.add_argument("--targets", help="table with columns metric target weight upper")
    s.add_argument("--mode", choices=["three_pad", "two_pad"], default="three_pad")
    s.add_argument("--restarts", type=int, default=8)
    s.add_argument("--max-iter", type=int, default=400)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"csfq {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CsfqError, ValueError, OSError, IndexError, np.linalg.LinAlgError) as exc:
        print(f"csfq {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
