import subprocess
import sys

import numpy as np
import pytest

from csfq.cli import main
from csfq.multilevel import RATES_SYMMETRY, RateMatrix, constrained_rates, evolve_populations
from csfq.tables import read_table, write_table

SEEDED = {
    "mc": ["--psd-a", "1.8e-14", "--psd-alpha", "0.68", "--k", "7.29e11", "--sequence", "echo",
           "--tau-list", "1e-6,2e-6", "--traj", "256", "--samples", "128"],
    "histogram": ["--psd-a", "1.8e-14", "--psd-alpha", "0.68", "--k", "7.29e11", "--dt", "1e-8",
                  "--samples", "64", "--traj", "256", "--bins", "10"],
    "photon": ["--temp-mk", "150", "--tau-list", "1e-6,2e-6", "--traj", "128"],
    "rb": ["--lengths", "1,2,3", "--randomizations", "2"],
    "design": ["--restarts", "1", "--max-iter", "3"],
}


def _run(argv, tmp_path, name="out.txt"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, out


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


@pytest.mark.parametrize("cmd", sorted(SEEDED))
def test_randomized_commands_need_seed(cmd, capsys):
    assert main([cmd] + SEEDED[cmd]) == 2
    assert "--seed" in capsys.readouterr().err


@pytest.mark.parametrize("cmd", sorted(SEEDED))
def test_seeded_commands_are_byte_identical_across_threads(cmd, tmp_path):
    c1, a = _run([cmd, "--seed", "7", "--threads", "1"] + SEEDED[cmd], tmp_path, "a.txt")
    c2, b = _run([cmd, "--seed", "7", "--threads", "3"] + SEEDED[cmd], tmp_path, "b.txt")
    assert c1 == c2 == 0
    assert a.read_bytes() == b.read_bytes()
    t = read_table(a)
    assert t.meta["command"] == cmd and t.meta["seed"] == "7"
    assert "threads" not in t.meta


def test_spectrum_values(tmp_path):
    code, out = _run(["spectrum", "--flux-from", "0.5", "--flux-to", "0.5", "--points", "1"], tmp_path)
    assert code == 0
    t = read_table(out)
    assert t.column("f01_ghz")[0] == pytest.approx(1.708, rel=0.02)
    assert t.column("f02_ghz")[0] == pytest.approx(t.column("f01_ghz")[0] + t.column("f12_ghz")[0])


def test_coherence_and_psd_extract(tmp_path, capsys):
    code, out = _run(["coherence", "--a", "1e10", "--alpha", "0.68", "--n", "10", "--tau-max", "1e-5",
                      "--points", "5"], tmp_path)
    assert code == 0 and read_table(out).data.shape == (5, 2)
    from csfq.decoherence import gamma_n
    rates = tmp_path / "rates.txt"
    write_table(rates, ["n", "gamma_hz"], [[n, float(gamma_n(1e10, 0.68, n))] for n in (1, 10, 100)])
    assert main(["psd-extract", "--rates", str(rates)]) == 0
    text = capsys.readouterr().out
    vals = dict(line.split(" = ") for line in text.strip().splitlines())
    assert float(vals["alpha"]) == pytest.approx(0.68, rel=1e-6)


def test_relax_and_fit_relax(tmp_path, capsys):
    rates = tmp_path / "rates.txt"
    rm = RateMatrix.from_rates(**RATES_SYMMETRY)
    write_table(rates, ["from", "to", "rate"], [[j, k, rm.gamma[j, k]] for j in range(3) for k in range(3) if j != k])
    code, out = _run(["relax", "--rates", str(rates), "--t-max", "1e-4", "--points", "11"], tmp_path)
    assert code == 0
    t = read_table(out)
    np.testing.assert_allclose(t.data[:, 1:], evolve_populations(rm, [0, 0, 1], t.column("t")), atol=1e-15)

    from csfq.circuit import BiasPoint, diagonalize, paper_device, transition
    s = diagonalize(paper_device(), BiasPoint(0.5), 3)
    truth = constrained_rates(29.5e3, 1.4e3, 124.3e3, 27.8e3, transition(s, 1, 2), transition(s, 0, 2), 0.03)
    times = np.linspace(0, 2e-4, 41)
    rows = []
    for lvl in (1, 2):
        p = evolve_populations(truth, np.eye(3)[lvl], times)
        rows += [[lvl, ti, *pi] for ti, pi in zip(times, p)]
    traces = tmp_path / "traces.txt"
    write_table(traces, ["prepared", "t", "p0", "p1", "p2"], rows)
    assert main(["fit-relax", "--traces", str(traces), "--gamma10", "29.5e3", "--gamma01", "1.4e3",
                 "--temp", "30"]) == 0
    vals = dict(line.split(" = ") for line in capsys.readouterr().out.strip().splitlines())
    assert float(vals["gamma21"]) == pytest.approx(124.3e3, rel=1e-4)
    assert float(vals["gamma20"]) == pytest.approx(27.8e3, rel=1e-4)


def test_rb_fit_command(tmp_path, capsys):
    table = tmp_path / "rb.txt"
    m = np.array([2, 4, 8, 16, 32])
    write_table(table, ["m", "randomization", "survival", "p2"], [[x, 0, 0.5 * 0.99 ** x + 0.5, 0.0] for x in m])
    assert main(["rb-fit", "--table", str(table)]) == 0
    vals = dict(line.split(" = ") for line in capsys.readouterr().out.strip().splitlines())
    assert float(vals["p"]) == pytest.approx(0.99, abs=1e-9)


def test_module_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[circuit]\njc = 1 fF\n")
    assert main(["spectrum", "--device", str(bad), "--points", "1"]) == 1
    assert "ParseError" in capsys.readouterr().err
    assert main(["spectrum", "--device", str(tmp_path / "missing.cfg")]) == 1
    table = tmp_path / "rb.txt"
    write_table(table, ["m", "randomization", "survival", "p2"], [[1, 0, 1.0, 0.0]])
    assert main(["rb-fit", "--table", str(table)]) == 1


def test_bad_option_values_are_usage_errors():
    for argv in (["spectrum", "--levels", "2"], ["relax", "--rates", "x", "--t-max", "1", "--p0", "1,0"]):
        try:
            code = main(argv)
        except SystemExit as e:
            code = e.code
        assert code in (1, 2)
    assert main(["spectrum", "--levels", "2"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["rb", "--seed", "1", "--rwa", "maybe"])
    assert e.value.code == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "csfq.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("csfq ")
