import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csfq.circuit import table_s1_capacitances
from csfq.errors import IllConditioned, NoConvergence, ParseError
from csfq.spectro_fit import (SpectroscopyDataset, fit_junctions, lorentzian, lorentzian_fit, model_frequencies,
                              synthetic_dataset)


def test_dataset_validation():
    with pytest.raises(ValueError):
        SpectroscopyDataset.from_rows([(0.5, "13", 1.0)])
    with pytest.raises(ValueError):
        SpectroscopyDataset.from_rows([(0.5, "01", -1.0)])
    with pytest.raises(ValueError):
        SpectroscopyDataset.from_rows([])


def test_csv_round_trip(tmp_path):
    d = SpectroscopyDataset.from_rows([(0.5, "01", 1.708, 1.0), (0.501, "02tp", 3.55, 0.5)])
    d.write_csv(tmp_path / "d.csv")
    r = SpectroscopyDataset.read_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(r.flux, d.flux)
    np.testing.assert_array_equal(r.ghz, d.ghz)
    np.testing.assert_array_equal(r.weight, d.weight)
    assert r.tag == d.tag


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("flux,ghz\n0.5,1.7\n")
    with pytest.raises(ParseError):
        SpectroscopyDataset.read_csv(p)
    p.write_text("flux,tag,ghz\n0.5,01,abc\n")
    with pytest.raises(ParseError) as exc:
        SpectroscopyDataset.read_csv(p)
    assert exc.value.line == 2


def test_two_photon_tag_is_half_the_direct_line(device):
    d = SpectroscopyDataset.from_rows([(0.5, "02", 1.0), (0.5, "02tp", 1.0)])
    f = model_frequencies(device, d)
    assert f[1] == pytest.approx(f[0] / 2)


def test_fit_recovers_junctions_from_synthetic_data(device):
    data = synthetic_dataset(device, np.linspace(0.498, 0.502, 5), basis_size=8)
    res = fit_junctions(data, table_s1_capacitances(), (3.8e6, 0.63), area_large=device.area_large,
                        basis_size=8)
    assert res.jc == pytest.approx(device.jc, rel=1e-4)
    assert res.alpha_j == pytest.approx(device.alpha_j, rel=1e-4)
    assert res.rms < 1e-5
    assert res.converged
    # the best-so-far objective never increases
    assert np.all(np.diff(res.trace) <= 1e-15)


def test_fit_at_truth_returns_immediately(device):
    data = synthetic_dataset(device, [0.5, 0.501], basis_size=8)
    res = fit_junctions(data, table_s1_capacitances(), (device.jc, device.alpha_j),
                        area_large=device.area_large, basis_size=8)
    assert res.n_iter == 0 and res.rms == 0.0


def test_fit_iteration_cap_warns(device):
    data = synthetic_dataset(device, [0.5, 0.501], basis_size=6)
    with pytest.warns(NoConvergence):
        res = fit_junctions(data, table_s1_capacitances(), (3.5e6, 0.7), area_large=device.area_large,
                            basis_size=6, max_iter=3)
    assert not res.converged


def test_fit_rejects_init_outside_bounds(device):
    data = synthetic_dataset(device, [0.5], basis_size=6)
    with pytest.raises(ValueError):
        fit_junctions(data, table_s1_capacitances(), (3.5e6, 0.7), bounds=((1e6, 2e6), (0.2, 1.0)))


@settings(max_examples=25, deadline=None)
@given(center=st.floats(4.0, 6.0), hw=st.floats(0.01, 0.2), amp=st.floats(-2, 2).filter(lambda a: abs(a) > 0.1),
       offset=st.floats(-1, 1))
def test_lorentzian_round_trip(center, hw, amp, offset):
    f = np.linspace(3.5, 6.5, 301)
    fit = lorentzian_fit(f, lorentzian(f, center, hw, amp, offset))
    assert fit.center == pytest.approx(center, abs=1e-6)
    assert fit.half_width == pytest.approx(hw, rel=1e-5)
    assert fit.amplitude == pytest.approx(amp, rel=1e-5)


def test_lorentzian_flat_trace():
    with pytest.raises(IllConditioned):
        lorentzian_fit(np.linspace(0, 1, 50), np.ones(50))
    rng = np.random.default_rng(1)
    with pytest.raises(IllConditioned):
        lorentzian_fit(np.linspace(0, 1, 200), rng.normal(size=200))


def test_lorentzian_with_noise():
    rng = np.random.default_rng(3)
    f = np.linspace(4.5, 5.5, 201)
    v = lorentzian(f, 5.1, 0.03, -0.8, 0.2) + rng.normal(0, 0.02, f.size)
    fit = lorentzian_fit(f, v)
    assert fit.center == pytest.approx(5.1, abs=2e-3)
    assert fit.amplitude == pytest.approx(-0.8, rel=0.1)
