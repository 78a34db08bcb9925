"""Fits to spectroscopy data: junction parameters from transition lines, Lorentzian line shapes."""

import csv
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import curve_fit, minimize

from csfq._util import pmap
from csfq.circuit import BiasPoint, CapacitanceSet, CircuitParams, diagonalize, transition
from csfq.errors import IllConditioned, NoConvergence, ParseError

TAGS = {"01": (0, 1, False), "12": (1, 2, False), "02": (0, 2, False), "02tp": (0, 2, True)}

UA_PER_UM2 = 1e6  # A/m^2 per uA/um^2


@dataclass
class SpectroscopyDataset:
    """Rows of (flux in flux quanta, transition tag, frequency in GHz, weight)."""

    flux: np.ndarray
    tag: List[str]
    ghz: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        self.flux = np.asarray(self.flux, dtype=float)
        self.ghz = np.asarray(self.ghz, dtype=float)
        self.weight = np.ones_like(self.ghz) if self.weight is None else np.asarray(self.weight, dtype=float)
        self.tag = [str(t) for t in self.tag]
        if not (len(self.flux) == len(self.tag) == len(self.ghz) == len(self.weight)):
            raise ValueError("dataset columns differ in length")
        if len(self.flux) == 0:
            raise ValueError("dataset is empty")
        bad = set(self.tag) - set(TAGS)
        if bad:
            raise ValueError(f"unknown transition tags {sorted(bad)}")
        if np.any(self.ghz <= 0):
            raise ValueError("frequencies must be positive")
        if np.any(self.weight < 0):
            raise ValueError("weights must be >= 0")

    def __len__(self):
        return len(self.flux)

    @classmethod
    def from_rows(cls, rows):
        rows = list(rows)
        w = [r[3] if len(r) > 3 else 1.0 for r in rows]
        return cls([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], w)

    @classmethod
    def read_csv(cls, path):
        """Read a file with header ``flux,tag,ghz[,weight]``."""
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        reader = csv.DictReader(lines)
        if reader.fieldnames is None or not {"flux", "tag", "ghz"} <= set(reader.fieldnames):
            raise ParseError("expected header flux,tag,ghz[,weight]", line=1)
        rows = []
        for i, r in enumerate(reader, start=2):
            try:
                rows.append((float(r["flux"]), r["tag"].strip(), float(r["ghz"]),
                             float(r["weight"]) if r.get("weight") not in (None, "") else 1.0))
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=i) from None
        return cls.from_rows(rows)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("flux,tag,ghz,weight\n")
            for f, t, g, w in zip(self.flux, self.tag, self.ghz, self.weight):
                fh.write(f"{float(f)!r},{t},{float(g)!r},{float(w)!r}\n")


@dataclass
class FitResult:
    jc: float
    alpha_j: float
    rms: float
    residuals: np.ndarray
    converged: bool = True
    n_iter: int = 0
    trace: List[float] = field(default_factory=list)


def model_frequencies(params: CircuitParams, data: SpectroscopyDataset, basis_size=10, threads=None):
    """Model frequency (GHz) for every row of ``data``; one diagonalization per distinct flux."""
    fluxes = np.unique(data.flux)
    n_levels = 3

    def one(f):
        return diagonalize(params, BiasPoint(flux=f), n_levels, basis_size)

    spectra = dict(zip(fluxes, pmap(one, fluxes, threads)))
    out = np.empty(len(data))
    for i, (f, t) in enumerate(zip(data.flux, data.tag)):
        j, k, tp = TAGS[t]
        out[i] = transition(spectra[f], j, k, tp) / (2 * np.pi * 1e9)
    return out


def synthetic_dataset(params: CircuitParams, fluxes, tags=("01", "02"), basis_size=12, threads=None):
    """Noiseless dataset evaluated from the model at the given fluxes."""
    rows = [(f, t, 1.0, 1.0) for f in fluxes for t in tags]
    data = SpectroscopyDataset.from_rows(rows)
    data.ghz = model_frequencies(params, data, basis_size, threads)
    return data


def fit_junctions(data: SpectroscopyDataset, caps: CapacitanceSet, init, bounds=None,
                  area_large=None, c_tilde=0.0, basis_size=10, max_iter=500, rtol=1e-6,
                  threads=None) -> FitResult:
    """Fit (jc, alpha_j) to measured transition frequencies.

    Parameters
    ----------
    data : SpectroscopyDataset
    caps : CapacitanceSet
        Held fixed during the fit.
    init : (jc, alpha_j)
        Starting point; ``jc`` in A/m^2.
    bounds : ((jc_lo, jc_hi), (a_lo, a_hi)), optional
        Defaults to a factor of two around ``init`` in jc and (0.2, 1) in alpha_j.
    area_large : float, optional
        Large-junction area (m^2); only the product ``jc * area_large`` enters.

    Returns
    -------
    FitResult
        ``converged`` is False (and a :class:`NoConvergence` warning is
        issued) if the simplex hit ``max_iter``.
    """
    from csfq.circuit import PAPER_AREA_LARGE

    area = PAPER_AREA_LARGE if area_large is None else area_large
    jc0, a0 = init
    if bounds is None:
        bounds = ((jc0 / 2, jc0 * 2), (0.2, 1.0))
    (jlo, jhi), (alo, ahi) = bounds
    if not (jlo <= jc0 <= jhi and alo <= a0 <= ahi):
        raise ValueError("init lies outside bounds")
    w = data.weight / np.sum(data.weight)

    def residuals(x):
        p = CircuitParams(x[0] * UA_PER_UM2, x[1], area, c_tilde, caps)
        return model_frequencies(p, data, basis_size, threads) - data.ghz

    cache = {}

    def objective(x):
        key = tuple(x)
        if key not in cache:
            x = np.clip(x, [jlo / UA_PER_UM2, alo], [jhi / UA_PER_UM2, ahi])
            cache[key] = float(np.sum(w * residuals(x) ** 2))
        return cache[key]

    x0 = np.array([jc0 / UA_PER_UM2, a0])
    trace = [objective(x0)]
    if trace[0] == 0.0:
        return FitResult(jc0, a0, 0.0, np.zeros(len(data)), True, 0, trace)

    def record(xk, *args):
        trace.append(objective(xk))

    # the simplex is scaled so the initial steps are a few percent of each parameter
    simplex = np.array([x0, x0 * [1.03, 1.0], x0 * [1.0, 1.05]])
    res = minimize(objective, x0, method="Nelder-Mead", callback=record,
                   bounds=[(jlo / UA_PER_UM2, jhi / UA_PER_UM2), (alo, ahi)],
                   options={"maxiter": max_iter, "xatol": 1e-9, "fatol": rtol * trace[0] * 1e-6,
                            "initial_simplex": simplex})
    converged = bool(res.success)
    if not converged:
        warnings.warn(f"junction fit stopped after {res.nit} iterations", NoConvergence)
    r = residuals(res.x)
    return FitResult(res.x[0] * UA_PER_UM2, res.x[1], float(np.sqrt(np.mean(r**2))), r,
                     converged, int(res.nit), trace)


@dataclass
class LorentzianFit:
    center: float
    half_width: float
    amplitude: float
    offset: float


def lorentzian(f, center, half_width, amplitude, offset):
    return offset + amplitude * half_width**2 / ((f - center) ** 2 + half_width**2)


def lorentzian_fit(freq, volt) -> LorentzianFit:
    """Least-squares Lorentzian (peak or dip) with constant offset.

    Raises
    ------
    IllConditioned
        If the trace is flat or the fitted amplitude is not distinguishable
        from the residual scatter.
    """
    f = np.asarray(freq, dtype=float)
    v = np.asarray(volt, dtype=float)
    if f.size < 5:
        raise ValueError("need at least 5 points")
    order = np.argsort(f)
    f, v = f[order], v[order]
    span = f[-1] - f[0]
    base = np.median(v)
    dev = v - base
    if np.ptp(v) <= 1e-12 * max(1.0, np.max(np.abs(v))):
        raise IllConditioned("trace is flat")
    i = np.argmax(np.abs(dev))
    amp0 = dev[i]
    above = np.abs(dev) > np.abs(amp0) / 2
    hw0 = max(np.ptp(f[above]) / 2, span / f.size)
    # work in units of the span for conditioning
    x = (f - f[0]) / span
    try:
        popt, pcov = curve_fit(lorentzian, x, v, p0=[(f[i] - f[0]) / span, hw0 / span, amp0, base],
                               maxfev=20000)
    except RuntimeError as exc:
        raise IllConditioned(str(exc)) from None
    c, hw, a, off = popt
    ss_line = np.sum((v - lorentzian(x, *popt)) ** 2)
    ss_flat = np.sum((v - v.mean()) ** 2)
    # F-test of the line against a constant; a width below the sampling step is not a line
    dof = f.size - 4
    f_stat = (ss_flat - ss_line) / 3 / max(ss_line / dof, 1e-300)
    resolved = abs(hw) * span >= 0.5 * np.min(np.diff(f)) and 0 <= c <= 1
    if not np.isfinite(pcov).all() or not resolved or f_stat < stats.f.ppf(0.999, 3, dof):
        raise IllConditioned("no resolvable line in trace")
    return LorentzianFit(f[0] + c * span, abs(hw) * span, a, off)
