"""Qutrit populations and coherences: rate equations, Boltzmann-constrained fits, thermometry, readout."""

import warnings
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.constants import hbar, k as k_B
from scipy.optimize import least_squares

from csfq.errors import (BothZero, NoConvergence, OutOfDomain, SingularSystem, UnphysicalInput)


@dataclass
class RateMatrix:
    """``gamma[j, k]`` is the population transfer rate j -> k (1/s); the diagonal is ignored."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.shape != (3, 3):
            raise ValueError("rate matrix must be 3x3")
        np.fill_diagonal(g, 0.0)
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("rates must be finite and >= 0")
        self.gamma = g

    @classmethod
    def from_rates(cls, g01, g10, g12, g21, g02, g20):
        return cls(np.array([[0, g01, g02], [g10, 0, g12], [g20, g21, 0]], dtype=float))

    @property
    def generator(self):
        """``G`` with ``G[k, j] = gamma[j, k]`` and zero column sums, so ``dp/dt = G p``."""
        g = self.gamma.T.copy()
        g -= np.diag(self.gamma.sum(axis=1))
        return g

    @property
    def outflow(self):
        """Total decay rate out of each level."""
        return self.gamma.sum(axis=1)

    def stationary(self):
        w, v = np.linalg.eig(self.generator)
        p = np.real(v[:, np.argmin(np.abs(w))])
        return p / p.sum()


# Table of measured rates (1/s) at the symmetry point and at 0.501 flux quanta
RATES_SYMMETRY = dict(g01=1.4e3, g10=29.5e3, g12=8.8, g21=124.3e3, g02=0.1, g20=27.8e3)
RATES_OFFSET = dict(g01=1.2e3, g10=63.4e3, g12=0.4, g21=78.1, g02=0.01, g20=61.1e3)


def boltzmann(omega, temperature):
    """``exp(-hbar omega / k_B T)`` with ``T = 0`` mapped to 0."""
    if temperature <= 0:
        return 0.0
    return float(np.exp(-hbar * omega / (k_B * temperature)))


def constrained_rates(g10, g01, g21, g20, omega12, omega02, temperature):
    """Rate matrix with the upward 1->2 and 0->2 rates fixed by Boltzmann factors."""
    return RateMatrix.from_rates(g01, g10, g21 * boltzmann(omega12, temperature), g21,
                                 g20 * boltzmann(omega02, temperature), g20)


def detailed_balance_rates(g10, g21, g20, omega01, omega12, omega02, temperature):
    """Rate matrix with every upward rate fixed by the Boltzmann factor of its downward partner."""
    return RateMatrix.from_rates(g10 * boltzmann(omega01, temperature), g10,
                                 g21 * boltzmann(omega12, temperature), g21,
                                 g20 * boltzmann(omega02, temperature), g20)


def gibbs_populations(energies, temperature):
    """Thermal populations for angular level energies (rad/s)."""
    e = np.asarray(energies, dtype=float) - np.min(energies)
    if temperature <= 0:
        p = (e == 0).astype(float)
    else:
        p = np.exp(-hbar * e / (k_B * temperature))
    return p / p.sum()


def _expm_generator(g, t):
    w, v = np.linalg.eig(g)
    # the generator is similar to a symmetric matrix under detailed balance; fall back
    # to scaling-and-squaring when the eigenbasis is ill-conditioned
    if np.linalg.cond(v) > 1e8:
        return sla.expm(g * t)
    return np.real(v @ np.diag(np.exp(w * t)) @ np.linalg.inv(v))


def _check_population(p):
    p = np.asarray(p, dtype=float)
    if p.shape != (3,) or np.any(p < -1e-12) or np.any(p > 1 + 1e-12) or abs(p.sum() - 1) > 1e-9:
        raise ValueError(f"not a population vector: {p}")
    return p


def evolve_populations(rates: RateMatrix, p0, t):
    """``p(t) = exp(G t) p0`` for scalar or array ``t`` (s).

    Returns shape ``(3,)`` for scalar ``t`` and ``(len(t), 3)`` otherwise.
    """
    p0 = _check_population(p0)
    g = rates.generator
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be >= 0")
    out = np.array([_expm_generator(g, ti) @ p0 for ti in ts])
    # clean roundoff so the result stays on the simplex
    out = np.clip(out, 0.0, 1.0)
    out /= out.sum(axis=1, keepdims=True)
    return out[0] if np.ndim(t) == 0 else out


@dataclass
class RelaxationTrace:
    """Populations ``(len(times), 3)`` measured after preparing ``p_init``."""

    p_init: np.ndarray
    times: np.ndarray
    populations: np.ndarray


def fit_relaxation(traces: Sequence[RelaxationTrace], gamma10, gamma01, temperature, omega12, omega02,
                   init=(1e4, 1e4), max_nfev=2000):
    """Fit the free decay rates ``(gamma21, gamma20)`` of the upper level.

    ``gamma12`` and ``gamma02`` follow from Boltzmann factors at
    ``temperature``; ``gamma10`` and ``gamma01`` are held fixed. The fit is in
    log-rates so both stay positive.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces")
    for tr in traces:
        if np.asarray(tr.populations).shape != (len(tr.times), 3):
            raise ValueError("each trace needs all three populations at every time")

    def model(x):
        r = constrained_rates(gamma10, gamma01, np.exp(x[0]), np.exp(x[1]), omega12, omega02, temperature)
        return np.concatenate([(evolve_populations(r, tr.p_init, tr.times) - tr.populations).ravel()
                               for tr in traces])

    res = least_squares(model, np.log(np.asarray(init, dtype=float)), method="lm",
                        xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
    if not res.success:
        warnings.warn(f"relaxation fit did not converge: {res.message}", NoConvergence)
    g21, g20 = np.exp(res.x)
    return float(g21), float(g20)


def thermal_population(a0, a1):
    """Ground-state thermal population ``A0 / (A0 + A1)`` from two Rabi amplitudes."""
    if a0 < 0 or a1 < 0:
        raise ValueError("amplitudes must be >= 0")
    if a0 == 0 and a1 == 0:
        raise BothZero("both Rabi amplitudes are zero")
    return a0 / (a0 + a1)


@dataclass
class ThermalState:
    p_th0: float
    p_th1: float
    t_eff: float


def effective_temperature(p_th0, omega01):
    """Temperature (K) at which ``p1 / p0 = exp(-hbar omega01 / k_B T)`` with ``p1 = 1 - p0``."""
    if not 0.5 < p_th0 < 1:
        raise OutOfDomain("p_th0 must lie in (0.5, 1)")
    return hbar * omega01 / (k_B * np.log(p_th0 / (1 - p_th0)))


def thermal_state(a0, a1, omega01):
    p0 = thermal_population(a0, a1)
    return ThermalState(p0, 1 - p0, effective_temperature(p0, omega01))


@dataclass
class ReadoutCalibration:
    v0: float
    v1: float
    v2: float

    def __post_init__(self):
        if self.v0 == self.v1 == self.v2:
            raise ValueError("readout levels are identical")

    def voltage(self, p):
        return float(np.dot(p, [self.v0, self.v1, self.v2]))

    def populations(self, v, p2=0.0):
        """Invert a voltage for (p0, p1) assuming a known ``p2``."""
        p1 = (v - self.v0 - p2 * (self.v2 - self.v0)) / (self.v1 - self.v0)
        return np.array([1 - p1 - p2, p1, p2])


def readout_calibrate(preparations) -> ReadoutCalibration:
    """Solve ``V = P0 V0 + P1 V1 + P2 V2`` for the level voltages (least squares if overdetermined)."""
    preps = list(preparations)
    a = np.array([_check_population(p) for p, _ in preps])
    v = np.array([float(x) for _, x in preps])
    if a.shape[0] < 3 or np.linalg.matrix_rank(a, tol=1e-10) < 3:
        raise SingularSystem("preparations do not span the three populations")
    sol, *_ = np.linalg.lstsq(a, v, rcond=None)
    return ReadoutCalibration(*map(float, sol))


def _check_density(rho):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (3, 3):
        raise UnphysicalInput("density matrix must be 3x3")
    if not np.allclose(rho, rho.conj().T, atol=1e-12):
        raise UnphysicalInput("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > 1e-9:
        raise UnphysicalInput("density matrix trace is not 1")
    if np.min(np.linalg.eigvalsh(rho)) < -1e-12:
        raise UnphysicalInput("density matrix is not positive semidefinite")
    return rho


def multilevel_ramsey(rates: RateMatrix, coherences: Dict[Tuple[int, int], Callable], rho0, t):
    """Density matrices ``(len(t), 3, 3)`` in the frame rotating with the level energies.

    Diagonal: rate equations. Off-diagonal ``(j, k)``: ``C_jk(t) exp(-(G_j + G_k) t / 2) rho0_jk``
    with ``G_j`` the total outflow rate of level ``j``. ``coherences`` maps
    ``(j, k)`` with ``j < k`` to the pure-dephasing function; missing pairs use 1.
    """
    rho0 = _check_density(rho0)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    pops = evolve_populations(rates, np.real(np.diag(rho0)), ts)
    pops = np.atleast_2d(pops)
    out = np.zeros((ts.size, 3, 3), dtype=complex)
    gout = rates.outflow
    for i in range(3):
        out[:, i, i] = pops[:, i]
    for j in range(3):
        for k in range(j + 1, 3):
            c = coherences.get((j, k), lambda x: np.ones_like(x))
            env = np.asarray(c(ts), dtype=complex) * np.exp(-(gout[j] + gout[k]) * ts / 2)
            out[:, j, k] = env * rho0[j, k]
            out[:, k, j] = np.conj(out[:, j, k])
    return out


def ramsey_envelope(rates: RateMatrix, pair, coherence: Callable, t):
    """``|rho_jk(t) / rho_jk(0)|`` for an equal superposition of the pair."""
    j, k = pair
    rho = np.zeros((3, 3), dtype=complex)
    rho[j, j] = rho[k, k] = rho[j, k] = rho[k, j] = 0.5
    lo, hi = min(pair), max(pair)
    r = multilevel_ramsey(rates, {(lo, hi): coherence}, rho, t)
    return np.abs(r[:, j, k]) / 0.5
