"""Dephasing from thermal photon-number fluctuations in the readout resonator.

The resonator occupation is a two-state telegraph process ``n(t) in {0, 1}``
with rates ``up = kappa n_th`` and ``down = kappa (1 + n_th)``. The qubit
frequency is shifted by ``chi * n(t)``, where ``chi`` is the per-photon shift of
the transition (the Ramsey beating frequency seen when the resonator is hot).
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.constants import hbar, k as k_B
from scipy.optimize import brentq, minimize_scalar

from csfq._util import pmap
from csfq.errors import BracketingFailure, StepTooCoarse
from csfq.noise_mc import parse_sequence

BLOCK = 64
T_MAX = 1.0

# Resonator frequency calibrated so that 250 mK <-> 213 kHz and 67 mK <-> 4.68 kHz
# are jointly reproduced for chi = 2 pi 0.5 MHz, kappa = 2 pi 0.6 MHz (see calibrate_omega_r).
PAPER_CHI = 2 * np.pi * 0.5e6
PAPER_KAPPA = 2 * np.pi * 0.6e6
PAPER_OMEGA_R = 2 * np.pi * 8.1846e9


def n_thermal(t, omega_r):
    """Bose-Einstein occupation of a mode at angular frequency ``omega_r``."""
    if t < 0:
        raise ValueError("temperature must be >= 0")
    if t == 0:
        return 0.0
    return float(1 / np.expm1(hbar * omega_r / (k_B * t)))


def temperature_from_n(n_th, omega_r):
    """Inverse of :func:`n_thermal`."""
    if n_th < 0:
        raise ValueError("n_th must be >= 0")
    if n_th == 0:
        return 0.0
    return float(hbar * omega_r / (k_B * np.log1p(1 / n_th)))


@dataclass(frozen=True)
class PhotonNoiseParams:
    omega_r: float
    q_factor: float
    n_th: float
    chi: float

    def __post_init__(self):
        if self.omega_r <= 0 or self.q_factor <= 0:
            raise ValueError("omega_r and q_factor must be positive")
        if self.n_th < 0:
            raise ValueError("n_th must be >= 0")

    @classmethod
    def from_kappa(cls, omega_r, kappa, n_th, chi):
        return cls(omega_r, omega_r / kappa, n_th, chi)

    @classmethod
    def from_temperature(cls, omega_r, kappa, temperature, chi):
        return cls(omega_r, omega_r / kappa, n_thermal(temperature, omega_r), chi)

    @property
    def kappa(self):
        return self.omega_r / self.q_factor

    @property
    def rate_up(self):
        return self.kappa * self.n_th

    @property
    def rate_down(self):
        return self.kappa * (1 + self.n_th)

    @property
    def occupancy(self):
        """Stationary probability of the excited state, ``n_th / (1 + 2 n_th)``."""
        return self.rate_up / (self.rate_up + self.rate_down)

    def with_n(self, n_th):
        return replace(self, n_th=n_th)


@dataclass
class RtnTrajectory:
    dt: float
    states: np.ndarray
    seed: int
    jump_times: np.ndarray
    initial: int


def _switch_times(params, t_end, rng, initial):
    """Jump times of one telegraph trajectory on ``[0, t_end]`` from exact exponential dwells."""
    rates = (params.rate_up, params.rate_down)
    times = []
    t, s = 0.0, initial
    while True:
        r = rates[s]
        if r <= 0:
            break
        t += rng.exponential(1 / r)
        if t >= t_end:
            break
        times.append(t)
        s ^= 1
    return np.array(times)


def simulate_rtn(params: PhotonNoiseParams, duration, dt, seed) -> RtnTrajectory:
    """One telegraph trajectory sampled at ``j * dt``.

    The initial state is drawn from the stationary distribution; dwell times
    are exact exponentials, so the sampled grid carries no time-step bias.
    """
    if dt <= 0 or duration <= 0:
        raise ValueError("need dt > 0 and duration > 0")
    if dt * max(params.rate_up, params.rate_down) > 0.1:
        raise StepTooCoarse("dt times the fastest switching rate exceeds 0.1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    initial = int(rng.random() < params.occupancy)
    jumps = _switch_times(params, duration, rng, initial)
    grid = np.arange(int(np.floor(duration / dt)) + 1) * dt
    n_jumps = np.searchsorted(jumps, grid, side="right")
    states = (initial + n_jumps) % 2
    return RtnTrajectory(dt, states.astype(np.int8), int(seed), jumps, initial)


def _toggle_integral(t, n_pulses, tau):
    """``Z(t) = int_0^t zeta(s) ds`` for the toggling sign of the sequence, for ``t`` in ``[0, tau]``."""
    t = np.asarray(t, dtype=float)
    if n_pulses == 0:
        return t
    sw = np.concatenate([[0.0], (np.arange(1, n_pulses + 1) - 0.5) / n_pulses * tau, [tau]])
    z = np.zeros_like(t)
    for s in range(n_pulses + 1):
        z += (-1) ** s * (np.clip(t, sw[s], sw[s + 1]) - sw[s])
    return z


def _block_phases(params, taus, n_pulses, seed, block, n_in_block):
    """Accumulated ``int zeta n dt`` for each trajectory in one block and each tau."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(block)]))
    t_end = float(np.max(taus))
    out = np.zeros((n_in_block, len(taus)))
    for i in range(n_in_block):
        initial = int(rng.random() < params.occupancy)
        jumps = _switch_times(params, t_end, rng, initial)
        # occupied intervals [a, b]
        edges = np.concatenate([[0.0], jumps, [t_end]])
        starts, stops = edges[:-1], edges[1:]
        occupied = (initial + np.arange(starts.size)) % 2 == 1
        a, b = starts[occupied], stops[occupied]
        for j, tau in enumerate(taus):
            aa, bb = np.minimum(a, tau), np.minimum(b, tau)
            out[i, j] = np.sum(_toggle_integral(bb, n_pulses, tau) - _toggle_integral(aa, n_pulses, tau))
    return out


@dataclass
class PhotonDecay:
    taus: np.ndarray
    coherence: np.ndarray
    stderr: np.ndarray


def dephasing_decay(params: PhotonNoiseParams, sequence, taus, n_traj=1024, seed=0, threads=None):
    """Monte Carlo coherence ``|<exp(-i chi int zeta n dt)>|`` at each ``tau``.

    Trajectories come in blocks of 64 seeded by ``(seed, block)``; the result
    does not depend on ``threads``.
    """
    n_pulses = parse_sequence(sequence)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus <= 0):
        raise ValueError("taus must be positive")
    blocks = [(b, min(BLOCK, n_traj - b * BLOCK)) for b in range((n_traj + BLOCK - 1) // BLOCK)]
    phases = np.vstack(pmap(lambda bn: _block_phases(params, taus, n_pulses, seed, *bn), blocks, threads))
    z = np.exp(-1j * params.chi * phases)
    mean = z.mean(axis=0)
    c = np.abs(mean)
    u = np.where(c > 0, mean / np.where(c > 0, c, 1), 1.0)
    proj = (z * np.conj(u)).real
    se = proj.std(axis=0, ddof=1) / np.sqrt(z.shape[0])
    return PhotonDecay(taus, c, se)


def telegraph_coherence(params: PhotonNoiseParams, sequence, tau):
    """Exact ensemble coherence of telegraph dephasing from the 2x2 propagator.

    The vector ``(P(n=0) e^{-i phi}, P(n=1) e^{-i phi})`` evolves under
    ``[[-up, down], [up, -down - i s chi]]``, with ``s = +-1`` the toggling sign,
    starting from the stationary state; the coherence is the modulus of its sum.
    """
    n_pulses = parse_sequence(sequence)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    up, down = params.rate_up, params.rate_down
    p = np.array([down, up]) / (up + down)
    out = np.empty(taus.size)
    for i, t in enumerate(taus):
        sw = np.array([0.0, t]) if n_pulses == 0 else np.concatenate(
            [[0.0], (np.arange(1, n_pulses + 1) - 0.5) / n_pulses * t, [t]])
        x = p.astype(complex)
        for s in range(len(sw) - 1):
            sign = (-1) ** s
            m = np.array([[-up, down], [up, -down - 1j * sign * params.chi]])
            x = sla.expm(m * (sw[s + 1] - sw[s])) @ x
        out[i] = abs(x.sum())
    return out if np.ndim(tau) else float(out[0])


def decay_rate(params: PhotonNoiseParams, sequence="ramsey", t_max=1.0):
    """Inverse of the time (s) at which the exact coherence falls to ``1/e``; 0 if it never does."""
    if params.chi == 0 or params.n_th == 0:
        return 0.0
    f = lambda t: telegraph_coherence(params, sequence, t) - np.exp(-1)
    # step out geometrically to bracket the first crossing
    t = 1e-9
    while f(t) > 0:
        t *= 2
        if t > t_max:
            return 0.0
    t0 = max(t / 2, 1e-12) if t > 1e-9 else 0.0
    return 1 / brentq(f, t0, t, xtol=1e-15, rtol=1e-12)


def required_temperature(target_rate, omega_r=PAPER_OMEGA_R, kappa=PAPER_KAPPA, chi=PAPER_CHI,
                         sequence="ramsey", t_max=T_MAX):
    """Lowest resonator temperature whose photon dephasing rate reaches ``target_rate`` (1/s).

    The rate grows with temperature only up to a maximum (beyond which the
    telegraph noise motionally narrows), so the root is taken on the rising
    branch. Raises :class:`BracketingFailure` if the target is not reached below ``t_max``.
    """
    if target_rate < 0:
        raise ValueError("target_rate must be >= 0")
    if target_rate == 0:
        return 0.0

    def rate(temp):
        return decay_rate(PhotonNoiseParams.from_temperature(omega_r, kappa, temp, chi), sequence)

    grid = np.geomspace(1e-3, t_max, 61)
    prev_t, prev_r = None, None
    for temp in grid:
        r = rate(temp)
        if r >= target_rate:
            if prev_t is None:
                raise BracketingFailure("target rate already exceeded at 1 mK")
            return brentq(lambda x: rate(x) - target_rate, prev_t, temp, xtol=1e-9, rtol=1e-10)
        if prev_r is not None and r < prev_r:
            break
        prev_t, prev_r = temp, r
    raise BracketingFailure(f"rate {target_rate:.4g}/s is not reached on the rising branch below {t_max} K")


def n_for_rate(target_rate, kappa=PAPER_KAPPA, chi=PAPER_CHI, sequence="ramsey"):
    """Thermal photon number on the rising branch that yields ``target_rate``."""
    def rate(n):
        return decay_rate(PhotonNoiseParams.from_kappa(1.0, kappa, n, chi), sequence)

    grid = np.geomspace(1e-7, 10, 81)
    prev = None
    for n in grid:
        if rate(n) >= target_rate:
            if prev is None:
                raise BracketingFailure("target below the smallest occupancy probed")
            return brentq(lambda x: rate(x) - target_rate, prev, n, xtol=1e-14, rtol=1e-12)
        prev = n
    raise BracketingFailure("target rate not reachable")


def calibrate_omega_r(anchors=((213e3, 0.250), (4.68e3, 0.067)), kappa=PAPER_KAPPA, chi=PAPER_CHI):
    """Resonator frequency minimizing the squared log error of the (rate, temperature) anchors.

    For each anchor the required occupancy ``n_i`` is fixed by the rate; then
    ``T_i = hbar w / (k_B ln(1 + 1/n_i))`` and the optimum is the geometric mean.
    """
    x = np.array([np.log1p(1 / n_for_rate(r, kappa, chi)) for r, _ in anchors])
    temps = np.array([t for _, t in anchors])
    log_w = np.mean(np.log(temps * x * k_B / hbar))
    return float(np.exp(log_w))
