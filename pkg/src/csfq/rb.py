"""Single-qubit Clifford randomized benchmarking on a driven, dissipative 2- or 3-level system.

The master equation is integrated in the frame where level ``j`` rotates at
``j * omega_d``. The drive ``Omega(t) cos(omega_d t + phi) V`` is kept in full
(counter-rotating terms) or reduced to its co-rotating part (RWA).
"""

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence

import numpy as np
from numba import njit
from scipy.optimize import brentq, curve_fit, lsq_linear, minimize_scalar

from csfq._util import pmap
from csfq.errors import IllConditioned, IntegrationFailure, LeakageWarning

DEFAULT_LENGTHS = (2, 4, 8, 16, 32, 64, 128, 196)

# ---------------------------------------------------------------- Clifford group

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)


def rotation(axis, angle):
    s = _SX if axis == "x" else _SY
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * s


# generator name -> (axis, angle)
GENERATORS = {
    "X90": ("x", np.pi / 2), "-X90": ("x", -np.pi / 2),
    "Y90": ("y", np.pi / 2), "-Y90": ("y", -np.pi / 2),
    "X180": ("x", np.pi), "Y180": ("y", np.pi),
}


def generator_unitary(name):
    return rotation(*GENERATORS[name])


def _canonical(u):
    """Remove the global phase: make the first sizeable entry real positive."""
    flat = u.ravel()
    i = np.argmax(np.abs(flat) > 1e-6)
    return u * np.conj(flat[i]) / abs(flat[i])


def _key(u):
    return tuple(np.round(_canonical(u).ravel(), 8).view(float))


def same_up_to_phase(u, v, tol=1e-12):
    return np.allclose(_canonical(u), _canonical(v), atol=tol)


@dataclass(frozen=True)
class CliffordElement:
    index: int
    decomposition: tuple
    unitary: np.ndarray = field(compare=False, repr=False)


@dataclass
class CliffordGroup:
    elements: List[CliffordElement]
    product: np.ndarray  # product[a, b] = index of C_a C_b (C_b applied first)
    inverse: np.ndarray

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def compose(self, indices):
        """Index of the element equal to applying ``indices`` in order."""
        acc = 0
        for i in indices:
            acc = self.product[i, acc]
        return acc


@lru_cache(maxsize=1)
def clifford_group() -> CliffordGroup:
    """The 24 single-qubit Cliffords as shortest sequences of the generator pulses.

    A breadth-first search over products of the six generators finds the
    shortest decomposition of every element (at most three pulses); the
    identity is the empty sequence.
    """
    names = list(GENERATORS)
    found = {_key(np.eye(2, dtype=complex)): ((), np.eye(2, dtype=complex))}
    frontier = [((), np.eye(2, dtype=complex))]
    while frontier and len(found) < 24:
        nxt = []
        for seq, u in frontier:
            for g in names:
                v = generator_unitary(g) @ u
                k = _key(v)
                if k not in found:
                    found[k] = (seq + (g,), v)
                    nxt.append((seq + (g,), v))
        frontier = nxt
    items = sorted(found.values(), key=lambda su: (len(su[0]), [names.index(g) for g in su[0]]))
    elements = [CliffordElement(i, s, u) for i, (s, u) in enumerate(items)]
    lookup = {_key(e.unitary): e.index for e in elements}
    n = len(elements)
    product = np.empty((n, n), dtype=int)
    for a in elements:
        for b in elements:
            product[a.index, b.index] = lookup[_key(a.unitary @ b.unitary)]
    inverse = np.array([int(np.nonzero(product[:, i] == 0)[0][0]) for i in range(n)])
    return CliffordGroup(elements, product, inverse)


def random_sequence(m, seed, randomization=0):
    """``m`` uniformly random Clifford indices and the recovery index that undoes them."""
    if m < 1:
        raise ValueError("m must be >= 1")
    group = clifford_group()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(m), int(randomization)]))
    gates = [int(g) for g in rng.integers(0, len(group), size=m)]
    recovery = int(group.inverse[group.compose(gates)])
    return gates, recovery


# ---------------------------------------------------------------- pulses


@dataclass(frozen=True)
class PulseSpec:
    """Trapezoidal pulses with linear ramps; ``t_half``/``t_full`` are total durations (s)."""

    drive_strength: float
    t_half: float
    t_full: float
    t_rise: float = 0.6e-9
    t_fall: float = 0.6e-9
    gap: float = 0.5e-9
    shape: str = "trapezoid"

    def __post_init__(self):
        if self.shape != "trapezoid":
            raise ValueError(f"unsupported pulse shape {self.shape!r}")
        if min(self.t_half, self.t_full) <= 0 or self.drive_strength <= 0:
            raise ValueError("durations and drive strength must be positive")
        if self.gap < 0 or self.t_rise < 0 or self.t_fall < 0:
            raise ValueError("gap and ramps must be >= 0")

    @classmethod
    def calibrated(cls, drive_strength=2 * np.pi * 260e6, t_rise=0.6e-9, t_fall=0.6e-9, gap=0.5e-9):
        """Durations chosen so the co-rotating pulse area is pi/2 and pi."""
        return cls(drive_strength, duration_for_area(np.pi / 2, drive_strength, t_rise, t_fall),
                   duration_for_area(np.pi, drive_strength, t_rise, t_fall), t_rise, t_fall, gap)

    def duration(self, angle):
        return self.t_full if abs(abs(angle) - np.pi) < 1e-9 else self.t_half


def pulse_area(duration, amp, t_rise, t_fall):
    """Integral of the trapezoid envelope; short pulses become triangles of reduced height."""
    ramps = t_rise + t_fall
    if duration >= ramps:
        return amp * (duration - ramps / 2)
    return amp * duration**2 / (2 * ramps) if ramps > 0 else 0.0


def duration_for_area(area, amp, t_rise, t_fall):
    hi = area / amp + t_rise + t_fall
    return brentq(lambda t: pulse_area(t, amp, t_rise, t_fall) - area, 1e-15, hi, xtol=1e-18)


# ---------------------------------------------------------------- device / config


@dataclass(frozen=True)
class RbDevice:
    """Transition frequencies and normalized drive matrix elements (``|V01| = 1``)."""

    omega01: float
    omega12: float
    v12: float = 1.0
    v02: float = 0.0

    @classmethod
    def from_circuit(cls, params, bias=None, basis_size=12):
        from csfq.circuit import BiasPoint, charge_operator

        bias = BiasPoint(0.5) if bias is None else bias
        e, op = charge_operator(params, bias, params.caps.gate_d, 3, basis_size)
        d01 = abs(op[0, 1])
        return cls(e[1] - e[0], e[2] - e[1], abs(op[1, 2]) / d01, abs(op[0, 2]) / d01)


@dataclass
class RbConfig:
    lengths: Sequence[int] = DEFAULT_LENGTHS
    randomizations: int = 32
    levels: int = 2
    gamma10: float = 29.5e3
    gamma01: float = 1.4e3
    dephasing01: float = 1 / 4.7e-6
    gamma21: float = 124.3e3
    gamma12: float = 8.8
    gamma20: float = 27.8e3
    gamma02: float = 0.1
    dephasing12: float = 1 / 3.4e-6
    dephasing02: float = 1 / 5.4e-6
    rwa: bool = True
    counter_rotating: bool = False
    seed: int = 0
    dt: float = 1e-12

    def __post_init__(self):
        self.lengths = tuple(int(m) for m in self.lengths)
        if any(m < 1 for m in self.lengths) or list(self.lengths) != sorted(set(self.lengths)):
            raise ValueError("lengths must be positive and strictly increasing")
        if self.levels not in (2, 3):
            raise ValueError("levels must be 2 or 3")
        if self.rwa and self.counter_rotating:
            raise ValueError("rwa and counter_rotating are mutually exclusive")
        if not self.rwa and not self.counter_rotating:
            self.counter_rotating = True
        if self.randomizations < 1 or self.dt <= 0:
            raise ValueError("need randomizations >= 1 and dt > 0")

    def without_decoherence(self):
        from dataclasses import replace
        return replace(self, gamma10=0.0, gamma01=0.0, dephasing01=0.0, gamma21=0.0, gamma12=0.0,
                       gamma20=0.0, gamma02=0.0, dephasing12=0.0, dephasing02=0.0)

    def rate_matrix(self):
        """``gamma[j, k]`` for transfer j -> k, truncated to ``levels``."""
        g = np.array([[0, self.gamma01, self.gamma02],
                      [self.gamma10, 0, self.gamma12],
                      [self.gamma20, self.gamma21, 0]], dtype=float)
        return g[: self.levels, : self.levels]

    def dephasing_rates(self):
        """Per-level rates ``g_j`` of ``sqrt(g_j)|j><j|`` giving pair coherence decay ``(g_j + g_k)/2``."""
        if self.levels == 2:
            return np.array([self.dephasing01, self.dephasing01])
        r01, r12, r02 = self.dephasing01, self.dephasing12, self.dephasing02
        g = np.array([r01 + r02 - r12, r01 + r12 - r02, r12 + r02 - r01])
        if np.any(g < 0):
            raise ValueError("pair dephasing rates violate the triangle inequality")
        return g


# ---------------------------------------------------------------- integrator


@njit(cache=True, nogil=True)
def _envelope(tl, dur, amp, tr, tf):
    if tl <= 0.0 or tl >= dur:
        return 0.0
    a = 1.0
    if tr > 0.0:
        a = min(a, tl / tr)
    if tf > 0.0:
        a = min(a, (dur - tl) / tf)
    return amp * a


@njit(cache=True, nogil=True)
def _rhs(t, rho, t0, dur, amp, phase, tr, tf, delta, v, gamma, gdeph, omega_d, cr, out, h):
    d = rho.shape[0]
    env = _envelope(t - t0, dur, amp, tr, tf)
    for a in range(d):
        for b in range(d):
            h[a, b] = 0.0
        h[a, a] = delta[a]
    if env != 0.0:
        if cr:
            c = env * np.cos(omega_d * t + phase)
            for a in range(d):
                for b in range(d):
                    if a != b and v[a, b] != 0.0:
                        h[a, b] += c * v[a, b] * np.exp(1j * (a - b) * omega_d * t)
        else:
            up = 0.5 * env * np.exp(-1j * phase)
            for a in range(1, d):
                h[a, a - 1] += up * v[a, a - 1]
                h[a - 1, a] += np.conj(up) * v[a - 1, a]
    # -i [H, rho]
    for a in range(d):
        for b in range(d):
            s = 0.0j
            for c2 in range(d):
                s += h[a, c2] * rho[c2, b] - rho[a, c2] * h[c2, b]
            out[a, b] = -1j * s
    # relaxation and pure dephasing
    for a in range(d):
        gout_a = 0.0
        for k in range(d):
            gout_a += gamma[a, k]
        for b in range(d):
            gout_b = 0.0
            for k in range(d):
                gout_b += gamma[b, k]
            if a == b:
                gain = 0.0
                for j in range(d):
                    gain += gamma[j, a] * rho[j, j].real
                out[a, a] += gain - gout_a * rho[a, a]
            else:
                out[a, b] -= 0.5 * (gout_a + gout_b + gdeph[a] + gdeph[b]) * rho[a, b]


@njit(cache=True, nogil=True)
def _propagate(rho, t_start, t_end, dt, t0, dur, amp, phase, tr, tf, delta, v, gamma, gdeph, omega_d, cr):
    d = rho.shape[0]
    n = max(1, int(np.ceil((t_end - t_start) / dt - 1e-9)))
    h = np.empty((d, d), dtype=np.complex128)
    k1 = np.empty((d, d), dtype=np.complex128)
    k2 = np.empty((d, d), dtype=np.complex128)
    k3 = np.empty((d, d), dtype=np.complex128)
    k4 = np.empty((d, d), dtype=np.complex128)
    tmp = np.empty((d, d), dtype=np.complex128)
    step = (t_end - t_start) / n
    t = t_start
    for _ in range(n):
        _rhs(t, rho, t0, dur, amp, phase, tr, tf, delta, v, gamma, gdeph, omega_d, cr, k1, h)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = rho[a, b] + 0.5 * step * k1[a, b]
        _rhs(t + 0.5 * step, tmp, t0, dur, amp, phase, tr, tf, delta, v, gamma, gdeph, omega_d, cr, k2, h)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = rho[a, b] + 0.5 * step * k2[a, b]
        _rhs(t + 0.5 * step, tmp, t0, dur, amp, phase, tr, tf, delta, v, gamma, gdeph, omega_d, cr, k3, h)
        for a in range(d):
            for b in range(d):
                tmp[a, b] = rho[a, b] + step * k3[a, b]
        _rhs(t + step, tmp, t0, dur, amp, phase, tr, tf, delta, v, gamma, gdeph, omega_d, cr, k4, h)
        for a in range(d):
            for b in range(d):
                rho[a, b] += step / 6.0 * (k1[a, b] + 2.0 * k2[a, b] + 2.0 * k3[a, b] + k4[a, b])
        t += step
    return rho


_PHASE = {"x": 0.0, "y": np.pi / 2}


def _pulse_phase(name):
    axis, angle = GENERATORS[name]
    # a negative rotation is the same envelope with the carrier shifted by pi
    return _PHASE[axis] + (np.pi if angle < 0 else 0.0), abs(angle)


def pulse_schedule(gates, recovery, pulses: PulseSpec):
    """List of ``(start, duration, phase)`` for every generator pulse, and the total time."""
    group = clifford_group()
    sched, t = [], 0.0
    for idx in list(gates) + [recovery]:
        for g in group[idx].decomposition:
            phase, angle = _pulse_phase(g)
            dur = pulses.duration(angle)
            sched.append((t, dur, phase))
            t += dur + pulses.gap
    return sched, t


@dataclass
class SequenceResult:
    survival: float
    populations: np.ndarray
    rho: np.ndarray


def _system(device: RbDevice, config: RbConfig):
    d = config.levels
    delta = np.zeros(d)
    if d == 3:
        delta[2] = device.omega12 - device.omega01
    v = np.zeros((d, d))
    v[0, 1] = v[1, 0] = 1.0
    if d == 3:
        v[1, 2] = v[2, 1] = device.v12
        v[0, 2] = v[2, 0] = device.v02
    return delta.astype(np.complex128), v, config.rate_matrix(), config.dephasing_rates()


def simulate_schedule(schedule, t_total, pulses: PulseSpec, config: RbConfig, device: RbDevice, rho0=None):
    delta, v, gamma, gdeph = _system(device, config)
    d = config.levels
    rho = np.zeros((d, d), dtype=np.complex128)
    if rho0 is None:
        rho[0, 0] = 1.0
    else:
        rho[:] = rho0
    t = 0.0
    for start, dur, phase in schedule:
        if start > t:
            rho = _propagate(rho, t, start, config.dt * 10, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, delta, v, gamma,
                             gdeph, device.omega01, config.counter_rotating)
        rho = _propagate(rho, start, start + dur, config.dt, start, dur, pulses.drive_strength, phase,
                         pulses.t_rise, pulses.t_fall, delta, v, gamma, gdeph, device.omega01,
                         config.counter_rotating)
        t = start + dur
    if t_total > t:
        rho = _propagate(rho, t, t_total, config.dt * 10, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, delta, v, gamma,
                         gdeph, device.omega01, config.counter_rotating)
    tr = np.trace(rho).real
    if not np.all(np.isfinite(rho)) or abs(tr - 1) > 1e-8:
        raise IntegrationFailure(f"trace drifted to {tr!r}")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -1e-8:
        raise IntegrationFailure("density matrix lost positivity")
    return rho


def simulate_sequence(seq, pulses: PulseSpec, config: RbConfig, device: RbDevice) -> SequenceResult:
    """Integrate one RB sequence ``(gates, recovery)`` from the ground state; survival is ``rho_00``."""
    gates, recovery = seq
    sched, t_total = pulse_schedule(gates, recovery, pulses)
    rho = simulate_schedule(sched, t_total, pulses, config, device)
    pops = np.real(np.diag(rho)).copy()
    if config.levels == 3 and pops[2] > 1e-2:
        warnings.warn(f"level-2 population {pops[2]:.3g} at sequence end", LeakageWarning)
    return SequenceResult(float(pops[0]), pops, rho)


def repeated_pulse_check(pulses: PulseSpec, config: RbConfig, device: RbDevice, m=5, axis="x"):
    """Excited population after ``2m + 1`` quarter-turn pulses; 0.5 for a perfectly calibrated pulse."""
    sched, t = [], 0.0
    for _ in range(2 * m + 1):
        sched.append((t, pulses.t_half, _PHASE[axis]))
        t += pulses.t_half + pulses.gap
    rho = simulate_schedule(sched, t, pulses, config, device)
    return float(rho[1, 1].real)


class DepolarizingSimulator:
    """Ideal Cliffords each followed by a depolarizing channel of parameter ``p``."""

    def __init__(self, p):
        if not 0 <= p <= 1:
            raise ValueError("p must lie in [0, 1]")
        self.p = p

    def __call__(self, seq, pulses=None, config=None, device=None):
        group = clifford_group()
        gates, recovery = seq
        rho = np.array([[1, 0], [0, 0]], dtype=complex)
        for idx in list(gates) + [recovery]:
            u = group[idx].unitary
            rho = self.p * (u @ rho @ u.conj().T) + (1 - self.p) * np.eye(2) / 2
        return SequenceResult(float(rho[0, 0].real), np.real(np.diag(rho)), rho)


@dataclass
class RbTable:
    m: np.ndarray
    randomization: np.ndarray
    survival: np.ndarray
    p2: np.ndarray

    def write(self, fh):
        fh.write("m randomization survival p2\n")
        for row in zip(self.m, self.randomization, self.survival, self.p2):
            fh.write(f"{int(row[0])} {int(row[1])} {float(row[2])!r} {float(row[3])!r}\n")

    @classmethod
    def read(cls, lines):
        rows = [ln.split() for ln in lines if ln.strip() and not ln.startswith("#")]
        if rows and rows[0][0] == "m":
            rows = rows[1:]
        a = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(a[:, 0].astype(int), a[:, 1].astype(int), a[:, 2], a[:, 3])


def run_rb(config: RbConfig, pulses: PulseSpec, device: RbDevice, simulator: Optional[Callable] = None,
           threads=None) -> RbTable:
    """Simulate every (length, randomization) pair; deterministic per ``config.seed``."""
    sim = simulate_sequence if simulator is None else simulator
    jobs = [(m, r) for m in config.lengths for r in range(config.randomizations)]

    def one(job):
        m, r = job
        res = sim(random_sequence(m, config.seed, r), pulses, config, device)
        p2 = res.populations[2] if len(res.populations) > 2 else 0.0
        return res.survival, p2

    out = pmap(one, jobs, threads)
    return RbTable(np.array([j[0] for j in jobs]), np.array([j[1] for j in jobs]),
                   np.array([o[0] for o in out]), np.array([o[1] for o in out]))


@dataclass
class RbFit:
    a0: float
    b0: float
    p: float
    f_ave: float
    f_ave_stderr: float


def rb_model(m, a0, p, b0):
    return a0 * p**m + b0


def _linear_part(lengths, avg, p):
    """Least-squares ``(A0, B0)`` in ``[0, 1]`` at fixed ``p`` and the residual sum of squares."""
    x = np.column_stack([p ** lengths, np.ones_like(lengths)])
    coef = lsq_linear(x, avg, bounds=(0.0, 1.0), method="bvls").x
    return coef, float(np.sum((x @ coef - avg) ** 2))


def fit_rb(m, survival) -> RbFit:
    """Fit ``A0 p^M + B0`` to length-averaged survivals; ``F_ave = p + (1 - p)/2``.

    The model is linear in ``(A0, B0)`` at fixed ``p``, so ``p`` is found by
    minimizing the profiled residual (grid, then bounded scalar search) and
    the three parameters are polished jointly by least squares. ``A0`` and
    ``B0`` are probabilities and are kept in ``[0, 1]``; without that bound,
    data still in the linear regime (``p^M`` close to ``1 - M (1 - p)``)
    trades a huge ``A0`` against ``p -> 1``.
    """
    m = np.asarray(m, dtype=float)
    s = np.asarray(survival, dtype=float)
    lengths = np.unique(m)
    if lengths.size < 3:
        raise IllConditioned("need at least three distinct lengths")
    avg = np.array([s[m == L].mean() for L in lengths])
    if np.allclose(avg, avg[0], rtol=0, atol=1e-14):
        # no decay at all: p = 1 and the amplitude split is undetermined
        return RbFit(avg[0] - 0.5, 0.5, 1.0, 1.0, 0.0)
    grid = 1 - np.geomspace(1e-8, 1, 801)
    rss = [_linear_part(lengths, avg, p)[1] for p in grid]
    k = int(np.argmin(rss))
    lo, hi = grid[min(k + 1, grid.size - 1)], grid[max(k - 1, 0)]
    res = minimize_scalar(lambda p: _linear_part(lengths, avg, p)[1], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    p0 = float(res.x)
    (a0, b0), _ = _linear_part(lengths, avg, p0)
    try:
        start = np.clip([a0, p0, b0], 1e-12, 1 - 1e-12)
        popt, pcov = curve_fit(rb_model, lengths, avg, p0=start, bounds=(0.0, 1.0), xtol=1e-15, ftol=1e-15,
                               gtol=1e-15, max_nfev=20000)
    except RuntimeError as exc:
        raise IllConditioned(str(exc)) from None
    a0, p, b0 = popt
    if not 0 <= p <= 1:
        raise IllConditioned(f"fitted decay parameter {p:.6g} outside [0, 1]")
    with np.errstate(invalid="ignore"):
        sp = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else np.inf
    return RbFit(float(a0), float(b0), float(p), float(p + (1 - p) / 2), sp / 2)
