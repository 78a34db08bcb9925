"""Monte Carlo dephasing under correlated Gaussian noise.

Noise samples on a uniform time grid are drawn from a multivariate normal with
Toeplitz covariance ``M_ij = R(|i - j| dt)``, where ``R(t) = 2 int S(w) cos(w t) dw``
over the PSD band (clipped at the grid Nyquist frequency ``pi / dt``). With this
normalization a linearly coupled trajectory reproduces
:func:`csfq.decoherence.coherence_numeric` on average.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy import stats

from csfq._util import pmap
from csfq.decoherence import PowerLawPSD
from csfq.errors import FactorizationFailure, InsufficientTrajectories, QuadratureFailure

REGULARIZATION = 1e-10
BLOCK = 64  # trajectories per independently seeded block
DEFAULT_N_SAMPLES = 512

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


@dataclass
class CorrelationMatrix:
    m: np.ndarray
    dt: float

    @property
    def n_samples(self):
        return self.m.shape[0]


@dataclass
class TrajectoryBatch:
    dt: float
    values: np.ndarray
    seed: int
    units: str = "flux"

    @property
    def n_traj(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class CouplingSpec:
    """Map from noise ``x`` to frequency shift: ``k1 * x`` or ``k2 * x**2``.

    For flux noise at a symmetry point ``k2`` is the Taylor coefficient, i.e.
    half the second flux derivative of the transition frequency.
    """

    kind: str
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic"):
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.kind == "linear" and self.k1 == 0:
            raise ValueError("linear coupling needs k1 != 0")
        if self.kind == "quadratic" and self.k2 == 0:
            raise ValueError("quadratic coupling needs k2 != 0")

    def shift(self, x):
        return self.k1 * x if self.kind == "linear" else self.k2 * x * x


def parse_sequence(seq):
    """``'ramsey'`` -> 0 pulses, ``'cpmg:N'`` or int ``N`` -> N pulses."""
    if isinstance(seq, (int, np.integer)):
        if seq < 0:
            raise ValueError("pulse number must be >= 0")
        return int(seq)
    s = str(seq).strip().lower()
    if s == "ramsey":
        return 0
    if s.startswith("cpmg:"):
        n = int(s.split(":", 1)[1])
        if n < 1:
            raise ValueError("cpmg needs at least one pulse")
        return n
    if s in ("echo", "spin_echo"):
        return 1
    raise ValueError(f"unknown sequence {seq!r}")


def autocovariance(psd: PowerLawPSD, lags, omega_max=None):
    """``R(t) = 2 int_{w_min}^{w_max} S(w) cos(w t) dw`` at each lag (s).

    Composite Gauss-Legendre quadrature: geometric panels near the lower
    cutoff, where ``S`` is steep, and uniform panels resolving the fastest
    oscillation ``cos(w t_max)`` above.
    """
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    w0 = psd.omega_min
    w1 = psd.omega_max if omega_max is None else min(psd.omega_max, omega_max)
    if w1 <= w0:
        raise QuadratureFailure("empty frequency band")
    t_max = max(np.max(np.abs(lags)), 1e-300)
    width = min(w1 - w0, 0.25 * np.pi / t_max)
    split = min(w1, max(w0, width))
    nodes, weights = [], []

    def add_panels(edges):
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        nodes.append((mid[:, None] + half[:, None] * _GL_X).ravel())
        weights.append((half[:, None] * _GL_W).ravel())

    if split > w0:
        decades = np.log10(split / w0)
        add_panels(np.geomspace(w0, split, max(2, int(6 * decades) + 2)))
    if w1 > split:
        add_panels(np.linspace(split, w1, int(np.ceil((w1 - split) / width)) + 1))
    w = np.concatenate(nodes)
    sw = np.concatenate(weights) * 2 * psd.a * w ** (-psd.alpha)
    out = np.empty(lags.size)
    for i0 in range(0, lags.size, 64):
        chunk = lags[i0:i0 + 64]
        out[i0:i0 + 64] = np.cos(np.outer(chunk, w)) @ sw
    if not np.all(np.isfinite(out)):
        raise QuadratureFailure("autocovariance is not finite")
    return out


def correlation_from_psd(psd: PowerLawPSD, dt, n_samples=DEFAULT_N_SAMPLES, nyquist=True):
    """Toeplitz covariance of ``n_samples`` noise values spaced by ``dt``.

    With ``nyquist`` the band is clipped at ``pi / dt`` so the grid does not
    alias power from above its resolution.
    """
    if dt <= 0 or n_samples < 1:
        raise ValueError("need dt > 0 and n_samples >= 1")
    r = autocovariance(psd, np.arange(n_samples) * dt, np.pi / dt if nyquist else None)
    return CorrelationMatrix(sla.toeplitz(r), dt)


def _cholesky(m):
    reg = m + REGULARIZATION * m[0, 0] * np.eye(m.shape[0])
    try:
        return np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        raise FactorizationFailure("covariance is not positive definite after regularization") from None


def sample_trajectories(cm: CorrelationMatrix, n_traj, seed, threads=None, units="flux"):
    """Draw ``n_traj`` correlated trajectories ``L z`` with ``L L^T = M``.

    Standard normals come in blocks of 64 trajectories, block ``b`` seeded by
    ``SeedSequence([seed, b])``, so the batch is independent of ``threads``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    lower = _cholesky(cm.m)
    n = cm.n_samples
    starts = list(range(0, n_traj, BLOCK))

    def block(b0):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b0 // BLOCK]))
        z = rng.standard_normal((BLOCK, n))[: min(BLOCK, n_traj - b0)]
        return z @ lower.T

    values = np.vstack(pmap(block, starts, threads))
    return TrajectoryBatch(cm.dt, values, int(seed), units)


def sequence_weights(n_pulses, tau, dt, n_samples):
    """Integral of the toggling sign over each sample interval ``[j dt, (j+1) dt]``.

    Pulses are ideal and instantaneous at ``(k - 1/2) tau / N``; intervals
    beyond ``tau`` get zero weight. For ``N >= 1`` the weights sum to zero.
    """
    edges = np.arange(n_samples + 1) * dt
    switches = np.concatenate([[0.0], (np.arange(1, n_pulses + 1) - 0.5) / max(n_pulses, 1) * tau, [tau]])
    if n_pulses == 0:
        switches = np.array([0.0, tau])
    w = np.zeros(n_samples)
    for s in range(len(switches) - 1):
        lo = np.clip(edges[:-1], switches[s], switches[s + 1])
        hi = np.clip(edges[1:], switches[s], switches[s + 1])
        w += (-1) ** s * (hi - lo)
    return w


@dataclass
class DephasingResult:
    coherence: float
    stderr: float
    tau: float


def simulate_dephasing(batch: TrajectoryBatch, coupling: CouplingSpec, sequence, tau):
    """Coherence ``|<exp(-i sum_j w_j dw_j)>|`` over the batch, with its standard error."""
    n_pulses = parse_sequence(sequence)
    if tau > batch.dt * batch.n_samples * (1 + 1e-12):
        raise ValueError("tau exceeds the trajectory length")
    if batch.n_traj < 256:
        warnings.warn(f"only {batch.n_traj} trajectories; statistical error is large",
                      InsufficientTrajectories)
    w = sequence_weights(n_pulses, tau, batch.dt, batch.n_samples)
    phase = coupling.shift(batch.values) @ w
    z = np.exp(-1j * phase)
    mean = z.mean()
    c = abs(mean)
    # error of |<z>| from the spread of z projected on the mean direction
    u = mean / c if c > 0 else 1.0
    proj = (z * np.conj(u)).real
    se = proj.std(ddof=1) / np.sqrt(z.size) if z.size > 1 else np.inf
    return DephasingResult(float(c), float(se), float(tau))


def coherence_curve(psd: PowerLawPSD, coupling: CouplingSpec, sequence, taus, n_traj=1024, seed=0,
                    n_samples=DEFAULT_N_SAMPLES, threads=None):
    """Simulate one batch per ``tau`` (grid ``dt = tau / n_samples``) and return results.

    Each ``tau`` uses its own seed derived from ``(seed, index)``.
    """
    out = []
    for i, tau in enumerate(taus):
        dt = tau / n_samples
        cm = correlation_from_psd(psd, dt, n_samples)
        sub = int(np.random.SeedSequence([int(seed), i]).generate_state(1)[0])
        batch = sample_trajectories(cm, n_traj, sub, threads)
        out.append(simulate_dephasing(batch, coupling, sequence, tau))
    return out


def gaussian_coherence(cm: CorrelationMatrix, coupling: CouplingSpec, sequence, tau):
    """Exact ensemble coherence ``exp(-k1^2 w^T M w / 2)`` for linear coupling on the same grid."""
    if coupling.kind != "linear":
        raise ValueError("closed form only for linear coupling")
    w = sequence_weights(parse_sequence(sequence), tau, cm.dt, cm.n_samples)
    return float(np.exp(-0.5 * coupling.k1**2 * w @ cm.m @ w))


@dataclass
class HistogramResult:
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    variance: float
    skewness: float
    skewness_stderr: float


def frequency_histogram(batch: TrajectoryBatch, coupling: CouplingSpec, bins=50):
    """Histogram and moments of the per-sample frequency shifts of the batch."""
    if batch.values.size == 0:
        raise ValueError("batch is empty")
    d = coupling.shift(batch.values).ravel()
    counts, edges = np.histogram(d, bins=bins)
    n = d.size
    # standard error of the sample skewness for a normal population
    se = np.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3))) if n > 2 else np.inf
    return HistogramResult(counts, edges, float(d.mean()), float(d.var()),
                           float(stats.skew(d)), float(se))


def decay_time(taus, coherence):
    """First ``1/e`` crossing of a decay curve by log-linear interpolation (``inf`` if none)."""
    taus = np.asarray(taus, dtype=float)
    c = np.asarray(coherence, dtype=float)
    below = np.nonzero(c <= np.exp(-1))[0]
    if below.size == 0:
        return np.inf
    i = below[0]
    if i == 0:
        return float(taus[0])
    c0, c1 = np.log(max(c[i - 1], 1e-300)), np.log(max(c[i], 1e-300))
    return float(taus[i - 1] + (-1 - c0) * (taus[i] - taus[i - 1]) / (c1 - c0))
