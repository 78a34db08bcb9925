"""Dephasing under power-law frequency noise: CPMG filter functions, coherence integrals and fits.

Conventions
-----------
``S(w) = a / |w|**alpha`` is the double-sided PSD of angular-frequency
fluctuations, and the coherence after a sequence with filter ``F(w, N, tau)``
is ``C = exp(-2 * int_{w_min}^{w_max} S(w) F(w) dw)``. The matching
autocovariance of the frequency noise is ``R(t) = 2 int S(w) cos(w t) dw``
(see :mod:`csfq.noise_mc`).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import curve_fit

from csfq.errors import Degenerate, IllConditioned, QuadratureFailure

DEFAULT_OMEGA_MIN = 2 * np.pi * 1.0
DEFAULT_OMEGA_MAX = 2 * np.pi * 1e9

# half-width (in X = w tau) of the window around the main filter peak used for the moments
MOMENT_HALF_WINDOW = 8 * np.pi
# 2 * I with I the main-peak filter integral; enters the closed-form decay rate
TWO_I = 2.48

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class PowerLawPSD:
    """``S(w) = a / |w|**alpha`` on ``[omega_min, omega_max]`` (rad/s), zero outside."""

    a: float
    alpha: float
    omega_min: float = DEFAULT_OMEGA_MIN
    omega_max: float = DEFAULT_OMEGA_MAX

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("a must be >= 0")
        if not 0 <= self.alpha < 2:
            raise ValueError("alpha must lie in [0, 2)")
        if not 0 < self.omega_min < self.omega_max:
            raise ValueError("need 0 < omega_min < omega_max")

    def __call__(self, w):
        w = np.abs(np.asarray(w, dtype=float))
        inside = (w >= self.omega_min) & (w <= self.omega_max)
        with np.errstate(divide="ignore"):
            return np.where(inside, self.a * w ** (-self.alpha), 0.0)

    def scaled(self, k):
        """PSD of ``k * x`` for noise ``x`` with this PSD."""
        return PowerLawPSD(self.a * k * k, self.alpha, self.omega_min, self.omega_max)


def _filter_ratio(x, n):
    # the ratio of the two trigonometric factors of the closed form, written as a
    # finite trigonometric sum so it has no removable poles
    th = x / (2 * n)
    if n % 2:
        m = np.arange(1, (n - 1) // 2 + 1)
        s = 1 + 2 * np.sum(((-1.0) ** m)[:, None] * np.cos(2 * np.outer(m, th)), axis=0)
        return (-1) ** ((n - 1) // 2) * s
    m = np.arange(1, n // 2 + 1)
    return 2 * np.sum(((-1.0) ** (n // 2 - m))[:, None] * np.sin(np.outer(2 * m - 1, th)), axis=0)


def filter_function(x, n, tau=1.0):
    """CPMG filter ``F`` (s^2) at ``x = w * tau`` for ``n`` ideal pi pulses at ``(k - 1/2) tau / n``.

    Equals ``tau**2 * 8 sin^4(x/4n) / x^2 * R^2`` with ``R`` the odd/even-``n``
    ratio ``cos(x/2)/cos(x/2n)`` or ``sin(x/2)/cos(x/2n)``; evaluated through a
    trigonometric sum so that ``x -> 0`` and the zeros of ``cos(x/2n)`` are exact.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if tau <= 0:
        raise ValueError("tau must be positive")
    x = np.asarray(x, dtype=float)
    xf = np.atleast_1d(x).ravel()
    u = xf / (4 * n)
    f = 8 * xf**2 / (4 * n) ** 4 * np.sinc(u / np.pi) ** 4 * _filter_ratio(xf, n) ** 2
    f = tau**2 * f
    return f.reshape(x.shape) if x.ndim else float(f[0])


def filter_function_direct(x, n, tau=1.0):
    """Filter from the sign-function Fourier integral ``0.5 |int_0^tau zeta e^{i w t} dt|^2``.

    Independent of :func:`filter_function`; the integral is done piecewise in closed form.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tk = (np.arange(1, n + 1) - 0.5) / n
    s = ((-1) ** n * np.exp(1j * x) - 1
         + 2 * np.sum(((-1.0) ** np.arange(n))[:, None] * np.exp(1j * np.outer(tk, x)), axis=0))
    return tau**2 * 0.5 * np.abs(s / x) ** 2


def _panel_integral(g, a, b, width):
    """Composite Gauss-Legendre integral of vectorized ``g`` over ``[a, b]`` with panels <= width."""
    if b <= a:
        return 0.0
    k = max(1, int(np.ceil((b - a) / width)))
    edges = np.linspace(a, b, k + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    vals = g(pts).reshape(k, -1)
    return float(np.sum(half * (vals @ _GL_W)))


def _adaptive_integral(g, a, b, width):
    """Panel quadrature refined until two resolutions agree (raises QuadratureFailure otherwise)."""
    coarse = _panel_integral(g, a, b, width)
    fine = _panel_integral(g, a, b, width / 2)
    if not np.isfinite(fine) or abs(fine - coarse) > 1e-8 * abs(fine) + 1e-300:
        raise QuadratureFailure(f"panel quadrature unconverged on [{a:.3g}, {b:.3g}]")
    return fine


@lru_cache(maxsize=256)
def filter_moments(n, tau=1.0):
    """Main-peak filter integral and centroid.

    Returns
    -------
    i_val : float
        ``int F dX / tau^2`` over the window ``N pi +- 8 pi`` (clipped at 0).
    x_star : float
        First moment ``int X F dX / int F dX`` over the same window.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = max(0.0, n * np.pi - MOMENT_HALF_WINDOW), n * np.pi + MOMENT_HALF_WINDOW
    i0 = _adaptive_integral(lambda x: filter_function(x, n), a, b, np.pi / 4)
    i1 = _adaptive_integral(lambda x: x * filter_function(x, n), a, b, np.pi / 4)
    return i0, i1 / i0


def coherence_exponent(psd: PowerLawPSD, n, tau):
    """``2 int S(w) F(w, n, tau) dw`` over the PSD band."""
    if tau <= 0:
        return 0.0
    if psd.a == 0:
        return 0.0
    x_lo, x_hi = psd.omega_min * tau, psd.omega_max * tau
    # the filter is periodic in X with period 4 pi n up to the 1/X^2 envelope; beyond
    # x_cut its period average (2n + 1) / X^2 is integrated analytically
    x_cut = min(x_hi, max(40 * np.pi * n, 200 * np.pi))

    def g(x):
        return psd.a * (x / tau) ** (-psd.alpha) * filter_function(x, n)

    total = 0.0
    # geometric panels cover the low-frequency region where S varies fastest
    lo_edge = min(x_cut, np.pi / 2)
    if x_lo < lo_edge:
        edges = np.geomspace(x_lo, lo_edge, max(2, int(np.log10(lo_edge / x_lo) * 4) + 2))
        for e0, e1 in zip(edges[:-1], edges[1:]):
            total += _panel_integral(g, e0, e1, e1 - e0)
    total += _adaptive_integral(g, max(x_lo, lo_edge), x_cut, np.pi / 2)
    if x_hi > x_cut:
        p = psd.alpha + 1
        total += psd.a * tau**psd.alpha * (2 * n + 1) / p * (x_cut ** -p - x_hi ** -p)
    # F(w) = tau^2 f(w tau) and dw = dX / tau
    exponent = 2 * total * tau
    if not np.isfinite(exponent):
        raise QuadratureFailure("coherence exponent is not finite")
    return exponent


def coherence_numeric(psd: PowerLawPSD, n, tau):
    """Coherence ``exp(-2 int S F dw)`` by quadrature over the PSD band."""
    tau = np.asarray(tau, dtype=float)
    if tau.ndim:
        return np.array([coherence_numeric(psd, n, t) for t in tau])
    return float(np.exp(-coherence_exponent(psd, n, float(tau))))


def coherence_approx(psd: PowerLawPSD, n, tau):
    """Peak approximation ``exp(-2 tau I S(X*/tau))`` using :func:`filter_moments`."""
    i_val, x_star = filter_moments(int(n))
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(tau > 0, 2 * tau * i_val * psd(x_star / np.where(tau > 0, tau, 1.0)), 0.0)
    c = np.exp(-expo)
    return c if c.ndim else float(c)


def gamma_n(a, alpha, n):
    """Closed-form CPMG decay rate (1/s) for ``exp[-(Gamma_N tau)^(1+alpha)]``."""
    if a <= 0:
        raise ValueError("a must be positive")
    n = np.asarray(n, dtype=float)
    return (TWO_I * a) ** (1 / (alpha + 1)) * (np.pi * n) ** (-alpha / (alpha + 1))


def decay_time(a, alpha, n):
    return 1 / gamma_n(a, alpha, n)


@dataclass
class RateSet:
    n_pulses: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.n_pulses = np.asarray(self.n_pulses, dtype=int)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.n_pulses.shape != self.gamma.shape:
            raise ValueError("n_pulses and gamma differ in length")
        if np.any(self.n_pulses < 1) or np.any(self.gamma <= 0):
            raise ValueError("need n_pulses >= 1 and gamma > 0")


def fit_powerlaw_psd(rates: RateSet):
    """Recover ``(a, alpha)`` from CPMG decay rates by a log-log line fit.

    ``log Gamma = c - alpha/(alpha+1) log(pi N)`` gives alpha from the slope
    and ``a`` from the intercept.
    """
    n = np.asarray(rates.n_pulses, dtype=float)
    if len(np.unique(n)) < 2:
        raise Degenerate("need at least two distinct pulse numbers")
    x = np.log(np.pi * n)
    y = np.log(rates.gamma)
    slope, intercept = np.polyfit(x, y, 1)
    if slope <= -1:
        raise Degenerate(f"slope {slope:.3g} is outside the power-law domain")
    alpha = -slope / (1 + slope)
    a = np.exp(intercept * (alpha + 1)) / TWO_I
    return float(a), float(alpha)


@dataclass
class DecayFit:
    rate: float
    goodness: float
    amplitude: float
    offset: float
    model: str


def _decay_models(alpha=None):
    return {
        "exponential": lambda t, g, a, b: a * np.exp(-np.abs(g) * t) + b,
        "gaussian": lambda t, g, a, b: a * np.exp(-((g * t) ** 2)) + b,
        "stretched": lambda t, g, a, b: a * np.exp(-(np.abs(g) * t) ** (1 + alpha)) + b,
    }


def fit_decay(times, coherence, model="exponential", alpha=None, t1=None, shape="gaussian"):
    """Least-squares decay fit with free amplitude and offset.

    Parameters
    ----------
    model : {'exponential', 'gaussian', 'stretched', 'exponential_with_t1'}
        ``stretched`` needs ``alpha`` (exponent ``1 + alpha``).
        ``exponential_with_t1`` divides out ``exp(-t / 2 t1)`` and then fits
        ``shape`` to the remaining pure-dephasing factor.

    Returns
    -------
    DecayFit
        ``rate`` in 1/s, ``goodness`` the coefficient of determination.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(coherence, dtype=float)
    if t.size < 5:
        raise ValueError("need at least 5 points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if model == "exponential_with_t1":
        if t1 is None or t1 <= 0:
            raise ValueError("exponential_with_t1 needs a positive t1")
        c = c / np.exp(-t / (2 * t1))
        model = shape
    if model == "stretched" and alpha is None:
        raise ValueError("stretched model needs alpha")
    models = _decay_models(alpha)
    if model not in models:
        raise ValueError(f"unknown decay model {model!r}")
    if np.ptp(c) <= 1e-9 * max(1.0, np.max(np.abs(c))):
        raise IllConditioned("trace is constant: rate is 0 and the decay shape is undetermined")
    f = models[model]
    span = t[-1] - t[0] if t[-1] > t[0] else 1.0
    amp0 = c[0] - c[-1]
    # start from the time where the trace has fallen to 1/e of its initial excess
    target = c[-1] + amp0 / np.e
    idx = np.argmin(np.abs(c - target))
    g0 = 1 / max(t[idx], span / t.size)
    tn = t / span
    try:
        popt, _ = curve_fit(f, tn, c, p0=[g0 * span, amp0, c[-1]], maxfev=20000)
    except RuntimeError as exc:
        raise IllConditioned(str(exc)) from None
    resid = c - f(tn, *popt)
    ss = np.sum((c - c.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss
    return DecayFit(abs(popt[0]) / span, float(r2), float(popt[1]), float(popt[2]), model)
