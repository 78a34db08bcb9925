"""Design-space search over the six geometric parameters of the three-pad circuit.

Parametrization (capacitances in F, areas in m^2)::

    C23      = l1 + l2 * c_tilde              shunt plus small-junction capacitance
    C12, C13 = l1 * l4 + l2 * c_tilde / l3    pad-1 coupling plus large-junction capacitance
    C01      = l1 * l5
    C02, C03 = l1 * l6
    I_c      = jc * l2 / l3,  alpha_j = l3

``l2`` is the area of the small junction; the two large junctions have area ``l2 / l3``.
"""

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from scipy.optimize import minimize

from csfq._util import pmap
from csfq.circuit import (UM2, BiasPoint, CapacitanceSet, CircuitParams, charge_dispersion, diagonalize,
                          fF, persistent_current, table_s1_capacitances, transition)
from csfq.errors import NoFeasiblePoint

NAMES = ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6")
METRIC_NAMES = ("omega01", "anharmonicity", "persistent_current",
                "charge_modulation_01", "charge_modulation_12", "charge_modulation_02")
CHARGE_METRICS = METRIC_NAMES[3:]
PENALTY = 1e6
COARSE_NCUT = 10
FULL_NCUT = 12


@dataclass(frozen=True)
class DesignVector:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    lambda5: float
    lambda6: float

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0 or self.lambda6 <= 0:
            raise ValueError("lambda1, lambda2 and lambda6 must be positive")
        if self.lambda4 < 0 or self.lambda5 < 0:
            raise ValueError("lambda4 and lambda5 must be >= 0")
        if not 0 < self.lambda3 <= 1:
            raise ValueError("lambda3 must lie in (0, 1]")

    def as_array(self):
        return np.array([getattr(self, n) for n in NAMES])

    @classmethod
    def from_array(cls, x):
        return cls(*map(float, x))


def _gates(caps: Optional[CapacitanceSet], two_pad=False):
    caps = table_s1_capacitances() if caps is None else caps
    g = dict(c1b=caps.c1b, c2b=caps.c2b, c3b=caps.c3b, c1d=caps.c1d, c2d=caps.c2d, c3d=caps.c3d)
    if two_pad:
        g.update(c1b=0.0, c1d=0.0)
    return g


def to_circuit(lv: DesignVector, jc, c_tilde, gates: Optional[CapacitanceSet] = None) -> CircuitParams:
    """Map a design vector to circuit parameters; gate capacitances come from ``gates``."""
    two_pad = lv.lambda4 == 0 and lv.lambda5 == 0
    cj_small = lv.lambda2 * c_tilde
    c_side = lv.lambda1 * lv.lambda4 + cj_small / lv.lambda3
    caps = CapacitanceSet(c13=c_side, c21=c_side, c32=lv.lambda1 + cj_small,
                          c01=lv.lambda1 * lv.lambda5, c02=lv.lambda1 * lv.lambda6,
                          c03=lv.lambda1 * lv.lambda6, **_gates(gates, two_pad))
    return CircuitParams(jc=jc, alpha_j=lv.lambda3, area_large=lv.lambda2 / lv.lambda3, c_tilde=c_tilde,
                         caps=caps)


def from_circuit(params: CircuitParams) -> DesignVector:
    """Invert the parametrization; pad-2/3 pairs are averaged (exact for symmetric devices)."""
    c = params.caps
    l3 = params.alpha_j
    l2 = params.area_large * l3
    cj = l2 * params.c_tilde
    l1 = c.c23 - cj
    side = 0.5 * (c.c12 + c.c13)
    return DesignVector(l1, l2, l3, (side - cj / l3) / l1, c.c01 / l1, 0.5 * (c.c02 + c.c03) / l1)


@dataclass
class DesignMetrics:
    omega01: float
    anharmonicity: float
    persistent_current: float
    charge_modulation_01: float
    charge_modulation_12: float
    charge_modulation_02: float

    def as_dict(self):
        return asdict(self)

    @property
    def charge_modulation(self):
        return max(self.charge_modulation_01, self.charge_modulation_12, self.charge_modulation_02)


def circuit_metrics(params: CircuitParams, basis_size=FULL_NCUT, charge_grid=8, threads=None) -> DesignMetrics:
    """Metric bundle at the symmetry point.

    ``charge_grid`` is the number of offset-charge samples per island for the
    full 2D sweep; ``charge_grid='corners'`` samples only ``{0, 1/2}^2``.
    """
    s = diagonalize(params, BiasPoint(0.5), 3, basis_size)
    w01, w12 = transition(s, 0, 1), transition(s, 1, 2)
    ip = persistent_current(params, basis_size=basis_size)
    pairs = [(0, 1), (1, 2), (0, 2)]
    if charge_grid == "corners":
        spectra = [s] + [diagonalize(params, BiasPoint(0.5, nc), 3, basis_size)
                         for nc in ((0.5, 0.0), (0.0, 0.5), (0.5, 0.5))]
        w = np.array([[transition(sp, *p) for p in pairs] for sp in spectra])
        cm = w.max(axis=0) - w.min(axis=0)
    else:
        cm = charge_dispersion(params, BiasPoint(0.5), grid=charge_grid, basis_size=basis_size,
                               threads=threads, pairs=pairs)
    return DesignMetrics(w01, w12 - w01, ip, *map(float, cm))


def metrics(lv: DesignVector, jc, c_tilde, basis_size=FULL_NCUT, charge_grid=8, gates=None, threads=None):
    return circuit_metrics(to_circuit(lv, jc, c_tilde, gates), basis_size, charge_grid, threads)


@dataclass
class DesignTargets:
    """Per-metric target values, weights and optional upper bounds (SI units, rad/s for frequencies)."""

    values: Dict[str, float]
    weights: Dict[str, float] = field(default_factory=dict)
    upper_bounds: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for k in list(self.values) + list(self.weights) + list(self.upper_bounds):
            if k not in METRIC_NAMES:
                raise ValueError(f"unknown metric {k!r}")
        w = {k: self.weights.get(k, 1.0) for k in self.values}
        if any(v < 0 for v in w.values()) or not any(v > 0 for v in w.values()):
            raise ValueError("weights must be >= 0 with at least one positive")
        self.weights = w

    def violation(self, m: DesignMetrics):
        """Sum of squared relative excesses over the hard bounds (0 when feasible)."""
        d = m.as_dict()
        return float(sum(max(0.0, d[k] / b - 1) ** 2 for k, b in self.upper_bounds.items()))

    def objective(self, m: DesignMetrics):
        d = m.as_dict()
        err = sum(w * ((d[k] - self.values[k]) / self.values[k]) ** 2 for k, w in self.weights.items())
        return float(err + PENALTY * self.violation(m))


def paper_targets(jc=None, c_tilde=None, charge_bound=2 * np.pi * 1e3):
    """Frequency and anharmonicity of the measured device, its modeled persistent current,
    and an upper bound on all three charge modulations."""
    from csfq.circuit import PAPER_C_TILDE, PAPER_JC, paper_device

    dev = paper_device()
    ip = persistent_current(dev)
    bounds = {k: charge_bound for k in CHARGE_METRICS}
    return DesignTargets({"omega01": 2 * np.pi * 1.708e9, "anharmonicity": 2 * np.pi * 3.69e9,
                          "persistent_current": ip}, {}, bounds)


# bounds in the optimizer's units: fF, um^2, and dimensionless ratios
DEFAULT_BOUNDS = {"lambda1": (1.0, 100.0), "lambda2": (0.005, 0.2), "lambda3": (0.3, 1.0),
                  "lambda4": (0.1, 10.0), "lambda5": (0.5, 30.0), "lambda6": (0.5, 30.0)}
_SCALE = np.array([fF, UM2, 1, 1, 1, 1])


@dataclass
class Candidate:
    best: DesignVector
    metrics: DesignMetrics
    objective: float


@dataclass
class OptimizationResult:
    """``target_match`` is filled only when no feasible point exists: the best
    candidate of a second search that ignores the hard bounds, showing what
    meeting the targets costs in the bounded metrics."""

    best: DesignVector
    metrics: DesignMetrics
    objective: float
    feasible: bool
    trace: List[dict]
    mode: str
    target_match: Optional[Candidate] = None


def optimize(targets: DesignTargets, bounds=None, mode="three_pad", seed=0, jc=None, c_tilde=None,
             restarts=8, max_iter=400, coarse_ncut=COARSE_NCUT, full_ncut=FULL_NCUT, threads=None,
             start=None, tolerance=0.05):
    """Weighted relative-error minimization with seeded Nelder-Mead restarts.

    The search runs in log coordinates with a coarse charge cutoff and
    corner-sampled charge modulation; the winner is re-evaluated at full
    cutoff on the full offset-charge grid. ``two_pad`` fixes ``lambda4 =
    lambda5 = 0`` (pad 1 reduced to the junction node). ``start`` replaces the
    first random start with a given vector.

    A point is feasible when it satisfies every upper bound and every
    targeted metric lies within ``tolerance`` (relative) of its target.

    Returns
    -------
    OptimizationResult
        ``feasible`` is False, with a :class:`NoFeasiblePoint` warning, when the
        verified best point misses a bound or a target; ``target_match`` then
        holds the best point found without the bounds.
    """
    from csfq.circuit import PAPER_C_TILDE, PAPER_JC

    jc = PAPER_JC if jc is None else jc
    c_tilde = PAPER_C_TILDE if c_tilde is None else c_tilde
    if mode not in ("three_pad", "two_pad"):
        raise ValueError(f"unknown mode {mode!r}")
    bnds = dict(DEFAULT_BOUNDS, **(bounds or {}))
    free = [i for i, n in enumerate(NAMES) if not (mode == "two_pad" and n in ("lambda4", "lambda5"))]
    lo = np.log(np.array([bnds[NAMES[i]][0] for i in free]))
    hi = np.log(np.array([bnds[NAMES[i]][1] for i in free]))
    if np.any(lo >= hi):
        raise ValueError("empty bounds")

    def vector(y):
        x = np.zeros(6)
        x[free] = np.exp(np.clip(y, lo, hi))
        return DesignVector.from_array(x * _SCALE)

    def coarse(y, tg=targets):
        try:
            m = metrics(vector(y), jc, c_tilde, coarse_ncut, "corners")
        except (ValueError, np.linalg.LinAlgError):
            return np.inf
        return tg.objective(m)

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0 if mode == "three_pad" else 1]))
    starts = [lo + (hi - lo) * rng.random(len(free)) for _ in range(restarts)]
    if start is not None:
        starts[0] = np.log(start.as_array()[free] / _SCALE[free])

    def search(tg):
        def run(y0):
            f0 = coarse(y0, tg)
            res = minimize(coarse, y0, args=(tg,), method="Nelder-Mead", bounds=list(zip(lo, hi)),
                           options={"maxiter": max_iter, "xatol": 1e-4, "fatol": 1e-10})
            return {"start_objective": f0, "objective": float(res.fun), "x": res.x, "n_iter": int(res.nit)}

        trace = pmap(run, starts, threads)
        for i, t in enumerate(trace):
            t["restart"] = i
        lv = vector(min(trace, key=lambda t: t["objective"])["x"])
        for t in trace:
            t["x"] = vector(t["x"]).as_array()
        return lv, metrics(lv, jc, c_tilde, full_ncut, 8, threads=threads), trace

    lv, final, trace = search(targets)
    gaps = relative_gaps(final, targets)
    feasible = targets.violation(final) == 0 and all(abs(g) <= tolerance for g in gaps.values())
    match = None
    if not feasible:
        warnings.warn(f"{mode}: no point meets both the hard bounds and the targets within "
                      f"{tolerance:.0%}", NoFeasiblePoint)
        free_targets = DesignTargets(dict(targets.values), dict(targets.weights))
        lv_m, final_m, _ = search(free_targets)
        match = Candidate(lv_m, final_m, free_targets.objective(final_m))
    return OptimizationResult(lv, final, targets.objective(final), feasible, trace, mode, match)


def relative_gaps(m: DesignMetrics, targets: DesignTargets):
    d = m.as_dict()
    return {k: d[k] / v - 1 for k, v in targets.values.items()}
