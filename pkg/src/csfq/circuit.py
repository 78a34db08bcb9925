"""Three-junction, three-pad flux circuit: Hamiltonian, spectrum and derived quantities.

The circuit has ground (node 0) and three pads (nodes 1-3). The coordinates are
the junction phases ``g21 = phi2 - phi1``, ``g31 = phi3 - phi1`` and the branch
phase ``g01`` of pad 1 to ground. The potential does not depend on ``g01``, so
its conjugate charge is conserved and only shifts the offset charges of the two
remaining degrees of freedom. The Hamiltonian is therefore diagonalized exactly
in a 2D periodic charge basis ``|n1, n2>`` with ``n1, n2 in [-ncut, ncut]``.

All frequencies are angular (rad/s); energies are reported as ``E / hbar``.
"""

from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.constants import e, h, hbar

from csfq._util import pmap
from csfq.errors import ConvergenceFailure, DegenerateResonance, NonPositiveDefinite

PHI0 = h / (2 * e)
"""Flux quantum (Wb)."""
RPHI0 = PHI0 / (2 * np.pi)
"""Reduced flux quantum (Wb)."""

fF = 1e-15
UM2 = 1e-12

# node-to-branch map for (g21, g31, g01)
D_MATRIX = np.array([[0, -1, 0], [0, 0, -1], [-1, -1, -1]])

DEFAULT_NCUT = 12
CONVERGENCE_TOL = 2 * np.pi * 1e3
FLUX_STEP_1 = 1e-4
FLUX_STEP_2 = 1e-3


@dataclass(frozen=True)
class CapacitanceSet:
    """Geometric capacitances (F). ``c21`` is the pad 1-2 capacitance, etc.

    ``*b`` entries couple the pads to the resonator electrode, ``*d`` to the
    drive electrode and ``*g`` to trapped charges.
    """

    c13: float
    c21: float
    c32: float
    c01: float
    c02: float
    c03: float
    c1b: float = 0.0
    c2b: float = 0.0
    c3b: float = 0.0
    c1d: float = 0.0
    c2d: float = 0.0
    c3d: float = 0.0
    c1g: float = 0.0
    c2g: float = 0.0
    c3g: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"capacitance {f.name} must be finite and >= 0, got {v!r}")

    @property
    def c12(self):
        return self.c21

    @property
    def c23(self):
        return self.c32

    @property
    def gate_b(self):
        return np.array([self.c1b, self.c2b, self.c3b])

    @property
    def gate_d(self):
        return np.array([self.c1d, self.c2d, self.c3d])

    @property
    def gate_g(self):
        return np.array([self.c1g, self.c2g, self.c3g])

    def scaled(self, factor, names=None):
        """Copy with the named entries (default: all) multiplied by ``factor``."""
        names = [f.name for f in fields(self)] if names is None else names
        return replace(self, **{n: getattr(self, n) * factor for n in names})


def table_s1_capacitances():
    """Capacitances of the fabricated device from finite-element simulation."""
    return CapacitanceSet(
        c13=17.91 * fF, c21=18.13 * fF, c32=10.56 * fF,
        c01=62.9 * fF, c02=30.4 * fF, c03=32.9 * fF,
        c1b=2.60 * fF, c2b=2.61 * fF, c3b=0.21 * fF,
        c1d=0.15 * fF, c2d=0.02 * fF, c3d=0.11 * fF,
    )


@dataclass(frozen=True)
class CMatrix:
    m: np.ndarray
    d: np.ndarray = field(default_factory=lambda: D_MATRIX.copy())

    @property
    def inverse(self):
        return np.linalg.inv(self.m)

    @property
    def reduced_inverse(self):
        """Inverse-capacitance block of the two periodic coordinates (1/F)."""
        return self.inverse[:2, :2]


def build_capacitance_matrix(caps: CapacitanceSet) -> CMatrix:
    """Assemble the 3x3 capacitance matrix in the (g21, g31, g01) coordinates."""
    gb, gd, gg = caps.gate_b, caps.gate_d, caps.gate_g
    s2 = caps.c02 + gb[1] + gd[1] + gg[1]
    s3 = caps.c03 + gb[2] + gd[2] + gg[2]
    s1 = caps.c01 + gb[0] + gd[0] + gg[0]
    m = np.array([
        [caps.c12 + caps.c23 + s2, -caps.c23, s2],
        [-caps.c23, caps.c13 + caps.c23 + s3, s3],
        [s2, s3, s1 + s2 + s3],
    ])
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite("capacitance matrix is not positive definite") from None
    return CMatrix(m=m)


@dataclass(frozen=True)
class CircuitParams:
    """Junction parameters plus geometry.

    ``jc`` in A/m^2, ``area_large`` (area of each of the two large junctions) in
    m^2, ``c_tilde`` (junction capacitance per area) in F/m^2.
    """

    jc: float
    alpha_j: float
    area_large: float
    c_tilde: float
    caps: CapacitanceSet

    def __post_init__(self):
        if not 0 < self.alpha_j <= 1:
            raise ValueError(f"alpha_j must lie in (0, 1], got {self.alpha_j}")
        if self.jc <= 0 or self.area_large <= 0:
            raise ValueError("jc and area_large must be positive")
        if self.c_tilde < 0:
            raise ValueError("c_tilde must be >= 0")

    @property
    def ic(self):
        """Critical current of a large junction (A)."""
        return self.jc * self.area_large

    @property
    def ej(self):
        """Josephson energy of a large junction as an angular frequency (rad/s)."""
        return RPHI0 * self.ic / hbar

    def with_junctions(self, jc=None, alpha_j=None):
        return replace(self, jc=self.jc if jc is None else jc,
                       alpha_j=self.alpha_j if alpha_j is None else alpha_j)


# Junction area is not published; it is calibrated so that the symmetry-point
# spectrum matches the measured omega01, omega12, omega02 with jc and alpha_j
# fixed at their fitted values (see calibrate_junction_area).
PAPER_JC = 3.96e-6 / UM2
PAPER_ALPHA_J = 0.61
PAPER_AREA_LARGE = 0.04237525 * UM2
PAPER_C_TILDE = 50 * fF / UM2


def paper_device():
    return CircuitParams(jc=PAPER_JC, alpha_j=PAPER_ALPHA_J, area_large=PAPER_AREA_LARGE,
                         c_tilde=PAPER_C_TILDE, caps=table_s1_capacitances())


@dataclass(frozen=True)
class BiasPoint:
    """Flux in units of the flux quantum, offset charges in units of 2e."""

    flux: float = 0.5
    n_g: Tuple[float, float] = (0.0, 0.0)
    v_b: float = 0.0
    v_d: float = 0.0

    def with_flux(self, flux):
        return replace(self, flux=flux)

    def with_charge(self, n_g):
        return replace(self, n_g=(float(n_g[0]), float(n_g[1])))


@dataclass
class Spectrum:
    """Lowest eigenenergies (rad/s, ascending) at one bias point."""

    energies: np.ndarray
    bias: BiasPoint
    vectors: Optional[np.ndarray] = None

    @property
    def n_levels(self):
        return len(self.energies)


@dataclass(frozen=True)
class CavityParams:
    """Readout resonator.

    Either give ``chi`` directly (rad/s), or leave it ``None`` and the shift is
    computed from the ``c*b`` gate capacitances with zero-point voltage
    ``sqrt(hbar omega_r / 2 c_r)``. ``c_r`` defaults to that of a half-wave
    line of impedance ``z0``.
    """

    omega_r: float
    q_factor: float
    chi: Optional[float] = None
    c_r: Optional[float] = None
    z0: float = 50.0

    def __post_init__(self):
        if self.omega_r <= 0 or self.q_factor <= 0:
            raise ValueError("omega_r and q_factor must be positive")

    @property
    def kappa(self):
        return self.omega_r / self.q_factor

    @property
    def resonator_capacitance(self):
        return self.c_r if self.c_r is not None else np.pi / (2 * self.omega_r * self.z0)


@lru_cache(maxsize=16)
def _charge_grid(ncut):
    size = 2 * ncut + 1
    n = np.arange(-ncut, ncut + 1, dtype=float)
    n1, n2 = (a.ravel() for a in np.meshgrid(n, n, indexing="ij"))
    idx = np.arange(size * size).reshape(size, size)
    # (row, col) pairs of the raising operators exp(i g21), exp(i g31), exp(i (g21 - g31))
    hop1 = (idx[1:, :].ravel(), idx[:-1, :].ravel())
    hop2 = (idx[:, 1:].ravel(), idx[:, :-1].ravel())
    hop12 = (idx[1:, :-1].ravel(), idx[:-1, 1:].ravel())
    return n1, n2, hop1, hop2, hop12


def offset_charges(cmat: CMatrix, caps: CapacitanceSet, bias: BiasPoint):
    """Effective offset charges (units of 2e) of the two periodic coordinates."""
    q = D_MATRIX @ (bias.v_b * caps.gate_b + bias.v_d * caps.gate_d)
    return np.asarray(bias.n_g, dtype=float) + q[:2] / (2 * e)


def hamiltonian(params: CircuitParams, bias: BiasPoint, ncut=DEFAULT_NCUT, cmat=None):
    """Dense Hamiltonian (rad/s) in the truncated charge basis."""
    cmat = build_capacitance_matrix(params.caps) if cmat is None else cmat
    k = cmat.reduced_inverse
    ng = offset_charges(cmat, params.caps, bias)
    n1, n2, hop1, hop2, hop12 = _charge_grid(ncut)
    q1, q2 = n1 - ng[0], n2 - ng[1]
    kinetic = (2 * e) ** 2 / (2 * hbar) * (k[0, 0] * q1**2 + 2 * k[0, 1] * q1 * q2 + k[1, 1] * q2**2)
    dim = n1.size
    phase = np.exp(2j * np.pi * bias.flux)
    # at integer and half-integer flux the matrix is real; the real solver is much faster
    if abs(phase.imag) < 1e-12:
        phase = np.round(phase.real)
    ham = np.zeros((dim, dim), dtype=complex if np.iscomplexobj(phase) else float)
    ham[np.diag_indices(dim)] = kinetic
    ej = params.ej
    ham[hop1] = -ej / 2
    ham[hop2] = -ej / 2
    ham[hop12] = -params.alpha_j * ej / 2 * phase
    # fill the Hermitian partner of each hop
    for rows, cols in (hop1, hop2, hop12):
        ham[cols, rows] = np.conj(ham[rows, cols])
    return ham


def diagonalize(params: CircuitParams, bias: BiasPoint = BiasPoint(), n_levels=4,
                basis_size=DEFAULT_NCUT, vectors=False, check_convergence=False,
                tol=CONVERGENCE_TOL) -> Spectrum:
    """Lowest ``n_levels`` eigenenergies at ``bias``.

    ``basis_size`` is the charge cutoff per coordinate. With
    ``check_convergence`` the calculation is repeated at twice the cutoff and
    :class:`ConvergenceFailure` is raised if any transition from the ground
    state moves by more than ``tol`` (rad/s).
    """
    ham = hamiltonian(params, bias, basis_size)
    sel = [0, n_levels - 1]
    if vectors:
        w, v = sla.eigh(ham, subset_by_index=sel)
    else:
        w, v = sla.eigh(ham, subset_by_index=sel, eigvals_only=True), None
    if check_convergence:
        ref = sla.eigh(hamiltonian(params, bias, 2 * basis_size), subset_by_index=sel,
                       eigvals_only=True)
        shift = np.max(np.abs((w - w[0]) - (ref - ref[0])))
        if shift > tol:
            raise ConvergenceFailure(
                f"cutoff {basis_size} not converged: transitions move by "
                f"{shift / 2 / np.pi:.3g} Hz on doubling")
    return Spectrum(energies=w, bias=bias, vectors=v)


def transition(spectrum: Spectrum, j, k, two_photon=False):
    """Angular transition frequency ``(E_k - E_j) / hbar``; halved for two-photon lines."""
    n = spectrum.n_levels
    if not (0 <= j < n and 0 <= k < n):
        raise IndexError(f"levels ({j}, {k}) outside spectrum of {n} levels")
    w = spectrum.energies[k] - spectrum.energies[j]
    return w / 2 if two_photon else w


def transitions_vs_flux(params, fluxes, pairs=((0, 1), (1, 2), (0, 2)), bias=BiasPoint(),
                        basis_size=DEFAULT_NCUT, threads=None):
    """Array ``(len(fluxes), len(pairs))`` of transition frequencies (rad/s)."""
    n_levels = max(max(p) for p in pairs) + 1

    def one(f):
        s = diagonalize(params, bias.with_flux(f), n_levels, basis_size)
        return [transition(s, j, k) for j, k in pairs]

    return np.array(pmap(one, fluxes, threads))


def _omega(params, bias, pair, basis_size):
    s = diagonalize(params, bias, max(pair) + 1, basis_size)
    return transition(s, *pair)


def flux_sensitivity(params: CircuitParams, bias: BiasPoint, pair=(0, 1), order=1, step=None,
                     basis_size=DEFAULT_NCUT):
    """Central finite-difference derivative of ``omega_pair`` w.r.t. flux (per flux quantum).

    ``order=2`` returns the second derivative (rad/s per flux quantum squared).
    """
    if order == 1:
        d = FLUX_STEP_1 if step is None else step
        hi = _omega(params, bias.with_flux(bias.flux + d), pair, basis_size)
        lo = _omega(params, bias.with_flux(bias.flux - d), pair, basis_size)
        return (hi - lo) / (2 * d)
    if order == 2:
        d = FLUX_STEP_2 if step is None else step
        hi = _omega(params, bias.with_flux(bias.flux + d), pair, basis_size)
        mid = _omega(params, bias, pair, basis_size)
        lo = _omega(params, bias.with_flux(bias.flux - d), pair, basis_size)
        return (hi - 2 * mid + lo) / d**2
    raise ValueError("order must be 1 or 2")


def charge_dispersion(params: CircuitParams, bias: BiasPoint, pair=(0, 1), grid=8,
                      basis_size=DEFAULT_NCUT, threads=None, pairs=None):
    """Peak-to-peak modulation (rad/s) of ``omega_pair`` over one period of both offset charges.

    Passing ``pairs`` evaluates several transitions on the same grid and
    returns an array.
    """
    if grid < 2:
        raise ValueError("grid must be >= 2")
    todo = [pair] if pairs is None else list(pairs)
    n_levels = max(max(p) for p in todo) + 1
    base = np.asarray(bias.n_g, dtype=float)
    offsets = [(a, b) for a in np.arange(grid) / grid for b in np.arange(grid) / grid]

    def one(off):
        s = diagonalize(params, bias.with_charge(base + off), n_levels, basis_size)
        return [transition(s, j, k) for j, k in todo]

    w = np.array(pmap(one, offsets, threads))
    spread = w.max(axis=0) - w.min(axis=0)
    return spread if pairs is not None else float(spread[0])


def coupling_vector(cmat: CMatrix, gate):
    """Dimensionless weights of ``n1, n2`` in the charge operator seen by a gate electrode."""
    return (cmat.inverse @ D_MATRIX @ np.asarray(gate, dtype=float))[:2]


def charge_operator(params: CircuitParams, bias: BiasPoint, gate, n_levels, basis_size=DEFAULT_NCUT):
    """Energies and the gate-weighted charge operator in the lowest ``n_levels`` eigenstates."""
    cmat = build_capacitance_matrix(params.caps)
    w = coupling_vector(cmat, gate)
    s = diagonalize(params, bias, n_levels, basis_size, vectors=True)
    n1, n2, *_ = _charge_grid(basis_size)
    op = w[0] * n1 + w[1] * n2
    v = s.vectors
    return s.energies, v.conj().T @ (op[:, None] * v)


def drive_matrix_element(params: CircuitParams, bias: BiasPoint, j, k, basis_size=DEFAULT_NCUT):
    """``|<j| N_drive |k>|`` with ``N_drive`` weighted by the drive gate capacitances."""
    _, op = charge_operator(params, bias, params.caps.gate_d, max(j, k) + 1, basis_size)
    return float(abs(op[j, k]))


def coupled_shift(energies, coupling, omega_r, pair=(0, 1), n_photon=3):
    """Per-photon shift of ``omega_pair`` for levels coupled to one resonator mode.

    ``energies`` are the bare circuit energies (rad/s), ``coupling[j, k]`` the
    matrix elements (rad/s) multiplying ``(a + a^dagger)``. Dressed states are
    labelled by maximum overlap with the bare product states.
    """
    energies = np.asarray(energies, dtype=float)
    nq = len(energies)
    a = np.diag(np.sqrt(np.arange(1, n_photon)), 1)
    ham = (np.kron(np.diag(energies - energies[0]), np.eye(n_photon))
           + np.kron(np.eye(nq), omega_r * a.T @ a)
           + np.kron(np.asarray(coupling)[:nq, :nq], a + a.T))
    w, v = np.linalg.eigh(ham)
    weight = np.abs(v) ** 2

    def level(j, m):
        return w[np.argmax(weight[j * n_photon + m])]

    j, k = pair
    return (level(k, 1) - level(j, 1)) - (level(k, 0) - level(j, 0))


def dispersive_shift(params: CircuitParams, cavity: CavityParams, pair=(0, 1),
                     bias=BiasPoint(), n_levels=8, n_photon=3, guard_band=2 * np.pi * 20e6,
                     basis_size=DEFAULT_NCUT):
    """Shift of ``omega_pair`` per resonator photon (rad/s).

    The circuit levels are coupled to the resonator through the ``c*b`` gate
    capacitances; the shift is read off the exact spectrum of the coupled model.
    """
    if cavity.chi is not None:
        return cavity.chi
    energies, op = charge_operator(params, bias, params.caps.gate_b, n_levels, basis_size)
    levels = np.asarray(energies) - energies[0]
    for j in pair:
        detunings = np.abs(np.abs(levels - levels[j]) - cavity.omega_r)
        detunings[j] = np.inf
        if np.min(detunings) < guard_band:
            raise DegenerateResonance(
                f"a transition from level {j} lies within the guard band of the resonator")
    v_rms = np.sqrt(hbar * cavity.omega_r / (2 * cavity.resonator_capacitance))
    g = 2 * e * v_rms / hbar * op
    return float(coupled_shift(levels, g, cavity.omega_r, pair, n_photon))


def flux_slope(params: CircuitParams, bias: BiasPoint, pair=(0, 1), basis_size=DEFAULT_NCUT):
    """Analytic ``d omega_pair / d flux`` (per flux quantum) from the eigenvectors.

    Only the small-junction hop depends on flux, so the derivative of each
    level is the expectation value of that hop's flux derivative.
    """
    s = diagonalize(params, bias, max(pair) + 1, basis_size, vectors=True)
    _, _, _, _, (rows, cols) = _charge_grid(basis_size)
    amp = -params.alpha_j * params.ej / 2 * 2j * np.pi * np.exp(2j * np.pi * bias.flux)
    v = s.vectors

    def level(k):
        # <v|dH|v> with dH[rows, cols] = amp and its Hermitian partner
        x = np.conj(v[rows, k]) * amp * v[cols, k]
        return 2 * np.sum(x).real

    j, k = pair
    return level(k) - level(j)


def persistent_current(params: CircuitParams, bias=BiasPoint(), offset=0.003, basis_size=DEFAULT_NCUT):
    """Half the flux slope of the 0-1 splitting at ``0.5 + offset`` flux quanta (A)."""
    slope = flux_slope(params, bias.with_flux(0.5 + offset), (0, 1), basis_size)
    return 0.5 * abs(slope) * hbar / PHI0


def calibrate_junction_area(caps: CapacitanceSet, jc, alpha_j,
                            targets=(2 * np.pi * 1.708e9, 2 * np.pi * 5.398e9, 2 * np.pi * 7.107e9),
                            bounds=(0.02 * UM2, 0.08 * UM2), c_tilde=PAPER_C_TILDE):
    """Large-junction area minimizing the relative error of (omega01, omega12, omega02)."""
    from scipy.optimize import minimize_scalar

    targets = np.asarray(targets)

    def cost(area_um2):
        p = CircuitParams(jc, alpha_j, area_um2 * UM2, c_tilde, caps)
        s = diagonalize(p, BiasPoint(0.5), 3)
        w = np.array([transition(s, 0, 1), transition(s, 1, 2), transition(s, 0, 2)])
        return float(np.sum((w / targets - 1) ** 2))

    res = minimize_scalar(cost, bounds=(bounds[0] / UM2, bounds[1] / UM2), method="bounded",
                          options={"xatol": 1e-9})
    return res.x * UM2
