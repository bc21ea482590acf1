"""Quantum mechanics on the channel profile: orbitals, tunnel coupling, exchange.

The single-particle problem is solved on the 1D electron potential energy
U(x) with hard-wall ends.  The two lowest orbitals are rotated into the
maximally localized pair by diagonalizing the position operator restricted
to their span; the off-diagonal element of the rotated Hamiltonian is the
tunnel coupling.  A two-site Hubbard bridge maps tunnel coupling and
detuning to an exchange energy, and a constant-interaction model produces
charge stability maps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as const
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .device import DeviceDescription, GateLayout, check_breakdown
from .electrostatics import (
    PotentialProfile1D,
    SimulationGrid,
    SolverSettings,
    build_grid,
    potential_profile,
    solve_selfconsistent,
)
from .errors import ConfigError, ConvergenceError, MergedDotsError

PLANCK_EV_S = const.physical_constants["Planck constant in eV/Hz"][0]

ORTHO_TOL = 1e-8
HLOC_EIGENVALUE_TOL = 1e-10  # eV


@dataclass(frozen=True)
class EigenSolution:
    """Lowest eigenpairs of the 1D Hamiltonian, energies ascending (eV)."""

    x_nm: np.ndarray
    energies_ev: np.ndarray  # (k,)
    wavefunctions: np.ndarray  # (k, n), unit-normalized w.r.t. the grid measure

    @property
    def dx_nm(self) -> float:
        return float(self.x_nm[1] - self.x_nm[0])


@dataclass(frozen=True)
class LocalizedBasis:
    """Maximally localized left/right pair spanning the two lowest orbitals."""

    x_nm: np.ndarray
    states: np.ndarray  # (2, n): |L>, |R>
    h_loc: np.ndarray  # 2x2 symmetric, eV
    centers_nm: tuple[float, float]  # <x>_L < <x>_R

    @property
    def tunnel_coupling_ev(self) -> float:
        return float(abs(self.h_loc[0, 1]))

    @property
    def tunnel_coupling_hz(self) -> float:
        return self.tunnel_coupling_ev / PLANCK_EV_S


@dataclass(frozen=True)
class TunnelCouplingCurve:
    """Tunnel coupling against swept barrier voltage for one strategy."""

    v_volts: np.ndarray
    tc_hz: np.ndarray  # NaN where a point was flagged
    strategy: str
    flags: tuple[str, ...] = ()  # per point: "ok" or a failure tag

    def valid(self) -> tuple[np.ndarray, np.ndarray]:
        ok = np.isfinite(self.tc_hz)
        return self.v_volts[ok], self.tc_hz[ok]


@dataclass(frozen=True)
class HubbardParams:
    """Two-site Hubbard parameters, all in Hz (energy over Planck constant)."""

    t_hz: float
    u_hz: float
    delta_hz: float = 0.0

    def __post_init__(self):
        if not self.u_hz > 0:
            raise ConfigError("HubbardParams.u_hz must be > 0")
        if abs(self.delta_hz) >= self.u_hz:
            raise ConfigError("HubbardParams requires |delta| < U (perturbative window)")


@dataclass(frozen=True)
class StabilityModel:
    """Constant-interaction double dot: charging energies and lever arms."""

    charging_energies_ev: tuple[float, float]
    mutual_charging_ev: float
    lever_arms: np.ndarray  # (2, 2): alpha[dot, gate] in [0, 1]

    def __post_init__(self):
        object.__setattr__(self, "lever_arms", np.asarray(self.lever_arms, dtype=float))
        if min(self.charging_energies_ev) <= 0:
            raise ConfigError("StabilityModel charging energies must be > 0")
        if not 0 <= self.mutual_charging_ev < min(self.charging_energies_ev):
            raise ConfigError("StabilityModel requires 0 <= E_Cm < min(E_C)")
        if self.lever_arms.shape != (2, 2) or np.any(self.lever_arms < 0) or np.any(self.lever_arms > 1):
            raise ConfigError("StabilityModel.lever_arms must be 2x2 with entries in [0, 1]")


@dataclass(frozen=True)
class StabilityDiagram:
    v1_volts: np.ndarray
    v2_volts: np.ndarray
    occupations: np.ndarray  # (nv1, nv2, 2) ground-state electron counts
    transition_segments: tuple = ()  # ((v1, v2), (v1, v2)) polyline segments


def solve_schrodinger_1d(
    profile: PotentialProfile1D,
    effective_mass_me: float = 0.19,
    k: int = 2,
) -> EigenSolution:
    """Lowest k eigenpairs of -(hbar^2/2m) d2/dx2 + U(x) with hard walls."""
    n = len(profile.x_nm)
    if k < 2:
        raise ConfigError("solve_schrodinger_1d requires k >= 2")
    if k >= n:
        raise ConfigError(f"k = {k} exceeds the {n}-node grid")
    dx = float(profile.x_nm[1] - profile.x_nm[0])
    # hbar^2 / (2 m) in eV nm^2
    kin = const.hbar**2 / (2.0 * effective_mass_me * const.m_e * const.e) * 1e18
    diag = 2.0 * kin / dx**2 + profile.u_ev
    off = np.full(n - 1, -kin / dx**2)
    energies, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    psi = vecs.T / np.sqrt(dx)  # normalize to sum(psi^2) dx = 1
    # deterministic sign: largest-magnitude sample positive
    for row in psi:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    overlaps = (psi * dx) @ psi.T
    if np.max(np.abs(overlaps - np.eye(k))) > ORTHO_TOL:
        raise ConvergenceError("eigensolve produced non-orthonormal states")
    return EigenSolution(x_nm=profile.x_nm.copy(), energies_ev=energies, wavefunctions=psi)


def maximally_localized_basis(eigs: EigenSolution) -> LocalizedBasis:
    """Rotate the two lowest orbitals to diagonalize the position operator.

    The rotated pair is labeled left/right by center; the 2x2 Hamiltonian in
    this basis carries the tunnel coupling as its off-diagonal element.
    """
    if len(eigs.energies_ev) < 2:
        raise ConfigError("localization needs at least two eigenstates")
    if len(eigs.energies_ev) >= 3:
        splitting = eigs.energies_ev[1] - eigs.energies_ev[0]
        gap = eigs.energies_ev[2] - eigs.energies_ev[1]
        if gap < 5.0 * splitting:
            warnings.warn(
                f"third level is only {gap:.3g} eV above the qubit pair "
                f"(splitting {splitting:.3g} eV); two-level reduction is marginal",
                stacklevel=2,
            )
    dx = eigs.dx_nm
    psi = eigs.wavefunctions[:2]
    energies = eigs.energies_ev[:2]
    x_op = (psi * eigs.x_nm * dx) @ psi.T
    x_op = 0.5 * (x_op + x_op.T)
    centers, rot = np.linalg.eigh(x_op)
    separation = abs(centers[1] - centers[0])
    if separation < dx:
        raise MergedDotsError(
            f"localized centers {centers[0]:.2f} and {centers[1]:.2f} nm are closer "
            f"than the grid spacing {dx:.2f} nm (merged dots)"
        )
    states = rot.T @ psi
    # A single well also yields two distinct centers, but they sit within the
    # states' own spread (a harmonic well gives separation / width = 2 exactly;
    # genuine double wells land well above that).
    widths = [
        float(np.sqrt(np.sum(s**2 * (eigs.x_nm - c) ** 2 * dx)))
        for s, c in zip(states, centers)
    ]
    if separation < 2.2 * np.mean(widths):
        raise MergedDotsError(
            f"localized centers {separation:.2f} nm apart are not resolved beyond "
            f"the orbital spread {np.mean(widths):.2f} nm (merged dots)"
        )
    h_loc = rot.T @ np.diag(energies) @ rot
    if centers[0] > centers[1]:  # label by center, left first
        states = states[::-1]
        centers = centers[::-1]
        h_loc = h_loc[::-1, ::-1]
    ev = np.linalg.eigvalsh(h_loc)
    if np.max(np.abs(ev - energies)) > HLOC_EIGENVALUE_TOL:
        raise ConvergenceError("localized 2x2 Hamiltonian does not reproduce the eigenvalues")
    for row in states:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return LocalizedBasis(
        x_nm=eigs.x_nm.copy(), states=states, h_loc=h_loc,
        centers_nm=(float(centers[0]), float(centers[1])),
    )


def pair_window_nm(layout: GateLayout, barrier_gate_id: str) -> tuple[float, float]:
    """x-interval enclosing the double well on either side of a barrier gate.

    Runs from the far flanking barrier (or half a gate width past the outer
    plunger edge at the array ends) so the hard walls of the 1D solve sit on
    high-potential ground.
    """
    barrier = layout.gate(barrier_gate_id)
    if barrier.assigned_role != "barrier":
        raise ConfigError(f"gate {barrier_gate_id!r} has role {barrier.assigned_role!r}, not barrier")
    left = [p for p in layout.plungers if p.center < barrier.center]
    right = [p for p in layout.plungers if p.center > barrier.center]
    if not left or not right:
        raise ConfigError(f"barrier {barrier_gate_id!r} has no plunger on both sides")
    p_left = max(left, key=lambda g: g.center)
    p_right = min(right, key=lambda g: g.center)
    outer_left = [b for b in layout.barriers if b.center < p_left.center]
    outer_right = [b for b in layout.barriers if b.center > p_right.center]
    lo = max(outer_left, key=lambda g: g.center).center if outer_left else p_left.span[0] - 0.5 * p_left.width
    hi = min(outer_right, key=lambda g: g.center).center if outer_right else p_right.span[1] + 0.5 * p_right.width
    return float(lo), float(hi)


def restrict_profile(profile: PotentialProfile1D, window: tuple[float, float], min_nodes: int = 400) -> PotentialProfile1D:
    """Resample the profile on a window with at least min_nodes points."""
    lo, hi = window
    if lo < profile.x_nm[0] or hi > profile.x_nm[-1]:
        raise ConfigError(f"window [{lo}, {hi}] nm exceeds the profile domain")
    inside = np.sum((profile.x_nm >= lo) & (profile.x_nm <= hi))
    n = max(min_nodes, int(inside))
    x = np.linspace(lo, hi, n)
    u = CubicSpline(profile.x_nm, profile.u_ev)(x)
    return PotentialProfile1D(x_nm=x, u_ev=u)


def tunnel_coupling_point(
    grid: SimulationGrid,
    voltages: dict[str, float],
    window: tuple[float, float],
    effective_mass_me: float = 0.19,
    settings: SolverSettings = SolverSettings(),
) -> tuple[float, PotentialProfile1D]:
    """Self-consistent solve then tunnel coupling for one voltage point."""
    point_grid = grid.with_gate_voltages(voltages)
    field, _, _ = solve_selfconsistent(point_grid, settings, effective_mass_me=effective_mass_me)
    profile = potential_profile(field)
    local = restrict_profile(profile, window)
    eigs = solve_schrodinger_1d(local, effective_mass_me, k=3)
    basis = maximally_localized_basis(eigs)
    return basis.tunnel_coupling_hz, profile


def tunnel_coupling_sweep(
    device: DeviceDescription,
    strategy: str,
    barrier_gate_id: str | None,
    v_values,
    nx: int = 320,
    nz: int = 120,
    settings: SolverSettings = SolverSettings(),
    effective_mass_me: float = 0.19,
    base_voltages: dict[str, float] | None = None,
) -> TunnelCouplingCurve:
    """Tunnel coupling vs additional voltage on one barrier gate.

    Each point runs the full chain: self-consistent electrostatics, channel
    profile, eigensolve on the double-well window, localization.  Points
    where the dots merge (or a solver fails) are flagged, not fatal.
    """
    v_values = np.asarray(v_values, dtype=float)
    if len(v_values) > 1 and not np.all(np.diff(v_values) > 0):
        raise ConfigError("v_values must be strictly increasing")
    layout = device.layout(strategy)
    if barrier_gate_id is None:
        barrier_gate_id = middle_barrier(layout).gate_id
    window = pair_window_nm(layout, barrier_gate_id)
    base = dict(base_voltages or device.voltages)
    grid = build_grid(device, nx=nx, nz=nz)

    tc = np.full(len(v_values), np.nan)
    flags = []
    for i, dv in enumerate(v_values):
        voltages = dict(base)
        voltages[barrier_gate_id] = voltages.get(barrier_gate_id, 0.0) + dv
        check_breakdown(voltages, device.breakdown_limit_v)
        try:
            tc[i], _ = tunnel_coupling_point(grid, voltages, window, effective_mass_me, settings)
            flags.append("ok")
        except MergedDotsError:
            flags.append("merged_dots")
        except ConvergenceError as exc:
            flags.append(f"no_convergence: {exc}")
    return TunnelCouplingCurve(v_volts=v_values, tc_hz=tc, strategy=strategy, flags=tuple(flags))


def middle_barrier(layout: GateLayout):
    """Barrier gate between the central pair of dots."""
    dots = layout.qubit_names
    mid = (len(dots) - 1) // 2
    return layout.barrier_between(dots[mid], dots[mid + 1])


def exchange_from_hubbard(params: HubbardParams) -> float:
    """Two-site Hubbard exchange J = 4 t^2 U / (U^2 - Delta^2), in Hz.

    Even in the detuning, so its first derivative vanishes at the symmetric
    point Delta = 0.
    """
    t, u, d = params.t_hz, params.u_hz, params.delta_hz
    return 4.0 * t**2 * u / (u**2 - d**2)


def stability_diagram(
    model: StabilityModel,
    v1_volts,
    v2_volts,
    max_electrons: int = 4,
) -> StabilityDiagram:
    """Ground-state occupation map of the constant-interaction double dot.

    E(n1, n2) = sum_i E_C,i n_i^2 / 2 + E_Cm n1 n2 - sum_ij n_i alpha_ij V_j,
    minimized over 0 <= n_i <= max_electrons; ties break toward the
    lexicographically smallest (n1, n2).
    """
    if max_electrons < 1:
        raise ConfigError("max_electrons must be >= 1")
    v1 = np.asarray(v1_volts, dtype=float)
    v2 = np.asarray(v2_volts, dtype=float)
    e1, e2 = model.charging_energies_ev
    em = model.mutual_charging_ev
    a = model.lever_arms
    counts = np.arange(max_electrons + 1)
    n1g, n2g = np.meshgrid(counts, counts, indexing="ij")
    n1f, n2f = n1g.ravel(), n2g.ravel()  # lexicographic order: n1 major, n2 minor
    static = 0.5 * e1 * n1f**2 + 0.5 * e2 * n2f**2 + em * n1f * n2f
    mu1 = a[0, 0] * v1[:, None] + a[0, 1] * v2[None, :]  # dot-1 shift per electron, eV
    mu2 = a[1, 0] * v1[:, None] + a[1, 1] * v2[None, :]
    energy = static[None, None, :] - np.multiply.outer(mu1, n1f) - np.multiply.outer(mu2, n2f)
    best = np.argmin(energy, axis=2)  # argmin returns the first (lexicographically smallest) tie
    occupations = np.stack([n1f[best], n2f[best]], axis=-1)

    segments = []
    occ_code = occupations[..., 0] * (max_electrons + 1) + occupations[..., 1]
    for i in range(len(v1) - 1):
        for j in range(len(v2)):
            if occ_code[i, j] != occ_code[i + 1, j]:
                vm = 0.5 * (v1[i] + v1[i + 1])
                half = 0.5 * (v2[1] - v2[0]) if len(v2) > 1 else 0.0
                segments.append(((vm, v2[j] - half), (vm, v2[j] + half)))
    for i in range(len(v1)):
        for j in range(len(v2) - 1):
            if occ_code[i, j] != occ_code[i, j + 1]:
                vm = 0.5 * (v2[j] + v2[j + 1])
                half = 0.5 * (v1[1] - v1[0]) if len(v1) > 1 else 0.0
                segments.append(((v1[i] - half, vm), (v1[i] + half, vm)))
    return StabilityDiagram(v1_volts=v1, v2_volts=v2, occupations=occupations,
                            transition_segments=tuple(segments))


def slope_dec_per_volt(curve: TunnelCouplingCurve, window: tuple[float, float] | None = None) -> float:
    """Least-squares slope of log10(t_c) against voltage, in decades per volt."""
    v, tc = curve.valid()
    if window is not None:
        keep = (v >= window[0]) & (v <= window[1])
        v, tc = v[keep], tc[keep]
    if len(v) < 3:
        raise ConfigError(f"slope fit needs at least 3 valid points, have {len(v)}")
    if np.any(tc <= 0):
        raise ConfigError("slope fit requires positive tunnel couplings")
    coeffs = np.polyfit(v, np.log10(tc), 1)
    return float(coeffs[0])
