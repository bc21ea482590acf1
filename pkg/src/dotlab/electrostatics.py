"""Self-consistent electrostatics on the 2D device cross-section.

Solves -div(eps grad V) = rho/eps0 on a rectangular (x, z) grid with a
5-point stencil.  Gate electrodes and the bottom of the substrate are
Dirichlet nodes; the lateral and top boundaries are zero-flux (Neumann).
The 2DEG is a zero-thickness charge sheet on one grid row whose density
follows the Thomas-Fermi relation

    sigma(V) = -e * (g_v * m_t / (pi hbar^2)) * (E_F + eV) * Theta(E_F + eV)

with Theta(0) = 0.  Internally lengths are nm and potentials volts, which
keeps matrix entries O(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import constants as const

from .device import DeviceDescription
from .errors import ConfigError, ConvergenceError

_NM = 1e-9

# Defaults for the Thomas-Fermi sheet: valley degeneracy 2 and the Si
# transverse effective mass 0.19 m_e; the Fermi level is pinned at 0 eV.
DEFAULT_VALLEY_DEGENERACY = 2.0
DEFAULT_EFFECTIVE_MASS_ME = 0.19
DEFAULT_FERMI_LEVEL_EV = 0.0

MIN_NX = 64
MIN_NZ = 32

# Linear solves are direct (sparse LU); the factorization is cached on the
# grid and reused across voltage points and self-consistency iterations.
LINEAR_RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class SolverSettings:
    """Fixed-point iteration controls for the self-consistent solve."""

    tolerance_v: float = 1e-6
    max_iterations: int = 500
    damping: float = 0.01

    def __post_init__(self):
        if not self.tolerance_v > 0:
            raise ConfigError("SolverSettings.tolerance_v must be > 0")
        if not 0 < self.damping <= 1:
            raise ConfigError("SolverSettings.damping must be in (0, 1]")
        if self.max_iterations < 1:
            raise ConfigError("SolverSettings.max_iterations must be >= 1")


@dataclass(frozen=True)
class ChargeSheet:
    """Areal 2DEG charge density on the sheet row, with its TF constants."""

    sigma: np.ndarray  # C/m^2, one value per x node, <= 0
    valley_degeneracy: float = DEFAULT_VALLEY_DEGENERACY
    effective_mass_me: float = DEFAULT_EFFECTIVE_MASS_ME
    fermi_level_ev: float = DEFAULT_FERMI_LEVEL_EV


@dataclass
class SimulationGrid:
    """Discretized cross-section: nodes, edge permittivities, Dirichlet data.

    Treat instances as immutable; ``with_gate_voltages`` derives a new grid
    sharing the geometry (and the cached matrix factorization).
    """

    x_nm: np.ndarray
    z_nm: np.ndarray
    eps_x: np.ndarray  # (nz, nx-1) relative permittivity on x-directed edges
    eps_z: np.ndarray  # (nz-1, nx) relative permittivity on z-directed edges
    dirichlet_mask: np.ndarray  # (nz, nx) bool
    dirichlet_values: np.ndarray  # (nz, nx) volts
    sheet_row: int  # grid row of the 2DEG plane
    gate_nodes: dict = field(default_factory=dict)  # gate id -> (row, column indices)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def nx(self) -> int:
        return len(self.x_nm)

    @property
    def nz(self) -> int:
        return len(self.z_nm)

    @property
    def dx_nm(self) -> float:
        return float(self.x_nm[1] - self.x_nm[0])

    @property
    def dz_nm(self) -> float:
        return float(self.z_nm[1] - self.z_nm[0])

    def with_gate_voltages(self, voltages: Mapping[str, float]) -> "SimulationGrid":
        """New grid with updated gate potentials; geometry and LU are shared."""
        values = self.dirichlet_values.copy()
        for gate_id, v in voltages.items():
            if gate_id not in self.gate_nodes:
                raise ConfigError(f"voltages: entry {gate_id!r} matches no gate on the grid")
            row, cols = self.gate_nodes[gate_id]
            values[row, cols] = v
        return replace(self, dirichlet_values=values)


@dataclass(frozen=True)
class PotentialField:
    """Solution of one linear Poisson solve."""

    grid: SimulationGrid
    v: np.ndarray  # (nz, nx) volts
    residual: float  # max-norm residual relative to the source scale

    def sheet_potential(self) -> np.ndarray:
        return self.v[self.grid.sheet_row, :]


@dataclass(frozen=True)
class PotentialProfile1D:
    """Electron potential energy along the channel at the 2DEG plane."""

    x_nm: np.ndarray
    u_ev: np.ndarray

    def __post_init__(self):
        dx = np.diff(self.x_nm)
        if not (np.all(np.isfinite(self.u_ev)) and np.all(np.isfinite(self.x_nm))):
            raise ValueError("profile contains non-finite values")
        if len(dx) and not np.allclose(dx, dx[0], rtol=1e-9):
            raise ValueError("profile grid must be uniformly spaced")


def thomas_fermi_density(
    v_volts,
    valley_degeneracy: float = DEFAULT_VALLEY_DEGENERACY,
    effective_mass_me: float = DEFAULT_EFFECTIVE_MASS_ME,
    fermi_level_ev: float = DEFAULT_FERMI_LEVEL_EV,
):
    """Areal electron charge density (C/m^2) of the 2DEG at potential V.

    Piecewise-linear in V: zero for E_F + eV <= 0, slope set by the 2D
    density of states g_v * m_t / (pi hbar^2).
    """
    v = np.asarray(v_volts, dtype=float)
    dos = valley_degeneracy * effective_mass_me * const.m_e / (np.pi * const.hbar**2)
    energy = (fermi_level_ev + v) * const.e  # J
    sigma = -const.e * dos * np.where(energy > 0.0, energy, 0.0)
    return sigma if sigma.shape else float(sigma)


def _layer_table(device: DeviceDescription):
    """Bottom-up (z_lo, z_hi, eps) intervals of the stack."""
    table = []
    z = 0.0
    for layer in device.stack:
        table.append((z, z + layer.thickness_nm, layer.relative_permittivity))
        z += layer.thickness_nm
    return table


def _eps_at(table, z: float) -> float:
    for z_lo, z_hi, eps in table:
        if z_lo <= z < z_hi:
            return eps
    return table[-1][2] if z >= table[-1][1] else table[0][2]


def _harmonic_eps(table, z_lo: float, z_hi: float) -> float:
    """Length-weighted harmonic mean of eps over [z_lo, z_hi]."""
    total = z_hi - z_lo
    acc = 0.0
    for a, b, eps in table:
        overlap = min(z_hi, b) - max(z_lo, a)
        if overlap > 0:
            acc += overlap / eps
    below = max(0.0, min(z_hi, table[0][0]) - z_lo)
    above = max(0.0, z_hi - max(z_lo, table[-1][1]))
    if below > 0:
        acc += below / table[0][2]
    if above > 0:
        acc += above / table[-1][2]
    return total / acc


def build_grid(
    device: DeviceDescription,
    nx: int = 400,
    nz: int = 160,
    pad_nm: float | None = None,
    x_range: tuple[float, float] | None = None,
) -> SimulationGrid:
    """Discretize the device cross-section.

    The z spacing is adjusted so the 2DEG plane falls exactly on a grid
    row; gate rows snap to the nearest row.  The lateral padding defaults
    to three gate pitches beyond the outermost electrode.
    """
    if nx < MIN_NX or nz < MIN_NZ:
        raise ConfigError(f"grid resolution floor is {MIN_NX} x {MIN_NZ}, got {nx} x {nz}")

    gates = device.gates
    if x_range is None:
        nanocenters = sorted(g.center for g in gates if g.metal_layer in (2, 3))
        pitch = float(np.median(np.diff(nanocenters))) if len(nanocenters) > 1 else 40.0
        pad = 3.0 * pitch if pad_nm is None else pad_nm
        x_lo = min(g.span[0] for g in gates) - pad
        x_hi = max(g.span[1] for g in gates) + pad
    else:
        x_lo, x_hi = x_range
    for g in gates:
        if g.span[0] < x_lo - 1e-9 or g.span[1] > x_hi + 1e-9:
            raise ConfigError(f"gates: span of {g.gate_id!r} lies outside the domain [{x_lo}, {x_hi}] nm")

    x = np.linspace(x_lo, x_hi, nx)

    height = device.stack_height_nm
    z_sheet = device.two_deg_z_nm
    dz0 = height / (nz - 1)
    row = int(round(z_sheet / dz0))
    if row < 1 or row > nz - 2:
        raise ConfigError("2DEG plane cannot be aligned with an interior grid row; increase nz")
    dz = z_sheet / row
    nz_total = int(np.floor(height / dz + 1e-9)) + 1
    z = np.arange(nz_total) * dz

    table = _layer_table(device)
    eps_x = np.empty((nz_total, nx - 1))
    for j, zj in enumerate(z):
        # x-directed edges run parallel to the layers: band average around the row
        band_lo, band_hi = zj - dz / 2.0, zj + dz / 2.0
        acc, total = 0.0, 0.0
        for a, b, eps in table:
            overlap = min(band_hi, b) - max(band_lo, a)
            if overlap > 0:
                acc += overlap * eps
                total += overlap
        eps_x[j, :] = acc / total if total > 0 else _eps_at(table, zj)
    eps_z = np.empty((nz_total - 1, nx))
    for j in range(nz_total - 1):
        eps_z[j, :] = _harmonic_eps(table, z[j], z[j + 1])

    mask = np.zeros((nz_total, nx), dtype=bool)
    values = np.zeros((nz_total, nx))
    mask[0, :] = True  # grounded substrate bottom

    gate_nodes = {}
    for g in gates:
        z_gate = device.gate_plane_z_nm(g.metal_layer)
        g_row = int(round(z_gate / dz))
        if g_row <= 0 or g_row >= nz_total - 1:
            raise ConfigError(f"gates: {g.gate_id!r} plane falls outside the interior grid")
        cols = np.where((x >= g.span[0] - 1e-9) & (x <= g.span[1] + 1e-9))[0]
        if len(cols) == 0:
            raise ConfigError(f"gates: {g.gate_id!r} span covers no grid node; refine nx")
        taken = mask[g_row, cols]
        if np.any(taken):
            prior = values[g_row, cols][taken]
            if not np.allclose(prior, device.voltages[g.gate_id]):
                raise ConfigError(f"gates: {g.gate_id!r} overlaps another electrode node with a different voltage")
        mask[g_row, cols] = True
        values[g_row, cols] = device.voltages[g.gate_id]
        gate_nodes[g.gate_id] = (g_row, cols)

    grid = SimulationGrid(
        x_nm=x, z_nm=z, eps_x=eps_x, eps_z=eps_z,
        dirichlet_mask=mask, dirichlet_values=values,
        sheet_row=row, gate_nodes=gate_nodes,
    )
    return grid


def slab_grid(
    slabs: list[tuple[float, float]],
    v_top: float,
    nx: int = MIN_NX,
    dz_nm: float = 0.5,
    width_nm: float = 100.0,
    sheet_z_nm: float | None = None,
) -> SimulationGrid:
    """Laterally uniform stack with a full-width top electrode.

    ``slabs`` lists (thickness_nm, eps) bottom-up; the bottom boundary is
    grounded and the whole top row is a Dirichlet electrode at ``v_top``.
    Useful for parallel-plate checks against series-capacitor formulas.
    """
    height = sum(t for t, _ in slabs)
    boundaries = np.cumsum([0.0] + [t for t, _ in slabs])
    if sheet_z_nm is not None:
        # snap dz so the sheet lands on a row
        row = max(1, int(round(sheet_z_nm / dz_nm)))
        dz_nm = sheet_z_nm / row
    nz = int(round(height / dz_nm)) + 1
    if nz < MIN_NZ:
        raise ConfigError(f"slab stack too thin for the {MIN_NZ}-row floor at dz = {dz_nm} nm")
    z = np.arange(nz) * dz_nm
    x = np.linspace(0.0, width_nm, nx)
    table = [(boundaries[i], boundaries[i + 1], eps) for i, (_, eps) in enumerate(slabs)]

    eps_x = np.empty((nz, nx - 1))
    for j, zj in enumerate(z):
        eps_x[j, :] = _eps_at(table, zj)
    eps_z = np.empty((nz - 1, nx))
    for j in range(nz - 1):
        eps_z[j, :] = _harmonic_eps(table, z[j], z[j + 1])

    mask = np.zeros((nz, nx), dtype=bool)
    values = np.zeros((nz, nx))
    mask[0, :] = True
    mask[-1, :] = True
    values[-1, :] = v_top
    sheet_row = int(round(sheet_z_nm / dz_nm)) if sheet_z_nm is not None else nz // 2
    return SimulationGrid(
        x_nm=x, z_nm=z, eps_x=eps_x, eps_z=eps_z,
        dirichlet_mask=mask, dirichlet_values=values,
        sheet_row=sheet_row, gate_nodes={"top": (nz - 1, np.arange(nx))},
    )


def _operator(grid: SimulationGrid):
    """Assemble (and cache) the 5-point matrix and its LU factorization."""
    if "lu" in grid._cache:
        return grid._cache["matrix"], grid._cache["lu"]

    nx, nz = grid.nx, grid.nz
    n = nx * nz
    dx2 = grid.dx_nm**2
    dz2 = grid.dz_nm**2

    def idx(j, i):
        return j * nx + i

    rows, cols, vals = [], [], []
    mask = grid.dirichlet_mask
    eps_x, eps_z = grid.eps_x, grid.eps_z

    for j in range(nz):
        for i in range(nx):
            k = idx(j, i)
            if mask[j, i]:
                rows.append(k); cols.append(k); vals.append(1.0)
                continue
            diag = 0.0
            if i + 1 < nx:
                c = eps_x[j, i] / dx2
                rows.append(k); cols.append(idx(j, i + 1)); vals.append(c)
                diag -= c
            if i - 1 >= 0:
                c = eps_x[j, i - 1] / dx2
                rows.append(k); cols.append(idx(j, i - 1)); vals.append(c)
                diag -= c
            if j + 1 < nz:
                c = eps_z[j, i] / dz2
                rows.append(k); cols.append(idx(j + 1, i)); vals.append(c)
                diag -= c
            if j - 1 >= 0:
                c = eps_z[j - 1, i] / dz2
                rows.append(k); cols.append(idx(j - 1, i)); vals.append(c)
                diag -= c
            rows.append(k); cols.append(k); vals.append(diag)

    matrix = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    try:
        lu = spla.splu(matrix)
    except RuntimeError as exc:
        raise ConvergenceError(f"linear solve failed during factorization: {exc}") from exc
    grid._cache["matrix"] = matrix
    grid._cache["lu"] = lu
    return matrix, lu


def _rhs(grid: SimulationGrid, sigma: np.ndarray | None) -> np.ndarray:
    nx, nz = grid.nx, grid.nz
    b = np.zeros((nz, nx))
    b[grid.dirichlet_mask] = grid.dirichlet_values[grid.dirichlet_mask]
    if sigma is not None:
        # sheet charge as a volume density over one cell: rho = sigma / dz
        source = -np.asarray(sigma) / (grid.dz_nm * _NM * const.epsilon_0) * _NM**2
        row = grid.sheet_row
        free = ~grid.dirichlet_mask[row, :]
        b[row, free] += source[free]
    return b.ravel()


def solve_poisson(grid: SimulationGrid, charge: ChargeSheet | np.ndarray | None = None) -> PotentialField:
    """Direct solve of the discrete Poisson problem at fixed sheet charge."""
    sigma = charge.sigma if isinstance(charge, ChargeSheet) else charge
    matrix, lu = _operator(grid)
    b = _rhs(grid, sigma)
    v = lu.solve(b)
    if not np.all(np.isfinite(v)):
        raise ConvergenceError("linear solve returned non-finite values (singular operator?)")
    scale = float(np.max(np.abs(b)))
    resid = float(np.max(np.abs(matrix @ v - b)))
    rel = resid / scale if scale > 0 else resid
    if scale > 0 and rel > LINEAR_RESIDUAL_RTOL:
        raise ConvergenceError(
            f"linear solve residual {rel:.3e} exceeds {LINEAR_RESIDUAL_RTOL:.0e} of the source scale",
            iterations=1, residual=rel,
        )
    return PotentialField(grid=grid, v=v.reshape(grid.nz, grid.nx), residual=rel)


def solve_selfconsistent(
    grid: SimulationGrid,
    settings: SolverSettings = SolverSettings(),
    valley_degeneracy: float = DEFAULT_VALLEY_DEGENERACY,
    effective_mass_me: float = DEFAULT_EFFECTIVE_MASS_ME,
    fermi_level_ev: float = DEFAULT_FERMI_LEVEL_EV,
    return_history: bool = False,
):
    """Damped fixed-point solve of Poisson + Thomas-Fermi sheet charge.

    Iterates sigma_{k+1} = (1 - damping) sigma_k + damping * TF(V_k) from
    sigma_0 = 0 and stops once the sheet potential moves less than the
    tolerance between successive solves.  Returns (field, sheet, iterations).
    """
    lam = settings.damping
    sigma = np.zeros(grid.nx)
    field = solve_poisson(grid, sigma)
    v_row = field.sheet_potential()
    history = []
    for iteration in range(1, settings.max_iterations + 1):
        sigma = (1.0 - lam) * sigma + lam * thomas_fermi_density(
            v_row, valley_degeneracy, effective_mass_me, fermi_level_ev
        )
        field = solve_poisson(grid, sigma)
        v_new = field.sheet_potential()
        residual = float(np.max(np.abs(v_new - v_row)))
        history.append(residual)
        v_row = v_new
        if residual < settings.tolerance_v:
            sheet = ChargeSheet(sigma, valley_degeneracy, effective_mass_me, fermi_level_ev)
            if return_history:
                return field, sheet, iteration, history
            return field, sheet, iteration
        # Flag only clear limit cycles or divergence (no new best residual
        # over a long window, still far from tolerance); slow creeps improve
        # every iteration and are left to the max_iterations backstop.
        if (
            len(history) > 100
            and min(history[-100:]) >= min(history[:-100])
            and residual > 50.0 * settings.tolerance_v
        ):
            raise ConvergenceError(
                f"self-consistency residual non-decreasing over the last 100 "
                f"iterations (now {residual:.3e} V); try smaller damping than {lam}",
                iterations=iteration, residual=residual,
            )
    raise ConvergenceError(
        f"self-consistency not converged after {settings.max_iterations} iterations "
        f"(last residual {history[-1]:.3e} V, tolerance {settings.tolerance_v:.0e} V)",
        iterations=settings.max_iterations, residual=history[-1],
    )


def potential_profile(field: PotentialField) -> PotentialProfile1D:
    """Electron potential energy U(x) = -e V(x, z_2DEG), in eV."""
    return PotentialProfile1D(x_nm=field.grid.x_nm.copy(), u_ev=-field.sheet_potential())
