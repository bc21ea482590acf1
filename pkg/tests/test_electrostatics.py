import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as const

from dotlab import electrostatics as es
from dotlab.device import load_device_config
from dotlab.dots import build_grid, middle_barrier, pair_window_nm, restrict_profile
from dotlab.errors import ConfigError, ConvergenceError

from conftest import SOLVER, minimal_device_doc

# frozen with an independent constants script before the build
SIGMA_AT_10MV = -2.5432624868202184e-3  # C/m^2 at V = +0.01, g_v = 2, m* = 0.19 m_e
DIVIDER_V_INT = 0.15168539325842695  # two-slab series-capacitor value at Vg = 0.3


def divider_grid(v_top=0.3):
    # eps 13.2 slab (30 nm) below, eps 9 slab (20 nm) above, sheet at interface
    return es.slab_grid([(30.0, 13.2), (20.0, 9.0)], v_top=v_top, nx=64,
                        dz_nm=0.5, sheet_z_nm=30.0)


class TestBuildGrid:
    def test_reference_sheet_row_at_stack_depth(self, ref_interchanged):
        grid = build_grid(ref_interchanged, nx=400, nz=160)
        z_sheet = grid.z_nm[grid.sheet_row]
        assert z_sheet == pytest.approx(ref_interchanged.two_deg_z_nm, abs=1e-9)

    def test_uniform_stack_constant_permittivity(self, minimal_doc):
        for layer in minimal_doc["stack"]:
            layer["relative_permittivity"] = 11.7
        device = load_device_config(minimal_doc)
        grid = build_grid(device, nx=64, nz=40)
        assert np.allclose(grid.eps_x, 11.7)
        assert np.allclose(grid.eps_z, 11.7)

    def test_gate_outside_domain_rejected(self, minimal_doc):
        device = load_device_config(minimal_doc)
        with pytest.raises(ConfigError, match="outside the domain"):
            build_grid(device, nx=64, nz=40, x_range=(0.0, 150.0))

    def test_resolution_floor(self, ref_interchanged):
        with pytest.raises(ConfigError, match="resolution floor"):
            build_grid(ref_interchanged, nx=32, nz=120)


class TestSolvePoisson:
    def test_zero_everything_gives_zero(self):
        grid = divider_grid(v_top=0.0)
        field = es.solve_poisson(grid)
        assert np.max(np.abs(field.v)) < 1e-12

    def test_two_slab_divider_matches_analytic(self):
        field = es.solve_poisson(divider_grid())
        v_int = field.v[field.grid.sheet_row, 10]
        assert v_int == pytest.approx(DIVIDER_V_INT, rel=1e-3)
        # interior laterally uniform
        assert np.ptp(field.v[field.grid.sheet_row, :]) < 1e-12

    def test_barrier_voltage_lowers_barrier_monotonically(self, ref_interchanged,
                                                          ref_interchanged_grid):
        layout = ref_interchanged.layout()
        barrier = middle_barrier(layout)
        col = int(np.argmin(np.abs(ref_interchanged_grid.x_nm - barrier.center)))
        barrier_u = []
        for dv in (0.0, 0.1, 0.2, 0.3):
            voltages = dict(ref_interchanged.voltages)
            voltages[barrier.gate_id] += dv
            field = es.solve_poisson(ref_interchanged_grid.with_gate_voltages(voltages))
            barrier_u.append(-field.sheet_potential()[col])
        assert all(a > b for a, b in zip(barrier_u, barrier_u[1:]))

    def test_solution_satisfies_reported_residual(self, ref_interchanged_grid):
        field = es.solve_poisson(ref_interchanged_grid)
        assert field.residual < es.LINEAR_RESIDUAL_RTOL

    @settings(max_examples=20, deadline=None)
    @given(
        a=st.floats(-2.0, 2.0),
        b=st.floats(-2.0, 2.0),
        v1=st.floats(0.05, 0.5),
        v2=st.floats(-0.5, -0.05),
    )
    def test_superposition_at_zero_charge(self, a, b, v1, v2):
        grid = divider_grid()
        fa = es.solve_poisson(grid.with_gate_voltages({"top": v1}))
        fb = es.solve_poisson(grid.with_gate_voltages({"top": v2}))
        fab = es.solve_poisson(grid.with_gate_voltages({"top": a * v1 + b * v2}))
        assert np.max(np.abs(fab.v - (a * fa.v + b * fb.v))) < 1e-9

    @settings(max_examples=15, deadline=None)
    @given(data=st.data())
    def test_discrete_maximum_principle(self, ref_interchanged, ref_interchanged_grid, data):
        gate_ids = [g.gate_id for g in ref_interchanged.gates]
        voltages = {
            gid: data.draw(st.floats(-1.0, 1.0), label=gid) for gid in gate_ids
        }
        grid = ref_interchanged_grid.with_gate_voltages(voltages)
        field = es.solve_poisson(grid)
        dirichlet = field.v[grid.dirichlet_mask]
        lo, hi = dirichlet.min(), dirichlet.max()
        assert field.v.min() >= lo - 1e-12
        assert field.v.max() <= hi + 1e-12


class TestThomasFermiDensity:
    def test_negative_potential_gives_zero(self):
        assert es.thomas_fermi_density(-0.1) == 0.0

    def test_band_edge_convention_theta_zero_is_zero(self):
        assert es.thomas_fermi_density(0.0) == 0.0

    def test_frozen_value_at_10mv(self):
        sigma = es.thomas_fermi_density(0.01)
        assert sigma == pytest.approx(SIGMA_AT_10MV, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(v=st.floats(-0.5, 0.5), dv=st.floats(1e-6, 0.1))
    def test_monotone_nonincreasing_and_continuous(self, v, dv):
        s1 = es.thomas_fermi_density(v)
        s2 = es.thomas_fermi_density(v + dv)
        assert s2 <= s1
        assert s1 <= 0.0
        # piecewise linear with bounded slope: |ds| <= e^2 DOS dv
        dos = 2.0 * 0.19 * const.m_e / (np.pi * const.hbar**2)
        assert abs(s2 - s1) <= const.e**2 * dos * dv * (1 + 1e-9)


class TestSelfConsistent:
    def test_depleted_channel_converges_immediately(self, ref_interchanged,
                                                    ref_interchanged_grid):
        voltages = {g.gate_id: -1.0 for g in ref_interchanged.gates}
        grid = ref_interchanged_grid.with_gate_voltages(voltages)
        field, sheet, iterations = es.solve_selfconsistent(grid, SOLVER)
        assert iterations == 1
        assert np.all(sheet.sigma == 0.0)
        free = es.solve_poisson(grid)
        assert np.max(np.abs(field.v - free.v)) < 1e-14

    def test_parallel_plate_matches_bisection_oracle(self):
        grid = divider_grid()
        field, sheet, _ = es.solve_selfconsistent(grid, SOLVER)
        v_grid = field.sheet_potential()[10]

        c_eff = const.epsilon_0 * (9.0 / 20e-9 + 13.2 / 30e-9)

        def imbalance(v):
            return v - DIVIDER_V_INT - es.thomas_fermi_density(v) / c_eff

        lo, hi = 0.0, DIVIDER_V_INT
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if imbalance(mid) > 0:
                hi = mid
            else:
                lo = mid
        assert v_grid == pytest.approx(0.5 * (lo + hi), abs=1e-5)

    def test_charge_only_under_positive_regions(self, ref_conventional,
                                                ref_conventional_solution):
        field, sheet, _, _ = ref_conventional_solution
        x = field.grid.x_nm
        layout = ref_conventional.layout()
        assert np.all(sheet.sigma <= 0.0)
        for plunger in layout.plungers:
            inside = (x >= plunger.span[0]) & (x <= plunger.span[1])
            assert sheet.sigma[inside].min() < 0.0, f"no charge under {plunger.gate_id}"
        for gate in layout.gates:
            if gate.assigned_role == "screening":
                inside = (x >= gate.span[0]) & (x <= gate.span[1])
                assert np.all(sheet.sigma[inside] == 0.0)

    def test_residual_history_contracts(self, ref_conventional_solution,
                                        ref_interchanged_solution):
        _, _, _, conv_hist = ref_conventional_solution
        assert all(a > b for a, b in zip(conv_hist[3:], conv_hist[4:]))
        # the interchanged point has a short charge-front transient, then decays
        _, _, _, int_hist = ref_interchanged_solution
        assert all(a > b for a, b in zip(int_hist[20:], int_hist[21:]))

    def test_oscillation_detected_at_large_damping(self):
        grid = divider_grid()
        with pytest.raises(ConvergenceError, match="smaller damping"):
            es.solve_selfconsistent(grid, es.SolverSettings(damping=0.1))

    def test_max_iterations_reports_residual(self):
        grid = divider_grid()
        with pytest.raises(ConvergenceError, match="not converged after 3 iterations"):
            es.solve_selfconsistent(grid, es.SolverSettings(max_iterations=3))

    def test_grid_refinement_changes_barrier_height_under_2pct(self, ref_interchanged):
        layout = ref_interchanged.layout()
        barrier = middle_barrier(layout)
        window = pair_window_nm(layout, barrier.gate_id)
        heights = []
        for nx, nz in ((384, 120), (768, 240)):
            grid = build_grid(ref_interchanged, nx=nx, nz=nz)
            voltages = dict(ref_interchanged.voltages)
            voltages[barrier.gate_id] += 0.15
            field, _, _ = es.solve_selfconsistent(grid.with_gate_voltages(voltages), SOLVER)
            profile = es.potential_profile(field)
            local = restrict_profile(profile, window)
            mid = int(np.argmin(np.abs(local.x_nm - barrier.center)))
            heights.append(local.u_ev[mid] - local.u_ev.min())
        assert abs(heights[1] - heights[0]) / heights[0] < 0.02


class TestPotentialProfile:
    def test_zero_field_zero_profile(self):
        grid = divider_grid(v_top=0.0)
        profile = es.potential_profile(es.solve_poisson(grid))
        assert np.all(profile.u_ev == 0.0)

    def test_parallel_plate_profile_is_minus_divider(self):
        profile = es.potential_profile(es.solve_poisson(divider_grid()))
        assert profile.u_ev[10] == pytest.approx(-DIVIDER_V_INT, rel=1e-3)

    def test_reference_double_well_minima_inside_plunger_spans(
        self, ref_interchanged, ref_interchanged_solution
    ):
        field, _, _, _ = ref_interchanged_solution
        profile = es.potential_profile(field)
        layout = ref_interchanged.layout()
        barrier = middle_barrier(layout)
        window = pair_window_nm(layout, barrier.gate_id)
        local = restrict_profile(profile, window)
        u = local.u_ev
        minima_x = [
            local.x_nm[i]
            for i in range(1, len(u) - 1)
            if u[i] < u[i - 1] and u[i] < u[i + 1]
        ]
        adjacent = [p for p in layout.plungers
                    if window[0] < p.center < window[1]]
        assert len(adjacent) == 2
        for plunger in adjacent:
            assert any(plunger.span[0] <= x <= plunger.span[1] for x in minima_x), (
                f"no profile minimum under {plunger.gate_id}"
            )
