"""dotlab: gate-defined Si/SiGe quantum-dot device simulation and calibration."""

__version__ = "0.1.0"

from .device import (
    DeviceDescription,
    GateElectrode,
    GateLayout,
    MaterialLayer,
    VirtualGateMatrix,
    apply_virtual_gates,
    assign_roles,
    load_device_config,
    serialize_device_config,
)
from .electrostatics import (
    ChargeSheet,
    PotentialField,
    PotentialProfile1D,
    SimulationGrid,
    SolverSettings,
    build_grid,
    potential_profile,
    solve_poisson,
    solve_selfconsistent,
    thomas_fermi_density,
)
from .dots import (
    EigenSolution,
    HubbardParams,
    LocalizedBasis,
    StabilityModel,
    TunnelCouplingCurve,
    exchange_from_hubbard,
    maximally_localized_basis,
    slope_dec_per_volt,
    solve_schrodinger_1d,
    stability_diagram,
    tunnel_coupling_sweep,
)
from .spins import (
    ExchangePair,
    ReadoutModel,
    SpinSystem,
    basis_state,
    build_hamiltonian,
    evolve,
    ground_state,
    parity_measure,
    run_sequence,
    sequence_unitary,
)
from .experiments import (
    amplitude_for_j,
    branch_separation_exact,
    dcz_sequence,
    initialize_odd_parity,
    pair_spectrum,
    residual_zz_coefficient,
    simulate_dcz,
    simulate_exchange_spectroscopy,
    simulate_rabi,
    spectroscopy_branches,
    zcnot_elements,
)
from .fits import (
    DampedSinusoidFit,
    ExponentialFit,
    LeverArmComparison,
    TunabilityReport,
    extract_j_from_dcz,
    fit_damped_sinusoid,
    fit_exponential,
    lever_arm_comparison,
    readout_fidelity_from_snr,
    tunability_report,
)
from .errors import ConfigError, ConvergenceError, DotlabError, FitError, MergedDotsError
