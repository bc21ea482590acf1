import json
from pathlib import Path

import numpy as np
import pytest

from dotlab import electrostatics as es
from dotlab.device import load_device_config
from dotlab.dots import build_grid

REPO = Path(__file__).resolve().parent.parent
REFERENCE_CONFIG = REPO / "device_reference.json"
REFERENCE_CONFIG_CONVENTIONAL = REPO / "device_reference_conventional.json"

SOLVER = es.SolverSettings(tolerance_v=1e-6, max_iterations=1500, damping=0.01)


@pytest.fixture(scope="session")
def ref_interchanged():
    return load_device_config(REFERENCE_CONFIG)


@pytest.fixture(scope="session")
def ref_conventional():
    return load_device_config(REFERENCE_CONFIG_CONVENTIONAL)


@pytest.fixture(scope="session")
def ref_interchanged_grid(ref_interchanged):
    return build_grid(ref_interchanged, nx=384, nz=120)


@pytest.fixture(scope="session")
def ref_conventional_grid(ref_conventional):
    return build_grid(ref_conventional, nx=384, nz=120)


@pytest.fixture(scope="session")
def ref_interchanged_solution(ref_interchanged_grid):
    """(field, sheet, iterations, history) at the interchanged base voltages."""
    return es.solve_selfconsistent(ref_interchanged_grid, SOLVER, return_history=True)


@pytest.fixture(scope="session")
def ref_conventional_solution(ref_conventional_grid):
    return es.solve_selfconsistent(ref_conventional_grid, SOLVER, return_history=True)


def minimal_device_doc():
    """Smallest valid layout: two nanogate layers, five gates, no screening."""
    return {
        "stack": [
            {"name": "buffer", "thickness_nm": 100.0, "relative_permittivity": 13.2,
             "kind": "substrate"},
            {"name": "well", "thickness_nm": 10.0, "relative_permittivity": 11.7,
             "kind": "quantum_well"},
            {"name": "spacer", "thickness_nm": 30.0, "relative_permittivity": 13.2,
             "kind": "semiconductor_barrier"},
            {"name": "gate oxide", "thickness_nm": 20.0, "relative_permittivity": 9.0,
             "kind": "dielectric"},
            {"name": "metal-2 level", "thickness_nm": 30.0, "relative_permittivity": 9.0,
             "kind": "dielectric", "gate_layer": 2},
            {"name": "oxide", "thickness_nm": 8.0, "relative_permittivity": 9.0,
             "kind": "dielectric"},
            {"name": "metal-3 level", "thickness_nm": 30.0, "relative_permittivity": 9.0,
             "kind": "dielectric", "gate_layer": 3},
        ],
        "gates": [
            {"id": "G2_1", "metal_layer": 2, "span": [0.0, 40.0]},
            {"id": "G3_1", "metal_layer": 3, "span": [40.0, 80.0]},
            {"id": "G2_2", "metal_layer": 2, "span": [80.0, 120.0]},
            {"id": "G3_2", "metal_layer": 3, "span": [120.0, 160.0]},
            {"id": "G2_3", "metal_layer": 2, "span": [160.0, 200.0]},
        ],
        "strategy": "conventional",
        "voltages": {"G2_1": 0.1, "G3_1": 0.0, "G2_2": 0.1, "G3_2": 0.0, "G2_3": 0.1},
    }


@pytest.fixture
def minimal_doc():
    return minimal_device_doc()
