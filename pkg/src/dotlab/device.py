"""Device description: heterostructure stack, gate layout, tuning strategy, voltages.

All lengths are in nm and all voltages in volts.  The device geometry is a 2D
cross-section: x runs along the dot channel, z along the growth direction
(bottom of the stack at z = 0).  Gate electrodes are thin equipotential
segments sitting at the bottom interface of their metal layer; the stack
entries that carry a ``gate_layer`` marker only set those z-heights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError

LAYER_KINDS = ("dielectric", "semiconductor_barrier", "quantum_well", "substrate")
ROLES = ("screening", "plunger", "barrier")
STRATEGIES = ("conventional", "interchanged")

DEFAULT_BREAKDOWN_LIMIT_V = 4.0

# Singular-value ratio below which a virtual-gate matrix is rejected.
VIRTUAL_MATRIX_SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class MaterialLayer:
    name: str
    thickness_nm: float
    relative_permittivity: float
    kind: str
    gate_layer: int | None = None  # metal layer whose gates sit at this layer's bottom


@dataclass(frozen=True)
class GateElectrode:
    gate_id: str
    metal_layer: int  # 1 = screening layer, 2/3 = nanogate layers
    span: tuple[float, float]  # [x0, x1] along the channel, nm
    assigned_role: str | None = None

    @property
    def center(self) -> float:
        return 0.5 * (self.span[0] + self.span[1])

    @property
    def width(self) -> float:
        return self.span[1] - self.span[0]


@dataclass(frozen=True)
class VirtualGateMatrix:
    """Linear map from virtual-gate increments to physical-gate increments.

    Rows follow the physical gate order of the device, columns the
    ``virtual_names`` order; ``dv_phys = matrix @ dv_virtual``.
    """

    virtual_names: tuple[str, ...]
    physical_names: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.shape != (len(self.physical_names), len(self.virtual_names)):
            raise ConfigError(
                f"virtual_gates.matrix: shape {m.shape} does not match "
                f"{len(self.physical_names)} physical x {len(self.virtual_names)} virtual gates"
            )
        if m.shape[0] != m.shape[1]:
            raise ConfigError("virtual_gates.matrix: must be square")
        svals = np.linalg.svd(m, compute_uv=False)
        if svals[-1] <= VIRTUAL_MATRIX_SINGULAR_TOL * svals[0]:
            raise ConfigError("virtual_gates.matrix: numerically singular")

    def __eq__(self, other):
        if not isinstance(other, VirtualGateMatrix):
            return NotImplemented
        return (
            self.virtual_names == other.virtual_names
            and self.physical_names == other.physical_names
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass(frozen=True)
class GateLayout:
    """Gate set with roles resolved for one tuning strategy.

    Plunger gates define the dots; ``qubit_names`` labels them Q1..Qn in
    order of increasing x.
    """

    gates: tuple[GateElectrode, ...]
    strategy: str

    @property
    def plungers(self) -> tuple[GateElectrode, ...]:
        return tuple(g for g in self.gates if g.assigned_role == "plunger")

    @property
    def barriers(self) -> tuple[GateElectrode, ...]:
        return tuple(g for g in self.gates if g.assigned_role == "barrier")

    @property
    def dot_count(self) -> int:
        return len(self.plungers)

    @property
    def qubit_names(self) -> tuple[str, ...]:
        return tuple(f"Q{i + 1}" for i in range(self.dot_count))

    @property
    def dot_centers(self) -> tuple[float, ...]:
        return tuple(g.center for g in self.plungers)

    def gate(self, gate_id: str) -> GateElectrode:
        for g in self.gates:
            if g.gate_id == gate_id:
                return g
        raise KeyError(f"no gate with id {gate_id!r}")

    def barrier_between(self, qubit_a: str, qubit_b: str) -> GateElectrode:
        """The barrier gate whose span lies between two adjacent dots."""
        names = self.qubit_names
        if qubit_a not in names or qubit_b not in names:
            raise KeyError(f"unknown qubit pair ({qubit_a}, {qubit_b}); have {names}")
        ia, ib = sorted((names.index(qubit_a), names.index(qubit_b)))
        if ib != ia + 1:
            raise KeyError(f"qubits {qubit_a} and {qubit_b} are not adjacent")
        lo = self.plungers[ia].center
        hi = self.plungers[ib].center
        between = [b for b in self.barriers if lo < b.center < hi]
        if len(between) != 1:
            raise ConfigError(f"expected one barrier between {qubit_a} and {qubit_b}, found {len(between)}")
        return between[0]


@dataclass(frozen=True)
class DeviceDescription:
    stack: tuple[MaterialLayer, ...]
    gates: tuple[GateElectrode, ...]
    strategy: str
    voltages: dict[str, float]
    virtual_gates: VirtualGateMatrix | None = None
    breakdown_limit_v: float = DEFAULT_BREAKDOWN_LIMIT_V
    spin: dict | None = None  # optional spin-simulation parameters, passed through

    @property
    def two_deg_depth_nm(self) -> float:
        """Depth of the 2DEG plane below the top of the stack."""
        idx = self._well_index()
        return sum(layer.thickness_nm for layer in self.stack[idx + 1:])

    @property
    def two_deg_z_nm(self) -> float:
        """Height of the 2DEG plane above the bottom of the stack (z = 0)."""
        idx = self._well_index()
        return sum(layer.thickness_nm for layer in self.stack[: idx + 1])

    @property
    def stack_height_nm(self) -> float:
        return sum(layer.thickness_nm for layer in self.stack)

    def _well_index(self) -> int:
        return next(i for i, l in enumerate(self.stack) if l.kind == "quantum_well")

    def gate_plane_z_nm(self, metal_layer: int) -> float:
        """z-height of the equipotential plane for one metal layer."""
        z = 0.0
        for layer in self.stack:
            if layer.gate_layer == metal_layer:
                return z
            z += layer.thickness_nm
        raise ConfigError(f"stack: no layer carries gate_layer = {metal_layer}")

    def layout(self, strategy: str | None = None) -> GateLayout:
        return assign_roles(self.gates, strategy or self.strategy)


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _parse_layer(entry: Mapping, index: int) -> MaterialLayer:
    where = f"stack[{index}]"
    for key in ("name", "thickness_nm", "relative_permittivity", "kind"):
        _require(key in entry, f"{where}: missing field {key!r}")
    layer = MaterialLayer(
        name=str(entry["name"]),
        thickness_nm=float(entry["thickness_nm"]),
        relative_permittivity=float(entry["relative_permittivity"]),
        kind=str(entry["kind"]),
        gate_layer=int(entry["gate_layer"]) if entry.get("gate_layer") is not None else None,
    )
    _require(layer.thickness_nm > 0, f"{where}.thickness_nm: must be > 0")
    _require(layer.relative_permittivity >= 1, f"{where}.relative_permittivity: must be >= 1")
    _require(layer.kind in LAYER_KINDS, f"{where}.kind: {layer.kind!r} not one of {LAYER_KINDS}")
    return layer


def _parse_gate(entry: Mapping, index: int) -> GateElectrode:
    where = f"gates[{index}]"
    for key in ("id", "metal_layer", "span"):
        _require(key in entry, f"{where}: missing field {key!r}")
    span = entry["span"]
    _require(len(span) == 2, f"{where}.span: expected [x0, x1]")
    gate = GateElectrode(
        gate_id=str(entry["id"]),
        metal_layer=int(entry["metal_layer"]),
        span=(float(span[0]), float(span[1])),
    )
    _require(gate.metal_layer in (1, 2, 3), f"{where}.metal_layer: must be 1, 2 or 3")
    _require(gate.span[0] < gate.span[1], f"{where}.span: requires x0 < x1")
    return gate


def check_breakdown(voltages: Mapping[str, float], limit_v: float):
    """Reject any inter-gate voltage difference beyond the breakdown limit."""
    if not voltages:
        return
    vals = list(voltages.values())
    worst = max(vals) - min(vals)
    if worst > limit_v:
        hi = max(voltages, key=voltages.get)
        lo = min(voltages, key=voltages.get)
        raise ConfigError(
            f"voltages: |V({hi}) - V({lo})| = {worst:.3g} V exceeds breakdown limit {limit_v:g} V"
        )


def load_device_config(document) -> DeviceDescription:
    """Build a validated DeviceDescription from a JSON file path, JSON text, or dict."""
    if isinstance(document, (str, Path)) and Path(document).suffix == ".json":
        path = Path(document)
        if not path.exists():
            raise ConfigError(f"config not found: {path}")
        doc = json.loads(path.read_text())
    elif isinstance(document, str):
        doc = json.loads(document)
    elif isinstance(document, Mapping):
        doc = document
    else:
        raise ConfigError(f"unsupported config document type: {type(document).__name__}")

    for key in ("stack", "gates", "strategy", "voltages"):
        _require(key in doc, f"missing top-level key {key!r}")

    stack = tuple(_parse_layer(e, i) for i, e in enumerate(doc["stack"]))
    wells = [l for l in stack if l.kind == "quantum_well"]
    _require(len(wells) == 1, f"stack: exactly one quantum_well layer required, found {len(wells)}")

    gates = tuple(_parse_gate(e, i) for i, e in enumerate(doc["gates"]))
    ids = [g.gate_id for g in gates]
    for gid in ids:
        if ids.count(gid) > 1:
            raise ConfigError(f"gates: duplicate gate id {gid!r}")
    for layer_no in (1, 2, 3):
        spans = sorted(g.span for g in gates if g.metal_layer == layer_no)
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            _require(b0 >= a1, f"gates: overlapping electrodes on metal layer {layer_no} "
                               f"(spans [{a0}, {a1}] and [{b0}, {b1}])")

    strategy = str(doc["strategy"])
    _require(strategy in STRATEGIES, f"strategy: {strategy!r} not one of {STRATEGIES}")

    limits = doc.get("limits") or {}
    limit_v = float(limits.get("breakdown_limit_v", DEFAULT_BREAKDOWN_LIMIT_V))
    _require(limit_v > 0, "limits.breakdown_limit_v: must be > 0")

    voltages = {str(k): float(v) for k, v in doc["voltages"].items()}
    for gid in ids:
        _require(gid in voltages, f"voltages: missing entry for gate {gid!r}")
    for name in voltages:
        _require(name in ids, f"voltages: entry {name!r} matches no gate")
    check_breakdown(voltages, limit_v)

    vg = None
    if doc.get("virtual_gates") is not None:
        spec = doc["virtual_gates"]
        _require("names" in spec and "matrix" in spec, "virtual_gates: requires 'names' and 'matrix'")
        names = tuple(str(n) for n in spec["names"])
        flat = np.asarray(spec["matrix"], dtype=float)
        if flat.ndim == 1:  # row-major flattened
            flat = flat.reshape(len(ids), len(names))
        vg = VirtualGateMatrix(virtual_names=names, physical_names=tuple(ids), matrix=flat)

    device = DeviceDescription(
        stack=stack,
        gates=gates,
        strategy=strategy,
        voltages=voltages,
        virtual_gates=vg,
        breakdown_limit_v=limit_v,
        spin=dict(doc["spin"]) if doc.get("spin") is not None else None,
    )
    # Metal layers referenced by gates must have a z-height in the stack,
    # and they must all sit above the 2DEG plane.
    for layer_no in sorted({g.metal_layer for g in gates}):
        z = device.gate_plane_z_nm(layer_no)
        _require(z > device.two_deg_z_nm,
                 f"stack: gate_layer {layer_no} plane (z = {z:g} nm) is not above the quantum well")
    device.layout(strategy)  # validates alternation for the configured strategy
    return device


def serialize_device_config(device: DeviceDescription) -> dict:
    """Inverse of load_device_config: a dict that reloads to an equal device."""
    doc = {
        "stack": [
            {k: v for k, v in asdict(l).items() if not (k == "gate_layer" and v is None)}
            for l in device.stack
        ],
        "gates": [
            {"id": g.gate_id, "metal_layer": g.metal_layer, "span": list(g.span)}
            for g in device.gates
        ],
        "strategy": device.strategy,
        "voltages": dict(device.voltages),
        "limits": {"breakdown_limit_v": device.breakdown_limit_v},
    }
    if device.virtual_gates is not None:
        doc["virtual_gates"] = {
            "names": list(device.virtual_gates.virtual_names),
            "matrix": [list(row) for row in device.virtual_gates.matrix],
        }
    if device.spin is not None:
        doc["spin"] = device.spin
    return doc


def assign_roles(gates, strategy: str) -> GateLayout:
    """Label plunger/barrier roles on the nanogate layers for one strategy.

    Conventional tuning puts plungers on metal layer 2 and barriers on layer
    3; interchanged tuning swaps the two labels on the same electrodes.
    Layer-1 gates are always screening gates.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"strategy: {strategy!r} not one of {STRATEGIES}")
    nanogates = sorted((g for g in gates if g.metal_layer in (2, 3)), key=lambda g: g.center)
    if not nanogates:
        raise ConfigError("layout: no electrodes on metal layers 2/3")
    has2 = any(g.metal_layer == 2 for g in nanogates)
    has3 = any(g.metal_layer == 3 for g in nanogates)
    if not (has2 and has3):
        raise ConfigError("layout: requires electrodes on both metal layers 2 and 3")
    for a, b in zip(nanogates, nanogates[1:]):
        if a.metal_layer == b.metal_layer:
            raise ConfigError(
                f"layout: gates {a.gate_id!r} and {b.gate_id!r} break layer-2/layer-3 alternation"
            )
    plunger_layer = 2 if strategy == "conventional" else 3
    labeled = []
    for g in gates:
        if g.metal_layer == 1:
            role = "screening"
        elif g.metal_layer == plunger_layer:
            role = "plunger"
        else:
            role = "barrier"
        labeled.append(GateElectrode(g.gate_id, g.metal_layer, g.span, role))
    return GateLayout(gates=tuple(labeled), strategy=strategy)


def apply_virtual_gates(
    base: Mapping[str, float],
    matrix: VirtualGateMatrix,
    dv: Mapping[str, float],
    breakdown_limit_v: float = DEFAULT_BREAKDOWN_LIMIT_V,
) -> dict[str, float]:
    """Return base voltages shifted by matrix @ dv; the base mapping is untouched."""
    for name in dv:
        if name not in matrix.virtual_names:
            raise ConfigError(f"unknown virtual gate {name!r}; have {matrix.virtual_names}")
    dv_vec = np.array([float(dv.get(n, 0.0)) for n in matrix.virtual_names])
    delta = matrix.matrix @ dv_vec
    out = dict(base)
    for name, d in zip(matrix.physical_names, delta):
        out[name] = out.get(name, 0.0) + d
    check_breakdown(out, breakdown_limit_v)
    return out


def identity_virtual_gates(device: DeviceDescription) -> VirtualGateMatrix:
    """Default virtual-gate matrix: one virtual knob per physical gate."""
    names = tuple(g.gate_id for g in device.gates)
    return VirtualGateMatrix(
        virtual_names=tuple(f"v{n}" for n in names),
        physical_names=names,
        matrix=np.eye(len(names)),
    )
