"""Exact state-vector simulation of exchange-coupled spin qubits.

Conventions
-----------
* Qubit i occupies factor i of the Kronecker chain; basis index bit order
  follows the chain, |0> = spin down (ground), |1> = spin up.
* All Hamiltonians are expressed as H/h in Hz; ``evolve`` applies
  exp(-i 2 pi H t).  Spin operators are S = sigma/2.
* Frequencies are relative to a common rotating reference near the qubit
  Larmor scale (the absolute 15-16 GHz carrier drops out in the rotating
  wave approximation): qubit i carries a static detuning df_i.  Between
  pulses the state is stored in the multi-frame where every qubit rotates
  at its own frequency (no idle phase accumulation).  Segments that need a
  different frame (off-resonant drives, exchange windows coupling qubits
  with different df) are evolved in a per-segment frame; the exact Z
  rotations for the frame change are applied at the segment boundaries.
* An exchange window couples one adjacent pair with the isotropic
  Heisenberg term J(v) (S_a . S_b - 1/4), J(v) = A exp(B v), and shifts
  both qubits of the pair by their spectroscopy slope times the pulse
  amplitude (micromagnet displacement proxy).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .fits import readout_fidelity_from_snr

_SX = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SY = 0.5 * np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
# basis index 0 = spin down (ground): Sz = diag(-1/2, +1/2)
_SZ = 0.5 * np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)
_ID = np.eye(2, dtype=complex)

NORM_TOL = 1e-9

_op_cache: dict = {}


def _single(n: int, i: int, op: np.ndarray) -> np.ndarray:
    mats = [_ID] * n
    mats[i] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def spin_ops(n: int):
    """Cached per-qubit (Sx, Sy, Sz) operators on the 2^n space."""
    if n not in _op_cache:
        _op_cache[n] = (
            [_single(n, i, _SX) for i in range(n)],
            [_single(n, i, _SY) for i in range(n)],
            [_single(n, i, _SZ) for i in range(n)],
        )
    return _op_cache[n]


def heisenberg_term(n: int, a: int, b: int) -> np.ndarray:
    """S_a . S_b - 1/4: zero on triplets, -1 on the singlet of the pair."""
    key = ("heis", n, a, b)
    if key not in _op_cache:
        sx, sy, sz = spin_ops(n)
        _op_cache[key] = (
            sx[a] @ sx[b] + sy[a] @ sy[b] + sz[a] @ sz[b] - 0.25 * np.eye(2**n)
        )
    return _op_cache[key]


@dataclass(frozen=True)
class ExchangePair:
    """Exponential exchange calibration J(v) = a_hz * exp(b_per_v * v)."""

    qubits: tuple[int, int]
    a_hz: float
    b_per_v: float

    def j_hz(self, amplitude_v: float) -> float:
        return self.a_hz * np.exp(self.b_per_v * amplitude_v)


@dataclass(frozen=True)
class SpinSystem:
    """Static description of 2-5 exchange-coupled single-spin qubits."""

    detunings_hz: tuple[float, ...]
    spectroscopy_slopes_hz_per_v: tuple[float, ...]
    exchange: tuple[ExchangePair, ...]
    rabi_rate_hz: float = 2e6
    base_frequency_hz: float = 15.5e9
    qubit_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.detunings_hz)
        if not 2 <= n <= 5:
            raise ConfigError(f"spin system supports 2-5 qubits, got {n}")
        if len(self.spectroscopy_slopes_hz_per_v) != n:
            raise ConfigError("spectroscopy slope list must match the qubit count")
        diffs = {round(abs(a - b)) for k, a in enumerate(self.detunings_hz)
                 for b in self.detunings_hz[k + 1:]}
        if 0 in diffs or len(diffs) < n * (n - 1) // 2:
            raise ConfigError("qubit detunings must yield distinct pairwise differences")
        seen = set()
        for pair in self.exchange:
            a, b = pair.qubits
            if not (0 <= a < n and 0 <= b < n and abs(a - b) == 1):
                raise ConfigError(f"exchange pair {pair.qubits} is not an adjacent qubit pair")
            if pair.a_hz <= 0:
                raise ConfigError(f"exchange pair {pair.qubits}: a_hz must be > 0")
            key = tuple(sorted(pair.qubits))
            if key in seen:
                raise ConfigError(f"duplicate exchange pair {pair.qubits}")
            seen.add(key)
        if not self.qubit_names:
            object.__setattr__(self, "qubit_names",
                               tuple(f"Q{i + 1}" for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.detunings_hz)

    def qubit_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            i = int(name_or_index)
        else:
            if name_or_index not in self.qubit_names:
                raise ConfigError(f"unknown qubit {name_or_index!r}; have {self.qubit_names}")
            i = self.qubit_names.index(name_or_index)
        if not 0 <= i < self.n:
            raise ConfigError(f"qubit index {i} out of range for {self.n} qubits")
        return i

    def pair_indices(self, pair) -> tuple[int, int]:
        a, b = (self.qubit_index(q) for q in pair)
        if abs(a - b) != 1:
            raise ConfigError(f"{pair} is not an adjacent pair")
        return (a, b) if a < b else (b, a)

    def exchange_pair(self, pair) -> ExchangePair:
        key = self.pair_indices(pair)
        for p in self.exchange:
            if tuple(sorted(p.qubits)) == key:
                return p
        raise ConfigError(f"no exchange calibration for pair {pair}")

    def j_hz(self, pair, amplitude_v: float) -> float:
        return self.exchange_pair(pair).j_hz(amplitude_v)

    @classmethod
    def from_config(cls, spin_doc: Mapping, qubit_names: Sequence[str] | None = None) -> "SpinSystem":
        """Build from the optional ``spin`` section of a device config."""
        for key in ("detunings_hz", "exchange"):
            if key not in spin_doc:
                raise ConfigError(f"spin: missing field {key!r}")
        detunings = tuple(float(x) for x in spin_doc["detunings_hz"])
        n = len(detunings)
        names = tuple(qubit_names) if qubit_names else tuple(f"Q{i + 1}" for i in range(n))
        slopes = spin_doc.get("spectroscopy_slopes_hz_per_v", [0.0] * n)
        pairs = []
        for entry in spin_doc["exchange"]:
            qa, qb = entry["pair"]
            ia = names.index(qa) if qa in names else int(qa)
            ib = names.index(qb) if qb in names else int(qb)
            pairs.append(ExchangePair(qubits=(ia, ib), a_hz=float(entry["a_hz"]),
                                      b_per_v=float(entry["b_per_v"])))
        return cls(
            detunings_hz=detunings,
            spectroscopy_slopes_hz_per_v=tuple(float(s) for s in slopes),
            exchange=tuple(pairs),
            rabi_rate_hz=float(spin_doc.get("rabi_rate_hz", 2e6)),
            base_frequency_hz=float(spin_doc.get("base_frequency_hz", 15.5e9)),
            qubit_names=names,
        )


# --- pulse elements ---------------------------------------------------------


@dataclass(frozen=True)
class MicrowaveDrive:
    """Resonant or detuned drive; f_mw_hz is relative to the common reference."""

    target: int
    f_mw_hz: float
    rabi_rate_hz: float
    duration_s: float
    phase_rad: float = 0.0


@dataclass(frozen=True)
class ExchangeWindow:
    pair: tuple[int, int]
    amplitude_v: float
    duration_s: float


@dataclass(frozen=True)
class Idle:
    duration_s: float
    extra_detunings_hz: tuple[float, ...] | None = None  # per qubit, for echo tests


@dataclass(frozen=True)
class ParityMeasure:
    pair: tuple[int, int]


@dataclass(frozen=True)
class ConditionalPi:
    """Classically conditioned ideal pi pulse on the last parity outcome."""

    target: int
    condition: str = "even"


@dataclass(frozen=True)
class IdealPulse:
    """Instantaneous rotation about cos(phase) X + sin(phase) Y."""

    target: int
    angle_rad: float
    phase_rad: float = 0.0


@dataclass(frozen=True)
class IdealZCNOT:
    """Instantaneous pi on the target conditioned on the control spin state."""

    control: int
    target: int
    control_state: str = "up"


PulseElement = (
    MicrowaveDrive | ExchangeWindow | Idle | ParityMeasure | ConditionalPi
    | IdealPulse | IdealZCNOT
)


@dataclass(frozen=True)
class ReadoutModel:
    """Two-Gaussian parity readout: outcome flips with probability 1 - F(snr)."""

    snr: float
    integration_time_s: float = 2e-6
    seed: int = 0

    def __post_init__(self):
        if not self.snr > 0:
            raise ConfigError("ReadoutModel.snr must be > 0")

    @property
    def fidelity(self) -> float:
        return readout_fidelity_from_snr(self.snr)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


# --- states -----------------------------------------------------------------


def basis_state(pattern: str) -> np.ndarray:
    """State vector from a string like 'du' (qubit 0 down, qubit 1 up)."""
    index = 0
    for ch in pattern:
        if ch not in "du01":
            raise ConfigError(f"basis pattern may contain only d/u/0/1, got {pattern!r}")
        index = 2 * index + (1 if ch in "u1" else 0)
    state = np.zeros(2 ** len(pattern), dtype=complex)
    state[index] = 1.0
    return state


def ground_state(n: int) -> np.ndarray:
    return basis_state("d" * n)


def excitation_probability(state: np.ndarray, qubit: int, n: int) -> float:
    """Probability that one qubit is spin up."""
    probs = np.abs(state) ** 2
    bit = n - 1 - qubit
    idx = (np.arange(len(state)) >> bit) & 1
    return float(probs[idx == 1].sum())


# --- Hamiltonian and propagation --------------------------------------------


def _segment_frame(system: SpinSystem, drives, windows) -> np.ndarray:
    """Per-qubit frame frequencies making every segment term static.

    Qubits joined by an exchange window must share a frame; a driven qubit's
    frame must equal its drive frequency.  Exchange groups without a drive
    use the common reference (frame 0); untouched qubits stay in their own
    rotating frame.
    """
    n = system.n
    group = list(range(n))

    def find(i):
        while group[i] != i:
            group[i] = group[group[i]]
            i = group[i]
        return i

    for w in windows:
        a, b = w.pair
        group[find(a)] = find(b)
    frame_of_group: dict[int, float] = {}
    for d in drives:
        g = find(d.target)
        if g in frame_of_group and frame_of_group[g] != d.f_mw_hz:
            raise ConfigError(
                "simultaneous drives at different frequencies on exchange-coupled qubits"
            )
        frame_of_group[g] = d.f_mw_hz
    frame = np.empty(n)
    window_qubits = {q for w in windows for q in w.pair}
    for i in range(n):
        g = find(i)
        if g in frame_of_group:
            frame[i] = frame_of_group[g]
        elif i in window_qubits:
            frame[i] = 0.0  # common reference keeps the Heisenberg term static
        else:
            frame[i] = system.detunings_hz[i]
    return frame


def build_hamiltonian(
    system: SpinSystem,
    drives: Sequence[MicrowaveDrive] = (),
    windows: Sequence[ExchangeWindow] = (),
    frame_hz: np.ndarray | None = None,
) -> np.ndarray:
    """Segment Hamiltonian H/h in Hz for simultaneous drives and windows.

    In the segment frame each qubit carries delta_i = df_i - frame_i (plus
    slope shifts from active windows), drives add Omega (cos phi Sx +
    sin phi Sy) on their target, and each window adds J(v) (S.S - 1/4).
    """
    targets = [d.target for d in drives]
    if len(set(targets)) != len(targets):
        raise ConfigError("simultaneous drives on one qubit are not allowed")
    n = system.n
    if frame_hz is None:
        frame_hz = _segment_frame(system, drives, windows)
    sx, sy, sz = spin_ops(n)
    h = np.zeros((2**n, 2**n), dtype=complex)
    shifts = np.zeros(n)
    for w in windows:
        a, b = system.pair_indices(w.pair)
        shifts[a] += system.spectroscopy_slopes_hz_per_v[a] * w.amplitude_v
        shifts[b] += system.spectroscopy_slopes_hz_per_v[b] * w.amplitude_v
        h += system.j_hz((a, b), w.amplitude_v) * heisenberg_term(n, a, b)
    for i in range(n):
        delta = system.detunings_hz[i] + shifts[i] - frame_hz[i]
        if delta != 0.0:
            h += delta * sz[i]
    for d in drives:
        if d.rabi_rate_hz < 0:
            raise ConfigError("rabi_rate_hz must be >= 0")
        op = np.cos(d.phase_rad) * sx[d.target] + np.sin(d.phase_rad) * sy[d.target]
        h += d.rabi_rate_hz * op
    h = 0.5 * (h + h.conj().T)
    return h


def evolve(state: np.ndarray, h_hz: np.ndarray, dt_s: float) -> np.ndarray:
    """Propagate by exp(-i 2 pi H dt) via Hermitian eigendecomposition."""
    if dt_s < 0:
        raise ConfigError("evolution time must be >= 0")
    if dt_s == 0.0:
        return state.copy()
    energies, vectors = np.linalg.eigh(h_hz)
    phases = np.exp(-2j * np.pi * energies * dt_s)
    out = vectors @ (phases * (vectors.conj().T @ state))
    norm = np.linalg.norm(out)
    if abs(norm - 1.0) > NORM_TOL:
        raise ConfigError(f"propagator lost unitarity: |norm - 1| = {abs(norm - 1.0):.2e}")
    return out


def _frame_shift(state: np.ndarray, system: SpinSystem, dnu_hz: np.ndarray, t_s: float) -> np.ndarray:
    """Apply exp(+i 2 pi t sum_i dnu_i Sz_i) for a frame change at time t."""
    if t_s == 0.0 or not np.any(dnu_hz):
        return state
    n = system.n
    bits = (np.arange(2**n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    sz_diag = bits - 0.5  # Sz eigenvalue per qubit: up -> +1/2, down -> -1/2
    phase = 2.0 * np.pi * t_s * (sz_diag @ dnu_hz)
    return state * np.exp(1j * phase)


def _rotation(system: SpinSystem, target: int, angle: float, phase: float) -> np.ndarray:
    sx, sy, _ = spin_ops(system.n)
    gen = np.cos(phase) * sx[target] + np.sin(phase) * sy[target]
    energies, vectors = np.linalg.eigh(gen)
    return (vectors * np.exp(-1j * angle * energies)) @ vectors.conj().T


def _zcnot_unitary(system: SpinSystem, el: IdealZCNOT) -> np.ndarray:
    n = system.n
    dim = 2**n
    u = np.eye(dim, dtype=complex)
    cbit, tbit = n - 1 - el.control, n - 1 - el.target
    want = 1 if el.control_state == "up" else 0
    for idx in range(dim):
        if (idx >> cbit) & 1 == want and (idx >> tbit) & 1 == 0:
            jdx = idx | (1 << tbit)
            u[idx, idx] = 0.0
            u[jdx, jdx] = 0.0
            u[idx, jdx] = -1.0j  # pi rotation about x within the target doublet
            u[jdx, idx] = -1.0j
    return u


def parity_projectors(n: int, pair: tuple[int, int]):
    """Diagonal even/odd projectors for a qubit pair."""
    key = ("parity", n, tuple(sorted(pair)))
    if key not in _op_cache:
        a, b = pair
        bits = np.arange(2**n)
        pa = (bits >> (n - 1 - a)) & 1
        pb = (bits >> (n - 1 - b)) & 1
        even = (pa == pb).astype(float)
        _op_cache[key] = (even, 1.0 - even)
    return _op_cache[key]


def parity_probability(state: np.ndarray, pair: tuple[int, int], n: int, which: str = "odd") -> float:
    even, odd = parity_projectors(n, pair)
    weights = odd if which == "odd" else even
    return float(np.sum(weights * np.abs(state) ** 2))


def parity_measure(
    state: np.ndarray,
    pair: tuple[int, int],
    readout: ReadoutModel | None = None,
    rng: np.random.Generator | None = None,
):
    """Projective parity measurement with a classical readout error.

    Returns (outcome, post_state).  The post state is the true projected
    state; only the reported outcome suffers the symmetric bit flip with
    probability 1 - F(snr).  With ``readout=None`` the readout is ideal.
    """
    n = int(np.log2(len(state)))
    if rng is None:
        rng = readout.rng() if readout is not None else np.random.default_rng(0)
    even, odd = parity_projectors(n, pair)
    p_even = float(np.sum(even * np.abs(state) ** 2))
    is_even = bool(rng.random() < p_even)
    weights = even if is_even else odd
    post = state * weights
    norm = np.linalg.norm(post)
    if norm == 0.0:  # numerically empty branch; take the other one
        is_even = not is_even
        weights = even if is_even else odd
        post = state * weights
        norm = np.linalg.norm(post)
    post = post / norm
    outcome = "even" if is_even else "odd"
    if readout is not None:
        if rng.random() < 1.0 - readout.fidelity:
            outcome = "odd" if outcome == "even" else "even"
    return outcome, post


@dataclass
class MeasurementResult:
    state: np.ndarray
    outcomes: tuple = ()
    pre_measurement_state: np.ndarray | None = None


def sequence_unitary(system: SpinSystem, sequence: Sequence) -> np.ndarray:
    """Total unitary of a measurement-free sequence (column by column)."""
    dim = 2**system.n
    u = np.zeros((dim, dim), dtype=complex)
    for k in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[k] = 1.0
        u[:, k] = run_sequence(system, e, sequence).state
    return u


def run_sequence(
    system: SpinSystem,
    state: np.ndarray,
    sequence: Sequence,
    readout: ReadoutModel | None = None,
    rng: np.random.Generator | None = None,
) -> MeasurementResult:
    """Apply pulse elements in order; tuples group simultaneous elements.

    The state enters and leaves in the baseline multi-frame (each qubit
    rotating at its own frequency); exact Z rotations are inserted at every
    frame change.
    """
    if rng is None and readout is not None:
        rng = readout.rng()
    baseline = np.asarray(system.detunings_hz, dtype=float)
    t_now = 0.0
    psi = np.asarray(state, dtype=complex).copy()
    outcomes: list = []
    pre_measure = None
    for raw in sequence:
        group = raw if isinstance(raw, tuple) else (raw,)
        drives = [e for e in group if isinstance(e, MicrowaveDrive)]
        windows = [e for e in group if isinstance(e, ExchangeWindow)]
        idles = [e for e in group if isinstance(e, Idle)]
        instant = [e for e in group if isinstance(e, (ParityMeasure, ConditionalPi, IdealPulse, IdealZCNOT))]
        if instant and (drives or windows or idles):
            raise ConfigError("instantaneous elements cannot be grouped with timed ones")
        if instant:
            for el in instant:
                if isinstance(el, ParityMeasure):
                    pre_measure = psi.copy()
                    pair = system.pair_indices(el.pair)
                    outcome, psi = parity_measure(psi, pair, readout, rng)
                    outcomes.append((pair, outcome))
                elif isinstance(el, ConditionalPi):
                    if not outcomes:
                        raise ConfigError("ConditionalPi requires a preceding ParityMeasure")
                    if outcomes[-1][1] == el.condition:
                        psi = _rotation(system, system.qubit_index(el.target), np.pi, 0.0) @ psi
                elif isinstance(el, IdealPulse):
                    psi = _rotation(system, system.qubit_index(el.target), el.angle_rad, el.phase_rad) @ psi
                else:
                    psi = _zcnot_unitary(system, el) @ psi
            continue
        durations = {e.duration_s for e in group}
        if len(durations) != 1:
            raise ConfigError("simultaneous elements must share one duration")
        dt = durations.pop()
        if dt < 0:
            raise ConfigError("element durations must be >= 0")
        extra = np.zeros(system.n)
        for e in idles:
            if e.extra_detunings_hz is not None:
                extra += np.asarray(e.extra_detunings_hz, dtype=float)
        frame = _segment_frame(system, drives, windows)
        h = build_hamiltonian(system, drives, windows, frame_hz=frame)
        if np.any(extra):
            _, _, sz = spin_ops(system.n)
            for i in range(system.n):
                if extra[i]:
                    h = h + extra[i] * sz[i]
        psi = _frame_shift(psi, system, frame - baseline, t_now)
        psi = evolve(psi, h, dt)
        t_now += dt
        psi = _frame_shift(psi, system, baseline - frame, t_now)
    return MeasurementResult(state=psi, outcomes=tuple(outcomes), pre_measurement_state=pre_measure)
