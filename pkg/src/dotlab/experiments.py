"""Pulse-sequence experiments: Rabi, exchange spectroscopy, decoupled CZ.

Exact mode returns probabilities computed from the state vector; passing
``shots > 0`` samples binomial counts with a per-point RNG stream derived
from (seed, point index), so traces are bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .spins import (
    ConditionalPi,
    ExchangeWindow,
    IdealPulse,
    IdealZCNOT,
    Idle,
    MicrowaveDrive,
    ParityMeasure,
    ReadoutModel,
    SpinSystem,
    excitation_probability,
    ground_state,
    parity_probability,
    run_sequence,
    spin_ops,
)


def _point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def _readout_mix(p: float, readout: ReadoutModel | None) -> float:
    if readout is None:
        return p
    f = readout.fidelity
    return f * p + (1.0 - f) * (1.0 - p)


def _sample(p: float, shots: int, rng: np.random.Generator) -> float:
    return float(rng.binomial(shots, min(max(p, 0.0), 1.0))) / shots


def amplitude_for_j(system: SpinSystem, pair, j_hz: float) -> float:
    """Barrier amplitude at which the pair's calibration gives J(v) = j_hz."""
    cal = system.exchange_pair(pair)
    if j_hz <= 0:
        raise ConfigError("target J must be > 0")
    return float(np.log(j_hz / cal.a_hz) / cal.b_per_v)


def simulate_rabi(
    system: SpinSystem,
    target,
    t_values,
    rabi_rate_hz: float | None = None,
    detuning_hz: float = 0.0,
    readout: ReadoutModel | None = None,
    shots: int = 0,
    seed: int = 0,
):
    """Spin-flip (blockade) probability of one qubit against burst duration.

    The drive is applied at the qubit's resonance plus ``detuning_hz``; all
    couplings are off, so the trace follows the generalized Rabi formula.
    """
    q = system.qubit_index(target)
    omega = system.rabi_rate_hz if rabi_rate_hz is None else rabi_rate_hz
    f_mw = system.detunings_hz[q] + detuning_hz
    t_values = np.asarray(t_values, dtype=float)
    probs = np.empty_like(t_values)
    psi0 = ground_state(system.n)
    for i, t in enumerate(t_values):
        res = run_sequence(
            system, psi0,
            [MicrowaveDrive(target=q, f_mw_hz=f_mw, rabi_rate_hz=omega, duration_s=float(t))],
        )
        p = _readout_mix(excitation_probability(res.state, q, system.n), readout)
        probs[i] = _sample(p, shots, _point_rng(seed, i)) if shots else p
    return t_values, probs


def simulate_exchange_spectroscopy(
    system: SpinSystem,
    pair,
    f_values,
    amplitudes_v,
    probe_rabi_hz: float | None = None,
    probe_duration_s: float | None = None,
    readout: ReadoutModel | None = None,
    shots: int = 0,
    seed: int = 0,
):
    """Target flip probability over (barrier amplitude, drive frequency).

    For each point the control qubit is first rotated by pi/2 about x, then
    the barrier pulse and the probe drive run together.  The two resonance
    branches are separated by the exchange coupling and their common center
    follows the micromagnet slope.
    """
    control, target = system.pair_indices(pair)
    omega = probe_rabi_hz if probe_rabi_hz is not None else system.rabi_rate_hz
    t_probe = probe_duration_s if probe_duration_s is not None else 1.0 / (2.0 * omega)
    f_values = np.asarray(f_values, dtype=float)
    amplitudes_v = np.asarray(amplitudes_v, dtype=float)
    out = np.empty((len(amplitudes_v), len(f_values)))
    psi0 = ground_state(system.n)
    idx = 0
    for i, v in enumerate(amplitudes_v):
        for j, f_mw in enumerate(f_values):
            seq = [
                IdealPulse(target=control, angle_rad=np.pi / 2.0),
                (
                    MicrowaveDrive(target=target, f_mw_hz=float(f_mw),
                                   rabi_rate_hz=omega, duration_s=t_probe),
                    ExchangeWindow(pair=(control, target), amplitude_v=float(v),
                                   duration_s=t_probe),
                ),
            ]
            res = run_sequence(system, psi0, seq)
            p = _readout_mix(excitation_probability(res.state, target, system.n), readout)
            out[i, j] = _sample(p, shots, _point_rng(seed, idx)) if shots else p
            idx += 1
    return amplitudes_v, f_values, out


def spectroscopy_branches(f_values, probs) -> tuple[float, ...]:
    """Resonance frequencies of up to two branches in one spectroscopy row.

    Local maxima are ranked by height and refined by parabolic
    interpolation; a single-branch row returns one frequency.
    """
    f = np.asarray(f_values, dtype=float)
    p = np.asarray(probs, dtype=float)
    # the relative floor rejects the sin^2 sidelobes of a pi probe (first
    # sidelobe is ~0.13 of the main line)
    floor = max(0.05, 0.25 * p.max())
    peaks = [i for i in range(1, len(p) - 1) if p[i] >= p[i - 1] and p[i] >= p[i + 1] and p[i] > floor]
    peaks.sort(key=lambda i: -p[i])
    chosen: list[int] = []
    for i in peaks:
        if all(abs(i - j) > 2 for j in chosen):
            chosen.append(i)
        if len(chosen) == 2:
            break
    centers = []
    for i in sorted(chosen):
        y0, y1, y2 = p[i - 1], p[i], p[i + 1]
        denom = y0 - 2.0 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        centers.append(float(f[i] + shift * (f[1] - f[0])))
    return tuple(centers)


def pair_spectrum(system: SpinSystem, pair, amplitude_v: float, target: int | None = None):
    """Exact 4x4 spectrum of one coupled pair in the common frame.

    Returns (energies, transition frequencies) for flipping ``target``
    (default: the higher-indexed qubit of the pair) with its partner down
    and up respectively.
    """
    a, b = system.pair_indices(pair)
    if target is None:
        target = b
    if target not in (a, b):
        raise ConfigError(f"target {target} is not in pair {(a, b)}")
    j = system.j_hz((a, b), amplitude_v)
    da = system.detunings_hz[a] + system.spectroscopy_slopes_hz_per_v[a] * amplitude_v
    db = system.detunings_hz[b] + system.spectroscopy_slopes_hz_per_v[b] * amplitude_v
    sx, sy, sz = spin_ops(2)
    h = da * sz[0] + db * sz[1] + j * (
        sx[0] @ sx[1] + sy[0] @ sy[1] + sz[0] @ sz[1] - 0.25 * np.eye(4)
    )
    energies, vectors = np.linalg.eigh(h)
    # identify dressed states by overlap with the bare basis dd, du, ud, uu
    labels = {}
    for bare in range(4):
        labels[bare] = int(np.argmax(np.abs(vectors[bare, :]) ** 2))
    if target == b:
        f_control_down = energies[labels[0b01]] - energies[labels[0b00]]  # dd -> du
        f_control_up = energies[labels[0b11]] - energies[labels[0b10]]  # ud -> uu
    else:
        f_control_down = energies[labels[0b10]] - energies[labels[0b00]]  # dd -> ud
        f_control_up = energies[labels[0b11]] - energies[labels[0b01]]  # du -> uu
    return energies, (float(f_control_down), float(f_control_up))


def branch_separation_exact(system: SpinSystem, pair, amplitude_v: float) -> float:
    """Difference of the two target-flip branch frequencies (equals J)."""
    _, (f_down, f_up) = pair_spectrum(system, pair, amplitude_v)
    return abs(f_down - f_up)


def dcz_sequence(
    system: SpinSystem,
    pair,
    amplitude_v: float,
    tau_s: float,
    ideal_pulses: bool = True,
    rabi_rate_hz: float | None = None,
    idle_s: float = 0.0,
    extra_idle_detunings_hz: tuple[float, ...] | None = None,
) -> list:
    """Decoupled-CZ element list: X - J tau/2 - X^2(both) - J tau/2 - X^2(both) - X.

    Optional idle padding is placed immediately before and after each echo
    pulse pair; the pi pulses conjugate the trailing idle into the inverse
    of the leading one, so static detunings applied during the idles cancel
    exactly.
    """
    control, target = system.pair_indices(pair)
    omega = rabi_rate_hz if rabi_rate_hz is not None else system.rabi_rate_hz

    def x90(q):
        if ideal_pulses:
            return IdealPulse(target=q, angle_rad=np.pi / 2.0)
        return MicrowaveDrive(target=q, f_mw_hz=system.detunings_hz[q],
                              rabi_rate_hz=omega, duration_s=1.0 / (4.0 * omega))

    def x180(q):
        if ideal_pulses:
            return IdealPulse(target=q, angle_rad=np.pi)
        return MicrowaveDrive(target=q, f_mw_hz=system.detunings_hz[q],
                              rabi_rate_hz=omega, duration_s=1.0 / (2.0 * omega))

    def idle():
        if idle_s <= 0.0:
            return []
        return [Idle(duration_s=idle_s, extra_detunings_hz=extra_idle_detunings_hz)]

    window = lambda: ExchangeWindow(pair=(control, target), amplitude_v=amplitude_v,
                                    duration_s=tau_s / 2.0)
    seq: list = [x90(target), window()]
    seq += idle() + [x180(control), x180(target)] + idle()
    seq += [window()]
    seq += idle() + [x180(control), x180(target)] + idle()
    seq += [x90(target)]
    return seq


def simulate_dcz(
    system: SpinSystem,
    pair,
    amplitude_v: float,
    tau_values,
    ideal_pulses: bool = True,
    rabi_rate_hz: float | None = None,
    idle_s: float = 0.0,
    extra_idle_detunings_hz: tuple[float, ...] | None = None,
    readout: ReadoutModel | None = None,
    shots: int = 0,
    seed: int = 0,
):
    """Odd-parity probability of the pair against total exchange time.

    The intervening pi pulses echo out single-qubit phases, so the trace
    oscillates at half the exchange coupling set by the barrier amplitude.
    """
    control, target = system.pair_indices(pair)
    tau_values = np.asarray(tau_values, dtype=float)
    probs = np.empty_like(tau_values)
    psi0 = ground_state(system.n)
    for i, tau in enumerate(tau_values):
        seq = dcz_sequence(system, pair, amplitude_v, float(tau), ideal_pulses,
                           rabi_rate_hz, idle_s, extra_idle_detunings_hz)
        res = run_sequence(system, psi0, seq)
        p = _readout_mix(parity_probability(res.state, (control, target), system.n, "odd"), readout)
        probs[i] = _sample(p, shots, _point_rng(seed, i)) if shots else p
    return tau_values, probs


def residual_zz_coefficient(j_hz: float, rabi_rate_hz: float) -> float:
    """Dimensionless J/Omega controlling the parasitic ZZ term while driving."""
    if rabi_rate_hz <= 0:
        raise ConfigError("rabi_rate_hz must be > 0")
    return j_hz / rabi_rate_hz


def zcnot_elements(
    system: SpinSystem,
    pair,
    control: int,
    target: int,
    mode: str = "ideal",
    amplitude_v: float | None = None,
    rabi_rate_hz: float | None = None,
) -> list:
    """A z-conditioned NOT: flip ``target`` iff ``control`` is spin up.

    ``mode='ideal'`` applies the exact conditional-pi unitary; ``'physical'``
    drives the target at the exact control-up spectroscopy branch while the
    exchange window is open, so the off-branch rotation is suppressed by
    (Omega/J)^2.
    """
    if mode == "ideal":
        return [IdealZCNOT(control=control, target=target, control_state="up")]
    if mode != "physical":
        raise ConfigError(f"zcnot mode must be 'ideal' or 'physical', got {mode!r}")
    if amplitude_v is None:
        raise ConfigError("physical zCNOT needs a barrier amplitude")
    omega = rabi_rate_hz if rabi_rate_hz is not None else system.rabi_rate_hz
    _, (_, f_up) = pair_spectrum(system, pair, amplitude_v, target=target)
    duration = 1.0 / (2.0 * omega)
    return [(
        MicrowaveDrive(target=target, f_mw_hz=f_up, rabi_rate_hz=omega, duration_s=duration),
        ExchangeWindow(pair=system.pair_indices(pair), amplitude_v=amplitude_v,
                       duration_s=duration),
    )]


def initialize_odd_parity(
    system: SpinSystem,
    pair,
    use_zcnot: bool = False,
    zcnot_mode: str = "ideal",
    zcnot_amplitude_v: float | None = None,
    zcnot_rabi_hz: float | None = None,
) -> list:
    """Preparation procedure driving a pair into odd parity.

    The first stage measures the pair parity and applies a conditional pi to
    the inner (higher-indexed) qubit on an even outcome.  The optional second
    stage adds a z-conditioned NOT on the outer qubit, conditioned on the
    inner one, which pins the outer qubit to a definite spin state whichever
    odd basis state the measurement left; the inner qubit then carries the
    remaining randomness.
    """
    outer, inner = system.pair_indices(pair)
    seq: list = [ParityMeasure(pair=(outer, inner)),
                 ConditionalPi(target=inner, condition="even")]
    if not use_zcnot:
        return seq
    seq += zcnot_elements(system, pair, control=inner, target=outer, mode=zcnot_mode,
                          amplitude_v=zcnot_amplitude_v, rabi_rate_hz=zcnot_rabi_hz)
    return seq
