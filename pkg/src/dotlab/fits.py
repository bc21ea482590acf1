"""Fitting and reporting: damped sinusoids, exponential tunability, readout SNR.

The decoupled-CZ traces are fit to offset + A exp(-t/T2) cos(2 pi f t + phi);
the oscillation frequency equals half the exchange coupling.  Exchange
tunability is the log-space slope of J = A exp(B v), quoted in decades per
volt (B / ln 10).  Parity readout fidelity follows the symmetric two-Gaussian
model: F = 1 - erfc(snr / (2 sqrt 2)) / 2 with snr = peak separation over the
single-Gaussian sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ConfigError, FitError

LN10 = math.log(10.0)


@dataclass(frozen=True)
class DampedSinusoidFit:
    amplitude: float
    frequency_hz: float
    decay_time_s: float
    phase_rad: float
    offset: float
    residual_rms: float

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + self.amplitude * np.exp(-t / self.decay_time_s) * np.cos(
            2.0 * np.pi * self.frequency_hz * t + self.phase_rad
        )


@dataclass(frozen=True)
class ExponentialFit:
    a_hz: float
    b_per_v: float
    covariance: np.ndarray  # of (ln A, B)

    @property
    def tunability_dec_per_v(self) -> float:
        return self.b_per_v / LN10

    def j_hz(self, v):
        return self.a_hz * np.exp(self.b_per_v * np.asarray(v, dtype=float))


@dataclass(frozen=True)
class TunabilityReport:
    pairs: tuple[str, ...]
    interchanged_dec_per_v: tuple[float, ...]
    conventional_dec_per_v: tuple[float, ...]
    ratios: tuple[float, ...]  # interchanged / conventional
    flagged: tuple[str, ...]  # pairs where interchanged <= conventional

    def to_dict(self) -> dict:
        return {
            "pairs": list(self.pairs),
            "interchanged_dec_per_v": list(self.interchanged_dec_per_v),
            "conventional_dec_per_v": list(self.conventional_dec_per_v),
            "ratios": list(self.ratios),
            "flagged": list(self.flagged),
        }


@dataclass(frozen=True)
class LeverArmComparison:
    lever_ratios: tuple[float, ...]
    tunability_ratios: tuple[float, ...]
    excess: tuple[float, ...]  # tunability ratio / lever-arm ratio
    beyond_lever_arm: tuple[int, ...]  # indices with excess > 1

    def to_dict(self) -> dict:
        return {
            "lever_ratios": list(self.lever_ratios),
            "tunability_ratios": list(self.tunability_ratios),
            "excess": list(self.excess),
            "beyond_lever_arm": list(self.beyond_lever_arm),
        }


def _initial_guess(t: np.ndarray, p: np.ndarray):
    """Frequency from a zero-padded periodogram peak, phase/amplitude by
    linear regression at that frequency."""
    n = len(t)
    dt = t[1] - t[0]
    detrended = p - p.mean()
    if np.allclose(detrended, 0.0):
        raise FitError("no spectral peak above noise floor (constant trace)")
    padded = np.zeros(8 * n)
    padded[:n] = detrended
    spectrum = np.abs(np.fft.rfft(padded)) ** 2
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    floor = float(np.median(spectrum[1:]))
    if spectrum[k] < 5.0 * floor:
        raise FitError("no spectral peak above noise floor")
    # parabolic interpolation around the peak bin
    if 1 <= k < len(spectrum) - 1:
        y0, y1, y2 = spectrum[k - 1], spectrum[k], spectrum[k + 1]
        denom = y0 - 2.0 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    f0 = (k + shift) / (len(padded) * dt)
    # linear LS for a cos + b sin at f0
    c = np.cos(2.0 * np.pi * f0 * t)
    s = np.sin(2.0 * np.pi * f0 * t)
    design = np.column_stack([np.ones(n), c, s])
    coef, *_ = np.linalg.lstsq(design, p, rcond=None)
    offset0, a_cos, b_sin = coef
    amp0 = float(np.hypot(a_cos, b_sin))
    phase0 = float(np.arctan2(-b_sin, a_cos))
    return offset0, amp0, f0, phase0


def fit_damped_sinusoid(t_s, p) -> DampedSinusoidFit:
    """Fit offset + A exp(-t/T2) cos(2 pi f t + phi) to a trace.

    The frequency seed comes from the discrete spectrum; all five parameters
    are then refined with damped Gauss-Newton (Levenberg-Marquardt) to a
    relative step below 1e-9.
    """
    t = np.asarray(t_s, dtype=float)
    p = np.asarray(p, dtype=float)
    if t.ndim != 1 or t.shape != p.shape:
        raise FitError("trace must be matching 1-D time and value arrays")
    if len(t) < 8:
        raise FitError(f"insufficient span: need >= 8 samples, got {len(t)}")
    order = np.argsort(t)
    t, p = t[order], p[order]
    span = t[-1] - t[0]
    offset0, amp0, f0, phase0 = _initial_guess(t, p)
    if span * f0 < 1.5:
        raise FitError(
            f"insufficient span: {span * f0:.2f} oscillation periods covered, need >= 1.5"
        )

    # normalized time keeps the Jacobian well conditioned
    tau = (t - t[0]) / span
    f0n = f0 * span
    phase0n = phase0 + 2.0 * np.pi * f0 * t[0]

    def model(theta, tau):
        offset, amp, fn, log_decay, phi = theta
        return offset + amp * np.exp(-tau / np.exp(log_decay)) * np.cos(
            2.0 * np.pi * fn * tau + phi
        )

    def residuals(theta):
        return model(theta, tau) - p

    theta0 = np.array([offset0, amp0, f0n, 0.0, phase0n])
    initial_rms = float(np.sqrt(np.mean(residuals(theta0) ** 2)))
    result = least_squares(residuals, theta0, method="lm", xtol=1e-9, max_nfev=200 * 6)
    theta = result.x
    rms = float(np.sqrt(np.mean(result.fun ** 2)))
    if not result.success or not np.all(np.isfinite(theta)):
        raise FitError(
            f"damped-sinusoid refinement did not converge: {result.message} "
            f"(nfev={result.nfev}, rms={rms:.3e})"
        )
    if rms > initial_rms:  # refinement must never worsen the seed
        theta, rms = theta0, initial_rms
    offset, amp, fn, log_decay, phi = theta
    freq = fn / span
    decay = float(np.exp(log_decay) * span)
    if freq < 0:  # cos is even: fold the sign into the phase
        freq, phi = -freq, -phi
    if amp < 0:
        amp, phi = -amp, phi + np.pi
    phase = float(np.remainder(phi - 2.0 * np.pi * freq * t[0] + np.pi, 2.0 * np.pi) - np.pi)
    return DampedSinusoidFit(
        amplitude=float(amp),
        frequency_hz=float(freq),
        decay_time_s=decay,
        phase_rad=phase,
        offset=float(offset),
        residual_rms=rms,
    )


def extract_j_from_dcz(fit: DampedSinusoidFit) -> float:
    """Exchange coupling from a decoupled-CZ trace: the fitted frequency is J/2."""
    return 2.0 * fit.frequency_hz


def fit_exponential(v_volts, j_hz, window: tuple[float, float] | None = None) -> ExponentialFit:
    """Least squares of ln J against v (exact linear solve).

    ``window`` restricts the fit to v in [v_min, v_max], matching the
    practice of fitting only the few-MHz range of a coupling curve.
    """
    v = np.asarray(v_volts, dtype=float)
    j = np.asarray(j_hz, dtype=float)
    if v.shape != j.shape or v.ndim != 1:
        raise FitError("v and J must be matching 1-D arrays")
    if window is not None:
        keep = (v >= window[0]) & (v <= window[1])
        v, j = v[keep], j[keep]
    if len(v) < 2:
        raise FitError(f"exponential fit needs >= 2 points, have {len(v)}")
    if np.any(j <= 0):
        raise FitError("exponential fit requires strictly positive J values")
    if np.ptp(v) == 0:
        raise FitError("exponential fit is degenerate: all voltages equal")
    y = np.log(j)
    design = np.column_stack([np.ones(len(v)), v])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    ln_a, b = coef
    resid = y - design @ coef
    dof = len(v) - 2
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    covariance = sigma2 * np.linalg.inv(design.T @ design)
    return ExponentialFit(a_hz=float(np.exp(ln_a)), b_per_v=float(b), covariance=covariance)


def readout_fidelity_from_snr(snr: float, convention_scale: float = 1.0) -> float:
    """Per-shot assignment fidelity of two equal-variance Gaussians.

    With peak separation snr * sigma and a midpoint threshold, the error is
    the Gaussian tail beyond snr/2: F = 1 - erfc(snr / (2 sqrt 2)) / 2.
    ``convention_scale`` rescales the SNR for alternative definitions.
    """
    if snr <= 0:
        raise ConfigError("snr must be > 0")
    return 1.0 - 0.5 * math.erfc(convention_scale * snr / (2.0 * math.sqrt(2.0)))


def readout_error_from_snr(snr: float, convention_scale: float = 1.0) -> float:
    """Complementary tail: 1 - readout_fidelity_from_snr(snr)."""
    if snr <= 0:
        raise ConfigError("snr must be > 0")
    return 0.5 * math.erfc(convention_scale * snr / (2.0 * math.sqrt(2.0)))


def tunability_report(
    curves: dict[str, dict[str, tuple]],
    window: tuple[float, float] | None = None,
) -> TunabilityReport:
    """Per-pair exponential fits and interchanged/conventional ratios.

    ``curves[pair][strategy]`` holds (v, J) arrays for each of the two
    strategies.  Pairs where the interchanged tunability does not exceed the
    conventional one are flagged.
    """
    pairs = tuple(curves.keys())
    inter, conv, ratios, flagged = [], [], [], []
    for pair in pairs:
        per_strategy = curves[pair]
        for strategy in ("interchanged", "conventional"):
            if strategy not in per_strategy:
                raise ConfigError(f"pair {pair!r}: missing {strategy} curve")
        fit_i = fit_exponential(*per_strategy["interchanged"], window=window)
        fit_c = fit_exponential(*per_strategy["conventional"], window=window)
        ti, tc = fit_i.tunability_dec_per_v, fit_c.tunability_dec_per_v
        inter.append(ti)
        conv.append(tc)
        ratios.append(ti / tc)
        if ti <= tc:
            flagged.append(pair)
    return TunabilityReport(
        pairs=pairs,
        interchanged_dec_per_v=tuple(inter),
        conventional_dec_per_v=tuple(conv),
        ratios=tuple(ratios),
        flagged=tuple(flagged),
    )


def lever_arm_comparison(lever_ratios, tunability_ratios) -> LeverArmComparison:
    """Per-pair excess of the coupling-tunability ratio over the lever-arm ratio."""
    lever = tuple(float(x) for x in lever_ratios)
    tun = tuple(float(x) for x in tunability_ratios)
    if len(lever) != len(tun):
        raise ConfigError("lever and tunability ratio lists must have equal length")
    if any(x == 0 for x in lever):
        raise ConfigError("lever-arm ratios must be nonzero")
    excess = tuple(t / l for t, l in zip(tun, lever))
    return LeverArmComparison(
        lever_ratios=lever,
        tunability_ratios=tun,
        excess=excess,
        beyond_lever_arm=tuple(i for i, e in enumerate(excess) if e > 1.0),
    )
