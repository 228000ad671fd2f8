"""Resonance fitting, effective-temperature inference, and decoherence metrics.

The two-pole power model fitted to driven transfer functions and noise
spectra is

    P(W) = A / ((W0^2 - W^2)^2 + G^2 W^2),

with resonant frequency W0 and damping G (both rad/s).  Band-limited rms
motion converts to an effective temperature by equating the measured band
power to a thermally driven spectrum of the same resonance integrated over
the same band; the full-band equipartition statement kB T = M W0^2 x_rms^2
then yields the total rms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.integrate import quad

from .model import CODATA, CavityDerived, ExperimentConfig, PhysicalConstants


class FitError(RuntimeError):
    """Resonance fit failed or is unidentifiable."""


@dataclass(frozen=True)
class LorentzianFit:
    """Two-pole power-model fit result, with standard errors.

    Standard errors come from the local quadratic model of the objective
    at the optimum (residual-scaled inverse normal matrix).
    """

    frequency_rad_s: float
    damping_rad_s: float
    amplitude: float
    frequency_stderr_rad_s: float
    damping_stderr_rad_s: float
    amplitude_stderr: float
    residual_norm: float
    iterations: int

    @property
    def quality_factor(self) -> float:
        return self.frequency_rad_s / self.damping_rad_s


def _two_pole_log(log_params, omega_sq):
    log_a, log_w0, log_g = log_params
    w0_sq = math.exp(2.0 * log_w0)
    g_sq = math.exp(2.0 * log_g)
    denom = (w0_sq - omega_sq) ** 2 + g_sq * omega_sq
    return log_a - np.log(denom), denom, w0_sq


def _initial_guess(freq_hz, power):
    peak = int(np.argmax(power))
    w0 = 2.0 * math.pi * freq_hz[peak]
    if w0 <= 0:
        w0 = 2.0 * math.pi * freq_hz[1]
    above = np.flatnonzero(power >= power[peak] / 2.0)
    lo_idx, hi_idx = int(above[0]), int(above[-1])
    fwhm = 2.0 * math.pi * (freq_hz[hi_idx] - freq_hz[lo_idx])
    # half maximum not bracketed inside the grid: broaden the guess
    if lo_idx == 0 or hi_idx == freq_hz.size - 1 or fwhm <= 0:
        fwhm = max(fwhm, w0 / 2.0)
    gamma = max(fwhm, 1e-6 * w0)
    amplitude = power[peak] * (gamma * w0) ** 2
    return amplitude, w0, gamma


def fit_lorentzian(frequency_hz, power, initial=None,
                   max_iterations: int = 100) -> LorentzianFit:
    """Least-squares fit of a power spectrum or |H|^2 to the two-pole model.

    Damped Gauss-Newton on log residuals with parameters in log space
    (positivity enforced by construction); converged when the relative
    step drops below 1e-9.  ``initial`` optionally supplies
    (amplitude, frequency rad/s, damping rad/s); otherwise the peak
    location and full width at half maximum seed the iteration.

    Raises :class:`FitError` for flat (unidentifiable) data, failed
    convergence, or data that does not span two damping widths around the
    fitted resonance.
    """
    freq = np.asarray(frequency_hz, dtype=float)
    y = np.asarray(power, dtype=float)
    keep = y > 0
    freq, y = freq[keep], y[keep]
    if freq.size < 10:
        raise FitError("need at least 10 positive data points")
    spread = float(np.max(y) - np.min(y))
    if spread <= 1e-12 * float(np.max(np.abs(y))):
        raise FitError("unidentifiable: data is flat")

    if initial is None:
        initial = _initial_guess(freq, y)
    amplitude0, w00, g0 = initial
    if min(amplitude0, w00, g0) <= 0:
        raise FitError("initial guess must be positive")

    omega_sq = (2.0 * math.pi * freq) ** 2
    log_y = np.log(y)
    params = np.array([math.log(amplitude0), math.log(w00), math.log(g0)])

    def residual(p):
        model, _, _ = _two_pole_log(p, omega_sq)
        return log_y - model

    def jacobian(p):
        # d model / d log-params: columns for log A, log W0, log G
        _, denom, w0_sq = _two_pole_log(p, omega_sq)
        g_sq = math.exp(2.0 * p[2])
        col_a = np.ones_like(omega_sq)
        col_w0 = -4.0 * w0_sq * (w0_sq - omega_sq) / denom
        col_g = -2.0 * g_sq * omega_sq / denom
        return np.column_stack([col_a, col_w0, col_g])

    r = residual(params)
    ssr = float(r @ r)
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        jac = jacobian(params)
        try:
            step = np.linalg.solve(jac.T @ jac, jac.T @ r)
        except np.linalg.LinAlgError:
            raise FitError("singular normal matrix") from None
        scale = 1.0
        for _ in range(40):
            trial = params + scale * step
            r_trial = residual(trial)
            ssr_trial = float(r_trial @ r_trial)
            if ssr_trial <= ssr:
                break
            scale *= 0.5
        else:
            # no descent direction left; treat the point as the optimum
            converged = True
            break
        params, r, ssr = trial, r_trial, ssr_trial
        if float(np.max(np.abs(scale * step))) < 1e-9:
            converged = True
            break
    if not converged:
        raise FitError(
            f"no convergence after {max_iterations} iterations "
            f"(residual norm {math.sqrt(ssr):.3g})")

    jac = jacobian(params)
    dof = max(freq.size - 3, 1)
    try:
        covariance = np.linalg.inv(jac.T @ jac) * (ssr / dof)
    except np.linalg.LinAlgError:
        raise FitError("singular normal matrix at optimum") from None
    log_err = np.sqrt(np.maximum(np.diag(covariance), 0.0))

    amplitude, w0, gamma = np.exp(params)
    fit = LorentzianFit(
        frequency_rad_s=float(w0),
        damping_rad_s=float(gamma),
        amplitude=float(amplitude),
        frequency_stderr_rad_s=float(w0 * log_err[1]),
        damping_stderr_rad_s=float(gamma * log_err[2]),
        amplitude_stderr=float(amplitude * log_err[0]),
        residual_norm=math.sqrt(ssr),
        iterations=iterations,
    )

    # post-hoc span check: data must cover two damping widths around W0.
    # The lower requirement clamps at zero frequency; a grid that starts
    # within 5% of W0 of DC is treated as reaching it.
    grid_lo = 2.0 * math.pi * freq[0]
    grid_hi = 2.0 * math.pi * freq[-1]
    if grid_hi < w0 + 2.0 * gamma:
        raise FitError(
            f"data ends at {grid_hi:.6g} rad/s, below the required span "
            f"{w0 + 2.0 * gamma:.6g} rad/s")
    required_lo = max(w0 - 2.0 * gamma, 0.0)
    if grid_lo > required_lo and grid_lo > 0.05 * w0:
        raise FitError(
            f"data starts at {grid_lo:.6g} rad/s, above the required span "
            f"{required_lo:.6g} rad/s")
    return fit


@dataclass(frozen=True)
class Thermometry:
    """Effective temperature inferred from band-limited motion."""

    effective_temperature_k: float
    rms_displacement_m: float
    band_power_fraction: float


def _band_integral(fit: LorentzianFit, f_lo_hz: float, f_hi_hz: float,
                   mass_kg: float, constants: PhysicalConstants) -> float:
    """Integral over the band of the unit-temperature thermal spectrum."""
    w0 = fit.frequency_rad_s
    gamma = fit.damping_rad_s

    def integrand(f_hz):
        omega_sq = (2.0 * math.pi * f_hz) ** 2
        return (4.0 * constants.boltzmann * gamma / mass_kg) \
            / ((w0 ** 2 - omega_sq) ** 2 + gamma ** 2 * omega_sq)

    f_peak = w0 / (2.0 * math.pi)
    points = [f_peak] if f_lo_hz < f_peak < f_hi_hz else None
    value, _ = quad(integrand, f_lo_hz, f_hi_hz, points=points,
                    limit=200, epsabs=0.0, epsrel=1e-10)
    return value


def effective_temperature(band_rms_m: float, band_hz: tuple[float, float],
                          fit: LorentzianFit, config: ExperimentConfig,
                          derived: CavityDerived,
                          constants: PhysicalConstants = CODATA) -> Thermometry:
    """Convert band-limited rms motion to an effective temperature.

    Solves band_rms^2 = integral over the band of the thermal spectrum at
    temperature T with the fitted resonance parameters; the integral is
    linear in T, so the solution is a ratio.  The full-band rms follows
    from equipartition at that temperature.
    """
    if band_rms_m <= 0:
        raise ValueError("band_rms_m must be > 0")
    f_lo, f_hi = band_hz
    integral_per_kelvin = _band_integral(fit, f_lo, f_hi,
                                         derived.reduced_mass_kg, constants)
    if integral_per_kelvin <= 0:
        raise ValueError("zero band power in the thermal model")
    temperature = band_rms_m ** 2 / integral_per_kelvin
    mass = derived.reduced_mass_kg
    w0 = fit.frequency_rad_s
    rms_full = math.sqrt(constants.boltzmann * temperature / (mass * w0 ** 2))
    # full-band integral of the unit-temperature spectrum is kB / (M W0^2)
    fraction = integral_per_kelvin * mass * w0 ** 2 / constants.boltzmann
    return Thermometry(effective_temperature_k=temperature,
                       rms_displacement_m=rms_full,
                       band_power_fraction=fraction)


@dataclass(frozen=True)
class DecoherenceMetrics:
    """Decoherence time, oscillation count before decoherence, occupation."""

    decoherence_time_s: float
    oscillations_before_decoherence: float
    occupation: float


def decoherence_metrics(effective_temperature_k: float,
                        effective_frequency_rad_s: float,
                        effective_damping_rad_s: float,
                        constants: PhysicalConstants = CODATA) -> DecoherenceMetrics:
    """Thermal decoherence metrics of the mode.

    One quantum of energy enters the mode from its noisy couplings at rate
    1/tau = net kB T_eff / (2 pi hbar W_eff); the mode completes
    n_osc = (hbar W_eff / kB T_eff) (W_eff / net) oscillations in that
    time, and holds N = kB T_eff / (hbar W_eff) quanta.
    """
    if min(effective_temperature_k, effective_frequency_rad_s,
           effective_damping_rad_s) <= 0:
        raise ValueError("all inputs must be positive")
    kt = constants.boltzmann * effective_temperature_k
    hw = constants.hbar * effective_frequency_rad_s
    tau = 2.0 * math.pi * hw / (effective_damping_rad_s * kt)
    n_osc = (hw / kt) * (effective_frequency_rad_s / effective_damping_rad_s)
    occupation = kt / hw
    return DecoherenceMetrics(decoherence_time_s=tau,
                              oscillations_before_decoherence=n_osc,
                              occupation=occupation)


@dataclass(frozen=True)
class ModeSummary:
    """Complete inferred oscillator state."""

    effective_frequency_rad_s: float
    effective_damping_rad_s: float
    quality_factor: float
    effective_temperature_k: float
    rms_displacement_m: float
    occupation: float
    decoherence_time_s: float
    oscillations_before_decoherence: float
    cooling_factor: float

    def to_json_dict(self) -> dict:
        return asdict(self)


def mode_summary(effective_frequency_rad_s: float,
                 effective_damping_rad_s: float,
                 effective_temperature_k: float,
                 config: ExperimentConfig, derived: CavityDerived,
                 constants: PhysicalConstants = CODATA) -> ModeSummary:
    """Assemble a :class:`ModeSummary` from the three measured quantities."""
    metrics = decoherence_metrics(effective_temperature_k,
                                  effective_frequency_rad_s,
                                  effective_damping_rad_s, constants)
    rms = math.sqrt(constants.boltzmann * effective_temperature_k
                    / (derived.reduced_mass_kg * effective_frequency_rad_s ** 2))
    return ModeSummary(
        effective_frequency_rad_s=effective_frequency_rad_s,
        effective_damping_rad_s=effective_damping_rad_s,
        quality_factor=effective_frequency_rad_s / effective_damping_rad_s,
        effective_temperature_k=effective_temperature_k,
        rms_displacement_m=rms,
        occupation=metrics.occupation,
        decoherence_time_s=metrics.decoherence_time_s,
        oscillations_before_decoherence=metrics.oscillations_before_decoherence,
        cooling_factor=config.ambient_temperature_k / effective_temperature_k,
    )


def initial_mode_summary(config: ExperimentConfig, derived: CavityDerived,
                         constants: PhysicalConstants = CODATA) -> ModeSummary:
    """The bare mechanical mode in thermal equilibrium with its environment."""
    return mode_summary(config.free_resonance_rad_s,
                        derived.mechanical_damping_rad_s,
                        config.ambient_temperature_k,
                        config, derived, constants)


@dataclass(frozen=True)
class ToleranceCheck:
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class CoolingReport:
    """Cross-configuration comparison of an initial and a final mode state."""

    cooling_factor: float
    dilution_factor: float
    diluted_quality_factor: float
    lifetime_gain: float
    thermal_bound_no_spring_k: float
    thermal_bound_with_spring_k: float
    initial: ModeSummary
    final: ModeSummary
    checks: tuple[ToleranceCheck, ...] = ()

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "cooling_factor": self.cooling_factor,
            "dilution_factor": self.dilution_factor,
            "diluted_quality_factor": self.diluted_quality_factor,
            "lifetime_gain": self.lifetime_gain,
            "thermal_bound_no_spring_k": self.thermal_bound_no_spring_k,
            "thermal_bound_with_spring_k": self.thermal_bound_with_spring_k,
            "initial": self.initial.to_json_dict(),
            "final": self.final.to_json_dict(),
            "checks": [asdict(c) for c in self.checks],
            "all_passed": self.all_passed,
        }


def cooling_report(initial: ModeSummary, final: ModeSummary,
                   targets: dict[str, tuple[float, float]] | None = None) -> CoolingReport:
    """Compare two mode states and evaluate optional (target, tolerance) checks.

    ``targets`` maps a report field name to an absolute target and an
    absolute tolerance; each becomes a pass/fail entry.
    """
    dilution = final.effective_frequency_rad_s / initial.effective_frequency_rad_s
    values = {
        "cooling_factor": initial.effective_temperature_k
        / final.effective_temperature_k,
        "dilution_factor": dilution,
        "diluted_quality_factor": initial.quality_factor * dilution,
        "lifetime_gain": final.oscillations_before_decoherence
        / initial.oscillations_before_decoherence,
        "thermal_bound_no_spring_k": initial.effective_temperature_k
        / initial.quality_factor,
        "thermal_bound_with_spring_k": initial.effective_temperature_k
        * initial.effective_damping_rad_s / final.effective_frequency_rad_s,
        "final_temperature_k": final.effective_temperature_k,
    }
    checks = []
    for name, (target, tolerance) in (targets or {}).items():
        if name not in values:
            raise ValueError(f"unknown report field {name!r}")
        value = values[name]
        checks.append(ToleranceCheck(name=name, value=value, target=target,
                                     tolerance=tolerance,
                                     passed=abs(value - target) <= tolerance))
    return CoolingReport(
        cooling_factor=values["cooling_factor"],
        dilution_factor=values["dilution_factor"],
        diluted_quality_factor=values["diluted_quality_factor"],
        lifetime_gain=values["lifetime_gain"],
        thermal_bound_no_spring_k=values["thermal_bound_no_spring_k"],
        thermal_bound_with_spring_k=values["thermal_bound_with_spring_k"],
        initial=initial, final=final, checks=tuple(checks),
    )
