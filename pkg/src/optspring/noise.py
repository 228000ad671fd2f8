"""Noise budget: per-source spectral densities and seeded time-series synthesis.

Sources and how they enter the measured displacement spectrum:

 * thermal: white force noise 4 kB T M Gamma_M (fluctuation-dissipation),
   filtered by the closed-loop force susceptibility |H|^2;
 * laser frequency noise: white displacement-equivalent drive entering like
   a cavity-length fluctuation, filtered by the dimensionless spring
   transfer H_spring = K_total H (unity well below resonance);
 * sensing floor: additive readout noise, not a force on the mirror;
 * discrete acoustic lines: displacement-equivalent tones mapped through
   H_spring, deposited into their nearest grid bin.

One-sided PSDs in m^2/Hz with integral over Hz equal to variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import CODATA, CavityDerived, ExperimentConfig, PhysicalConstants, derive_cavity
from .loop import ServoConfig, UnstablePlantError, assess_stability, \
    closed_loop_susceptibility, net_damping
from .series import SpectrumSeries, TimeSeries
from .spring import SpringSummary, effective_resonance

# Decouples the calibration-line phase stream from the synthesis stream
# when both are derived from the same integer seed.
_LINE_PHASE_SALT = 0x9E3779B97F4A7C15


class AliasingError(ValueError):
    """Requested content above the Nyquist frequency."""


@dataclass(frozen=True)
class SpectralLine:
    """A pure tone in displacement-equivalent units."""

    frequency_hz: float
    rms_m: float

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError("line frequency must be > 0")
        if self.rms_m < 0:
            raise ValueError("line rms must be >= 0")


@dataclass(frozen=True)
class NoiseBudget:
    """Per-source noise levels driving or contaminating the measurement.

    The thermal source level is not stored here: it follows from the
    experiment config (ambient temperature, reduced mass, mechanical
    damping) and is enabled by ``include_thermal``.  ``calibration_line``
    is the tone injected into the record for displacement calibration, by
    default at 12 kHz with zero amplitude (disabled).
    """

    include_thermal: bool = True
    frequency_noise_m_per_rthz: float = 0.0
    sensing_floor_m_per_rthz: float = 0.0
    acoustic_lines: tuple[SpectralLine, ...] = ()
    calibration_line: SpectralLine = SpectralLine(12e3, 0.0)

    def __post_init__(self):
        if self.frequency_noise_m_per_rthz < 0:
            raise ValueError("frequency_noise_m_per_rthz must be >= 0")
        if self.sensing_floor_m_per_rthz < 0:
            raise ValueError("sensing_floor_m_per_rthz must be >= 0")


def thermal_force_psd(config: ExperimentConfig, derived: CavityDerived,
                      constants: PhysicalConstants = CODATA) -> float:
    """White one-sided thermal force noise 4 kB T M Gamma_M (N^2/Hz)."""
    return (4.0 * constants.boltzmann * config.ambient_temperature_k
            * derived.reduced_mass_kg * derived.mechanical_damping_rad_s)


def displacement_psd(grid_hz, budget: NoiseBudget, spring: SpringSummary,
                     servo: ServoConfig, config: ExperimentConfig,
                     derived: CavityDerived,
                     per_bin_spring: bool = False,
                     constants: PhysicalConstants = CODATA) -> SpectrumSeries:
    """Total modeled displacement PSD with per-source breakdown.

    Requires a stable closed loop.  The spring transfer uses the total
    closed-loop stiffness K_total = M W_eff^2, so it is exactly unity at
    zero frequency and resonantly enhanced by Q_eff.
    """
    report = assess_stability(spring, servo, config, derived)
    if not report.stable:
        raise UnstablePlantError(report.net_damping_rad_s)

    grid = np.asarray(grid_hz, dtype=float)
    omega = 2.0 * np.pi * grid
    mass = derived.reduced_mass_kg
    response = closed_loop_susceptibility(omega, spring, servo, config, derived,
                                          per_bin_spring=per_bin_spring,
                                          constants=constants)
    force_transfer_sq = np.abs(response) ** 2
    k_total = mass * spring.effective_frequency_rad_s ** 2
    spring_transfer_sq = (k_total ** 2) * force_transfer_sq

    thermal = np.zeros_like(grid)
    if budget.include_thermal:
        thermal = force_transfer_sq * thermal_force_psd(config, derived, constants)
    frequency_noise = spring_transfer_sq * budget.frequency_noise_m_per_rthz ** 2
    sensing = np.full_like(grid, budget.sensing_floor_m_per_rthz ** 2)

    lines = np.zeros_like(grid)
    for line in budget.acoustic_lines:
        idx = int(np.argmin(np.abs(grid - line.frequency_hz)))
        # Deposit the tone's filtered power into its nearest bin; bin width
        # from the local grid spacing.
        if grid.size < 2:
            raise ValueError("need at least two grid points to place a line")
        width = grid[idx + 1] - grid[idx] if idx + 1 < grid.size \
            else grid[idx] - grid[idx - 1]
        lines[idx] += line.rms_m ** 2 * float(spring_transfer_sq[idx]) / width

    components = {"thermal": thermal, "frequency_noise": frequency_noise,
                  "sensing": sensing, "acoustic_lines": lines}
    total = thermal + frequency_noise + sensing + lines
    return SpectrumSeries(frequency_hz=grid, psd=total, components=components)


def synthesize_timeseries(psd: SpectrumSeries, duration_s: float,
                          sample_rate_hz: float,
                          seed: int | np.random.Generator) -> TimeSeries:
    """Gaussian stationary series realizing a target one-sided PSD.

    Frequency-domain amplitude shaping with independent Gaussian
    quadratures per bin: the expected one-sided periodogram equals the
    target PSD.  The PSD is linearly interpolated onto the synthesis grid
    and treated as zero outside its own grid.  Deterministic for a fixed
    integer seed.

    Raises :class:`AliasingError` when the PSD grid extends beyond the
    Nyquist frequency.
    """
    if psd.frequency_hz[-1] > sample_rate_hz / 2.0:
        raise AliasingError(
            f"psd grid reaches {psd.frequency_hz[-1]:.6g} Hz, above Nyquist "
            f"{sample_rate_hz / 2.0:.6g} Hz")
    n = int(round(duration_s * sample_rate_hz))
    if n < 2:
        raise ValueError("duration too short for the sample rate")

    seed_label = seed if isinstance(seed, (int, np.integer)) else None
    rng = np.random.default_rng(seed)

    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    levels = np.interp(freqs, psd.frequency_hz, psd.psd, left=0.0, right=0.0)
    df = sample_rate_hz / n

    # Interior bins carry both quadratures and are counted twice by the
    # inverse rfft; DC and Nyquist are real and counted once.
    spectrum = np.empty(freqs.size, dtype=complex)
    sigma = (n / 2.0) * np.sqrt(levels * df)
    spectrum[1:-1] = sigma[1:-1] * (rng.standard_normal(freqs.size - 2)
                                    + 1j * rng.standard_normal(freqs.size - 2))
    spectrum[0] = n * math.sqrt(levels[0] * df) * rng.standard_normal()
    if n % 2 == 0:
        spectrum[-1] = n * math.sqrt(levels[-1] * df) * rng.standard_normal()
    else:
        spectrum[-1] = sigma[-1] * (rng.standard_normal()
                                    + 1j * rng.standard_normal())

    samples = np.fft.irfft(spectrum, n=n)
    return TimeSeries(sample_rate_hz=sample_rate_hz, samples=samples,
                      seed=int(seed_label) if seed_label is not None else None)


def inject_calibration_line(series: TimeSeries, frequency_hz: float,
                            rms_m: float,
                            seed: int | np.random.Generator) -> TimeSeries:
    """Add a pure sinusoid of known rms with a seeded random phase.

    Raises :class:`AliasingError` for a line at or above Nyquist.
    """
    if frequency_hz >= series.sample_rate_hz / 2.0:
        raise AliasingError(
            f"line at {frequency_hz:.6g} Hz is not below Nyquist "
            f"{series.sample_rate_hz / 2.0:.6g} Hz")
    if rms_m < 0:
        raise ValueError("rms_m must be >= 0")
    if rms_m == 0.0:
        return TimeSeries(sample_rate_hz=series.sample_rate_hz,
                          samples=series.samples.copy(), seed=series.seed)
    if isinstance(seed, (int, np.integer)):
        seed = np.random.default_rng(int(seed) ^ _LINE_PHASE_SALT)
    phase = seed.uniform(0.0, 2.0 * np.pi)
    tone = math.sqrt(2.0) * rms_m * np.cos(
        2.0 * np.pi * frequency_hz * series.times_s + phase)
    return TimeSeries(sample_rate_hz=series.sample_rate_hz,
                      samples=series.samples + tone, seed=series.seed)


def calibrated_frequency_noise_level(config: ExperimentConfig,
                                     coldest_q: float = 1.1,
                                     target_temperature_k: float = 6.9e-3,
                                     constants: PhysicalConstants = CODATA) -> float:
    """Frequency-noise level (m/rtHz) matching a target coldest temperature.

    This is a calibration, not a prediction: the white displacement-
    equivalent frequency-noise drive has the same spectral shape as the
    thermal term (both are flat drives through the same two-pole filter),
    so the band-corrected effective temperature is

        T_eff = T_M Gamma_M / net + M W_eff^4 S_nu / (4 kB net),

    with net = W_eff / Q at the coldest servo gain.  Solving for S_nu at
    the stated target temperature pins the shipped default level.
    """
    derived = derive_cavity(config, constants)
    spring = effective_resonance(config, derived, constants)
    omega = spring.effective_frequency_rad_s
    net = omega / coldest_q
    thermal_only = (config.ambient_temperature_k
                    * derived.mechanical_damping_rad_s / net)
    excess = target_temperature_k - thermal_only
    if excess <= 0:
        raise ValueError(
            f"target {target_temperature_k:.3g} K is below the thermal-only "
            f"temperature {thermal_only:.3g} K at Q = {coldest_q}")
    level_sq = excess * 4.0 * constants.boltzmann * net \
        / (derived.reduced_mass_kg * omega ** 4)
    return math.sqrt(level_sq)
