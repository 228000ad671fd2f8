"""Closed-loop mechanical response with optical spring and servo damping.

The servo is modeled as pure viscous damping across the measurement band
(the sub-10 Hz digital lock path only holds the operating point and is not
modeled).  Net damping is

    net = mechanical - optical_antidamping + servo,

and the mode is stable iff net > 0.  The default susceptibility freezes
the optical spring at its self-consistent resonance (two-pole form), which
is accurate to O((W_eff / linewidth)^2); per-bin evaluation of the full
frequency-dependent spring is available for validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .model import CODATA, CavityDerived, ExperimentConfig, PhysicalConstants, derive_cavity
from .series import TimeSeries, TransferFunction
from .spring import SpringSummary, effective_resonance, spring_constant_and_damping


class UnstablePlantError(RuntimeError):
    """Requested operation needs a stable closed loop."""

    def __init__(self, net_damping_rad_s: float):
        growth = abs(net_damping_rad_s) / 2.0
        super().__init__(
            f"unstable plant: net damping {net_damping_rad_s:.6g} rad/s, "
            f"amplitude growth rate {growth:.6g} 1/s")
        self.net_damping_rad_s = net_damping_rad_s
        self.growth_rate = growth


@dataclass(frozen=True)
class ServoConfig:
    """Viscous cold-damping feedback applied through the laser-frequency path."""

    damping_gain_rad_s: float = 0.0
    lock_crossover_hz: float = 10.0   # bookkeeping only; below the analysis band
    enabled: bool = True

    def __post_init__(self):
        if self.damping_gain_rad_s < 0:
            raise ValueError("damping_gain_rad_s must be >= 0")

    @property
    def applied_gain_rad_s(self) -> float:
        return self.damping_gain_rad_s if self.enabled else 0.0


@dataclass(frozen=True)
class StabilityReport:
    """Net damping and the resulting envelope behavior.

    ``decay_rate`` is the amplitude envelope rate net/2 with its sign:
    positive means decay, negative means exponential growth at |rate|.
    """

    net_damping_rad_s: float
    stable: bool
    decay_rate: float


def net_damping(spring: SpringSummary, servo: ServoConfig,
                derived: CavityDerived) -> float:
    """Mechanical minus optical anti-damping plus servo damping (rad/s)."""
    return (derived.mechanical_damping_rad_s
            - spring.optical_antidamping_rad_s
            + servo.applied_gain_rad_s)


def assess_stability(spring: SpringSummary, servo: ServoConfig,
                     config: ExperimentConfig,
                     derived: CavityDerived) -> StabilityReport:
    """Classify the closed loop; growth rate of an unstable mode is |net|/2."""
    net = net_damping(spring, servo, derived)
    return StabilityReport(net_damping_rad_s=net, stable=net > 0,
                           decay_rate=net / 2.0)


def closed_loop_susceptibility(omega_rad_s, spring: SpringSummary,
                               servo: ServoConfig, config: ExperimentConfig,
                               derived: CavityDerived,
                               per_bin_spring: bool = False,
                               constants: PhysicalConstants = CODATA):
    """Complex displacement response to force, m/N, vectorized over frequency.

    Two-pole form 1 / (M (W_eff^2 - W^2 + i net W)) by default.  With
    ``per_bin_spring`` the spring constant and anti-damping are re-evaluated
    at every frequency instead of being frozen at the resonance.
    """
    omega = np.asarray(omega_rad_s, dtype=float)
    mass = derived.reduced_mass_kg
    if per_bin_spring:
        k_bin, g_bin = spring_constant_and_damping(omega, config, derived, constants)
        stiffness = mass * config.free_resonance_rad_s ** 2 + k_bin - mass * omega ** 2
        damping = (derived.mechanical_damping_rad_s - g_bin
                   + servo.applied_gain_rad_s)
    else:
        stiffness = mass * (spring.effective_frequency_rad_s ** 2 - omega ** 2)
        damping = net_damping(spring, servo, derived)
    return 1.0 / (stiffness + 1j * mass * damping * omega)


def force_response_sweep(grid_hz, spring: SpringSummary, servo: ServoConfig,
                         config: ExperimentConfig, derived: CavityDerived,
                         per_bin_spring: bool = False,
                         allow_unstable: bool = False) -> TransferFunction:
    """Sample the closed-loop susceptibility over a Hz grid; deterministic.

    Refuses to sweep an unstable plant (error carries the growth rate)
    unless ``allow_unstable`` is set.
    """
    report = assess_stability(spring, servo, config, derived)
    if not report.stable and not allow_unstable:
        raise UnstablePlantError(report.net_damping_rad_s)
    grid = np.asarray(grid_hz, dtype=float)
    response = closed_loop_susceptibility(2.0 * np.pi * grid, spring, servo,
                                          config, derived,
                                          per_bin_spring=per_bin_spring)
    return TransferFunction(frequency_hz=grid, response=response)


def time_domain_ringdown(config: ExperimentConfig, servo: ServoConfig,
                         duration_s: float, dt_s: float, x0_m: float,
                         derived: CavityDerived | None = None,
                         spring: SpringSummary | None = None) -> TimeSeries:
    """Integrate the free ringdown x'' = -W_eff^2 x - net x' from (x0, 0).

    Classic fixed-step 4th-order Runge-Kutta; no stochastic drive.  The
    envelope decays (or grows) as exp(-net t / 2).  The step must resolve
    the oscillation: dt <= 1 / (20 f_eff) or the call is rejected.
    """
    if derived is None:
        derived = derive_cavity(config)
    if spring is None:
        spring = effective_resonance(config, derived)
    omega = spring.effective_frequency_rad_s
    net = net_damping(spring, servo, derived)

    f_eff = omega / (2.0 * math.pi)
    if dt_s > 1.0 / (20.0 * f_eff):
        raise ValueError(
            f"dt too coarse: {dt_s:.3g} s exceeds 1/(20 f_eff) = "
            f"{1.0 / (20.0 * f_eff):.3g} s")

    steps = int(round(duration_s / dt_s))
    omega_sq = omega * omega

    x, v = float(x0_m), 0.0
    out = np.empty(steps + 1)
    out[0] = x
    h = dt_s
    for i in range(1, steps + 1):
        # RK4 on (x, v); acceleration a(x, v) = -omega^2 x - net v
        a1x, a1v = v, -omega_sq * x - net * v
        x2, v2 = x + 0.5 * h * a1x, v + 0.5 * h * a1v
        a2x, a2v = v2, -omega_sq * x2 - net * v2
        x3, v3 = x + 0.5 * h * a2x, v + 0.5 * h * a2v
        a3x, a3v = v3, -omega_sq * x3 - net * v3
        x4, v4 = x + h * a3x, v + h * a3v
        a4x, a4v = v4, -omega_sq * x4 - net * v4
        x += h / 6.0 * (a1x + 2.0 * a2x + 2.0 * a3x + a4x)
        v += h / 6.0 * (a1v + 2.0 * a2v + 2.0 * a3v + a4v)
        out[i] = x
    return TimeSeries(sample_rate_hz=1.0 / dt_s, samples=out)


def ringdown_fit(series: TimeSeries, trim_fraction: float = 0.1):
    """Extract (frequency rad/s, amplitude decay rate 1/s, Q) from a ringdown.

    Analytic-signal envelope and phase: the log envelope is regressed
    against time for the decay rate (negative slope of a growing envelope
    gives a negative rate), the unwrapped phase slope gives the frequency.
    Q is frequency over twice the decay rate.
    """
    x = series.samples
    n = x.size
    lo = int(n * trim_fraction)
    hi = n - lo
    analytic = hilbert(x)[lo:hi]
    t = series.times_s[lo:hi]
    envelope = np.abs(analytic)
    if np.any(envelope <= 0):
        raise ValueError("envelope touches zero; cannot fit decay")
    decay_slope, _ = np.polyfit(t, np.log(envelope), 1)
    phase_slope, _ = np.polyfit(t, np.unwrap(np.angle(analytic)), 1)
    frequency = abs(phase_slope)
    decay_rate = -decay_slope
    quality = frequency / (2.0 * decay_rate) if decay_rate != 0 else math.inf
    return frequency, decay_rate, quality
