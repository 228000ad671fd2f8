"""Radiation-pressure optical spring of a detuned cavity.

A cavity held off resonance converts length changes into radiation-pressure
force changes.  In the frequency domain the force on the cavity-length
coordinate x is

    F = -K(W) x + M G(W) (i W x),

so K acts as a spring constant and G (stored mass-normalized, rad/s) as a
velocity coupling.  Positive G feeds energy into the mode (anti-damping):
the finite cavity storage time delays the force, which destabilizes the
optically sprung resonance until external damping exceeds G.

With d the detuning in units of the linewidth g (HWHM) and u = (W/g)^2:

    K(W) = K0 (1 + d^2 - u) / ((1 + d^2 - u)^2 + 4 u)
    G(W) = (2 K0 / (M g)) / ((1 + d^2 - u)^2 + 4 u)
    K0   = 128 pi eta I0 d / (Ti^2 c lambda0) * 1 / (1 + d^2)

Both K and G are even in W; K0 is odd in d.  The shifted resonance solves
the implicit relation W_eff^2 = W_M^2 + K(W_eff) / M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import CODATA, CavityDerived, ExperimentConfig, PhysicalConstants, derive_cavity


class StaticInstabilityError(RuntimeError):
    """Total spring constant is negative: no stable resonance exists."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach the residual target."""

    def __init__(self, message: str, last_estimate: float, residual: float):
        super().__init__(f"{message} (last estimate {last_estimate:.6g} rad/s, "
                         f"relative residual {residual:.3g})")
        self.last_estimate = last_estimate
        self.residual = residual


@dataclass(frozen=True)
class SpringResponse:
    """Spring constant and mass-normalized velocity coupling at one frequency.

    ``damping_rad_s`` is positive for anti-damping (energy flowing into the
    mode); the equation of motion gains the term -damping * velocity only
    after sign inversion by the net-damping bookkeeping in the loop module.
    """

    frequency_rad_s: float
    spring_constant_n_per_m: float
    damping_rad_s: float


@dataclass(frozen=True)
class SpringSummary:
    """Self-consistent optically sprung resonance and dilution metrics.

    ``thermal_bound_k`` is the lowest effective temperature a purely
    thermal-noise-limited mode could reach at critical damping, ambient
    temperature scaled by mechanical damping over the shifted resonance.
    """

    static_spring_n_per_m: float
    effective_frequency_rad_s: float
    optical_antidamping_rad_s: float
    dilution_factor: float
    diluted_q: float
    thermal_bound_k: float
    residual: float
    iterations: int


def static_spring_constant(config: ExperimentConfig,
                           constants: PhysicalConstants = CODATA) -> float:
    """Zero-frequency spring coefficient K0 (N/m); sign follows the detuning."""
    d = config.detuning_over_gamma
    return (128.0 * math.pi * config.coupling_efficiency * config.input_power_w * d
            / (config.input_transmissivity ** 2 * constants.speed_of_light
               * config.wavelength_m)) / (1.0 + d * d)


def spring_constant_and_damping(omega_rad_s, config: ExperimentConfig,
                                derived: CavityDerived,
                                constants: PhysicalConstants = CODATA):
    """Vectorized K(W) in N/m and mass-normalized G(W) in rad/s."""
    omega = np.asarray(omega_rad_s, dtype=float)
    d = config.detuning_over_gamma
    g = derived.linewidth_rad_s
    u = (omega / g) ** 2
    a = 1.0 + d * d - u
    denom = a * a + 4.0 * u
    k0 = static_spring_constant(config, constants)
    spring = k0 * a / denom
    damping = (2.0 * k0 / (derived.reduced_mass_kg * g)) / denom
    return spring, damping


def spring_response(omega_rad_s: float, config: ExperimentConfig,
                    derived: CavityDerived,
                    constants: PhysicalConstants = CODATA) -> SpringResponse:
    """Evaluate the optical spring at a single frequency (rad/s, >= 0)."""
    if omega_rad_s < 0:
        raise ValueError("omega_rad_s must be >= 0")
    spring, damping = spring_constant_and_damping(
        omega_rad_s, config, derived, constants)
    return SpringResponse(frequency_rad_s=omega_rad_s,
                          spring_constant_n_per_m=float(spring),
                          damping_rad_s=float(damping))


def effective_resonance(config: ExperimentConfig, derived: CavityDerived,
                        constants: PhysicalConstants = CODATA,
                        rel_tol: float = 1e-10,
                        max_iterations: int = 200) -> SpringSummary:
    """Solve the implicit shifted resonance W_eff^2 = W_M^2 + K(W_eff)/M.

    Damped fixed-point iteration (50% relaxation) starting from the
    adiabatic estimate sqrt(W_M^2 + K(0)/M).  Because W_eff sits orders of
    magnitude below the cavity pole in all supported regimes, K varies
    slowly near the fixed point and convergence is fast.  The relative
    residual |W^2 - W_M^2 - K(W)/M| / W^2 is driven below ``rel_tol``.

    Raises :class:`StaticInstabilityError` when the total spring is
    negative and :class:`ConvergenceError` (carrying the last iterate and
    residual) if the iteration cap is hit.
    """
    mass = derived.reduced_mass_kg
    omega_m_sq = config.free_resonance_rad_s ** 2

    def total_sq(omega):
        spring, _ = spring_constant_and_damping(omega, config, derived, constants)
        return omega_m_sq + float(spring) / mass

    candidate_sq = total_sq(0.0)
    if candidate_sq <= 0:
        raise StaticInstabilityError(
            "statically unstable: negative total spring constant "
            f"(W_eff^2 = {candidate_sq:.6g} (rad/s)^2 at zero frequency)")
    omega = math.sqrt(candidate_sq)

    residual = math.inf
    for iteration in range(1, max_iterations + 1):
        target_sq = total_sq(omega)
        if target_sq <= 0:
            raise StaticInstabilityError(
                "statically unstable: negative total spring constant "
                f"(W_eff^2 = {target_sq:.6g} (rad/s)^2 at W = {omega:.6g} rad/s)")
        residual = abs(omega * omega - target_sq) / (omega * omega)
        if residual <= rel_tol:
            break
        omega = omega + 0.5 * (math.sqrt(target_sq) - omega)
    else:
        raise ConvergenceError("shifted resonance did not converge",
                               last_estimate=omega, residual=residual)

    _, antidamping = spring_constant_and_damping(omega, config, derived, constants)
    dilution = omega / config.free_resonance_rad_s
    return SpringSummary(
        static_spring_n_per_m=static_spring_constant(config, constants),
        effective_frequency_rad_s=omega,
        optical_antidamping_rad_s=float(antidamping),
        dilution_factor=dilution,
        diluted_q=config.mechanical_q * dilution,
        thermal_bound_k=config.ambient_temperature_k
        * derived.mechanical_damping_rad_s / omega,
        residual=residual,
        iterations=iteration,
    )


def dilution_metrics(summary: SpringSummary,
                     config: ExperimentConfig) -> tuple[float, float, float]:
    """(dilution factor, diluted Q, thermal cooling bound in K).

    Raising the resonance leaves the mechanical loss rate unchanged, so the
    loss-limited quality factor grows by the frequency ratio and the
    thermal-noise cooling bound drops by the same factor.
    """
    dilution = summary.effective_frequency_rad_s / config.free_resonance_rad_s
    diluted_q = config.mechanical_q * dilution
    bound = config.ambient_temperature_k * (
        config.free_resonance_rad_s / config.mechanical_q
    ) / summary.effective_frequency_rad_s
    return dilution, diluted_q, bound


def calibrate_coupling_efficiency(config: ExperimentConfig,
                                  target_rad_s: float,
                                  constants: PhysicalConstants = CODATA,
                                  eta_min: float = 1e-6) -> float:
    """Coupling efficiency that places the shifted resonance at ``target_rad_s``.

    Root-find over eta in (eta_min, 1]; the shifted resonance is monotone
    in eta for a positive spring.  Raises ValueError when the target is not
    bracketed (below the free resonance or above the eta = 1 resonance).
    """
    import dataclasses

    def freq(eta: float) -> float:
        cfg = dataclasses.replace(config, coupling_efficiency=eta)
        return effective_resonance(cfg, derive_cavity(cfg, constants),
                                   constants).effective_frequency_rad_s

    lo, hi = freq(eta_min), freq(1.0)
    if not (min(lo, hi) <= target_rad_s <= max(lo, hi)):
        raise ValueError(
            f"target {target_rad_s:.6g} rad/s not reachable: eta sweeps "
            f"[{lo:.6g}, {hi:.6g}] rad/s")
    return brentq(lambda eta: freq(eta) - target_rad_s, eta_min, 1.0,
                  xtol=1e-14, rtol=8.9e-16)
