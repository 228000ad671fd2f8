"""Optical-spring cavity dynamics, cold-damping noise synthesis, and
effective-temperature inference for a suspended gram-scale mirror."""

from .model import (
    CODATA,
    CavityDerived,
    ConfigError,
    ExperimentConfig,
    PhysicalConstants,
    config_hash,
    derive_cavity,
    load_config,
    paper_default_config,
    validate_config,
)
from .spring import (
    ConvergenceError,
    SpringResponse,
    SpringSummary,
    StaticInstabilityError,
    calibrate_coupling_efficiency,
    dilution_metrics,
    effective_resonance,
    spring_constant_and_damping,
    spring_response,
    static_spring_constant,
)
from .loop import (
    ServoConfig,
    StabilityReport,
    UnstablePlantError,
    assess_stability,
    closed_loop_susceptibility,
    force_response_sweep,
    net_damping,
    ringdown_fit,
    time_domain_ringdown,
)
from .noise import (
    AliasingError,
    NoiseBudget,
    SpectralLine,
    calibrated_frequency_noise_level,
    displacement_psd,
    inject_calibration_line,
    synthesize_timeseries,
    thermal_force_psd,
)
from .series import (
    PsdEstimate,
    SpectrumSeries,
    TimeSeries,
    TransferFunction,
    read_csv,
    write_csv,
)
from .spectral import (
    CalibrationError,
    band_rms,
    calibrate_spectrum,
    estimate_psd,
)
from .inference import (
    CoolingReport,
    DecoherenceMetrics,
    FitError,
    LorentzianFit,
    ModeSummary,
    Thermometry,
    ToleranceCheck,
    cooling_report,
    decoherence_metrics,
    effective_temperature,
    fit_lorentzian,
    initial_mode_summary,
    mode_summary,
)
from .scenario import (
    DEFAULT_QUALITY_LADDER,
    DEFAULT_SEED,
    REFERENCE_COLDEST_TEMPERATURE_K,
    REFERENCE_RESONANCE_RAD_S,
    Scenario,
    ScenarioResult,
    aggregate_summaries,
    default_noise_budget,
    measured_reference_config,
    paper_scenario,
    run_scenario,
    servo_gain_for_quality,
    sweep_parameter,
    validate_scenario,
    write_sweep_csv,
)

__version__ = "0.1.0"
