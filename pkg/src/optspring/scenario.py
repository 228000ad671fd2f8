"""End-to-end scenario runner: gain ladder, synthesis, estimation, reports.

A scenario wires the full pipeline for each servo gain in a ladder:
driven transfer-function sweep and resonance fit, seeded noise synthesis
with the calibration line, segment-averaged PSD, line calibration,
band-limited rms, thermometry, and decoherence metrics; finally a
cross-gain cooling report compares the coldest state to the bare
mechanical mode.

Determinism contract: a (config, seed) pair produces a byte-identical
artifact bundle.  Ladder entries use isolated seeds derived by the rule
``entry_seed = master_seed XOR entry_index`` (recorded in the manifest),
so entries may be computed concurrently and merged in entry order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .inference import CoolingReport, LorentzianFit, ModeSummary, cooling_report, \
    effective_temperature, fit_lorentzian, initial_mode_summary, mode_summary
from .loop import ServoConfig, assess_stability, force_response_sweep
from .model import CODATA, ConfigError, ExperimentConfig, config_hash, \
    derive_cavity, paper_default_config
from .noise import NoiseBudget, SpectralLine, calibrated_frequency_noise_level, \
    displacement_psd, inject_calibration_line, synthesize_timeseries
from .spectral import band_rms, calibrate_spectrum, estimate_psd
from .spring import StaticInstabilityError, calibrate_coupling_efficiency, \
    effective_resonance, static_spring_constant

DEFAULT_SEED = 20260810
_U64_MASK = 0xFFFFFFFFFFFFFFFF

# Operating point of the reference cold-damping scenario: the coupling
# efficiency is calibrated so the shifted resonance lands here, and the
# frequency-noise level so the coldest ladder entry reports the reference
# temperature.  Both are calibrations against measured values, not
# predictions of the model.
REFERENCE_RESONANCE_RAD_S = 2.0 * math.pi * 1018.0
REFERENCE_COLDEST_TEMPERATURE_K = 6.9e-3
DEFAULT_QUALITY_LADDER = (20.0, 5.0, 2.0, 1.1)

_SWEEPABLE = ("detuning_over_gamma", "input_power_w", "coupling_efficiency",
              "servo_gain")


@dataclass(frozen=True)
class Scenario:
    """A complete, reproducible pipeline specification."""

    config: ExperimentConfig
    servo_gains_rad_s: tuple[float, ...]
    budget: NoiseBudget
    duration_s: float = 60.0
    sample_rate_hz: float = 65536.0
    seed: int = DEFAULT_SEED
    band_hz: tuple[float, float] = (850.0, 1100.0)
    segment_length: int = 65536
    overlap: float = 0.5
    window: str = "hann"
    sweep_lo_hz: float = 2.0
    sweep_hi_hz: float = 3300.0
    sweep_step_hz: float = 0.5
    per_bin_spring: bool = False
    write_timeseries: bool = False
    targets: dict | None = None

    @property
    def sweep_grid_hz(self) -> np.ndarray:
        count = int(round((self.sweep_hi_hz - self.sweep_lo_hz)
                          / self.sweep_step_hz)) + 1
        return self.sweep_lo_hz + self.sweep_step_hz * np.arange(count)


def measured_reference_config() -> ExperimentConfig:
    """Default profile with coupling efficiency calibrated to the reference
    operating point."""
    base = paper_default_config()
    eta = calibrate_coupling_efficiency(base, REFERENCE_RESONANCE_RAD_S)
    return replace(base, coupling_efficiency=eta)


def default_noise_budget() -> NoiseBudget:
    """Shipped budget: thermal, calibrated frequency noise, sensing floor,
    and the 12 kHz calibration line."""
    level = calibrated_frequency_noise_level(
        measured_reference_config(),
        coldest_q=DEFAULT_QUALITY_LADDER[-1],
        target_temperature_k=REFERENCE_COLDEST_TEMPERATURE_K)
    return NoiseBudget(
        include_thermal=True,
        frequency_noise_m_per_rthz=level,
        sensing_floor_m_per_rthz=3e-18,
        calibration_line=SpectralLine(frequency_hz=12e3, rms_m=1e-16),
    )


def servo_gain_for_quality(q_target: float, spring, derived) -> float:
    """Servo damping gain that sets the closed-loop quality factor."""
    if q_target <= 0:
        raise ValueError("q_target must be > 0")
    net = spring.effective_frequency_rad_s / q_target
    gain = net - derived.mechanical_damping_rad_s \
        + spring.optical_antidamping_rad_s
    if gain <= 0:
        raise ValueError(
            f"quality target {q_target} needs a negative servo gain")
    return gain


def paper_scenario(seed: int = DEFAULT_SEED,
                   config: ExperimentConfig | None = None,
                   gains: tuple[float, ...] | None = None,
                   band_hz: tuple[float, float] = (850.0, 1100.0),
                   per_bin_spring: bool = False) -> Scenario:
    """The shipped default scenario: four servo gains spanning closed-loop
    quality factors from about 20 down to 1.1, with headline targets."""
    if config is None:
        config = measured_reference_config()
    derived = derive_cavity(config)
    spring = effective_resonance(config, derived)
    if gains is None:
        gains = tuple(servo_gain_for_quality(q, spring, derived)
                      for q in DEFAULT_QUALITY_LADDER)
    targets = {
        "final_temperature_k": (6.9e-3, 1.4e-3),
        "cooling_factor": (43000.0, 11000.0),
        "lifetime_gain": (196.0, 40.0),
        "diluted_quality_factor": (1.6e6, 0.05 * 1.6e6),
        "dilution_factor": (80.2, 0.5),
    }
    return Scenario(config=config, servo_gains_rad_s=tuple(gains),
                    budget=default_noise_budget(), seed=seed,
                    band_hz=band_hz, per_bin_spring=per_bin_spring,
                    targets=targets)


def validate_scenario(scenario: Scenario) -> None:
    """Raise :class:`ConfigError` on any scenario invariant violation.

    Runs before any computation or output: an invalid ladder, band, or
    unstable gain entry never produces partial artifacts.
    """
    problems = []
    from .model import validate_config
    problems.extend(validate_config(scenario.config))

    gains = scenario.servo_gains_rad_s
    if len(gains) == 0:
        problems.append("servo_gains_rad_s: gain ladder is empty")
    elif any(not (g >= 0) for g in gains):
        problems.append("servo_gains_rad_s: gains must be >= 0")
    elif len(gains) > 1 and any(b <= a for a, b in zip(gains, gains[1:])):
        problems.append("servo_gains_rad_s: gain ladder must be ascending")

    if not 0 <= scenario.seed <= _U64_MASK:
        problems.append("seed: must be an unsigned 64-bit integer")
    lo, hi = scenario.band_hz
    if not (0 < lo < hi <= scenario.sample_rate_hz / 2):
        problems.append("band_hz: need 0 < lo < hi <= Nyquist")
    if scenario.duration_s * scenario.sample_rate_hz < scenario.segment_length:
        problems.append("segment_length: longer than the synthesized series")
    line = scenario.budget.calibration_line
    if line.rms_m > 0 and line.frequency_hz >= scenario.sample_rate_hz / 2:
        problems.append("calibration_line: frequency must be below Nyquist")
    if problems:
        raise ConfigError("invalid scenario: " + "; ".join(problems))

    derived = derive_cavity(scenario.config)
    spring = effective_resonance(scenario.config, derived)
    for i, gain in enumerate(gains):
        report = assess_stability(spring, ServoConfig(damping_gain_rad_s=gain),
                                  scenario.config, derived)
        if not report.stable:
            raise ConfigError(
                f"invalid scenario: gain ladder entry {i} "
                f"({gain:.6g} rad/s) leaves the loop unstable "
                f"(net damping {report.net_damping_rad_s:.6g} rad/s)")


@dataclass
class ScenarioResult:
    out_dir: Path
    summaries: list[ModeSummary]
    fits: list[LorentzianFit]
    report: CoolingReport
    manifest: dict


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _summary_from_doc(doc: dict) -> ModeSummary:
    names = [f.name for f in dataclasses.fields(ModeSummary)]
    return ModeSummary(**{name: doc[name] for name in names})


def aggregate_summaries(paths: list[Path]) -> list[dict]:
    """Load per-gain summary documents, refusing mismatched config hashes."""
    docs = []
    for path in paths:
        docs.append(json.loads(Path(path).read_text()))
    hashes = {doc.get("config_hash") for doc in docs}
    if len(hashes) > 1:
        raise ValueError(
            "refusing to aggregate summaries with mismatched config hashes: "
            + ", ".join(sorted(str(h) for h in hashes)))
    return docs


def run_scenario(scenario: Scenario, out_dir: str | Path) -> ScenarioResult:
    """Execute the full pipeline and write the artifact bundle.

    Writes, per gain: the transfer-function sweep, the resonance fit, the
    calibrated PSD estimate, and the mode summary (optionally the raw time
    series); then the cross-gain cooling report and a manifest listing
    every file with its hash and per-stage statuses.  Partial outputs are
    retained on failure, with the manifest marking incompleteness.
    """
    validate_scenario(scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    cfg = scenario.config
    cfg_hash = config_hash(cfg)
    derived = derive_cavity(cfg)
    spring = effective_resonance(cfg, derived)
    base_meta = {"config_hash": cfg_hash, "master_seed": scenario.seed}

    stages: list[dict] = []
    files: list[Path] = []
    manifest_path = out / "MANIFEST.json"

    def finish_manifest(complete: bool) -> dict:
        manifest = {
            "schema": "optspring-bundle/1",
            "config_hash": cfg_hash,
            "master_seed": scenario.seed,
            "seed_rule": "entry_seed = master_seed XOR entry_index",
            "complete": complete,
            "stages": stages,
            "files": [{"name": f.name, "sha256": _sha256(f)}
                      for f in sorted(files, key=lambda p: p.name)],
        }
        _write_json(manifest_path, manifest)
        return manifest

    def stage(name: str, fn):
        try:
            value = fn()
        except Exception as exc:
            stages.append({"stage": name, "status": "failed",
                           "error": f"{type(exc).__name__}: {exc}"})
            finish_manifest(False)
            raise
        stages.append({"stage": name, "status": "ok"})
        return value

    fits: list[LorentzianFit] = []
    summary_paths: list[Path] = []
    grid = scenario.sweep_grid_hz
    n_samples = int(round(scenario.duration_s * scenario.sample_rate_hz))
    synth_grid = np.fft.rfftfreq(n_samples, 1.0 / scenario.sample_rate_hz)
    line = scenario.budget.calibration_line

    for index, gain in enumerate(scenario.servo_gains_rad_s):
        tag = f"gain{index}"
        entry_seed = (scenario.seed ^ index) & _U64_MASK
        servo = ServoConfig(damping_gain_rad_s=gain)
        entry_meta = dict(base_meta, seed=entry_seed,
                          servo_gain_rad_s=repr(float(gain)))

        tf = stage(f"{tag}/sweep", lambda: force_response_sweep(
            grid, spring, servo, cfg, derived,
            per_bin_spring=scenario.per_bin_spring))
        tf_path = out / f"transfer_function_{tag}.csv"
        tf.to_csv(tf_path, entry_meta)
        files.append(tf_path)

        fit = stage(f"{tag}/fit", lambda: fit_lorentzian(
            tf.frequency_hz, np.abs(tf.response) ** 2))
        fits.append(fit)
        fit_path = out / f"fit_{tag}.json"
        _write_json(fit_path, dict(dataclasses.asdict(fit),
                                   config_hash=cfg_hash, seed=entry_seed,
                                   servo_gain_rad_s=gain))
        files.append(fit_path)

        def synthesize():
            model = displacement_psd(synth_grid, scenario.budget, spring,
                                     servo, cfg, derived,
                                     per_bin_spring=scenario.per_bin_spring)
            series = synthesize_timeseries(model, scenario.duration_s,
                                           scenario.sample_rate_hz,
                                           seed=entry_seed)
            if line.rms_m > 0:
                series = inject_calibration_line(series, line.frequency_hz,
                                                 line.rms_m, seed=entry_seed)
            return series

        series = stage(f"{tag}/synthesis", synthesize)
        if scenario.write_timeseries:
            ts_path = out / f"timeseries_{tag}.csv"
            series.to_csv(ts_path, entry_meta)
            files.append(ts_path)

        estimate = stage(f"{tag}/estimate", lambda: estimate_psd(
            series, scenario.segment_length, scenario.overlap,
            scenario.window))
        if line.rms_m > 0:
            estimate = stage(f"{tag}/calibrate", lambda: calibrate_spectrum(
                estimate, line.frequency_hz, line.rms_m))

        def thermometry():
            x_band = band_rms(estimate, *scenario.band_hz)
            thermo = effective_temperature(x_band, scenario.band_hz, fit,
                                           cfg, derived)
            summary = mode_summary(fit.frequency_rad_s, fit.damping_rad_s,
                                   thermo.effective_temperature_k,
                                   cfg, derived)
            return x_band, thermo, summary

        x_band, thermo, summary = stage(f"{tag}/thermometry", thermometry)

        psd_path = out / f"psd_{tag}.csv"
        estimate.to_csv(psd_path, dict(entry_meta,
                                       band_rms_m=repr(float(x_band))))
        files.append(psd_path)

        summary_path = out / f"mode_summary_{tag}.json"
        _write_json(summary_path, dict(
            summary.to_json_dict(), config_hash=cfg_hash, seed=entry_seed,
            servo_gain_rad_s=gain, band_hz=list(scenario.band_hz),
            band_rms_m=x_band, band_power_fraction=thermo.band_power_fraction))
        files.append(summary_path)
        summary_paths.append(summary_path)

    def build_report():
        docs = aggregate_summaries(summary_paths)
        summaries = [_summary_from_doc(doc) for doc in docs]
        coldest = min(summaries, key=lambda s: s.effective_temperature_k)
        initial = initial_mode_summary(cfg, derived)
        return summaries, cooling_report(initial, coldest, scenario.targets)

    summaries, report = stage("report", build_report)
    report_path = out / "cooling_report.json"
    _write_json(report_path, dict(report.to_json_dict(),
                                  config_hash=cfg_hash,
                                  master_seed=scenario.seed))
    files.append(report_path)

    manifest = finish_manifest(True)
    return ScenarioResult(out_dir=out, summaries=summaries, fits=fits,
                          report=report, manifest=manifest)


def sweep_parameter(scenario: Scenario, name: str, values) -> list[dict]:
    """Model-predicted mode summaries along one swept parameter.

    No noise synthesis: each row reports the self-consistent resonance,
    dilution metrics, and the analytic effective temperature of the
    scenario budget (thermal plus frequency noise) at the scenario's
    highest servo gain.  Statically or dynamically unstable points are
    reported with NaN summary fields and a status flag.
    """
    if name not in _SWEEPABLE:
        raise ConfigError(
            f"unknown sweep parameter {name!r}; valid: {', '.join(_SWEEPABLE)}")
    constants = CODATA
    rows = []
    for value in values:
        if name == "servo_gain":
            cfg = scenario.config
            gain = float(value)
            if gain < 0:
                raise ConfigError("servo_gain values must be >= 0")
        else:
            cfg = replace(scenario.config, **{name: float(value)})
            gain = scenario.servo_gains_rad_s[-1]
        derived = derive_cavity(cfg)
        row = {
            "parameter": name,
            "value": float(value),
            "status": "ok",
            "static_spring_n_per_m": static_spring_constant(cfg, constants),
            "effective_frequency_hz": math.nan,
            "dilution_factor": math.nan,
            "diluted_quality_factor": math.nan,
            "net_damping_rad_s": math.nan,
            "quality_factor": math.nan,
            "effective_temperature_k": math.nan,
            "occupation": math.nan,
        }
        try:
            spring = effective_resonance(cfg, derived, constants)
        except StaticInstabilityError:
            row["status"] = "statically_unstable"
            rows.append(row)
            continue
        omega = spring.effective_frequency_rad_s
        row["effective_frequency_hz"] = omega / (2.0 * math.pi)
        row["dilution_factor"] = spring.dilution_factor
        row["diluted_quality_factor"] = spring.diluted_q
        net = derived.mechanical_damping_rad_s \
            - spring.optical_antidamping_rad_s + gain
        row["net_damping_rad_s"] = net
        if net <= 0:
            row["status"] = "unstable_loop"
            rows.append(row)
            continue
        row["quality_factor"] = omega / net
        temperature = 0.0
        if scenario.budget.include_thermal:
            temperature += cfg.ambient_temperature_k \
                * derived.mechanical_damping_rad_s / net
        level_sq = scenario.budget.frequency_noise_m_per_rthz ** 2
        temperature += derived.reduced_mass_kg * omega ** 4 * level_sq \
            / (4.0 * constants.boltzmann * net)
        row["effective_temperature_k"] = temperature
        row["occupation"] = constants.boltzmann * temperature \
            / (constants.hbar * omega)
        rows.append(row)
    return rows


def write_sweep_csv(path: str | Path, rows: list[dict],
                    metadata: dict | None = None) -> None:
    """Write sweep rows as CSV with the usual metadata header."""
    if not rows:
        raise ValueError("no sweep rows to write")
    columns = list(rows[0].keys())
    lines = [f"# {k}={v}" for k, v in (metadata or {}).items()]
    lines.append(",".join(columns))
    for row in rows:
        cells = []
        for col in columns:
            value = row[col]
            cells.append(repr(float(value)) if isinstance(value, float)
                         else str(value))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
