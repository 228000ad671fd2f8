"""Experiment configuration, physical constants, and derived cavity quantities.

All angular frequencies are stored internally in rad/s; Hz appears only at
I/O boundaries (config files use explicit ``*_hz`` keys and are converted
on load).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields, asdict
from pathlib import Path


class ConfigError(ValueError):
    """Invalid experiment configuration or config file."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Fixed CODATA values; immutable after construction."""

    speed_of_light: float = 299792458.0   # m/s
    boltzmann: float = 1.380649e-23       # J/K
    hbar: float = 1.054571817e-34         # J s


CODATA = PhysicalConstants()


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical inputs of the apparatus, SI units throughout.

    Defaults are the reference profile of the modeled tabletop experiment:
    a 0.1 m cavity formed by a 0.25 kg input mirror and a 1 g end mirror
    whose longitudinal suspension mode sits at 12.7 Hz with Q = 19950,
    pumped with 100 mW at 1064 nm and held off resonance at half a
    linewidth.

    ``coupling_efficiency`` multiplies the input power to absorb
    mode-matching and loss effects that are not modeled individually; 1.0
    means perfect coupling.  ``detuning_over_gamma`` is the cavity detuning
    expressed as a fraction of the linewidth (HWHM); its sign selects the
    detuning direction.  ``end_transmissivity`` is stored for completeness
    but does not enter the model.
    """

    cavity_length_m: float = 0.1
    input_transmissivity: float = 800e-6
    end_transmissivity: float = 1e-5
    wavelength_m: float = 1.064e-6
    input_power_w: float = 0.1
    coupling_efficiency: float = 1.0
    detuning_over_gamma: float = 0.5
    input_mirror_mass_kg: float = 0.25
    end_mirror_mass_kg: float = 1e-3
    free_resonance_rad_s: float = 2.0 * math.pi * 12.7
    mechanical_q: float = 19950.0
    ambient_temperature_k: float = 295.0


@dataclass(frozen=True)
class CavityDerived:
    """Quantities computed from an :class:`ExperimentConfig`.

    ``linewidth_rad_s`` is the cavity pole (HWHM) ``T_i c / (4 L)``;
    ``resonant_gain`` is the on-resonance intracavity power buildup
    ``4 / T_i``; ``reduced_mass_kg`` is the two-mirror reduced mass, the
    inertia of the cavity-length coordinate.
    """

    linewidth_rad_s: float
    resonant_gain: float
    circulating_power_w: float
    reduced_mass_kg: float
    mechanical_damping_rad_s: float


def paper_default_config() -> ExperimentConfig:
    """The reference configuration profile (all dataclass defaults)."""
    return ExperimentConfig()


def validate_config(config: ExperimentConfig) -> list[str]:
    """Check every config invariant; returns a list of violations.

    Each entry names the offending field.  An empty list means the config
    is valid.  Errors are the return value, nothing is raised here.
    """
    problems: list[str] = []

    for f in fields(config):
        value = getattr(config, f.name)
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            problems.append(f"{f.name}: must be a finite number")

    if problems:
        return problems

    def require(ok: bool, name: str, msg: str) -> None:
        if not ok:
            problems.append(f"{name}: {msg}")

    c = config
    require(c.cavity_length_m > 0, "cavity_length_m", "must be > 0")
    require(c.wavelength_m > 0, "wavelength_m", "must be > 0")
    require(c.input_mirror_mass_kg > 0, "input_mirror_mass_kg", "must be > 0")
    require(c.end_mirror_mass_kg > 0, "end_mirror_mass_kg", "must be > 0")
    require(c.ambient_temperature_k > 0, "ambient_temperature_k", "must be > 0")
    require(0 < c.input_transmissivity < 1, "input_transmissivity",
            "must be a power fraction in (0, 1)")
    require(0 <= c.end_transmissivity < 1, "end_transmissivity",
            "must be a power fraction in [0, 1)")
    require(c.input_power_w >= 0, "input_power_w", "must be >= 0")
    require(0 < c.coupling_efficiency <= 1, "coupling_efficiency",
            "must be in (0, 1]")
    require(c.free_resonance_rad_s > 0, "free_resonance_rad_s", "must be > 0")
    require(c.mechanical_q >= 0.5, "mechanical_q", "must be >= 0.5")
    return problems


def derive_cavity(config: ExperimentConfig,
                  constants: PhysicalConstants = CODATA) -> CavityDerived:
    """Compute all derived cavity quantities.

    Pure and deterministic: identical configs yield bit-identical outputs.
    Raises :class:`ConfigError` naming the offending fields if the config
    violates any invariant.
    """
    problems = validate_config(config)
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))

    linewidth = config.input_transmissivity * constants.speed_of_light \
        / (4.0 * config.cavity_length_m)
    gain = 4.0 / config.input_transmissivity
    detuning_suppression = 1.0 + config.detuning_over_gamma ** 2
    circulating = config.coupling_efficiency * config.input_power_w * gain \
        / detuning_suppression
    m1 = config.input_mirror_mass_kg
    m2 = config.end_mirror_mass_kg
    reduced_mass = m1 * m2 / (m1 + m2)
    mechanical_damping = config.free_resonance_rad_s / config.mechanical_q
    return CavityDerived(
        linewidth_rad_s=linewidth,
        resonant_gain=gain,
        circulating_power_w=circulating,
        reduced_mass_kg=reduced_mass,
        mechanical_damping_rad_s=mechanical_damping,
    )


def config_hash(config: ExperimentConfig) -> str:
    """Short stable hash of the config, embedded in every output file."""
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# Config file keys; values are (dataclass field, scale applied on load).
# Frequencies are quoted in Hz in files and converted to rad/s here.
_FILE_KEYS: dict[str, tuple[str, float]] = {
    "cavity_length_m": ("cavity_length_m", 1.0),
    "input_transmissivity": ("input_transmissivity", 1.0),
    "end_transmissivity": ("end_transmissivity", 1.0),
    "wavelength_m": ("wavelength_m", 1.0),
    "input_power_w": ("input_power_w", 1.0),
    "coupling_efficiency": ("coupling_efficiency", 1.0),
    "detuning_over_gamma": ("detuning_over_gamma", 1.0),
    "input_mirror_mass_kg": ("input_mirror_mass_kg", 1.0),
    "end_mirror_mass_kg": ("end_mirror_mass_kg", 1.0),
    "free_resonance_hz": ("free_resonance_rad_s", 2.0 * math.pi),
    "mechanical_q": ("mechanical_q", 1.0),
    "ambient_temperature_k": ("ambient_temperature_k", 1.0),
}


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an :class:`ExperimentConfig` from a key-value text file.

    Format: one ``key = value`` pair per line, ``#`` starts a comment,
    blank lines ignored.  Keys carry explicit SI units in their names
    (see ``configs/paper_default.cfg``).  Unknown or duplicate keys are an
    error; missing keys fall back to the default profile.
    """
    path = Path(path)
    overrides: dict[str, float] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FILE_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        field_name, scale = _FILE_KEYS[key]
        if field_name in overrides:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            overrides[field_name] = float(value.strip()) * scale
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: value for {key!r} is not a number") from None
    return ExperimentConfig(**overrides)
