"""Frequency- and time-gridded dataset containers with CSV export.

CSV files carry ``# key=value`` metadata header lines (config hash, RNG
seed, and estimator metadata where applicable) followed by a column-name
row.  Floats are written with ``repr`` so identical data produces
byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


def write_csv(path: str | Path, metadata: dict, columns: dict[str, np.ndarray]) -> None:
    """Write named columns with a metadata comment header."""
    arrays = [np.asarray(col) for col in columns.values()]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("all columns must have equal length")
    lines = [f"# {key}={value}" for key, value in metadata.items()]
    lines.append(",".join(columns.keys()))
    for i in range(n):
        lines.append(",".join(repr(float(a[i])) for a in arrays))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back a file produced by :func:`write_csv`."""
    metadata: dict[str, str] = {}
    rows: list[list[float]] = []
    names: list[str] | None = None
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("#"):
            key, _, value = raw[1:].strip().partition("=")
            metadata[key.strip()] = value.strip()
        elif names is None:
            names = [c.strip() for c in raw.split(",")]
        elif raw.strip():
            rows.append([float(v) for v in raw.split(",")])
    if names is None:
        raise ValueError(f"{path}: no column header found")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return metadata, {name: data[:, j] for j, name in enumerate(names)}


def _check_grid(frequency_hz: np.ndarray) -> np.ndarray:
    grid = np.asarray(frequency_hz, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("frequency grid must be a nonempty 1-d array")
    if not np.all(np.isfinite(grid)):
        raise ValueError("frequency grid must be finite")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("frequency grid must be strictly increasing")
    return grid


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Complex response (m/N) to an applied force, on an ascending Hz grid."""

    frequency_hz: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "frequency_hz", _check_grid(self.frequency_hz))
        resp = np.asarray(self.response, dtype=complex)
        if resp.shape != self.frequency_hz.shape:
            raise ValueError("response must match the frequency grid")
        if not np.all(np.isfinite(resp)):
            raise ValueError("response must be finite at every bin")
        object.__setattr__(self, "response", resp)

    def to_csv(self, path: str | Path, metadata: dict | None = None) -> None:
        write_csv(path, metadata or {}, {
            "frequency_hz": self.frequency_hz,
            "real_m_per_n": self.response.real,
            "imag_m_per_n": self.response.imag,
        })


@dataclass(frozen=True, eq=False)
class SpectrumSeries:
    """One-sided displacement PSD (m^2/Hz) on an ascending Hz grid.

    ``components`` optionally carries the per-source breakdown whose sum is
    ``psd``.  The one-sided convention is ``integral of psd df = variance``.
    """

    frequency_hz: np.ndarray
    psd: np.ndarray
    components: dict[str, np.ndarray] | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "frequency_hz", _check_grid(self.frequency_hz))
        psd = np.asarray(self.psd, dtype=float)
        if psd.shape != self.frequency_hz.shape:
            raise ValueError("psd must match the frequency grid")
        if not np.all(np.isfinite(psd)) or np.any(psd < 0):
            raise ValueError("psd must be finite and >= 0 everywhere")
        object.__setattr__(self, "psd", psd)

    def to_csv(self, path: str | Path, metadata: dict | None = None) -> None:
        meta = {"seed": self.seed if self.seed is not None else "none"}
        meta.update(metadata or {})
        columns = {"frequency_hz": self.frequency_hz,
                   "total_psd_m2_per_hz": self.psd}
        for name, arr in (self.components or {}).items():
            columns[f"{name}_psd_m2_per_hz"] = arr
        write_csv(path, meta, columns)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled displacement record (m)."""

    sample_rate_hz: float
    samples: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if not (self.sample_rate_hz > 0):
            raise ValueError("sample_rate_hz must be > 0")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a nonempty 1-d array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate_hz

    def to_csv(self, path: str | Path, metadata: dict | None = None) -> None:
        meta = {"seed": self.seed if self.seed is not None else "none",
                "sample_rate_hz": repr(float(self.sample_rate_hz))}
        meta.update(metadata or {})
        write_csv(path, meta, {"time_s": self.times_s,
                               "displacement_m": self.samples})


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    """Segment-averaged one-sided PSD estimate.

    ``resolution_bandwidth_hz`` is the window equivalent noise bandwidth,
    i.e. sample_rate / segment_length scaled by the window correction
    (1.5x for Hann).  ``calibration_scale`` accumulates the factors applied
    by spectrum calibration (1.0 for a raw estimate).
    """

    frequency_hz: np.ndarray
    psd: np.ndarray
    segment_count: int
    resolution_bandwidth_hz: float
    calibration_scale: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "frequency_hz", _check_grid(self.frequency_hz))
        psd = np.asarray(self.psd, dtype=float)
        if psd.shape != self.frequency_hz.shape:
            raise ValueError("psd must match the frequency grid")
        if not np.all(np.isfinite(psd)) or np.any(psd < 0):
            raise ValueError("psd must be finite and >= 0 everywhere")
        object.__setattr__(self, "psd", psd)
        if self.segment_count < 1:
            raise ValueError("segment_count must be >= 1")
        if not (self.resolution_bandwidth_hz > 0):
            raise ValueError("resolution_bandwidth_hz must be > 0")

    def scaled(self, factor: float) -> "PsdEstimate":
        return replace(self, psd=self.psd * factor,
                       calibration_scale=self.calibration_scale * factor)

    def to_csv(self, path: str | Path, metadata: dict | None = None) -> None:
        meta = {
            "seed": self.seed if self.seed is not None else "none",
            "segment_count": self.segment_count,
            "rbw_hz": repr(float(self.resolution_bandwidth_hz)),
            "calibration_scale": repr(float(self.calibration_scale)),
        }
        meta.update(metadata or {})
        write_csv(path, meta, {"frequency_hz": self.frequency_hz,
                               "total_psd_m2_per_hz": self.psd})
