"""Command-line scenario runner.

Exit codes: 0 success, 2 validation error, 3 instability, 4 fit or
calibration failure, 5 I/O error.  On failure a machine-readable
``error.json`` is written to the output directory when possible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .inference import FitError
from .loop import UnstablePlantError
from .model import ConfigError, config_hash, load_config
from .scenario import DEFAULT_SEED, paper_scenario, run_scenario, \
    sweep_parameter, write_sweep_csv
from .spectral import CalibrationError
from .spring import ConvergenceError, StaticInstabilityError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optspring",
        description="Simulate a detuned-cavity optical spring with cold "
                    "damping: synthesize noise data, estimate spectra, and "
                    "report effective temperatures.")
    parser.add_argument("--config", type=Path, default=None,
                        help="experiment config file (default: built-in "
                             "calibrated profile)")
    parser.add_argument("--out", type=Path, default=Path("optspring_out"),
                        help="output directory (default: %(default)s)")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="unsigned 64-bit master seed (default: %(default)s)")
    parser.add_argument("--gains", type=str, default=None,
                        help="comma-separated servo damping gains in 1/s, "
                             "ascending; overrides the built-in ladder")
    parser.add_argument("--sweep", type=str, default=None, metavar="NAME=V1,V2,...",
                        help="sweep one parameter instead of running the "
                             "pipeline (detuning_over_gamma, input_power_w, "
                             "coupling_efficiency, servo_gain)")
    parser.add_argument("--band", type=str, default="850,1100",
                        help="integration band LO,HI in Hz (default: %(default)s)")
    parser.add_argument("--exact-spring", action="store_true",
                        help="evaluate the optical spring per frequency bin "
                             "instead of freezing it at the resonance")
    return parser


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"could not parse {what}: {text!r}") from None


def _fail(out_dir: Path, code: int, exc: Exception) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc),
               "exit_code": code}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n")
    except OSError:
        pass
    print(f"optspring: error: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else None
        band = _parse_floats(args.band, "--band")
        if len(band) != 2:
            raise ConfigError("--band needs exactly two values: LO,HI")
        gains = None
        if args.gains is not None:
            gains = tuple(_parse_floats(args.gains, "--gains"))
        scenario = paper_scenario(seed=args.seed, config=config, gains=gains,
                                  band_hz=(band[0], band[1]),
                                  per_bin_spring=args.exact_spring)

        if args.sweep is not None:
            name, sep, values_text = args.sweep.partition("=")
            if not sep or not values_text.strip():
                raise ConfigError("--sweep expects NAME=V1,V2,...")
            values = _parse_floats(values_text, "--sweep values")
            rows = sweep_parameter(scenario, name.strip(), values)
            args.out.mkdir(parents=True, exist_ok=True)
            out_path = args.out / f"sweep_{name.strip()}.csv"
            write_sweep_csv(out_path, rows, {
                "config_hash": config_hash(scenario.config),
                "master_seed": scenario.seed,
            })
            print(f"wrote {out_path}")
            return 0

        result = run_scenario(scenario, args.out)
        coldest = result.report.final
        print(f"wrote bundle to {result.out_dir}")
        print(f"coldest mode: T_eff = "
              f"{coldest.effective_temperature_k * 1e3:.3g} mK, "
              f"Q_eff = {coldest.quality_factor:.3g}, cooling factor = "
              f"{result.report.cooling_factor:.3g}")
        if result.report.checks:
            status = "pass" if result.report.all_passed else "FAIL"
            print(f"declared-target checks: {status}")
        return 0
    except (ConfigError, ValueError) as exc:
        return _fail(args.out, 2, exc)
    except (UnstablePlantError, StaticInstabilityError) as exc:
        return _fail(args.out, 3, exc)
    except (FitError, CalibrationError, ConvergenceError) as exc:
        return _fail(args.out, 4, exc)
    except OSError as exc:
        return _fail(args.out, 5, exc)


if __name__ == "__main__":
    sys.exit(main())
