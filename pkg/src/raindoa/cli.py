"""Command-line driver for the simulation and calibration experiments.

Subcommands
-----------
rmse-sweep    RMSE vs SNR for the configured methods
spectrum      MUSIC spectra under the no-rain / distorted / calibrated conditions
rb-recovery   trial-averaged distortion-covariance subdiagonal comparison
pdf-study     empirical phase-difference and magnitude-ratio densities
calibrate     covariance file in, phase/magnitude matrices and residual out
fit-alpha     fit decorrelation-model coefficients to observations

All experiment subcommands accept ``--config`` (a JSON experiment spec),
``--seed``, ``--out``, and ``--threads``; flag values override the
config file.  Without a config, ``--profile reference`` selects the
bundled heavy-rain benchmark and then requires an explicit ``--seed``.
On failure a machine-readable JSON error is printed to stderr and the
exit code is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._version import __version__
from .calibration import calibrate
from .distortion import alpha_empirical, fit_alpha_coeffs, scenario_from_dict
from .estimators import peak_prominence
from .experiments import (
    ExperimentSpec,
    anchor_pdf_cases,
    load_experiment_spec,
    reference_experiment_spec,
    run_pdf_study,
    run_rb_recovery,
    run_rmse_sweep,
    run_spectrum_comparison,
    write_rb_recovery_csv,
    write_rmse_csv,
)
from .io import (
    read_covariance_csv,
    write_covariance_csv,
    write_histogram_csv,
    write_json,
    write_spectrum_csv,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="experiment spec JSON file")
    parser.add_argument("--profile", choices=["reference"],
                        help="bundled experiment profile (requires --seed)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker processes")


def _resolve_spec(args) -> ExperimentSpec:
    if args.config is not None:
        spec = load_experiment_spec(args.config)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        return spec
    if args.profile == "reference":
        if args.seed is None:
            raise SystemExit2("--seed is required with --profile reference")
        return reference_experiment_spec(seed=args.seed)
    raise SystemExit2("either --config or --profile is required")


class SystemExit2(Exception):
    """Usage-level error; reported as JSON with exit code 2."""


def _cmd_rmse_sweep(args) -> None:
    spec = _resolve_spec(args)
    records = run_rmse_sweep(spec, n_workers=args.threads)
    out = args.out / "rmse_sweep.csv"
    write_rmse_csv(out, records, spec)
    write_json(args.out / "rmse_sweep.json", {
        "spec": spec.to_dict(),
        "version": __version__,
        "records": [vars(r) for r in records],
    })
    print(f"wrote {out}")


def _cmd_spectrum(args) -> None:
    spec = _resolve_spec(args)
    spectra = run_spectrum_comparison(spec, snr_db=args.snr_db)
    summary = {}
    for condition, spectrum in spectra.items():
        out = args.out / f"spectrum_{condition}.csv"
        write_spectrum_csv(out, spectrum, {
            "spec": spec.to_dict(), "version": __version__,
            "condition": condition, "snr_db": args.snr_db,
        })
        prominence = peak_prominence(spectrum)
        summary[condition] = {
            "peak_deg": float(spectrum.peak_angles_deg[0]),
            "prominence_db": None if np.isinf(prominence) else prominence,
        }
        print(f"wrote {out}")
    write_json(args.out / "spectrum_summary.json", {
        "spec": spec.to_dict(), "version": __version__,
        "snr_db": args.snr_db, "conditions": summary,
    })


def _cmd_rb_recovery(args) -> None:
    spec = _resolve_spec(args)
    records = run_rb_recovery(spec, snr_db=args.snr_db)
    out = args.out / "rb_recovery.csv"
    write_rb_recovery_csv(out, records, spec, snr_db=args.snr_db)
    print(f"wrote {out}")


def _cmd_pdf_study(args) -> None:
    if args.seed is None:
        raise SystemExit2("--seed is required for pdf-study")
    if args.alpha:
        cases = run_pdf_study(args.alpha, args.n_samples, args.seed, n_bins=args.bins)
    else:
        cases = anchor_pdf_cases(args.n_samples, args.seed, n_bins=args.bins)
    for case in cases:
        meta = {
            "alpha": case.stats.alpha,
            "case": case.label,
            "n_samples": case.stats.n_samples,
            "seed": args.seed,
            "version": __version__,
        }
        slug = case.label.replace("=", "_").replace(".", "p")
        phase_path = args.out / f"phase_diff_{slug}.csv"
        ratio_path = args.out / f"magnitude_ratio_{slug}.csv"
        write_histogram_csv(phase_path, case.stats.phase_diff_histogram, meta)
        write_histogram_csv(ratio_path, case.stats.magnitude_ratio_histogram, meta)
        print(f"wrote {phase_path} and {ratio_path}")


def _cmd_calibrate(args) -> None:
    covariance = read_covariance_csv(args.input)
    result = calibrate(covariance, clip_psd=args.clip_psd)
    meta = {"input": args.input.name, "version": __version__}
    write_covariance_csv(args.out / "phase_matrix.csv", result.phase_matrix, meta)
    write_covariance_csv(args.out / "magnitude_matrix.csv", result.magnitude_matrix, meta)
    write_json(args.out / "calibration.json", {
        "input": args.input.name,
        "version": __version__,
        "residual": result.residual,
        "coefficients": list(result.coefficients),
    })
    print(f"residual {result.residual:.6g}; wrote phase_matrix.csv, "
          f"magnitude_matrix.csv, calibration.json in {args.out}")


def _read_observations(path: Path) -> list:
    observations = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        required = {"range_m", "d_over_lambda0", "alpha"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"observations file needs columns {sorted(required)}, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            observations.append((
                float(row["range_m"]),
                float(row["d_over_lambda0"]),
                float(row["alpha"]),
            ))
    return observations


def _cmd_fit_alpha(args) -> None:
    observations = _read_observations(args.observations)
    fit = fit_alpha_coeffs(observations, fix_a2=args.fix_a2, fix_a3=args.fix_a3)
    payload = {
        "a1": fit.coeffs.a1,
        "a2": fit.coeffs.a2,
        "a3": fit.coeffs.a3,
        "residual": fit.residual,
        "n_observations": fit.n_observations,
        "version": __version__,
    }
    out = args.out / "alpha_coeffs.json"
    write_json(out, payload)
    print(json.dumps(payload, sort_keys=True))


def _cmd_alpha(args) -> None:
    # small convenience: evaluate the fitted model at one geometry
    scenario = scenario_from_dict(json.loads(args.scenario_json))
    print(f"{alpha_empirical(scenario, args.separation_m):.6f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raindoa",
        description="Rain-distorted ULA simulation, covariance calibration, and DoA estimation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rmse-sweep", help="RMSE vs SNR sweep")
    _add_common(p)
    p.set_defaults(func=_cmd_rmse_sweep)

    p = sub.add_parser("spectrum", help="three-condition MUSIC spectra")
    _add_common(p)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("rb-recovery", help="distortion covariance recovery by lag")
    _add_common(p)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.set_defaults(func=_cmd_rb_recovery)

    p = sub.add_parser("pdf-study", help="empirical pair statistics")
    _add_common(p)
    p.add_argument("--alpha", type=float, action="append", default=None,
                   help="decorrelation value (repeatable; default: bundled anchors)")
    p.add_argument("--n-samples", type=int, default=1_000_000)
    p.add_argument("--bins", type=int, default=181)
    p.set_defaults(func=_cmd_pdf_study)

    p = sub.add_parser("calibrate", help="calibrate a covariance CSV file")
    p.add_argument("--input", type=Path, required=True, help="covariance CSV")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--clip-psd", action="store_true",
                   help="clip negative eigenvalues of the fit before decoupling")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("fit-alpha", help="fit decorrelation coefficients")
    p.add_argument("--observations", type=Path, required=True,
                   help="CSV with columns range_m,d_over_lambda0,alpha")
    p.add_argument("--fix-a2", type=float, default=None)
    p.add_argument("--fix-a3", type=float, default=None)
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=_cmd_fit_alpha)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "out"):
            args.out.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except SystemExit2 as exc:
        print(json.dumps({"error": {"type": "usage", "message": str(exc)}}),
              file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
