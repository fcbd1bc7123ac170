"""Command line entry point.

Subcommands::

    csbench simulate --config CFG [--out DIR] [--seed N] [--exact]
    csbench process  --curves FILE [--config CFG] [--out DIR] [--seed N] [--baseline] [--svg]
    csbench report   REPORT
    csbench run      --config CFG [--out DIR] [--seed N] [--exact] [--baseline] [--svg]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .estimation import EstimationError, FidelityReport
from .fitting import FitError
from .pipeline import RunResult, oracle_fidelity, process_curves
from .protocol import DataError, ProtocolConfig, curves_from_records, curves_to_records, run_protocol

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4
CURVES_FILE = "curves.json"
SIDECAR_FILE = "simulation.json"
HISTOGRAM_BINS = 40


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: Path, error=DataError):
    try:
        with Path(path).open() as fh:
            return json.load(fh)
    except OSError as exc:
        raise error(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise error(f"{path} is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def simulate(config: ExperimentConfig, out: Path, exact: bool = False) -> Path:
    gate = config.resolve_gate()
    noise = config.resolve_noise(gate)
    curves = run_protocol(ProtocolConfig(gate, noise, config.l_max, config.shots, config.seed, exact))
    write_json(out / CURVES_FILE, curves_to_records(curves))
    sidecar = {
        "config": config.echo(gate),
        "exact": exact,
        "noise": noise.to_json(),
        "oracle_fidelity": oracle_fidelity(gate, noise),
        "seed_scheme": "curve i uses (seed XOR i*0x9E3779B97F4A7C15) mod 2^64",
        "noise_order": "per-qubit factors applied in listed order, then tensored over qubits",
    }
    write_json(out / SIDECAR_FILE, sidecar)
    return out / CURVES_FILE


# ---------------------------------------------------------------------------
# process
# ---------------------------------------------------------------------------

def _load_curves(path: Path) -> list:
    curves = curves_from_records(read_json(path))
    if not curves:
        raise DataError(f"{path} holds no curves")
    return curves


def _fitted_curve_rows(result: RunResult) -> list:
    rows = []
    base = {f.pair: f for f in result.baseline_fits} if result.baseline_fits else {}
    for curve, fit in zip(result.curves, result.fits):
        model = fit.evaluate(curve.depths)
        ref = base[curve.pair].evaluate(curve.depths) if curve.pair in base else None
        for i, L in enumerate(curve.depths):
            row = [curve.a, curve.b, int(L), repr(float(curve.p_hat[i])), repr(float(model[i]))]
            if base:
                row.append(repr(float(ref[i])))
            rows.append(row)
    return rows


def write_plot_data(result: RunResult, out: Path) -> None:
    report = result.report
    header = ["a", "b", "L", "p_hat", "p_fit"] + (["p_fit_baseline"] if result.baseline_fits else [])
    _write_csv(out / "fitted_curves.csv", header, _fitted_curve_rows(result))

    rows = []
    for e in report.eigenvalues:
        rows.append([e.a, e.b, repr(abs(e.z)), repr(float(np.angle(e.z))), repr(e.z.real), repr(e.z.imag),
                     repr(abs(e.f)), repr(e.assigned_ideal.real), repr(e.assigned_ideal.imag),
                     repr(e.lambda_e.real), e.reason])
    _write_csv(out / "eigenvalues_polar.csv",
               ["a", "b", "radius", "phase", "z_re", "z_im", "amplitude", "ideal_re", "ideal_im",
                "lambda_e_re", "reason"], rows)

    counts, edges = np.histogram(report.samples, bins=HISTOGRAM_BINS)
    _write_csv(out / "bootstrap_histogram.csv", ["bin_low", "bin_high", "count"],
               [[repr(float(lo)), repr(float(hi)), int(c)] for lo, hi, c in zip(edges[:-1], edges[1:], counts)])


def _write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _resolve_process_config(curves_path: Path, config_path: Path | None) -> tuple:
    """Config and optional sidecar for a curve file; the sidecar beside the curves is used if present."""
    sidecar_path = curves_path.parent / SIDECAR_FILE
    sidecar = read_json(sidecar_path, ConfigError) if sidecar_path.exists() else None
    if config_path is not None:
        return load_config(config_path), sidecar
    if sidecar is not None and "config" in sidecar:
        return config_from_dict(sidecar["config"], base_dir=curves_path.parent), sidecar
    raise ConfigError(
        "no gate definition: pass --config with a 'gate' entry (no simulation sidecar next to the curves)")


def process(curves_path: Path, out: Path, config_path: Path | None = None, seed: int | None = None,
            baseline: bool = False, svg: bool = False) -> FidelityReport:
    config, sidecar = _resolve_process_config(curves_path, config_path)
    config = config.with_seed(seed)
    gate = config.resolve_gate()
    curves = _load_curves(curves_path)
    oracle = sidecar.get("oracle_fidelity") if sidecar else None
    settings = {"config": config.echo(gate)}
    try:
        result = process_curves(curves, gate, config.seed, config.estimation, config.model,
                                baseline=baseline, oracle=oracle, weighting=config.weighting,
                                settings=settings)
    except (FitError, ValueError) as exc:
        raise DataError(str(exc)) from None
    write_json(out / "report.json", result.report.to_json())
    fits = [f.to_json() for f in result.fits]
    if result.baseline_fits:
        fits += [f.to_json() for f in result.baseline_fits]
    write_json(out / "fits.json", fits)
    write_plot_data(result, out)
    if svg:
        from .plots import write_svgs
        write_svgs(result, out)
    return result.report


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def format_report(data: dict) -> str:
    try:
        est = data["settings"]["estimation"]
        lines = [
            f"FEI = [{data['fei_low']:.6f}, {data['fei_high']:.6f}]",
            f"midpoint = {data['midpoint']:.6f}",
            f"degenerate estimate = {data['degenerate_estimate']:.6f}"
            + (" (single-group fallback)" if data.get("degenerate_fallback") else ""),
            f"kept eigenvalues = {data['kept_count']} of {data['kept_count'] + data['rejected_count']}",
            f"thresholds: amplitude = {est['amp_threshold']:.6g}, phase = {est['phase_threshold']:.6f}",
            f"bootstrap: resamples = {data['resamples']}, quantiles = "
            f"[{data['quantiles'][0]:.4g}, {data['quantiles'][1]:.4g}]",
            f"subspaces: d_ts = {data['d_ts']}, d_ns = {data['d_ns']}",
            f"seed = {data['seed']}",
        ]
        if data.get("oracle_fidelity") is not None:
            lines.append(f"oracle fidelity = {data['oracle_fidelity']:.6f}")
        if data.get("baseline_estimate") is not None:
            lines.append(f"baseline (four_term_mp) estimate = {data['baseline_estimate']:.6f}")
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise DataError(f"malformed report: missing or invalid {exc}") from None
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csbench", description="Channel spectrum benchmarking.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate decay curves and write curves.json")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int)
    p.add_argument("--exact", action="store_true", help="store exact probabilities, no shot sampling")

    p = sub.add_parser("process", help="fit curves and estimate the fidelity")
    p.add_argument("--curves", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int)
    p.add_argument("--baseline", action="store_true", help="also run the four-term matrix pencil baseline")
    p.add_argument("--svg", action="store_true", help="render SVG figures (needs matplotlib)")

    p = sub.add_parser("report", help="print a summary of a report file")
    p.add_argument("report", type=Path)

    p = sub.add_parser("run", help="simulate then process")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--svg", action="store_true")
    return parser


def _dispatch(args) -> None:
    if args.command == "simulate":
        config = load_config(args.config).with_seed(args.seed)
        simulate(config, args.out, args.exact)
    elif args.command == "process":
        process(args.curves, args.out, args.config, args.seed, args.baseline, args.svg)
    elif args.command == "report":
        print(format_report(read_json(args.report)))
    elif args.command == "run":
        config = load_config(args.config).with_seed(args.seed)
        curves = simulate(config, args.out, args.exact)
        process(curves, args.out, None, None, args.baseline, args.svg)
        print(format_report(read_json(args.out / "report.json")))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
