"""Configuration-driven experiment runner.

Subcommands wrap one library operation each, read a flat INI config
(optionally based on a named preset), and write machine-readable outputs:
a fixed-column CSV per operation, a structured ``summary.json``, and the
fully resolved config echo.  Exit codes: 0 completed, 1 configuration or
usage error, 2 ergodicity-certificate refusal.  Nothing is written unless
the computation completed, so failed runs leave no partial files.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .averaging import convergence_sweep, iterated_vs_convolution
from .config import echo, load_config, resolve
from .convolution import (
    diagnose_samples,
    disintegration_test,
    estimate_density,
    general_position_check,
    jacobian_scan,
)
from .errors import (
    BudgetError,
    ConfigurationError,
    ErgodicityRefusedError,
    UsageError,
)
from .measures import ConvPower, CurveMeasure, SphereMeasure, sample
from .multiflow import ergodicity_certificate


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors by default, which would
    # collide with the certificate-refusal code
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _cert_record(cert):
    if cert is None:
        return None
    return {
        "search_radius": cert.search_radius,
        "min_frequency_norm": cert.min_frequency_norm,
        "offending_k": list(cert.offending_k) if cert.offending_k else None,
        "threshold": cert.threshold,
        "passed": cert.passed,
    }


def _write_outputs(out_dir, resolved, subcommand, results, csv_files, cert=None, started=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in csv_files.items():
        _write_csv(out_dir / name, header, rows)
    echo_text = echo(resolved)
    (out_dir / "resolved_config.ini").write_text(echo_text, encoding="ascii")
    summary = {
        "tool": "ergoavg",
        "version": __version__,
        "subcommand": subcommand,
        "notes": resolved.notes,
        "config_echo": echo_text,
        "certificate": _cert_record(cert),
        "results": results,
        "elapsed_seconds": None if started is None else time.monotonic() - started,
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )


def _resolved(args, required):
    raw = {}
    if args.config:
        raw = load_config(args.config)
    if args.preset:
        raw.setdefault("experiment", {})["preset"] = args.preset
    if not raw:
        raise ConfigurationError("provide --config and/or --preset")
    overrides = {
        "seed": args.seed,
        "waive_ergodicity": args.waive_ergodicity,
        "mc_samples": args.mc_samples,
        "quadrature_resolution": args.quadrature_resolution,
        "torus_grid": args.torus_grid,
        "threads": args.threads,
    }
    resolved = resolve(raw, overrides)
    for attr in required:
        if getattr(resolved, attr, None) is None:
            raise ConfigurationError(f"this subcommand needs a [{attr}] section")
    return resolved


def _require_sphere(resolved):
    if not isinstance(resolved.measure, SphereMeasure):
        raise ConfigurationError("this subcommand needs a sphere measure")
    return resolved.measure


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_run_sweep(args):
    r = _resolved(args, ("flow", "measure", "observable", "schedule"))
    report = convergence_sweep(
        r.flow,
        r.observable,
        r.measure,
        r.schedule,
        scaling=r.schedule_kind,
        torus_grid=r.budgets.torus_grid,
        mc_samples=r.budgets.mc_samples,
        seed=r.seed,
        waive_ergodicity=r.waive_ergodicity,
        threads=r.budgets.threads,
    )
    rows = [
        (
            e.parameter,
            e.result.exact,
            e.result.mc,
            e.result.mc_stderr,
            e.result.oracle_bound,
            e.result.mc_points,
            e.seed,
        )
        for e in report.entries
    ]
    s = report.summary
    results = {
        "scaling": report.scaling,
        "first_error": s.first_error,
        "last_error": s.last_error,
        "decay_ratio": s.decay_ratio,
        "envelope": [list(w) for w in s.envelope],
        "envelope_slope": s.envelope_slope,
        "nonergodic": s.nonergodic,
        "entry_method": report.entries[0].result.method,
    }
    _write_outputs(
        Path(args.out),
        r,
        "run-sweep",
        results,
        {
            "sweep.csv": (
                (
                    "t_or_radius",
                    "l1_exact",
                    "l1_mc",
                    "l1_mc_stderr",
                    "oracle_bound",
                    "samples",
                    "seed",
                ),
                rows,
            )
        },
        cert=s.certificate,
        started=args._started,
    )
    return 0


def _cmd_check_ergodicity(args):
    r = _resolved(args, ("flow",))
    radius = int(r.extras.get("certificate", {}).get("radius", 50))
    cert = ergodicity_certificate(r.flow, radius)
    offender = ";".join(str(v) for v in cert.offending_k) if cert.offending_k else ""
    rows = [
        (
            cert.search_radius,
            cert.min_frequency_norm,
            offender,
            cert.threshold,
            str(cert.passed).lower(),
        )
    ]
    results = {"description": cert.describe()}
    _write_outputs(
        Path(args.out),
        r,
        "check-ergodicity",
        results,
        {
            "certificate.csv": (
                ("search_radius", "min_frequency_norm", "offending_k", "threshold", "passed"),
                rows,
            )
        },
        cert=cert,
        started=args._started,
    )
    return 0


def _cmd_check_general_position(args):
    r = _resolved(args, ("measure",))
    if not isinstance(r.measure, CurveMeasure):
        raise ConfigurationError("general-position checks need a curve measure")
    gp = r.extras.get("general_position", {})
    trials = int(gp.get("trials", 1000))
    threshold = float(gp.get("threshold", 1e-12))
    report = general_position_check(r.measure, trials, threshold, r.seed)
    rows = [(report.trials, report.failures, report.min_abs_det, report.threshold)]
    results = {
        "trials": report.trials,
        "failures": report.failures,
        "min_abs_det": report.min_abs_det,
        "threshold": report.threshold,
    }
    _write_outputs(
        Path(args.out),
        r,
        "check-general-position",
        results,
        {
            "general_position.csv": (
                ("trials", "failures", "min_abs_det", "threshold"),
                rows,
            )
        },
        started=args._started,
    )
    return 0


def _cmd_conv_density(args):
    r = _resolved(args, ("measure",))
    diag = r.extras.get("diagnostic", {})
    count = int(diag.get("sample_count", 1_000_000))
    cells = int(diag.get("cells_per_axis", 16))
    if count < 10_000:
        raise UsageError("conv-density needs at least 10^4 samples")
    note = "" if isinstance(r.measure, ConvPower) else (
        "input is not a convolution power; diagnostics still apply"
    )
    draws = sample(r.measure, r.seed, count)
    hist = estimate_density(draws, cells)
    report = diagnose_samples(draws, cells)
    hist_rows = [cell + (n,) for cell, n in hist.nonzero_cells()]
    diag_rows = [
        (
            report.max_cell_fraction,
            report.max_cell_fraction_refined,
            report.split_half_tv,
            len(report.atom_suspects),
            report.sample_count,
            report.cells_per_axis,
        )
    ]
    results = {
        "max_cell_fraction": report.max_cell_fraction,
        "max_cell_fraction_refined": report.max_cell_fraction_refined,
        "split_half_tv": report.split_half_tv,
        "atom_suspects": [
            {"cell": list(cell), "fraction": frac}
            for cell, frac in report.atom_suspects
        ],
        "measure_note": note,
        "box": [list(b) for b in hist.box],
    }
    idx_header = tuple(f"i{j + 1}" for j in range(hist.dim))
    _write_outputs(
        Path(args.out),
        r,
        "conv-density",
        results,
        {
            "histogram.csv": (idx_header + ("count",), hist_rows),
            "diagnostic.csv": (
                (
                    "max_cell_fraction",
                    "max_cell_fraction_refined",
                    "split_half_tv",
                    "atom_suspects",
                    "sample_count",
                    "cells_per_axis",
                ),
                diag_rows,
            ),
        },
        started=args._started,
    )
    return 0


def _cmd_jacobian_scan(args):
    r = _resolved(args, ("measure",))
    sphere = _require_sphere(r)
    scan = r.extras.get("scan", {})
    trials = int(scan.get("trials", 100_000))
    threshold = float(scan.get("threshold", 1e-6 * sphere.radius**3))
    fraction = jacobian_scan(sphere, trials, threshold, r.seed)
    rows = [(trials, threshold, fraction)]
    results = {"trials": trials, "threshold": threshold, "degenerate_fraction": fraction}
    _write_outputs(
        Path(args.out),
        r,
        "jacobian-scan",
        results,
        {"jacobian_scan.csv": (("trials", "threshold", "degenerate_fraction"), rows)},
        started=args._started,
    )
    return 0


def _cmd_disintegration(args):
    r = _resolved(args, ("measure",))
    sphere = _require_sphere(r)
    diag = r.extras.get("diagnostic", {})
    count = int(diag.get("sample_count", 100_000))
    colatitude = diag.get("colatitude", "sin")
    report = disintegration_test(sphere, count, r.seed, colatitude=colatitude)
    rows = [
        report.ks_statistics
        + (
            report.ks_max,
            report.critical_01,
            str(report.rejects_at_01).lower(),
            report.sample_count,
            report.colatitude,
        )
    ]
    results = {
        "ks_statistics": list(report.ks_statistics),
        "ks_max": report.ks_max,
        "pvalues": list(report.pvalues),
        "critical_01": report.critical_01,
        "rejects_at_01": report.rejects_at_01,
        "colatitude": report.colatitude,
    }
    _write_outputs(
        Path(args.out),
        r,
        "disintegration-test",
        results,
        {
            "disintegration.csv": (
                (
                    "ks_x",
                    "ks_y",
                    "ks_z",
                    "ks_max",
                    "critical_01",
                    "rejects_at_01",
                    "sample_count",
                    "colatitude",
                ),
                rows,
            )
        },
        started=args._started,
    )
    return 0


def _cmd_iterate_check(args):
    r = _resolved(args, ("flow", "measure", "observable"))
    it = r.extras.get("iterate", {})
    t = float(it.get("t", 1.0))
    n = int(it.get("n", 2))
    mc_count = int(it.get("mc_count", r.budgets.mc_samples))
    check = iterated_vs_convolution(
        r.flow,
        r.observable,
        r.measure,
        t,
        n,
        mc_count=mc_count,
        seed=r.seed,
        waive_ergodicity=r.waive_ergodicity,
    )
    rows = [
        (
            t,
            n,
            check.analytic_deviation,
            -1.0 if check.mc_deviation is None else check.mc_deviation,
            -1.0 if check.mc_stderr is None else check.mc_stderr,
            check.mc_count,
        )
    ]
    results = {
        "t": t,
        "n": n,
        "analytic_deviation": check.analytic_deviation,
        "mc_deviation": check.mc_deviation,
        "mc_stderr": check.mc_stderr,
        "mc_count": check.mc_count,
    }
    _write_outputs(
        Path(args.out),
        r,
        "iterate-check",
        results,
        {
            "iterate.csv": (
                ("t", "n", "analytic_deviation", "mc_deviation", "mc_stderr", "mc_count"),
                rows,
            )
        },
        started=args._started,
    )
    return 0


_COMMANDS = {
    "run-sweep": _cmd_run_sweep,
    "check-ergodicity": _cmd_check_ergodicity,
    "check-general-position": _cmd_check_general_position,
    "conv-density": _cmd_conv_density,
    "jacobian-scan": _cmd_jacobian_scan,
    "disintegration-test": _cmd_disintegration,
    "iterate-check": _cmd_iterate_check,
}


def _build_parser():
    parser = _Parser(prog="ergoavg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ergoavg {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI experiment config")
        p.add_argument("--preset", help="experiment preset name")
        p.add_argument("--out", default="ergoavg-out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--mc-samples", type=int, dest="mc_samples")
        p.add_argument(
            "--quadrature-resolution", type=int, dest="quadrature_resolution"
        )
        p.add_argument("--torus-grid", type=int, dest="torus_grid")
        p.add_argument("--threads", type=int)
        p.add_argument("--waive-ergodicity", action="store_true")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    args._started = time.monotonic()
    try:
        return _COMMANDS[args.subcommand](args)
    except (ConfigurationError, UsageError, BudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ErgodicityRefusedError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
