"""Command-line front end.

Every subcommand that reads an experiment config also accepts dotted
overrides such as ``--pso.n_pso 1`` or ``--grid.m_h=6``.

Exit codes: 0 success, 1 layout check found violations, 2 configuration
or input error, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (SCHEMES, EvalReport, benchmark_layout, compare, eval_drops,
                    evaluate_fixed, evaluate_ma, sweep_antennas)
from .channel import drop_records
from .config import ConfigError, load_config, parse_override_value
from .geometry import (ArrayLayout, LayoutFormatError, check_feasible, make_reference_grid,
                       read_layout, write_layout)
from .optimizer import optimize_pia, write_trace
from .precoding import InsufficientAntennasError

log = logging.getLogger("pia")

THREADS_ENV = "PIA_THREADS"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _default_threads():
    value = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={value!r} is not an integer")


def _split_overrides(extra):
    overrides = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or "." not in token:
            raise UsageError(f"unrecognized argument: {token}")
        key = token[2:]
        if "=" in key:
            key, _, value = key.partition("=")
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for {token}")
            value = extra[i + 1]
            i += 2
        overrides[key] = parse_override_value(value)
    return overrides


def _manifest(path, args, cfg, seeds, outputs):
    data = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": cfg.to_dict() if cfg is not None else None,
        "config_sha256": cfg.digest() if cfg is not None else None,
        "seeds": seeds,
        "outputs": [str(p) for p in outputs],
        "versions": {"pia": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def _write_report(report: EvalReport, out_dir: Path, formats, stem=None):
    stem = stem or f"report_{report.scheme}"
    written = []
    if "json" in formats:
        report.write_json(out_dir / f"{stem}.json")
        written.append(out_dir / f"{stem}.json")
    if "csv" in formats:
        report.write_csv(out_dir / f"{stem}.csv")
        written.append(out_dir / f"{stem}.csv")
    return written


def _write_drops(path, drops):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["drop_id", "user", "rho_m", "phi_rad", "rx_m", "ry_m"])
        for row in drop_records(drops):
            writer.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])


def cmd_optimize(args, cfg):
    out = Path(args.out or Path(cfg.output.directory) / "pia_layout.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    trace_path = Path(args.trace) if args.trace else out.with_name(out.stem + "_trace.csv")

    def progress(row):
        if row.iter % 10 == 0:
            log.info("iter %d  best %.6g bit/s/Hz", row.iter, row.gbest_value)

    result = optimize_pia(cfg.grid, cfg.scenario, cfg.pso, threads=args.threads,
                          on_iteration=progress)
    write_layout(out, result.layout)
    write_trace(trace_path, result.trace)
    manifest = out.with_name(out.stem + "_manifest.json")
    _manifest(manifest, args, cfg, {"pso": cfg.pso.seed}, [out, trace_path])
    print(f"{out}\t{result.value!r}")
    return EXIT_OK


def cmd_evaluate(args, cfg):
    out_dir = Path(args.out_dir or cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_drops, seed = cfg.eval.n_drops, cfg.eval.seed
    params = {"m_h": cfg.grid.m_h, "m_v": cfg.grid.m_v}
    if args.layout:
        try:
            layout = read_layout(args.layout, expected_m=cfg.grid.num_antennas)
        except LayoutFormatError as exc:
            raise UsageError(f"{args.layout}: {exc}")
        scheme = args.name or "pia"
        report = evaluate_fixed(layout, cfg.scenario, n_drops, seed, scheme, params)
    elif args.scheme == "ma":
        report = evaluate_ma(cfg.grid, cfg.scenario, cfg.pso, n_drops, seed,
                             threads=args.threads, params=params)
    else:
        layout = benchmark_layout(args.scheme, cfg.grid)
        report = evaluate_fixed(layout, cfg.scenario, n_drops, seed, args.scheme, params)
    written = _write_report(report, out_dir, cfg.output.formats)
    drops_path = out_dir / "drops.csv"
    _write_drops(drops_path, eval_drops(cfg.scenario, n_drops, seed))
    written.append(drops_path)
    _manifest(out_dir / f"manifest_{report.scheme}.json", args, cfg,
              {"eval": seed, "pso": cfg.pso.seed}, written)
    print(f"{report.scheme}\t{report.mean!r}\t{report.variability_ratio!r}")
    return EXIT_OK


def cmd_compare(args, cfg):
    reports = []
    for path in args.reports:
        try:
            reports.append(EvalReport.read_json(path))
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"{path}: cannot read report ({exc})")
    try:
        table = compare(reports)
    except ValueError as exc:
        raise UsageError(str(exc))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["scheme", "mean", "variability_ratio"])
    for row in table.rows:
        writer.writerow([row["scheme"], repr(row["mean"]), repr(row["variability_ratio"])])
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out.with_suffix(".json"), "w", encoding="utf-8") as fh:
            json.dump(table.to_dict(), fh, indent=2)
            fh.write("\n")
        table.write_csv(out.with_suffix(".csv"))
    return EXIT_OK


def cmd_sweep(args, cfg):
    try:
        sides = [int(s) for s in args.m_sides.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--m-sides: expected comma-separated integers, got {args.m_sides!r}")
    if not sides or min(sides) < 1:
        raise UsageError("--m-sides: need at least one positive integer")
    out_dir = Path(args.out_dir or cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = sweep_antennas(sides, cfg.scenario, cfg.pso, seed=cfg.eval.seed,
                            n_drops=cfg.eval.n_drops, grid=cfg.grid, threads=args.threads,
                            progress=log.info)
    written = []
    for side, layout in result.layouts.items():
        path = out_dir / f"pia_layout_M{side * side}.txt"
        write_layout(path, layout)
        written.append(path)
    if "json" in cfg.output.formats:
        with open(out_dir / "sweep.json", "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2)
            fh.write("\n")
        written.append(out_dir / "sweep.json")
    if "csv" in cfg.output.formats:
        result.write_csv(out_dir / "sweep.csv")
        written.append(out_dir / "sweep.csv")
    _manifest(out_dir / "manifest_sweep.json", args, cfg,
              {"eval": cfg.eval.seed, "pso": cfg.pso.seed}, written)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["m", "scheme", "mean", "variability_ratio"])
    for row in result.rows():
        writer.writerow([row["m"], row["scheme"], repr(row["mean"]),
                         repr(row["variability_ratio"])])
    return EXIT_OK


def _load_any_layout(path, wavelength=None):
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            return ArrayLayout(np.array(data["positions"], dtype=float), data["wavelength"])
        if suffix == ".csv":
            if wavelength is None:
                raise UsageError("reading a CSV layout needs --wavelength")
            rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            if not np.array_equal(rows[:, 0], np.arange(len(rows))):
                raise UsageError(f"{path}: indices must run 0..M-1 in order")
            return ArrayLayout(rows[:, 1:3], wavelength)
        return read_layout(path)
    except (LayoutFormatError, KeyError, ValueError, OSError) as exc:
        raise UsageError(f"{path}: {exc}")


def cmd_layout_check(args, cfg):
    layout = _load_any_layout(args.layout, args.wavelength)
    if layout.num_antennas != cfg.grid.num_antennas:
        raise UsageError(f"layout has M={layout.num_antennas}, grid expects "
                         f"{cfg.grid.num_antennas}")
    _, regions = make_reference_grid(cfg.grid)
    report = check_feasible(layout, regions, cfg.grid.min_separation)
    for m in report.outside:
        print(f"outside\t{m}")
    for m, j, d in report.pairs:
        print(f"too_close\t{m}\t{j}\t{d!r}")
    print("feasible" if report.feasible else "infeasible")
    return EXIT_OK if report.feasible else EXIT_CHECK_FAILED


def cmd_layout_convert(args, cfg):
    layout = _load_any_layout(args.source, args.wavelength)
    dest = Path(args.dest)
    suffix = dest.suffix.lower()
    if suffix == ".json":
        with open(dest, "w", encoding="utf-8") as fh:
            json.dump({"wavelength": layout.wavelength,
                       "positions": layout.positions.tolist()}, fh, indent=2)
            fh.write("\n")
    elif suffix == ".csv":
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "y_m", "z_m"])
            for m, (y, z) in enumerate(layout.positions):
                writer.writerow([m, repr(float(y)), repr(float(z))])
    else:
        write_layout(dest, layout)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pia", description="Pre-optimized irregular arrays for multi-user MIMO.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("optimize", help="optimize a PIA layout")
    common(p)
    p.add_argument("--out", help="layout file to write")
    p.add_argument("--trace", help="trace CSV (default: next to the layout)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="score a layout or benchmark on held-out drops")
    common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--layout", help="layout file")
    group.add_argument("--scheme", choices=[s for s in SCHEMES if s != "pia"])
    p.add_argument("--name", help="scheme name for --layout reports (default pia)")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare evaluation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="output path stem for comparison JSON/CSV")
    p.set_defaults(func=cmd_compare, needs_config=False)

    p = sub.add_parser("sweep", help="run all schemes for several array sizes")
    common(p)
    p.add_argument("--m-sides", default="4,6")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("layout", help="layout file utilities")
    lsub = p.add_subparsers(dest="layout_command", required=True)
    c = lsub.add_parser("check", help="check a layout against the grid constraints")
    common(c)
    c.add_argument("layout")
    c.add_argument("--wavelength", type=float)
    c.set_defaults(func=cmd_layout_check)
    c = lsub.add_parser("convert", help="convert between .txt, .json and .csv layouts")
    c.add_argument("source")
    c.add_argument("dest")
    c.add_argument("--wavelength", type=float, help="needed when reading CSV")
    c.set_defaults(func=cmd_layout_convert, needs_config=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        overrides = _split_overrides(extra)
        cfg = None
        if getattr(args, "needs_config", True):
            cfg = load_config(getattr(args, "config", None), overrides)
        elif overrides:
            raise UsageError(f"{args.command} takes no config overrides")
        if getattr(args, "threads", None) is None and hasattr(args, "threads"):
            args.threads = _default_threads()
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientAntennasError, FloatingPointError, np.linalg.LinAlgError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
