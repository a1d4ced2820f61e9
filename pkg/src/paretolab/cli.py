"""Command-line workbench: cloud ingestion and sorting, single-point depth
queries, process sampling, grid solves, experiment orchestration, and the
growth-constants table.

Every artifact-producing run writes a manifest next to its primary output;
re-running with the same inputs and seed reproduces outputs byte-for-byte
(the manifest's duration field aside).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    CloudFormatError,
    DuplicatePointError,
    PointCloud,
    cloud_from_csv,
    cloud_from_json,
    cloud_to_csv,
)
from .experiments import ConfigError, ExperimentConfig, report_to_constants, run_experiment
from .hjsolver import ConstantsTable, GridSpec, residual_max, solve_hj
from .ppp import intensity_from_spec, sample_poisson
from .sorting import depth_at, nondominated_sort

ENV_PREFIX = "PARETOLAB_"


class CliError(Exception):
    """User-facing failure; rendered as a structured error line."""


def _env(name: str, fallback=None):
    return os.environ.get(ENV_PREFIX + name, fallback)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (env {ENV_PREFIX}SEED; default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker cap for trials (env {ENV_PREFIX}THREADS; default: machine)")
    common.add_argument("--output-dir", default=None,
                        help=f"artifact directory (env {ENV_PREFIX}OUTPUT_DIR; default .)")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help=f"cloud output format (env {ENV_PREFIX}FORMAT; default csv)")
    return common


def _resolve_common(args) -> tuple[int, int, Path, str]:
    seed = args.seed if args.seed is not None else int(_env("SEED", "0"))
    threads = args.threads if args.threads is not None else int(_env("THREADS", str(os.cpu_count() or 1)))
    outdir = Path(args.output_dir if args.output_dir is not None else _env("OUTPUT_DIR", "."))
    fmt = args.format if args.format is not None else _env("FORMAT", "csv")
    outdir.mkdir(parents=True, exist_ok=True)
    return seed, max(1, threads), outdir, fmt


def _read_cloud(path: str, dedupe: bool) -> PointCloud:
    p = Path(path)
    if not p.exists():
        raise CliError(f"input not found: {p}")
    if p.suffix.lower() == ".json":
        return cloud_from_json(p.read_text(), dedupe=dedupe)
    return cloud_from_csv(p, dedupe=dedupe)


def _write_manifest(outdir: Path, primary: Path, subcommand: str, config: dict,
                    inputs: list[str], outputs: list[str], seed: int, started: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "version": __version__,
        "duration_seconds": time.monotonic() - started,
    }
    path = outdir / (primary.stem + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_sort(args) -> int:
    started = time.monotonic()
    seed, _, outdir, _ = _resolve_common(args)
    cloud = _read_cloud(args.input, args.dedupe)
    dfield = nondominated_sort(cloud)
    stem = Path(args.input).stem
    out = outdir / f"{stem}.depths.csv"
    dfield.to_csv(out, header=args.header)
    outputs = [str(out)]
    if args.export_fronts:
        k = args.export_fronts
        picks = np.unique(np.linspace(1, dfield.max_depth, num=min(k, dfield.max_depth)).round().astype(int))
        fronts_path = outdir / f"{stem}.fronts.csv"
        with open(fronts_path, "w", newline="") as fh:
            w = csv.writer(fh)
            for front_idx in picks:
                for i in dfield.front(int(front_idx)):
                    w.writerow([repr(float(v)) for v in cloud.points[i]] + [int(front_idx)])
        outputs.append(str(fronts_path))
    _write_manifest(outdir, out, "sort", {"dedupe": args.dedupe, "header": args.header,
                                          "export_fronts": args.export_fronts},
                    [args.input], outputs, seed, started)
    print(f"points={len(cloud)} fronts={dfield.front_count} max_depth={dfield.max_depth}")
    return 0


def _cmd_depth(args) -> int:
    cloud = _read_cloud(args.input, args.dedupe)
    try:
        x = [float(v) for v in args.at.split(",")]
    except ValueError:
        raise CliError(f"--at must be a comma-separated coordinate list, got {args.at!r}") from None
    print(depth_at(cloud, x))
    return 0


def _parse_intensity_arg(raw: str) -> dict | str:
    candidate = Path(raw)
    if candidate.suffix.lower() == ".json" and candidate.exists():
        return json.loads(candidate.read_text())
    if raw.lstrip().startswith("{"):
        return json.loads(raw)
    return raw


def _cmd_sample(args) -> int:
    started = time.monotonic()
    seed, _, outdir, fmt = _resolve_common(args)
    spec = _parse_intensity_arg(args.intensity)
    f = intensity_from_spec(spec, args.dimension)
    realization = sample_poisson(f, args.scale, seed)
    out = outdir / (args.name + (".json" if fmt == "json" else ".csv"))
    if fmt == "json":
        out.write_text(json.dumps([[float(v) for v in row] for row in realization.cloud.points]) + "\n")
    else:
        cloud_to_csv(realization.cloud, out)
    sidecar = outdir / (args.name + ".sidecar.json")
    sidecar.write_text(json.dumps({"scale": args.scale, "seed": seed,
                                   "intensity": f.spec or f.name}, indent=2) + "\n")
    _write_manifest(outdir, out, "sample",
                    {"intensity": f.spec or f.name, "scale": args.scale, "dimension": args.dimension},
                    [], [str(out), str(sidecar)], seed, started)
    print(f"points={len(realization)} file={out}")
    return 0


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config not found: {p}")
    text = p.read_text()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except Exception as exc:
            raise CliError(f"invalid TOML in {p}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON in {p}: {exc}") from None


def _cmd_solve(args) -> int:
    started = time.monotonic()
    seed, _, outdir, fmt = _resolve_common(args)
    config = _load_config_file(args.config)
    for fieldname in ("dimension", "intensity", "grid_nodes"):
        if fieldname not in config:
            raise CliError(f"solve config is missing field '{fieldname}'")
    dimension = int(config["dimension"])
    f = intensity_from_spec(config["intensity"], dimension)
    nodes = config["grid_nodes"]
    nodes_per_axis = tuple(nodes) if isinstance(nodes, list) else (int(nodes),) * dimension
    spec = GridSpec(f.support, nodes_per_axis)
    if args.cd is not None:
        cd = args.cd
    elif "cd" in config:
        cd = float(config["cd"])
    elif dimension == 2:
        cd = 2.0
    else:
        raise CliError("no growth constant: set 'cd' in the config or pass --cd")
    field = solve_hj(f, cd, spec)
    stem = Path(args.config).stem
    outputs = []
    if fmt == "csv" and dimension == 2:
        out = outdir / f"{stem}.field.csv"
        field.to_csv(out)
        outputs.append(str(out))
    else:
        out = outdir / f"{stem}.field.bin"
        header = outdir / f"{stem}.field.json"
        field.to_binary(out, header)
        outputs += [str(out), str(header)]
    resid = residual_max(field, f, cd)
    _write_manifest(outdir, out, "solve", {**config, "cd": cd}, [args.config], outputs, seed, started)
    print(f"nodes={'x'.join(str(n) for n in spec.shape)} cd={cd!r} residual_max={resid!r}")
    return 0


def _cmd_experiment(args) -> int:
    started = time.monotonic()
    seed_flag_used = args.seed is not None or _env("SEED") is not None
    seed, threads, outdir, _ = _resolve_common(args)
    raw = _load_config_file(args.config)
    if seed_flag_used:
        raw["seed"] = seed
    cfg = ExperimentConfig.from_dict(raw)
    table = None
    if args.table:
        table = ConstantsTable.from_json(Path(args.table).read_text())
    report = run_experiment(cfg, workers=threads, table=table)
    report.duration_seconds = time.monotonic() - started
    stem = Path(args.config).stem
    samples = outdir / f"{stem}.samples.csv"
    with open(samples, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scale", "trial", "value"])
        for stats in report.per_scale:
            for ti, v in enumerate(stats.values):
                w.writerow([repr(stats.scale), ti, repr(v)])
    report.samples_path = samples.name  # relative to the report's directory
    report_path = outdir / f"{stem}.report.json"
    report_path.write_text(report.to_json() + "\n")
    plot_path = outdir / f"{stem}.plot.csv"
    with open(plot_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scale", "mean", "sd", "ci_halfwidth"])
        for row in report.plot_rows():
            w.writerow([repr(v) for v in row])
    _write_manifest(outdir, report_path, "experiment", cfg.to_dict(), [args.config],
                    [str(report_path), str(plot_path), str(samples)], cfg.seed, started)
    for stats in report.per_scale:
        print(f"scale={stats.scale!r} mean={stats.mean!r} sd={stats.sd!r} n={stats.count}")
    print(f"estimate={report.estimate!r} ci_halfwidth={report.ci_halfwidth!r} passed={report.passed}")
    return 0 if report.passed else 1


def _cmd_cd_table(args) -> int:
    path = Path(args.table)
    table = ConstantsTable.from_json(path.read_text()) if path.exists() else ConstantsTable()
    if args.from_report:
        from .experiments import ExperimentReport, ScaleStats  # local: only for reading

        data = json.loads(Path(args.from_report).read_text())
        report = ExperimentReport(
            config=data["config"],
            per_scale=[ScaleStats(**{k: s[k] for k in ("scale", "mean", "sd", "count", "values")})
                       for s in data["per_scale"]],
            estimate=data["estimate"], ci_halfwidth=data["ci_halfwidth"],
            band=tuple(data["band"]) if data.get("band") else None,
            passed=data["passed"], details=data.get("details", {}),
        )
        table = report_to_constants(table, report)
        path.write_text(table.to_json() + "\n")
    elif args.set:
        d, value, ci = args.set
        table = table.with_estimate(int(d), float(value), float(ci))
        path.write_text(table.to_json() + "\n")
    print(table.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="paretolab",
                                     description="Chain sorting, process sampling, grid solving "
                                                 "and Monte Carlo verification for point clouds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_sort = sub.add_parser("sort", parents=[common], help="nondominated-sort a point-cloud file")
    p_sort.add_argument("input", help="point cloud (.csv or .json)")
    p_sort.add_argument("--dedupe", action="store_true", help="drop exact duplicate points")
    p_sort.add_argument("--header", action="store_true", help="write a header row")
    p_sort.add_argument("--export-fronts", type=int, metavar="K",
                        help="also export K evenly spaced fronts for plotting")
    p_sort.set_defaults(func=_cmd_sort)

    p_depth = sub.add_parser("depth", parents=[common], help="chain count at a query point")
    p_depth.add_argument("input", help="point cloud (.csv or .json)")
    p_depth.add_argument("--at", required=True, help="query point, e.g. 0.5,0.5")
    p_depth.add_argument("--dedupe", action="store_true")
    p_depth.set_defaults(func=_cmd_depth)

    p_sample = sub.add_parser("sample", parents=[common], help="sample a Poisson point process")
    p_sample.add_argument("--intensity", required=True,
                          help="'uniform', 'analytic:<name>', inline JSON, or a JSON file path")
    p_sample.add_argument("--scale", type=float, required=True)
    p_sample.add_argument("--dimension", type=int, default=2)
    p_sample.add_argument("--name", default="sample", help="output file stem")
    p_sample.set_defaults(func=_cmd_sample)

    p_solve = sub.add_parser("solve", parents=[common], help="solve the limiting equation on a grid")
    p_solve.add_argument("config", help="JSON/TOML with dimension, intensity, grid_nodes, optional cd")
    p_solve.add_argument("--cd", type=float, help="override the growth constant")
    p_solve.set_defaults(func=_cmd_solve)

    p_exp = sub.add_parser("experiment", parents=[common], help="run a verification experiment")
    p_exp.add_argument("config", help="experiment config (JSON or TOML)")
    p_exp.add_argument("--table", help="growth-constants table JSON for d >= 3")
    p_exp.set_defaults(func=_cmd_experiment)

    p_table = sub.add_parser("cd-table", parents=[common], help="print or update the constants table")
    p_table.add_argument("--table", default="constants.json")
    p_table.add_argument("--from-report", help="ingest a cd_estimate report JSON")
    p_table.add_argument("--set", nargs=3, metavar=("D", "VALUE", "CI"),
                         help="record an estimated entry directly")
    p_table.set_defaults(func=_cmd_cd_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, CloudFormatError, DuplicatePointError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
