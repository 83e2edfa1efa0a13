"""Command-line entry point.

Subcommands: ``run`` executes the experiment a config selects and writes its
report, ``export-noise`` and ``import-noise`` move sampled paths through the
binary noise format, and ``validate-config`` checks a config without running
anything.  Exit codes: 0 all gated rows pass, 1 a gated row failed, 2 the
config or an input file is invalid, 3 an unexpected runtime error.

Reports depend only on the config and seeds.  Wall-clock timings go to a
sidecar file so that rerunning a config reproduces report.json and rows.csv
byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from .config import (
    build_function_from,
    build_law_from,
    build_measure_from,
    build_model_from,
    build_solver_grid_from,
    config_digest,
    expand_seeds,
    load_config,
)
from .errors import ChecksumMismatch, ConfigInvalid, FormatVersionMismatch, SdsmError
from .harness import (
    derived_seed,
    duality_experiment,
    ergodic_experiment,
    linear_case_experiment,
    matched_noise_grid,
    moment_experiment,
    qv_experiment,
    z_fraction,
)
from .noise import sample_path
from .reporting import ExperimentReport, ReportRow
from .solver import solve_linear_density
from .wns import read_path, write_path

EXIT_PASS = 0
EXIT_ROW_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdsmlab",
        description="Run branching-particle against solver experiments from a JSON config.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute the configured experiment")
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument("--out", help="output directory (overrides the config)")
    run_p.add_argument("--lanes", type=int, default=1,
                       help="process lanes for replicate work (default 1)")
    run_p.add_argument("--seed-override", type=int, default=None,
                       help="replace the master seed before deriving seed lists")

    exp_p = sub.add_parser("export-noise", help="sample and write the configured noise paths")
    exp_p.add_argument("--config", required=True)
    exp_p.add_argument("--out", help="output directory (overrides the config)")

    imp_p = sub.add_parser("import-noise", help="read a noise file and print its layout")
    imp_p.add_argument("file")

    val_p = sub.add_parser("validate-config", help="check a config and print its digest")
    val_p.add_argument("--config", required=True)
    return parser


def _experiment_horizon(cfg: dict) -> float:
    params = cfg["parameters"]
    if cfg["experiment"] == "moment":
        return max(params["t_points"])
    if cfg["experiment"] == "ergodic":
        return params["t_ladder"][-1]
    return params["t"]


def _execute(cfg: dict, lanes: int) -> ExperimentReport:
    experiment = cfg["experiment"]
    params = cfg["parameters"]
    seeds = expand_seeds(cfg)
    model = build_model_from(cfg)
    law = build_law_from(cfg)
    mu = build_measure_from(cfg["measures"]["mu"])
    m = build_measure_from(cfg["measures"]["m"])
    grid = build_solver_grid_from(cfg)

    if experiment == "duality":
        phis = [build_function_from(p) for p in params["phis"]]
        noise_paths = None
        if "noise_file" in params:
            noise_paths = [read_path(params["noise_file"])]
        return duality_experiment(
            model, law, mu, m, phis, params["t"], seeds["noise"], seeds["branch"],
            grid, solver_seeds=seeds["solver"], lanes=lanes, margin=params["margin"],
            pooled=params["pooled"], variance_signature=params["variance_signature"],
            noise_paths=noise_paths)
    if experiment == "moment":
        return moment_experiment(model, law, mu, m, params["t_points"],
                                 params["replicates"], seeds["master"], dt=params["dt"])
    if experiment == "qv":
        return qv_experiment(model, law, mu, params["t"], params["replicates"],
                             seeds["master"], dt=params["dt"])
    if experiment == "ergodic":
        return ergodic_experiment(model, m, params["lambdas"], params["t_ladder"],
                                  seeds["noise"], grid, eps=params.get("eps"))
    v0 = build_measure_from(params["v0"])
    if "noise_file" in params:
        path = read_path(params["noise_file"])
    else:
        noise_seed = params.get("noise_seed", derived_seed(seeds["master"], 9))
        path = sample_path(matched_noise_grid(grid, params["t"]), noise_seed)
    return linear_case_experiment(model, v0, path, grid, params["t"],
                                  params["count_ladder"], seed=seeds["master"],
                                  reps_per_count=params["reps_per_count"])


def _write_artifacts(cfg: dict, out_dir: Path) -> list[str]:
    """Optional side outputs requested by the config's artifacts block."""
    written: list[str] = []
    horizon = _experiment_horizon(cfg)
    grid = build_solver_grid_from(cfg)
    seeds = expand_seeds(cfg)
    if cfg["artifacts"]["export_noise"] and cfg["experiment"] in ("duality", "ergodic", "linear"):
        noise_grid = matched_noise_grid(grid, horizon)
        if cfg["experiment"] == "linear":
            noise_seeds = [cfg["parameters"].get("noise_seed",
                                                 derived_seed(seeds["master"], 9))]
        else:
            noise_seeds = seeds["noise"]
        for seed in noise_seeds:
            path = sample_path(noise_grid, seed)
            target = out_dir / f"noise-{seed}.wns"
            write_path(path, target)
            written.append(target.name)
    if cfg["artifacts"]["field_csv"] and cfg["experiment"] == "linear":
        params = cfg["parameters"]
        model = build_model_from(cfg)
        v0 = build_measure_from(params["v0"])
        if "noise_file" in params:
            path = read_path(params["noise_file"])
        else:
            noise_seed = params.get("noise_seed", derived_seed(seeds["master"], 9))
            path = sample_path(matched_noise_grid(grid, params["t"]), noise_seed)
        field = solve_linear_density(model, v0, path, grid, params["t"])
        target = out_dir / "density.csv"
        target.write_text(field.to_csv())
        written.append(target.name)
    return written


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg["seeds"]["master"] = int(args.seed_override)
    digest = config_digest(cfg)
    out_dir = Path(args.out) if args.out else Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    try:
        report = _execute(cfg, max(1, args.lanes))
    except SdsmError as exc:
        # A module refusing to run is a result: record it as a failed row so
        # the report explains the non-zero exit.
        report = ExperimentReport(experiment=cfg["experiment"])
        report.rows.append(ReportRow(name="module-error", predicted=0.0,
                                     estimated=math.nan, se=0.0, passed=False))
        report.diagnostics["error"] = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    report.config_digest = digest
    report.diagnostics["z_fraction_above_3"] = z_fraction([report])

    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "rows.csv").write_text(report.to_csv())
    (out_dir / "timings.json").write_text(json.dumps(
        {"experiment": cfg["experiment"], "seconds": elapsed}, indent=2) + "\n")
    try:
        written = _write_artifacts(cfg, out_dir)
    except SdsmError as exc:
        print(f"artifact export failed: {exc}", file=sys.stderr)
        written = []

    for row in report.rows:
        flag = "pass" if row.passed else "FAIL"
        gate = "" if row.gated else " (ungated)"
        print(f"[{flag}] {report.experiment}/{row.name}: predicted {row.predicted:.6g}, "
              f"estimated {row.estimated:.6g}, se {row.se:.3g}{gate}")
    if "error" in report.diagnostics:
        print(f"error: {report.diagnostics['error']}", file=sys.stderr)
    extras = ", ".join(["report.json", "rows.csv", "timings.json"] + written)
    print(f"wrote {extras} to {out_dir} (digest {digest})")
    return EXIT_PASS if report.all_pass else EXIT_ROW_FAILED


def _cmd_export_noise(args) -> int:
    cfg = load_config(args.config)
    if cfg["experiment"] in ("moment", "qv"):
        raise ConfigInvalid(f"experiment '{cfg['experiment']}' does not use a noise grid")
    out_dir = Path(args.out) if args.out else Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg["artifacts"]["export_noise"] = True
    written = _write_artifacts(cfg, out_dir)
    for name in written:
        print(out_dir / name)
    return EXIT_PASS


def _cmd_import_noise(args) -> int:
    path = read_path(args.file)
    grid = path.grid
    print(f"{args.file}: {grid.nt} x {grid.ny} increments, dt {grid.dt:g}, "
          f"dy {grid.dy:g}, span [0, {grid.t1:g}] x [-{grid.half_width:g}, "
          f"{grid.half_width:g}], seed {path.seed}")
    print(f"total increment sum {float(path.increments.sum()):.12g}")
    return EXIT_PASS


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"config ok (experiment {cfg['experiment']}, digest {config_digest(cfg)})")
    return EXIT_PASS


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "export-noise": _cmd_export_noise,
        "import-noise": _cmd_import_noise,
        "validate-config": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (FormatVersionMismatch, ChecksumMismatch) as exc:
        print(f"bad noise file: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
