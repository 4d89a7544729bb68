"""``mecanum-ekf`` command line.

Subcommands::

    simulate                 one trial -> trace CSV + trajectory SVG
    experiment velocity      MODEL / ODO / FUSED RMSE table
    experiment camera        FUSED / FUSED_CAMERA RMSE table
    experiment cycle         warehouse-return error per cycle
    experiment dt-sweep      FUSED_CAMERA RMSE vs filter step
    validate-config          load, validate and print the effective config

Exit status is 0 only when every requested output was written.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path as FilePath
from typing import List, Optional

import yaml

from . import experiments as ex
from . import plotting
from .config import ConfigError, RunConfig, load_config
from .world_sim import EstimatorMode, run_closed_loop, trace_to_csv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _dt_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("dt values must be positive")
    return values


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (default: built-in defaults)")
    common.add_argument("--seed", type=_seed, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config output_dir)")
    common.add_argument("--jobs", type=_positive_int,
                        help="worker processes for trials (default: available CPUs)")
    common.add_argument("-q", "--quiet", action="store_true", help="do not echo the config")

    parser = argparse.ArgumentParser(prog="mecanum-ekf",
                                     description="Mecanum robot EKF localization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="run one trial")
    sim.add_argument("--mode", choices=[m.value for m in EstimatorMode],
                     default=EstimatorMode.FUSED_CAMERA.value)
    sim.add_argument("--trial", type=int, default=0, help="trial index within the seed")

    exp = sub.add_parser("experiment", parents=[common], help="run an experiment")
    exp.add_argument("which", choices=["velocity", "camera", "cycle", "dt-sweep"])
    exp.add_argument("--trials", type=_positive_int, help="number of seeds")
    exp.add_argument("--cycles", type=_positive_int, default=5, help="loops for 'cycle'")
    exp.add_argument("--dts", type=_dt_list, help="comma-separated filter steps for 'dt-sweep'")

    val = sub.add_parser("validate-config", help="check a configuration file")
    val.add_argument("--config", help="YAML run configuration")
    return parser


def _load(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    return load_config(args.config, overrides=overrides)


def _write(path: FilePath, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _manifest(out: FilePath, args, extra=None) -> None:
    """Record the command so the directory is enough to rerun it."""
    info = {"command": args.command}
    for key in ("which", "mode", "trial", "trials", "cycles", "dts"):
        if getattr(args, key, None) is not None:
            info[key] = getattr(args, key)
    info.update(extra or {})
    _write(out / "run.yaml", yaml.safe_dump(info, sort_keys=False))


def cmd_simulate(cfg: RunConfig, args, stdout) -> List[FilePath]:
    out = FilePath(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = EstimatorMode(args.mode)
    scenario = cfg.scenario(field=cfg.field_for(cfg.path_spec)
                            if isinstance(cfg.path_spec, str) else cfg.field)
    trace = run_closed_loop(scenario, mode, cfg.seed, args.trial)
    stem = f"trace_{mode.value}_seed{cfg.seed}_trial{args.trial}"
    csv_path, svg_path = out / f"{stem}.csv", out / f"{stem}.svg"
    _write(csv_path, trace_to_csv(trace))
    _write(svg_path, plotting.trajectory_plot(trace, scenario.path, scenario.field,
                                              f"{mode.value}, seed {cfg.seed}"))
    report = ex.rmse(trace)
    print(f"{mode.value} seed {cfg.seed}: {trace.status} after {trace.t[-1]:.2f} s, "
          f"(x,y) RMSE {report.xy_rmse:.4f} in, theta RMSE {report.theta_rmse:.4f} rad",
          file=stdout)
    if trace.message:
        print(trace.message, file=stdout)
    return [csv_path, svg_path]


def _rmse_outputs(result: ex.ExperimentResult, cfg: RunConfig, out: FilePath,
                  stdout) -> List[FilePath]:
    written = [out / f"{result.name}_rmse.csv", out / f"{result.name}_summary.csv"]
    _write(written[0], ex.rmse_long_csv(result))
    _write(written[1], ex.rmse_summary_csv(result))
    # trajectory overlays for the first seed
    seed = result.seeds[0]
    scenario = ex.scenario_for(cfg, "figure7")
    for mode in result.modes:
        trace = run_closed_loop(scenario, mode, result.master_seed, seed)
        dest = out / f"{result.name}_trajectory_{mode}.svg"
        _write(dest, plotting.trajectory_plot(trace, scenario.path, scenario.field,
                                              f"{mode}, trial {seed}"))
        written.append(dest)
    print(ex.format_rmse_table(result), file=stdout)
    return written


def cmd_experiment(cfg: RunConfig, args, stdout) -> List[FilePath]:
    out = FilePath(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    which = args.which
    if which in ("velocity", "camera"):
        run = ex.experiment_velocity_fusion if which == "velocity" else ex.experiment_camera_fusion
        return _rmse_outputs(run(cfg, n_trials=args.trials or 100), cfg, out, stdout)
    if which == "cycle":
        res = ex.experiment_cycle_drift(cfg, n_trials=args.trials or 10, n_cycles=args.cycles)
        written = [out / "cycle_errors.csv", out / "cycle_summary.csv", out / "cycle_drift.svg"]
        _write(written[0], ex.cycle_csv(res))
        _write(written[1], ex.cycle_summary_csv(res))
        cycles = list(range(1, res.n_cycles + 1))
        series = {}
        for m in res.modes:
            series[f"{m} truth-target"] = (cycles, res.mean_target_error(m))
            series[f"{m} truth-estimate"] = (cycles, res.mean_estimate_error(m))
        _write(written[2], plotting.line_chart(
            series, title="Error at warehouse return", xlabel="cycle", ylabel="error (in)"))
        print(ex.format_cycle_table(res), file=stdout)
        return written
    dts = args.dts or list(ex.DEFAULT_DT_VALUES)
    res = ex.experiment_dt_sweep(cfg, dt_values=dts, n_trials=args.trials or 30)
    written = [out / "dt_sweep.csv", out / "dt_sweep_summary.csv", out / "dt_sweep.svg"]
    _write(written[0], ex.dt_sweep_csv(res))
    _write(written[1], ex.dt_sweep_summary_csv(res))
    _write(written[2], plotting.line_chart(
        {"fused_camera": (res.dt_values, res.mean)}, errors={"fused_camera": res.stderr},
        title="Accuracy vs filter time step", xlabel="filter dt (s)",
        ylabel="mean (x,y) RMSE (in)", log_x=True))
    print(ex.format_dt_table(res), file=stdout)
    return written


def main(argv: Optional[List[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "validate-config":
        print(cfg.to_yaml(), end="", file=stdout)
        return EXIT_OK
    if not args.quiet:
        print("# effective configuration", file=stdout)
        print(cfg.to_yaml(), file=stdout)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            if args.command == "simulate":
                written = cmd_simulate(cfg, args, stdout)
            else:
                written = cmd_experiment(cfg, args, stdout)
        out = FilePath(cfg.output_dir)
        written.append(cfg.write_effective(out))
        _manifest(out, args)
    except ex.ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        where = f" {exc.filename}" if exc.filename else ""
        print(f"I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAILURE
    missing = [p for p in written if not os.path.isfile(p)]
    if missing:
        print(f"missing outputs: {', '.join(map(str, missing))}", file=sys.stderr)
        return EXIT_FAILURE
    for p in written:
        print(f"wrote {p}", file=stdout)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
