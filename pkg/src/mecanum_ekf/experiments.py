"""Localization accuracy experiments.

Four protocols, each a batch of independent seeded trials:

* velocity fusion -- MODEL vs ODO vs FUSED on the ``figure7`` path
* camera fusion   -- FUSED vs FUSED_CAMERA on the same seeds
* cycle drift     -- repeated warehouse/hub loops, error at each warehouse return
* dt sweep        -- FUSED_CAMERA accuracy as the filter step grows

Trial ``i`` of an experiment always uses ``RngStream(master_seed, i)``, so
modes compared within an experiment see the same noise draws.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import RunConfig
from .guidance import PathProgress
from .paths import get_path
from .vehicle_model import wrap_angle
from .world_sim import EstimatorMode, ScenarioConfig, SimClock, TrialTrace, run_closed_loop

log = logging.getLogger(__name__)

COMPONENTS = ("xy", "x", "y", "theta", "vx", "vy", "omega")

# Published table values, printed next to ours for comparison only.
REFERENCE_VELOCITY_TABLE = {
    "model": {"xy": 2.2432, "theta": 0.1179, "vx": 0.6692, "vy": 0.6717, "omega": 0.6698},
    "odo": {"xy": 2.9770, "theta": 0.1903, "vx": 0.4578, "vy": 0.4120, "omega": 0.2286},
    "fused": {"xy": 2.8704, "theta": 0.1864, "vx": 0.3589, "vy": 0.3271, "omega": 0.1996},
}
REFERENCE_CAMERA_TABLE = {
    "fused": {"xy": 2.8704, "x": 6.4336, "y": 8.0909, "theta": 0.1864},
    "fused_camera": {"xy": 1.2140, "x": 1.6400, "y": 1.8259, "theta": 0.0956},
}

MAX_ABORT_FRACTION = 0.05


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class RmseReport:
    """Per-component root mean squared estimation error of one trial."""

    xy_rmse: float
    x_rmse: float
    y_rmse: float
    theta_rmse: float
    vx_rmse: float
    vy_rmse: float
    omega_rmse: float
    n_ticks: int

    def get(self, component: str) -> float:
        return getattr(self, f"{component}_rmse")

    def as_dict(self) -> Dict[str, float]:
        return {c: self.get(c) for c in COMPONENTS}

    @classmethod
    def mean(cls, reports: Sequence["RmseReport"]) -> "RmseReport":
        if not reports:
            raise ValueError("no reports to average")
        vals = {f.name: float(np.mean([getattr(r, f.name) for r in reports]))
                for f in fields(cls) if f.name != "n_ticks"}
        return cls(n_ticks=int(sum(r.n_ticks for r in reports)), **vals)


def rmse(trace: TrialTrace) -> RmseReport:
    """RMSE of estimate minus truth over every filter tick of ``trace``.

    Heading errors are wrapped into ``(-pi, pi]`` before squaring;
    ``xy_rmse`` is the RMS of the planar distance error.
    """
    n = len(trace)
    if n == 0:
        raise ValueError("cannot compute RMSE of an empty trace")
    err = np.asarray(trace.estimate, dtype=float) - np.asarray(trace.truth, dtype=float)
    err[:, 2] = wrap_angle(err[:, 2])
    ms = np.mean(err ** 2, axis=0)
    return RmseReport(
        xy_rmse=float(math.sqrt(ms[0] + ms[1])),
        x_rmse=float(math.sqrt(ms[0])),
        y_rmse=float(math.sqrt(ms[1])),
        theta_rmse=float(math.sqrt(ms[2])),
        vx_rmse=float(math.sqrt(ms[3])),
        vy_rmse=float(math.sqrt(ms[4])),
        omega_rmse=float(math.sqrt(ms[5])),
        n_ticks=n,
    )


# ---------------------------------------------------------------------------
# trial execution


def _jobs(jobs: Optional[int]) -> int:
    return max(1, jobs if jobs is not None else (os.cpu_count() or 1))


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _rmse_task(task):
    scenario, mode, master, seed = task
    trace = run_closed_loop(scenario, mode, master, seed)
    return rmse(trace), trace.status, trace.message


@dataclass
class ExperimentResult:
    """Outcome of a multi-mode, multi-seed RMSE experiment.

    ``per_seed[mode][seed]`` holds each trial's report; aborted trials are
    listed in ``excluded`` and left out of ``mean``.
    """

    name: str
    modes: List[str]
    seeds: List[int]
    master_seed: int
    per_seed: Dict[str, Dict[int, RmseReport]]
    mean: Dict[str, RmseReport]
    stderr: Dict[str, Dict[str, float]]
    excluded: Dict[str, List[int]] = field(default_factory=dict)
    config: Dict = field(default_factory=dict)


def _aggregate(reports: Dict[int, RmseReport]):
    keys = sorted(reports)
    ordered = [reports[k] for k in keys]
    mean = RmseReport.mean(ordered)
    n = len(ordered)
    stderr = {}
    for c in COMPONENTS:
        v = np.array([r.get(c) for r in ordered])
        stderr[c] = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, stderr


def run_rmse_experiment(name: str, scenario: ScenarioConfig, modes: Sequence[EstimatorMode],
                        master_seed: int, seeds: Sequence[int], jobs: Optional[int] = None,
                        config: Optional[Dict] = None) -> ExperimentResult:
    """Run every (mode, seed) trial and reduce to per-mode means."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ExperimentError("no seeds given")
    tasks = [(scenario, EstimatorMode(m), master_seed, s) for m in modes for s in seeds]
    outcomes = _map(_rmse_task, tasks, _jobs(jobs))
    per_seed: Dict[str, Dict[int, RmseReport]] = {}
    excluded: Dict[str, List[int]] = {}
    for (_, mode, _, seed), (report, status, message) in zip(tasks, outcomes):
        if status == "aborted":
            excluded.setdefault(mode.value, []).append(seed)
            log.warning("%s: %s seed %d aborted: %s", name, mode.value, seed, message)
            continue
        per_seed.setdefault(mode.value, {})[seed] = report
    for mode, bad in excluded.items():
        if len(bad) / len(seeds) >= MAX_ABORT_FRACTION:
            raise ExperimentError(
                f"{name}: {len(bad)}/{len(seeds)} {mode} trials diverged (limit "
                f"{MAX_ABORT_FRACTION:.0%}); seeds {sorted(bad)}")
        warnings.warn(f"{name}: excluded {len(bad)} diverged {mode} trial(s): {sorted(bad)}")
    names = [EstimatorMode(m).value for m in modes]
    mean, stderr = {}, {}
    for m in names:
        mean[m], stderr[m] = _aggregate(per_seed[m])
    return ExperimentResult(name, names, seeds, master_seed, per_seed,
                            mean, stderr, excluded, dict(config or {}))


def _seeds(n_trials: int, seeds: Optional[Sequence[int]]) -> List[int]:
    if seeds is not None:
        return list(seeds)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    return list(range(n_trials))


def scenario_for(config: RunConfig, name: str) -> ScenarioConfig:
    """Scenario on a bundled path; keeps an inline path from the config as is."""
    if isinstance(config.path_spec, str) and config.path_spec == name:
        return config.scenario(field=config.field_for(name))
    if isinstance(config.path_spec, str):
        return config.scenario(path=get_path(name), field=config.field_for(name))
    return config.scenario()


def experiment_velocity_fusion(config: RunConfig, n_trials: int = 100,
                               seeds: Optional[Sequence[int]] = None,
                               jobs: Optional[int] = None) -> ExperimentResult:
    """Velocity accuracy of model-only, odometry-only and fused estimation."""
    modes = [EstimatorMode.MODEL, EstimatorMode.ODO, EstimatorMode.FUSED]
    return run_rmse_experiment("velocity", scenario_for(config, "figure7"), modes,
                               config.seed, _seeds(n_trials, seeds),
                               config.jobs if jobs is None else jobs, config.to_dict())


def experiment_camera_fusion(config: RunConfig, n_trials: int = 100,
                             seeds: Optional[Sequence[int]] = None,
                             jobs: Optional[int] = None) -> ExperimentResult:
    """Position accuracy with and without landmark (camera) updates."""
    modes = [EstimatorMode.FUSED, EstimatorMode.FUSED_CAMERA]
    return run_rmse_experiment("camera", scenario_for(config, "figure7"), modes,
                               config.seed, _seeds(n_trials, seeds),
                               config.jobs if jobs is None else jobs, config.to_dict())


# ---------------------------------------------------------------------------
# cycle drift


@dataclass
class CycleDriftResult:
    """Position error at each warehouse return, per mode.

    ``estimate_error[mode]`` is ``(n_trials, n_cycles)`` truth-vs-estimate
    distance; ``target_error[mode]`` the truth-vs-warehouse distance at the
    same instants.
    """

    modes: List[str]
    seeds: List[int]
    master_seed: int
    n_cycles: int
    estimate_error: Dict[str, np.ndarray]
    target_error: Dict[str, np.ndarray]
    status: Dict[str, List[str]]
    config: Dict = field(default_factory=dict)

    def mean_estimate_error(self, mode) -> np.ndarray:
        return np.mean(self.estimate_error[str(mode)], axis=0)

    def mean_target_error(self, mode) -> np.ndarray:
        return np.mean(self.target_error[str(mode)], axis=0)


def warehouse_returns(trace: TrialTrace, loop_segments: int, n_cycles: int,
                      path, window: float):
    """Tick index of each warehouse return.

    The return for cycle ``c`` is the tick, among those whose pursuit marker
    lies within ``window`` inches of the ``c``-th warehouse visit along the
    path, at which the estimate is closest to the warehouse.
    """
    s = np.array([path.arclength(_progress(p, path)) for p in trace.progress])
    ticks = []
    for c in range(1, n_cycles + 1):
        w = c * loop_segments
        s_w = path.cumulative[w]
        wx, wy = path.waypoints[w]
        idx = np.flatnonzero(np.abs(s - s_w) <= window)
        if idx.size == 0:
            ticks.append(None)
            continue
        d = np.hypot(trace.estimate[idx, 0] - wx, trace.estimate[idx, 1] - wy)
        ticks.append(int(idx[np.argmin(d)]))
    return ticks


def _progress(p: float, path) -> PathProgress:
    seg = min(int(p), path.n_segments - 1)
    return PathProgress(seg, p - seg)


def _cycle_task(task):
    scenario, mode, master, seed, loop_segments, n_cycles = task
    trace = run_closed_loop(scenario, mode, master, seed)
    path = scenario.path
    ticks = warehouse_returns(trace, loop_segments, n_cycles, path,
                              2.0 * scenario.pursuit.lookahead_radius)
    est, tgt = [], []
    for c, k in enumerate(ticks, start=1):
        if k is None:
            est.append(math.nan)
            tgt.append(math.nan)
            continue
        wx, wy = path.waypoints[c * loop_segments]
        est.append(math.hypot(*(trace.truth[k, :2] - trace.estimate[k, :2])))
        tgt.append(math.hypot(trace.truth[k, 0] - wx, trace.truth[k, 1] - wy))
    return est, tgt, trace.status


def experiment_cycle_drift(config: RunConfig, n_trials: int = 10, n_cycles: int = 5,
                           seeds: Optional[Sequence[int]] = None,
                           jobs: Optional[int] = None) -> CycleDriftResult:
    """Repeated warehouse -> hub -> warehouse loops with and without the camera."""
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    seeds = _seeds(n_trials, seeds)
    loop = get_path("cycle")
    scenario = config.scenario(path=loop.repeated(n_cycles), field=config.field_for("cycle"))
    modes = [EstimatorMode.FUSED, EstimatorMode.FUSED_CAMERA]
    tasks = [(scenario, m, config.seed, s, loop.n_segments, n_cycles)
             for m in modes for s in seeds]
    out = _map(_cycle_task, tasks, _jobs(config.jobs if jobs is None else jobs))
    est: Dict[str, list] = {}
    tgt: Dict[str, list] = {}
    status: Dict[str, list] = {}
    for (_, m, _, _, _, _), (e, t, st) in zip(tasks, out):
        est.setdefault(m.value, []).append(e)
        tgt.setdefault(m.value, []).append(t)
        status.setdefault(m.value, []).append(st)
    for m, sts in status.items():
        n_bad = sum(st == "aborted" for st in sts)
        if n_bad / len(sts) >= MAX_ABORT_FRACTION:
            raise ExperimentError(f"cycle: {n_bad}/{len(sts)} {m} trials diverged")
    return CycleDriftResult([m.value for m in modes], seeds, config.seed, n_cycles,
                            {m: np.array(v) for m, v in est.items()},
                            {m: np.array(v) for m, v in tgt.items()},
                            status, config.to_dict())


# ---------------------------------------------------------------------------
# dt sweep

DEFAULT_DT_VALUES = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


@dataclass
class DtSweepResult:
    """Mean planar RMSE of FUSED_CAMERA at each filter step.

    Diverged trials are censored: their ``xy`` RMSE is replaced by the
    divergence-guard distance rather than dropped.
    """

    dt_values: List[float]
    seeds: List[int]
    master_seed: int
    xy_rmse: Dict[float, np.ndarray]
    censored: Dict[float, int]
    config: Dict = field(default_factory=dict)

    @property
    def mean(self) -> List[float]:
        return [float(np.mean(self.xy_rmse[dt])) for dt in self.dt_values]

    @property
    def stderr(self) -> List[float]:
        out = []
        for dt in self.dt_values:
            v = self.xy_rmse[dt]
            out.append(float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0)
        return out


def experiment_dt_sweep(config: RunConfig, dt_values: Sequence[float] = DEFAULT_DT_VALUES,
                        n_trials: int = 30, seeds: Optional[Sequence[int]] = None,
                        jobs: Optional[int] = None) -> DtSweepResult:
    """Accuracy of the full filter as its time step grows."""
    seeds = _seeds(n_trials, seeds)
    dt_values = [float(dt) for dt in dt_values]
    if not dt_values:
        raise ValueError("dt_values must not be empty")
    base = scenario_for(config, "figure7")
    guard = base.divergence_factor * base.field.diagonal
    tasks = []
    for dt in dt_values:
        try:
            clock = SimClock(config.clock.truth_dt, dt)
        except ValueError as exc:
            raise ExperimentError(f"dt {dt}: {exc}") from None
        scenario = config.scenario(path=base.path, field=base.field, clock=clock)
        tasks += [(scenario, EstimatorMode.FUSED_CAMERA, config.seed, s) for s in seeds]
    out = _map(_rmse_task, tasks, _jobs(config.jobs if jobs is None else jobs))
    xy: Dict[float, list] = {dt: [] for dt in dt_values}
    censored = {dt: 0 for dt in dt_values}
    for (scenario, _, _, _), (report, status, _) in zip(tasks, out):
        dt = scenario.clock.filter_dt
        if status == "aborted":
            censored[dt] += 1
            xy[dt].append(guard)
        else:
            xy[dt].append(report.xy_rmse)
    return DtSweepResult(dt_values, seeds, config.seed, {dt: np.array(v) for dt, v in xy.items()},
                         censored, config.to_dict())


# ---------------------------------------------------------------------------
# tables and CSV


def _r(x: float) -> str:
    return repr(float(x))


def rmse_long_csv(result: ExperimentResult) -> str:
    """One row per (mode, seed, component)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "seed", "component", "rmse"])
    for mode in result.modes:
        for seed in sorted(result.per_seed.get(mode, {})):
            rep = result.per_seed[mode][seed]
            for c in COMPONENTS:
                w.writerow([mode, seed, c, _r(rep.get(c))])
    return buf.getvalue()


def _reference_table(result: ExperimentResult):
    return REFERENCE_CAMERA_TABLE if result.name == "camera" else REFERENCE_VELOCITY_TABLE


def rmse_summary_csv(result: ExperimentResult) -> str:
    """Component rows by mode columns, plus standard errors and published values."""
    ref_table = _reference_table(result)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component"] + result.modes + [f"{m}_stderr" for m in result.modes]
               + [f"{m}_reference" for m in result.modes])
    for c in COMPONENTS:
        row = [c] + [_r(result.mean[m].get(c)) for m in result.modes]
        row += [_r(result.stderr[m][c]) for m in result.modes]
        row += [_r(ref_table[m][c]) if c in ref_table.get(m, {}) else "" for m in result.modes]
        w.writerow(row)
    return buf.getvalue()


def format_rmse_table(result: ExperimentResult) -> str:
    ref_table = _reference_table(result)
    head = f"{'RMSE':<8}" + "".join(f"{m:>14}{'(ref)':>10}" for m in result.modes)
    lines = [f"{result.name} experiment: {len(result.seeds)} seeds, master seed "
             f"{result.master_seed}", head]
    for c in COMPONENTS:
        row = f"{c:<8}"
        for m in result.modes:
            ref = ref_table.get(m, {}).get(c)
            row += f"{result.mean[m].get(c):>14.4f}" + (f"{ref:>10.4f}" if ref else f"{'':>10}")
        lines.append(row)
    return "\n".join(lines)


def cycle_csv(result: CycleDriftResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "seed", "cycle", "estimate_error", "target_error"])
    for m in result.modes:
        for i, seed in enumerate(result.seeds):
            for c in range(result.n_cycles):
                w.writerow([m, seed, c + 1, _r(result.estimate_error[m][i, c]),
                            _r(result.target_error[m][i, c])])
    return buf.getvalue()


def cycle_summary_csv(result: CycleDriftResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cycle"] + [f"{m}_estimate_error" for m in result.modes]
               + [f"{m}_target_error" for m in result.modes])
    est = {m: result.mean_estimate_error(m) for m in result.modes}
    tgt = {m: result.mean_target_error(m) for m in result.modes}
    for c in range(result.n_cycles):
        w.writerow([c + 1] + [_r(est[m][c]) for m in result.modes]
                   + [_r(tgt[m][c]) for m in result.modes])
    return buf.getvalue()


def format_cycle_table(result: CycleDriftResult) -> str:
    lines = [f"cycle drift: {len(result.seeds)} seeds x {result.n_cycles} cycles, "
             f"mean truth-vs-estimate error at warehouse return (in)",
             f"{'cycle':<6}" + "".join(f"{m:>14}" for m in result.modes)]
    est = {m: result.mean_estimate_error(m) for m in result.modes}
    for c in range(result.n_cycles):
        lines.append(f"{c + 1:<6}" + "".join(f"{est[m][c]:>14.4f}" for m in result.modes))
    return "\n".join(lines)


def dt_sweep_csv(result: DtSweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["filter_dt", "seed", "xy_rmse"])
    for dt in result.dt_values:
        for seed, v in zip(result.seeds, result.xy_rmse[dt]):
            w.writerow([_r(dt), seed, _r(v)])
    return buf.getvalue()


def dt_sweep_summary_csv(result: DtSweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["filter_dt", "mean_xy_rmse", "stderr", "censored"])
    for dt, m, se in zip(result.dt_values, result.mean, result.stderr):
        w.writerow([_r(dt), _r(m), _r(se), result.censored[dt]])
    return buf.getvalue()


def format_dt_table(result: DtSweepResult) -> str:
    lines = [f"dt sweep: {len(result.seeds)} seeds per dt, fused_camera",
             f"{'dt (s)':<10}{'mean (x,y) RMSE':>18}{'stderr':>12}{'censored':>10}"]
    for dt, m, se in zip(result.dt_values, result.mean, result.stderr):
        lines.append(f"{dt:<10g}{m:>18.4f}{se:>12.4f}{result.censored[dt]:>10d}")
    return "\n".join(lines)
