"""Ground-truth simulation and the per-trial closed loop.

The true robot is integrated at ``SimClock.truth_dt`` with process noise
added at every substep; the filter and controller run at
``SimClock.filter_dt`` with the control held constant in between.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import estimator as ekf
from .guidance import (AxisGains, Path, PathProgress, PidState, PursuitConfig,
                       compute_control, lookahead_target)
from .paths import figure7
from .vehicle_model import (EL, NO_LANDMARK_VARIANCE, Measurement, NoiseScale, RobotGeometry,
                            measurement_fn, measurement_jacobian, measurement_noise_cov,
                            odometry_to_body_velocity, process_noise_cov, state_transition,
                            transition_jacobian, wheel_to_body_velocity, wrap_angle)

FIELD_SIZE = 144.0


@dataclass(frozen=True)
class Landmark:
    """A wall image. ``facing`` is the direction (rad) of its inward normal."""

    id: str
    x: float
    y: float
    facing: float


def _wall_landmarks(wall: str, size: float, stations=(36.0, 72.0, 108.0)) -> List[Landmark]:
    out = []
    for k, s in enumerate(stations, start=1):
        if wall == "top":
            out.append(Landmark(f"top-{k}", s, size, -math.pi / 2))
        elif wall == "bottom":
            out.append(Landmark(f"bottom-{k}", s, 0.0, math.pi / 2))
        elif wall == "left":
            out.append(Landmark(f"left-{k}", 0.0, s, 0.0))
        elif wall == "right":
            out.append(Landmark(f"right-{k}", size, s, math.pi))
        else:
            raise ValueError(f"unknown wall {wall!r}")
    return out


def wall_landmarks(*walls: str, size: float = FIELD_SIZE) -> Tuple[Landmark, ...]:
    """Three evenly spaced images on each named wall, all facing inward."""
    return tuple(lm for wall in walls for lm in _wall_landmarks(wall, size))


@dataclass(frozen=True)
class Field:
    width: float = FIELD_SIZE
    height: float = FIELD_SIZE
    landmarks: Tuple[Landmark, ...] = dataclasses.field(
        default_factory=lambda: wall_landmarks("top", "bottom"))

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("field width and height must be > 0")
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        for lm in self.landmarks:
            on_x = abs(lm.x) < 1e-9 or abs(lm.x - self.width) < 1e-9
            on_y = abs(lm.y) < 1e-9 or abs(lm.y - self.height) < 1e-9
            inside = -1e-9 <= lm.x <= self.width + 1e-9 and -1e-9 <= lm.y <= self.height + 1e-9
            if not (inside and (on_x or on_y)):
                raise ValueError(f"landmark {lm.id!r} at ({lm.x}, {lm.y}) is not on the field wall")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class CameraModel:
    """Forward camera. Angles in radians; ``margin`` shrinks the usable cone."""

    fov: float = math.radians(70.0)
    mount_heading_offset: float = 0.0
    max_range: Optional[float] = None
    margin: float = math.radians(2.0)

    def __post_init__(self):
        if not 0 < self.fov < math.pi:
            raise ValueError("fov must be in (0, pi) radians")
        if self.max_range is not None and not self.max_range > 0:
            raise ValueError("max_range must be > 0")
        if not 0 <= self.margin < self.fov / 2:
            raise ValueError("margin must be in [0, fov/2)")


@dataclass(frozen=True)
class SimClock:
    truth_dt: float = 0.001
    filter_dt: float = 0.01

    def __post_init__(self):
        if not (self.truth_dt > 0 and self.filter_dt > 0):
            raise ValueError("truth_dt and filter_dt must be > 0")
        ratio = self.filter_dt / self.truth_dt
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("filter_dt must be an integer multiple of truth_dt")

    @property
    def substeps(self) -> int:
        return int(round(self.filter_dt / self.truth_dt))


class RngStream:
    """Named random substreams for one trial.

    Each stream is seeded from ``SeedSequence(seed, spawn_key=(trial, k))``
    so a trial's noise depends only on the master seed and trial index.
    """

    PROCESS = 0
    MEASUREMENT = 1

    def __init__(self, seed: int, trial: int = 0):
        self.seed = int(seed)
        self.trial = int(trial)
        self.process = self._generator(self.PROCESS)
        self.measurement = self._generator(self.MEASUREMENT)

    def _generator(self, key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.trial, key))
        return np.random.Generator(np.random.PCG64(ss))


class EstimatorMode(str, enum.Enum):
    MODEL = "model"                # prediction only
    ODO = "odo"                    # dead reckoning from the dead wheels
    FUSED = "fused"                # EKF, camera rows always at the no-landmark variance
    FUSED_CAMERA = "fused_camera"  # full EKF

    def __str__(self):
        return self.value


# ---------------------------------------------------------------------------
# truth and sensors


def _process_std(dt: float, scale: NoiseScale) -> np.ndarray:
    return np.sqrt(np.diag(process_noise_cov(dt, scale)))


def step_true_state(state: np.ndarray, control: Sequence[float], clock: SimClock,
                    rng: RngStream, geom: RobotGeometry = RobotGeometry(),
                    scale: NoiseScale = NoiseScale()) -> np.ndarray:
    """One ``truth_dt`` step of the process model plus sampled process noise."""
    nxt = state_transition(state, control, clock.truth_dt, geom)
    return nxt + _process_std(clock.truth_dt, scale) * rng.process.standard_normal(6)


def _advance_truth(s: List[float], body_vel, noise: List[List[float]], dt: float) -> None:
    """In-place equivalent of repeated :func:`step_true_state` calls.

    ``noise`` rows are already scaled by the process standard deviations.
    """
    cvx, cvy, com = body_vel
    x, y, th, vx, vy, om = s
    cos, sin = math.cos, math.sin
    for n in noise:
        c, sn = cos(th), sin(th)
        x, y, th = (x + dt * (vx * c - vy * sn) + n[0],
                    y + dt * (vx * sn + vy * c) + n[1],
                    th + dt * om + n[2])
        vx, vy, om = cvx + n[3], cvy + n[4], com + n[5]
    s[:] = [x, y, th, vx, vy, om]


def visible_landmark(pose: Sequence[float], camera: CameraModel, fld: Field) -> Optional[Landmark]:
    """Nearest landmark fully inside the camera cone and facing the robot."""
    x, y, theta = float(pose[0]), float(pose[1]), float(pose[2])
    half = camera.fov / 2 - camera.margin
    axis = theta + camera.mount_heading_offset
    best, best_d = None, math.inf
    for lm in fld.landmarks:
        dx, dy = lm.x - x, lm.y - y
        d = math.hypot(dx, dy)
        if d <= 0 or (camera.max_range is not None and d > camera.max_range):
            continue
        if math.cos(lm.facing) * dx + math.sin(lm.facing) * dy >= 0:
            continue
        if abs(wrap_angle(math.atan2(dy, dx) - axis)) > half:
            continue
        if d < best_d:
            best, best_d = lm, d
    return best


def synthesize_measurement(true_state: np.ndarray, landmark: Optional[Landmark],
                           geom: RobotGeometry, rng: RngStream,
                           scale: NoiseScale = NoiseScale()) -> Measurement:
    """Noisy sensor frame generated from the true state.

    Six standard normals are drawn every call so the stream stays aligned
    whether or not a landmark is visible. Camera rows are NaN when no
    landmark is in view.
    """
    z = measurement_fn(true_state, geom)
    draw = rng.measurement.standard_normal(6)
    distance = None
    if landmark is not None:
        distance = math.hypot(landmark.x - true_state[0], landmark.y - true_state[1])
    R = measurement_noise_cov(distance, z[EL:], scale)
    z = z + np.sqrt(np.diag(R)) * draw
    if landmark is None:
        z[:3] = np.nan
    return Measurement(z, distance, None if landmark is None else landmark.id)


# ---------------------------------------------------------------------------
# closed loop


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one trial needs."""

    geometry: RobotGeometry = dataclasses.field(default_factory=RobotGeometry)
    sim_noise: NoiseScale = dataclasses.field(default_factory=NoiseScale)
    filter_noise: NoiseScale = dataclasses.field(default_factory=NoiseScale)
    camera: CameraModel = dataclasses.field(default_factory=CameraModel)
    field: Field = dataclasses.field(default_factory=Field)
    clock: SimClock = dataclasses.field(default_factory=SimClock)
    path: Path = dataclasses.field(default_factory=figure7)
    gains: AxisGains = dataclasses.field(default_factory=AxisGains)
    pursuit: PursuitConfig = dataclasses.field(default_factory=PursuitConfig)
    initial_covariance: Tuple[float, ...] = (1.0, 1.0, 0.05, 1.0, 1.0, 0.05)
    no_landmark_variance: float = NO_LANDMARK_VARIANCE
    integral_limit: float = 50.0
    time_limit: float = 120.0
    settle_speed: float = 2.0
    divergence_factor: float = 10.0

    def __post_init__(self):
        if len(self.initial_covariance) != 6 or any(not v > 0 for v in self.initial_covariance):
            raise ValueError("initial_covariance must be 6 positive variances")
        if not self.no_landmark_variance > 0:
            raise ValueError("no_landmark_variance must be > 0")
        for name in ("time_limit", "settle_speed", "divergence_factor",
                     "integral_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def initial_state(self) -> np.ndarray:
        x0, y0 = self.path.start
        return np.array([x0, y0, self.path.initial_heading, 0.0, 0.0, 0.0])

    def prediction_model(self) -> ekf.PredictionModel:
        geom, noise = self.geometry, self.filter_noise
        return ekf.PredictionModel(
            transition=lambda s, u, dt: state_transition(s, u, dt, geom),
            transition_jacobian=lambda s, u, dt: transition_jacobian(s, dt),
            process_noise=lambda dt: process_noise_cov(dt, noise),
        )

    def measurement_model(self) -> ekf.MeasurementModel:
        geom = self.geometry
        H = measurement_jacobian(geom)
        return ekf.MeasurementModel(
            measure=lambda s: measurement_fn(s, geom),
            measurement_jacobian=lambda s: H,
        )


@dataclass
class TrialTrace:
    """Per-filter-tick record of one trial.

    ``status`` is ``"completed"``, ``"timeout"`` or ``"aborted"`` (divergence
    guard tripped; ``message`` says why).
    """

    mode: EstimatorMode
    seed: int
    trial: int
    t: np.ndarray
    truth: np.ndarray
    estimate: np.ndarray
    cov_diag: np.ndarray
    landmark: List[Optional[str]]
    control: np.ndarray
    progress: np.ndarray
    status: str = "completed"
    message: str = ""

    def __len__(self):
        return len(self.t)

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"

    @property
    def visible(self) -> np.ndarray:
        return np.array([lm is not None for lm in self.landmark])


CSV_COLUMNS = (["t", "x", "y", "theta", "vx", "vy", "omega"]
               + [f"est_{c}" for c in ("x", "y", "theta", "vx", "vy", "omega")]
               + [f"cov_{c}" for c in ("x", "y", "theta", "vx", "vy", "omega")]
               + ["landmark", "m1", "m2", "m3", "m4"])


def trace_to_csv(trace: TrialTrace, dest=None) -> str:
    """Write the trace as CSV (full ``repr`` precision). Returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for k in range(len(trace)):
        row = [repr(float(trace.t[k]))]
        row += [repr(float(v)) for v in trace.truth[k]]
        row += [repr(float(v)) for v in trace.estimate[k]]
        row += [repr(float(v)) for v in trace.cov_diag[k]]
        row.append(trace.landmark[k] or "")
        row += [repr(float(v)) for v in trace.control[k]]
        w.writerow(row)
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text


def run_closed_loop(scenario: ScenarioConfig, mode: Union[EstimatorMode, str],
                    seed: Union[int, RngStream] = 0, trial: int = 0,
                    on_tick: Optional[Callable[[int, ekf.BeliefState], None]] = None) -> TrialTrace:
    """Simulate one trial.

    Every filter tick: truth advances under the held control, the estimate
    is predicted, a measurement is synthesized from truth, the estimate is
    corrected (mode permitting), and guidance computes the next control from
    the estimate. ``on_tick(k, belief)`` is called after each filter
    correction (not in ODO mode).
    """
    mode = EstimatorMode(mode)
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, trial)
    sc = scenario
    geom, clock, path = sc.geometry, sc.clock, sc.path
    dt, n_sub = clock.filter_dt, clock.substeps
    pred_model = sc.prediction_model()
    meas_model = sc.measurement_model()
    proc_std = _process_std(clock.truth_dt, sc.sim_noise)
    use_camera = mode is EstimatorMode.FUSED_CAMERA
    filtered = mode in (EstimatorMode.FUSED, EstimatorMode.FUSED_CAMERA)
    abort_dist = sc.divergence_factor * sc.field.diagonal

    truth = [float(v) for v in sc.initial_state()]
    belief = ekf.BeliefState(np.array(truth), np.diag(sc.initial_covariance))
    odo_state = np.array(truth)
    progress = PathProgress()
    pids = tuple(PidState(integral_limit=sc.integral_limit) for _ in range(3))

    def control_from(est):
        nonlocal progress, pids
        target, progress = lookahead_target(path, est[:2], sc.pursuit, progress)
        u, pids = compute_control(est, target, path.heading_at(progress), sc.gains, pids, geom)
        return u

    control = control_from(belief.mean)
    n_max = int(math.floor(sc.time_limit / dt + 1e-9))
    rec_t, rec_truth, rec_est, rec_cov, rec_lm, rec_u, rec_prog = [], [], [], [], [], [], []
    status, message = "timeout", ""
    nan6 = np.full(6, np.nan)

    for k in range(1, n_max + 1):
        noise = (rng.process.standard_normal((n_sub, 6)) * proc_std).tolist()
        _advance_truth(truth, wheel_to_body_velocity(control, geom), noise, clock.truth_dt)
        true_state = np.array(truth)

        landmark = visible_landmark(truth, sc.camera, sc.field) if use_camera else None
        meas = synthesize_measurement(true_state, landmark, geom, rng, sc.sim_noise)

        if mode is EstimatorMode.ODO:
            odo_state = state_transition(odo_state, (0.0, 0.0, 0.0, 0.0), dt, geom)
            odo_state[3:] = odometry_to_body_velocity(*meas.encoders, geom)
            est, cov = odo_state, nan6
        else:
            belief = ekf.predict(belief, control, dt, pred_model)
            if filtered:
                z = np.array(meas.z)
                if landmark is None:
                    z[:3] = belief.mean[:3]
                R = measurement_noise_cov(meas.landmark_distance, meas.encoders,
                                          sc.filter_noise, sc.no_landmark_variance)
                belief = ekf.update(belief, z, meas_model, R)
            est, cov = belief.mean, np.diag(belief.covariance)
            if on_tick is not None:
                on_tick(k, belief)

        control = control_from(est)
        rec_t.append(k * dt)
        rec_truth.append(true_state)
        rec_est.append(np.array(est))
        rec_cov.append(np.array(cov))
        rec_lm.append(None if landmark is None else landmark.id)
        rec_u.append(control)
        rec_prog.append(progress.segment + progress.fraction)

        err = math.hypot(est[0] - truth[0], est[1] - truth[1])
        if not math.isfinite(err) or err > abort_dist:
            status = "aborted"
            message = (f"estimate position error {err:.6g} in exceeds guard {abort_dist:.6g} in "
                       f"at t={k * dt:.6g} s")
            break
        if (progress == path.end_progress
                and math.hypot(est[0] - path.end[0], est[1] - path.end[1])
                < sc.pursuit.waypoint_advance_tolerance
                and math.hypot(est[3], est[4]) < sc.settle_speed):
            status = "completed"
            break

    return TrialTrace(
        mode=mode, seed=rng.seed, trial=rng.trial,
        t=np.array(rec_t), truth=np.array(rec_truth), estimate=np.array(rec_est),
        cov_diag=np.array(rec_cov), landmark=rec_lm, control=np.array(rec_u),
        progress=np.array(rec_prog), status=status, message=message,
    )
