"""Acceptance gate: one test per numbered criterion, at the stated tolerances.

Run with ``pytest -v tests/test_acceptance.py``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""

import io
import math
import time

import numpy as np
import pytest

from mecanum_ekf import estimator as ekf
from mecanum_ekf import experiments as ex
from mecanum_ekf.cli import main
from mecanum_ekf.config import config_from_dict
from mecanum_ekf.paths import cycle
from mecanum_ekf.vehicle_model import (RobotGeometry, body_to_wheel_velocity, measurement_fn,
                                       measurement_jacobian, measurement_noise_cov,
                                       odometry_to_body_velocity, process_noise_cov,
                                       state_transition, transition_jacobian,
                                       wheel_to_body_velocity)
from mecanum_ekf.world_sim import EstimatorMode, ScenarioConfig, TrialTrace, run_closed_loop

criterion = pytest.mark.criterion
GEOM = RobotGeometry()
ZERO_NOISE = {k: 0.0 for k in ("q_position", "q_velocity", "r_position", "r_encoder")}


@pytest.fixture(scope="module")
def default_config():
    return config_from_dict({})


@criterion(1, "velocity fusion: FUSED beats MODEL and ODO on vx, vy, omega (100 seeds)")
def test_velocity_fusion_ordering(default_config, record_property):
    start = time.perf_counter()
    res = ex.experiment_velocity_fusion(default_config, n_trials=100)
    elapsed = time.perf_counter() - start
    m = res.mean
    cells = {c: (m["fused"].get(c), m["model"].get(c), m["odo"].get(c)) for c in ("vx", "vy", "omega")}
    record_property("measured", ", ".join(f"{c} fused/model/odo {f:.4f}/{a:.4f}/{b:.4f}"
                                          for c, (f, a, b) in cells.items()) + f", {elapsed:.1f} s")
    assert not res.excluded
    for c, (fused, model, odo) in cells.items():
        assert fused < model and fused < odo, c
    assert elapsed < 120


@criterion(2, "camera fusion: FUSED_CAMERA beats FUSED on (x,y) and theta, (x,y) gain >= 1.5")
def test_camera_fusion_ordering(default_config, record_property):
    res = ex.experiment_camera_fusion(default_config, n_trials=100)
    f, c = res.mean["fused"], res.mean["fused_camera"]
    factor = f.xy_rmse / c.xy_rmse
    record_property("measured", f"xy {f.xy_rmse:.4f} -> {c.xy_rmse:.4f} (x{factor:.2f}), "
                                f"theta {f.theta_rmse:.4f} -> {c.theta_rmse:.4f}")
    assert c.xy_rmse < f.xy_rmse
    assert c.theta_rmse < f.theta_rmse
    assert factor >= 1.5


@criterion(3, "cycle drift: FUSED cycle5/cycle1 >= 2, FUSED_CAMERA cycle5/cycle1 < 2 (10 seeds)")
def test_cycle_drift(default_config, record_property):
    res = ex.experiment_cycle_drift(default_config, n_trials=10, n_cycles=5)
    fused = res.mean_estimate_error("fused")
    cam = res.mean_estimate_error("fused_camera")
    rf, rc = fused[4] / fused[0], cam[4] / cam[0]
    record_property("measured", f"fused {fused[0]:.3f} -> {fused[4]:.3f} (x{rf:.2f}), "
                                f"fused_camera {cam[0]:.3f} -> {cam[4]:.3f} (x{rc:.2f})")
    assert rf >= 2
    assert rc < 2


@criterion(4, "dt sweep: mean (x,y) RMSE at dt=0.5 >= 2x the value at dt=0.01 (30 seeds)")
def test_dt_sweep(default_config, record_property):
    res = ex.experiment_dt_sweep(default_config, n_trials=30)
    by_dt = dict(zip(res.dt_values, res.mean))
    ratio = by_dt[0.5] / by_dt[0.01]
    record_property("measured", ", ".join(f"{dt:g}: {v:.3f}" for dt, v in by_dt.items())
                    + f", ratio {ratio:.1f}, censored at 0.5: {res.censored[0.5]}")
    assert ratio >= 2


def _textbook_kf_step(x, P, u, z, A, B, c, Q, H, R):
    x = A @ x + B @ u + c
    P = A @ P @ A.T + Q
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    x = x + K @ (z - H @ x)
    P = (np.eye(len(x)) - K @ H) @ P
    return x, P


@criterion(5, "EKF equals a textbook linear KF on an affine/linear system, 1e-9 over 1000 steps")
def test_linear_kf_equivalence(record_property):
    rng = np.random.default_rng(2024)
    dt = 0.01
    # linearize the mecanum model once and freeze it: an affine system
    A = transition_jacobian([0, 0, 0.7, 10, -4, 0.3], dt)
    A[3:, 3:] = 0.9 * np.eye(3)
    B = rng.normal(size=(6, 4)) * 0.2
    c = rng.normal(size=6) * 0.01
    H = measurement_jacobian(GEOM)
    Q = process_noise_cov(dt)
    R = measurement_noise_cov(12.0, [5.0, -3.0, 1.0])
    pred = ekf.PredictionModel(lambda s, u, h: A @ s + B @ u + c, lambda s, u, h: A, lambda h: Q)
    meas = ekf.MeasurementModel(lambda s: H @ s, lambda s: H, R, angle_indices=())
    belief = ekf.BeliefState(np.zeros(6), np.diag([1, 1, 0.05, 1, 1, 0.05]))
    x, P = belief.mean.copy(), belief.covariance.copy()
    truth = np.zeros(6)
    worst_mean = worst_cov = 0.0
    for _ in range(1000):
        u = rng.uniform(-5, 5, 4)
        truth = A @ truth + B @ u + c + rng.normal(size=6) * np.sqrt(np.diag(Q))
        z = H @ truth + rng.normal(size=6) * np.sqrt(np.diag(R))
        belief = ekf.update(ekf.predict(belief, u, dt, pred), z, meas)
        x, P = _textbook_kf_step(x, P, u, z, A, B, c, Q, H, R)
        worst_mean = max(worst_mean, float(np.max(np.abs(belief.mean - x))))
        worst_cov = max(worst_cov, float(np.max(np.abs(belief.covariance - P))))
    record_property("measured", f"max |dmean| {worst_mean:.2e}, max |dP| {worst_cov:.2e}")
    assert worst_mean <= 1e-9 and worst_cov <= 1e-9


def _central(fn, x, h=1e-6):
    cols = []
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.column_stack(cols)


@criterion(6, "analytic A and H match central differences, relative error < 1e-5 (100 states)")
def test_jacobians(record_property):
    rng = np.random.default_rng(6)
    H = measurement_jacobian(GEOM)
    worst = 0.0
    for _ in range(100):
        s = np.concatenate([rng.uniform(0, 144, 2), rng.uniform(-math.pi, math.pi, 1),
                            rng.uniform(-60, 60, 2), rng.uniform(-5, 5, 1)])
        u = rng.uniform(-30, 30, 4)
        dt = float(rng.choice([0.001, 0.01, 0.1, 0.5]))
        for analytic, numeric in (
                (transition_jacobian(s, dt), _central(lambda v: state_transition(v, u, dt, GEOM), s)),
                (H, _central(lambda v: measurement_fn(v, GEOM), s))):
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1.0)
            worst = max(worst, float(rel.max()))
    record_property("measured", f"worst relative error {worst:.2e}")
    assert worst < 1e-5


@criterion(7, "wheel<->body and odometry<->body round trips are identities to 1e-12")
def test_round_trips(record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10_000):
        v = rng.uniform(-100, 100, 3)
        back_w = wheel_to_body_velocity(body_to_wheel_velocity(*v, GEOM), GEOM)
        enc = measurement_fn(np.concatenate([np.zeros(3), v]), GEOM)[3:]
        back_o = odometry_to_body_velocity(*enc, GEOM)
        worst = max(worst, float(np.max(np.abs(np.subtract(back_w, v)))),
                    float(np.max(np.abs(np.subtract(back_o, v)))))
    record_property("measured", f"worst absolute error {worst:.2e} (|v| up to 100)")
    assert worst <= 1e-12


@criterion(8, "Q(0.01) and R values exact")
def test_noise_values(record_property):
    Q = process_noise_cov(0.01)
    R = measurement_noise_cov(10.0, [0.0, 0.0, 0.0])
    record_property("measured", f"Q diag {np.diag(Q).tolist()}, R diag {np.diag(R).tolist()}")
    assert np.array_equal(Q, np.diag([2e-5, 2e-5, 2e-5, 0.45, 0.45, 0.45]))
    assert np.array_equal(np.diag(R), [0.101, 0.101, 0.101, 0.001, 0.001, 0.001])


@criterion(9, "covariance symmetric (1e-9 rel) and PSD (-1e-9 rel floor) over a 10,000-step fused run")
def test_covariance_health(record_property):
    # long enough that the 100 s cap (10,000 filter ticks) ends the run
    sc = ScenarioConfig(path=cycle().repeated(20), time_limit=100.0)
    worst_asym, worst_eig = 0.0, math.inf
    ticks = 0

    def check(k, belief):
        nonlocal worst_asym, worst_eig, ticks
        P = belief.covariance
        w = np.linalg.eigvalsh(P)
        scale = float(np.max(np.abs(w)))
        worst_asym = max(worst_asym, float(np.max(np.abs(P - P.T))) / scale)
        worst_eig = min(worst_eig, float(w.min()) / scale)
        ticks += 1

    trace = run_closed_loop(sc, EstimatorMode.FUSED_CAMERA, 0, 0, on_tick=check)
    record_property("measured", f"{ticks} steps, max asymmetry {worst_asym:.1e}, "
                                f"min eigenvalue/scale {worst_eig:.1e}")
    assert ticks >= 10_000 and not trace.aborted
    assert worst_asym <= 1e-9
    assert worst_eig >= -1e-9


def _run_cli(argv):
    buf = io.StringIO()
    assert main(argv + ["-q"], stdout=buf) == 0


@criterion(10, "experiment CSVs byte-identical across reruns and --jobs settings")
def test_determinism(tmp_path, record_property):
    runs = {
        "velocity": (["--trials", "4"], ["velocity_rmse.csv", "velocity_summary.csv"]),
        "camera": (["--trials", "4"], ["camera_rmse.csv", "camera_summary.csv"]),
        "cycle": (["--trials", "2", "--cycles", "2"], ["cycle_errors.csv", "cycle_summary.csv"]),
        "dt-sweep": (["--trials", "3", "--dts", "0.01,0.05"], ["dt_sweep.csv", "dt_sweep_summary.csv"]),
    }
    compared = 0
    for which, (extra, files) in runs.items():
        outs = []
        for tag, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
            out = tmp_path / f"{which}-{tag}"
            _run_cli(["experiment", which, "--seed", "11", "--jobs", jobs, "--out", str(out)] + extra)
            outs.append(out)
        for f in files:
            ref = (outs[0] / f).read_bytes()
            for o in outs[1:]:
                assert (o / f).read_bytes() == ref, f"{which}: {f} differs in {o.name}"
                compared += 1
    record_property("measured", f"{compared} CSV comparisons, jobs 1 vs 1 vs 2")


@criterion(11, "noiseless closed loop: estimate within 1e-6 of truth every tick, ends within 2 in")
def test_noiseless_closed_loop(record_property):
    cfg = config_from_dict({"noise": ZERO_NOISE})
    sc = cfg.scenario()
    trace = run_closed_loop(sc, EstimatorMode.FUSED, cfg.seed, 0)
    pos_err = np.hypot(*(trace.estimate[:, :2] - trace.truth[:, :2]).T)
    full_err = float(np.max(np.abs(trace.estimate - trace.truth)))
    end_err = math.hypot(*(trace.truth[-1, :2] - sc.path.end))
    record_property("measured", f"status {trace.status}, end error {end_err:.3f} in, "
                                f"max |estimate - truth| {full_err:.3g} (position {pos_err.max():.3g} in)")
    assert trace.status == "completed" and end_err < 2.0
    assert full_err <= 1e-6


def _two_pass(err):
    n = len(err)
    acc = np.zeros(6)
    for row in err:
        acc += row * row
    return np.sqrt(acc / n), math.sqrt((acc[0] + acc[1]) / n)


@criterion(12, "rmse equals a two-pass oracle to 1e-12 relative; xy^2 = x^2 + y^2")
def test_rmse_oracle(record_property):
    rng = np.random.default_rng(12)
    worst = worst_id = 0.0
    for n in (1, 2, 17, 450, 5000):
        truth = rng.normal(size=(n, 6)) * 50
        est = truth + rng.normal(size=(n, 6)) * rng.uniform(0.01, 10, 6)
        trace = TrialTrace(EstimatorMode.FUSED, 0, 0, np.arange(n) * 0.01, truth, est,
                           np.zeros((n, 6)), [None] * n, np.zeros((n, 4)), np.zeros(n))
        err = est - truth
        err[:, 2] = np.arctan2(np.sin(err[:, 2]), np.cos(err[:, 2]))
        per, xy = _two_pass(err)
        rep = ex.rmse(trace)
        got = [rep.x_rmse, rep.y_rmse, rep.theta_rmse, rep.vx_rmse, rep.vy_rmse, rep.omega_rmse]
        worst = max(worst, float(np.max(np.abs(np.array(got) - per) / per)), abs(rep.xy_rmse - xy) / xy)
        worst_id = max(worst_id, abs(rep.xy_rmse ** 2 - rep.x_rmse ** 2 - rep.y_rmse ** 2) / rep.xy_rmse ** 2)
    record_property("measured", f"worst relative error {worst:.1e}, identity residual {worst_id:.1e}")
    assert worst <= 1e-12
    assert worst_id <= 1e-12
