import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mecanum_ekf.guidance import (AxisGains, Path, PathProgress, PidGains, PidState, PursuitConfig,
                                  compute_control, lookahead_target, pid_step, saturate_wheels)
from mecanum_ekf.paths import WAREHOUSE, cycle, figure7, get_path
from mecanum_ekf.vehicle_model import RobotGeometry, wheel_to_body_velocity

GEOM = RobotGeometry()
UNBOUNDED = dict(search_arc=math.inf)


def dense_oracle(path, position, radius, samples=10_000):
    """Furthest-along sampled path point lying within ``radius`` (brute force)."""
    best = None
    for i in range(path.n_segments):
        t = np.linspace(0, 1, samples)
        pts = path.waypoints[i] + np.outer(t, path.segment_vectors[i])
        inside = np.hypot(*(pts - position).T) <= radius
        if inside.any():
            best = (i, t[np.flatnonzero(inside)[-1]])
    return best


class TestLookahead:
    def test_straight_line(self):
        path = Path([(0, 0), (100, 0)])
        target, _ = lookahead_target(path, (0, 0), PursuitConfig(10))
        assert target == pytest.approx((10, 0))

    def test_nearest_point_fallback(self):
        path = Path([(0, 0), (100, 0)])
        target, _ = lookahead_target(path, (0, 20), PursuitConfig(10))
        assert target == pytest.approx((0, 0))

    def test_l_shape_matches_dense_sampling(self):
        path = Path([(0, 0), (10, 0), (10, 10)])
        target, prog = lookahead_target(path, (9, 0), PursuitConfig(5))
        seg, t = dense_oracle(path, np.array([9.0, 0.0]), 5)
        assert prog.segment == seg == 1
        assert prog.fraction == pytest.approx(t, abs=2e-4)
        assert math.hypot(target[0] - 9, target[1]) == pytest.approx(5, abs=1e-9)

    def test_end_inside_circle(self):
        path = Path([(0, 0), (5, 0)])
        target, prog = lookahead_target(path, (4, 0), PursuitConfig(10))
        assert target == pytest.approx((5, 0))
        assert prog == path.end_progress

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=6),
           st.tuples(st.floats(-60, 60), st.floats(-60, 60)), st.floats(1, 30))
    def test_intersection_is_furthest_on_circle(self, pts, pos, radius):
        pts = np.array(pts)
        assume(np.all(np.hypot(*np.diff(pts, axis=0).T) > 1e-3))
        path = Path(pts)
        pos = np.array(pos)
        target, prog = lookahead_target(path, pos, PursuitConfig(radius, **UNBOUNDED))
        oracle = dense_oracle(path, pos, radius)
        if oracle is None:
            return
        dist = math.hypot(*(np.array(target) - pos))
        if prog != path.end_progress:
            assert abs(dist - radius) < 1e-9
        # the sampled oracle can only lag the exact root by one sample
        assert (prog.segment, prog.fraction + 1.5e-4) >= oracle

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 144), st.floats(0, 144)), min_size=2, max_size=40))
    def test_progress_never_decreases(self, positions):
        path = figure7()
        cfg = PursuitConfig()
        prog = PathProgress()
        for p in positions:
            _, new = lookahead_target(path, p, cfg, prog)
            assert new >= prog
            prog = new

    def test_window_stops_loop_skipping(self):
        loop = cycle().repeated(3)
        _, prog = lookahead_target(loop, WAREHOUSE, PursuitConfig())
        assert loop.arclength(prog) < 3 * PursuitConfig().lookahead_radius + 1e-9


class TestPath:
    def test_rejects_duplicate_waypoints(self):
        with pytest.raises(ValueError, match="coincide"):
            Path([(0, 0), (0, 0), (1, 1)])

    def test_headings_inherit(self):
        p = Path([(0, 0), (1, 0), (2, 0)], [0.5, None, 1.0])
        assert p.segment_headings == [0.5, 1.0]
        assert Path([(0, 0), (1, 0)]).heading_at(PathProgress()) == 0.0

    def test_repeated_requires_closed(self):
        with pytest.raises(ValueError):
            Path([(0, 0), (1, 0)]).repeated(2)
        loop = cycle()
        assert loop.repeated(3).length == pytest.approx(3 * loop.length)

    def test_bundled_paths(self):
        f7 = figure7()
        np.testing.assert_allclose(f7.end - f7.start, [75, 2], atol=1e-9)
        assert get_path("cycle").end.tolist() == list(WAREHOUSE)
        with pytest.raises(ValueError):
            get_path("nope")


class TestPid:
    def test_proportional(self):
        s = PidState(integral=40, previous_error=3, initialized=True)
        out, _ = pid_step(s, 2.5, PidGains(1, 0, 0))
        assert out == 2.5

    def test_integral(self):
        g = PidGains(0, 1, 0)
        o1, s = pid_step(PidState(), 1, g)
        o2, _ = pid_step(s, 1, g)
        assert (o1, o2) == (1, 2)

    def test_derivative(self):
        g = PidGains(0, 0, 1)
        o1, s = pid_step(PidState(), 3, g)
        o2, _ = pid_step(s, 5, g)
        assert (o1, o2) == (0, 2)

    def test_antiwindup(self):
        s = PidState()
        for _ in range(100):
            _, s = pid_step(s, 10, PidGains(0, 1, 0))
        assert s.integral == 50

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=20),
           st.floats(0, 5), st.floats(0, 5), st.floats(-5, 5))
    def test_linearity(self, errors, p, i, d):
        g = PidGains(p, i, d)
        s1 = s2 = PidState()
        for e in errors:
            o1, s1 = pid_step(s1, e, g)
            o2, s2 = pid_step(s2, 2 * e, g)
            assert o2 == pytest.approx(2 * o1, abs=1e-12)


class TestControl:
    def states(self):
        return (PidState(), PidState(), PidState())

    def test_zero_error(self):
        u, _ = compute_control([5, 5, 0.3, 0, 0, 0], (5, 5), 0.3, AxisGains(), self.states(), GEOM)
        np.testing.assert_array_equal(u, np.zeros(4))

    def test_straight_ahead(self):
        gains = AxisGains(PidGains(1), PidGains(0), PidGains(0))
        u, _ = compute_control(np.zeros(6), (10, 0), 0.0, gains, self.states(), GEOM, wheel_cap=1e9)
        np.testing.assert_allclose(u, [10 / GEOM.wheel_radius] * 4)

    def test_body_frame_rotation(self):
        gains = AxisGains(PidGains(1), PidGains(1), PidGains(0))
        u, _ = compute_control([0, 0, math.pi / 2, 0, 0, 0], (10, 0), math.pi / 2, gains,
                               self.states(), GEOM, wheel_cap=1e9)
        vx, vy, om = wheel_to_body_velocity(u, GEOM)
        assert (vx, vy, om) == pytest.approx((0, -10, 0), abs=1e-12)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4), st.floats(0.1, 100))
    def test_saturation_preserves_direction(self, w, cap):
        w = np.array(w)
        out = saturate_wheels(w, cap)
        assert np.max(np.abs(out)) <= cap * (1 + 1e-12) or np.array_equal(out, w)
        peak = np.max(np.abs(w))
        if peak > 0:
            ratio = np.max(np.abs(out)) / peak
            np.testing.assert_allclose(out, ratio * w, atol=1e-9)
            assert ratio > 0
