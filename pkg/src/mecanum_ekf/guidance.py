"""Pure-pursuit path following with one PID per controlled axis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .vehicle_model import RobotGeometry, body_to_wheel_velocity, wrap_angle


class PathProgress(NamedTuple):
    """Position along a path: segment index plus fraction within that segment.

    Tuples compare lexicographically, which is exactly "further along".
    """

    segment: int = 0
    fraction: float = 0.0


class Path:
    """Polyline of waypoints with optional per-waypoint heading targets.

    Parameters
    ----------
    waypoints : array_like, shape (n, 2)
    headings : sequence of float or None, optional
        Heading target (rad) attached to each waypoint; ``None`` entries
        inherit the previous value. Missing entirely means "hold the initial
        heading" for the whole path.
    initial_heading : float, optional
        Robot heading at the start. Defaults to the first waypoint heading,
        or 0.
    """

    def __init__(self, waypoints, headings: Optional[Sequence[Optional[float]]] = None,
                 initial_heading: Optional[float] = None):
        pts = np.array(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("a path needs at least 2 waypoints of shape (x, y)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("waypoints must be finite")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 1e-6):
            i = int(np.flatnonzero(lengths <= 1e-6)[0])
            raise ValueError(f"waypoints {i} and {i + 1} coincide")
        if headings is not None and len(headings) != len(pts):
            raise ValueError("headings must have one entry per waypoint")

        if initial_heading is None:
            initial_heading = 0.0
            if headings is not None and headings[0] is not None:
                initial_heading = float(headings[0])
        self.waypoints = pts
        self.headings = None if headings is None else list(headings)
        self.initial_heading = float(initial_heading)
        self.segment_vectors = seg
        self.segment_lengths = lengths
        self.cumulative = np.concatenate([[0.0], np.cumsum(lengths)])

        # heading target while pursuing segment i: that of its end waypoint
        seg_heading = []
        current = self.initial_heading
        for i in range(len(seg)):
            if headings is not None and headings[i + 1] is not None:
                current = float(headings[i + 1])
            seg_heading.append(current)
        self.segment_headings = seg_heading
        # python-float copies for the hot loop
        self._seg = [(float(a[0]), float(a[1]), float(d[0]), float(d[1]))
                     for a, d in zip(pts[:-1], seg)]

    @property
    def n_segments(self) -> int:
        return len(self.segment_lengths)

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    @property
    def length(self) -> float:
        return float(self.cumulative[-1])

    @property
    def end_progress(self) -> PathProgress:
        return PathProgress(self.n_segments - 1, 1.0)

    def arclength(self, progress: PathProgress) -> float:
        return float(self.cumulative[progress.segment]
                     + progress.fraction * self.segment_lengths[progress.segment])

    def point(self, progress: PathProgress) -> Tuple[float, float]:
        ax, ay, dx, dy = self._seg[progress.segment]
        return ax + progress.fraction * dx, ay + progress.fraction * dy

    def heading_at(self, progress: PathProgress) -> float:
        return self.segment_headings[progress.segment]

    def repeated(self, times: int) -> "Path":
        """Concatenate a closed path with itself ``times`` times."""
        if times < 1:
            raise ValueError("times must be >= 1")
        if np.hypot(*(self.end - self.start)) > 1e-6:
            raise ValueError("only closed paths (end == start) can be repeated")
        pts = [self.waypoints]
        heads = [self.headings] if self.headings is not None else None
        for _ in range(times - 1):
            pts.append(self.waypoints[1:])
            if heads is not None:
                heads.append(self.headings[1:])
        headings = None if heads is None else [h for part in heads for h in part]
        return Path(np.vstack(pts), headings, self.initial_heading)


@dataclass(frozen=True)
class PursuitConfig:
    """Pure-pursuit settings (inches).

    ``search_arc`` bounds how far past the progress marker candidates are
    searched; it keeps self-crossing or repeated paths from skipping ahead.
    ``None`` means three lookahead radii, ``math.inf`` disables the bound.
    """

    lookahead_radius: float = 12.0
    waypoint_advance_tolerance: float = 2.0
    search_arc: Optional[float] = None

    def __post_init__(self):
        if not self.lookahead_radius > 0:
            raise ValueError("lookahead_radius must be > 0")
        if self.waypoint_advance_tolerance < 0:
            raise ValueError("waypoint_advance_tolerance must be >= 0")
        if self.search_arc is not None and not self.search_arc > 0:
            raise ValueError("search_arc must be > 0")

    @property
    def window(self) -> float:
        return 3.0 * self.lookahead_radius if self.search_arc is None else self.search_arc


def _segment_circle_roots(ax, ay, dx, dy, cx, cy, radius):
    fx, fy = ax - cx, ay - cy
    a = dx * dx + dy * dy
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return ()
    sq = math.sqrt(disc)
    return ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))


def lookahead_target(path: Path, position: Sequence[float], cfg: PursuitConfig,
                     progress: PathProgress = PathProgress()):
    """Pick the point to pursue.

    The target is the furthest-along path point within ``lookahead_radius``
    of ``position``: the last circle/path intersection, or the path end when
    it lies inside the circle. If nothing on the path is within reach, the
    nearest path point is used. Only points at or beyond ``progress`` (and
    within ``cfg.window`` of it) are considered.

    Returns
    -------
    target : tuple of float
    progress : PathProgress
        Marker of the returned point; never decreases.
    """
    px, py = float(position[0]), float(position[1])
    radius = cfg.lookahead_radius
    s_limit = path.arclength(progress) + cfg.window
    best = None
    nearest = None
    nearest_d2 = math.inf
    last = path.n_segments - 1
    for i in range(progress.segment, path.n_segments):
        if path.cumulative[i] > s_limit:
            break
        ax, ay, dx, dy = path._seg[i]
        t_min = progress.fraction if i == progress.segment else 0.0
        length = path.segment_lengths[i]
        t_max = min(1.0, (s_limit - path.cumulative[i]) / length)
        for t in _segment_circle_roots(ax, ay, dx, dy, px, py, radius):
            if t_min <= t <= t_max:
                cand = PathProgress(i, t)
                if best is None or cand > best:
                    best = cand
        if i == last and t_max >= 1.0:
            ex, ey = ax + dx, ay + dy
            if (ex - px) ** 2 + (ey - py) ** 2 <= radius * radius:
                best = PathProgress(i, 1.0)
        if best is None:
            t = ((px - ax) * dx + (py - ay) * dy) / (length * length)
            t = min(max(t, t_min), max(t_max, t_min))
            qx, qy = ax + t * dx, ay + t * dy
            d2 = (qx - px) ** 2 + (qy - py) ** 2
            if d2 < nearest_d2:
                nearest_d2 = d2
                nearest = PathProgress(i, t)
    chosen = best if best is not None else nearest
    if chosen is None or chosen < progress:
        chosen = progress
    return path.point(chosen), chosen


# ---------------------------------------------------------------------------
# PID


@dataclass(frozen=True)
class PidGains:
    P: float
    I: float = 0.0
    D: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(g) for g in (self.P, self.I, self.D)):
            raise ValueError("PID gains must be finite")
        if self.P < 0:
            raise ValueError("P gain must be >= 0")


@dataclass(frozen=True)
class PidState:
    """Integral accumulator and last error of one PID loop."""

    integral: float = 0.0
    previous_error: float = 0.0
    initialized: bool = False
    integral_limit: float = 50.0


def pid_step(state: PidState, error: float, gains: PidGains):
    """One controller update.

    The integral is the running sum of errors (clamped to
    ``+/- state.integral_limit``); the derivative is the raw error
    difference since the last call, zero on the first call.
    """
    if not math.isfinite(error):
        raise ValueError(f"PID error must be finite, got {error!r}")
    lim = state.integral_limit
    integral = min(max(state.integral + error, -lim), lim)
    derivative = error - state.previous_error if state.initialized else 0.0
    output = gains.P * error + gains.I * integral + gains.D * derivative
    return output, PidState(integral, error, True, lim)


@dataclass(frozen=True)
class AxisGains:
    """Gains for the x, y (body frame) and heading loops."""

    x: PidGains = field(default_factory=lambda: PidGains(4.0, 0.0, 0.5))
    y: PidGains = field(default_factory=lambda: PidGains(4.0, 0.0, 0.5))
    theta: PidGains = field(default_factory=lambda: PidGains(6.0, 0.0, 0.5))


def saturate_wheels(wheels: np.ndarray, cap: float) -> np.ndarray:
    """Scale all wheels down uniformly so none exceeds ``cap``."""
    peak = float(np.max(np.abs(wheels)))
    if peak > cap:
        return wheels * (cap / peak)
    return wheels


def compute_control(estimate: Sequence[float], target: Sequence[float], heading_target: float,
                    gains: AxisGains, pid_states: Tuple[PidState, PidState, PidState],
                    geom: RobotGeometry, wheel_cap: Optional[float] = None):
    """Turn the target point into wheel commands.

    Global position error is rotated into the body frame using the
    estimated heading; the three PID outputs are the commanded body
    velocity ``(vx, vy, omega)``.

    Returns
    -------
    control : ndarray, shape (4,)
    pid_states : tuple of PidState
    """
    x, y, theta = float(estimate[0]), float(estimate[1]), float(estimate[2])
    ex, ey = float(target[0]) - x, float(target[1]) - y
    c, s = math.cos(theta), math.sin(theta)
    err_bx = c * ex + s * ey
    err_by = -s * ex + c * ey
    err_th = wrap_angle(heading_target - theta)
    vx, sx = pid_step(pid_states[0], err_bx, gains.x)
    vy, sy = pid_step(pid_states[1], err_by, gains.y)
    omega, st = pid_step(pid_states[2], err_th, gains.theta)
    wheels = body_to_wheel_velocity(vx, vy, omega, geom)
    cap = geom.wheel_speed_cap if wheel_cap is None else wheel_cap
    return saturate_wheels(wheels, cap), (sx, sy, st)
