"""Mecanum-drive process and measurement models.

State vectors are plain ``numpy`` arrays laid out as::

    [x, y, theta, vx_body, vy_body, omega]

with positions in inches (global frame), heading in radians (CCW positive)
and velocities expressed in the robot body frame. Controls are the four
mecanum wheel angular velocities in rad/s, positive driving the robot
forward. Measurements are::

    [x_m, y_m, theta_m, E_L, E_R, E_a]

where the last three entries are dead-wheel encoder surface speeds (in/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

STATE_DIM = 6
CONTROL_DIM = 4
MEAS_DIM = 6

# state indices
X, Y, THETA, VX, VY, OMEGA = range(6)
# measurement indices
XM, YM, THETAM, EL, ER, EA = range(6)

#: Position variance used for the camera rows when no landmark is in view.
NO_LANDMARK_VARIANCE = 1e9


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into ``(-pi, pi]``."""
    # values already in range pass through untouched; the modular form
    # would round tiny angles to zero
    if isinstance(angle, (float, int)):
        if -math.pi < angle <= math.pi:
            return float(angle)
        return math.pi - (math.pi - angle) % (2.0 * math.pi)
    a = np.asarray(angle, dtype=float)
    wrapped = np.where((a > -np.pi) & (a <= np.pi), a, np.pi - np.mod(np.pi - a, 2.0 * np.pi))
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class RobotGeometry:
    """Physical lengths of the drivetrain, in inches.

    Parameters
    ----------
    wheel_radius : float
        Mecanum wheel radius ``r``.
    half_length : float
        Distance ``L`` from the center horizontal axis to a wheel center.
    half_width : float
        Distance ``l`` from the center vertical axis to a wheel center.
    encoder_track : float
        Distance ``W`` from each vertical dead wheel to the center vertical axis.
    encoder_offset : float
        Distance ``D`` from the horizontal dead wheel to the center horizontal axis.
    wheel_speed_cap : float
        Largest wheel angular speed (rad/s) the controller may command.
    """

    wheel_radius: float = 1.8898
    half_length: float = 6.5
    half_width: float = 5.5
    encoder_track: float = 6.0
    encoder_offset: float = 4.0
    wheel_speed_cap: float = 30.0

    def __post_init__(self):
        for name in ("wheel_radius", "half_length", "half_width",
                     "encoder_track", "encoder_offset", "wheel_speed_cap"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def wheelbase_sum(self) -> float:
        """``L + l``, the lever arm of the rotation row."""
        return self.half_length + self.half_width


@dataclass(frozen=True)
class NoiseScale:
    """Independent multipliers on the four noise groups.

    ``q_position``/``q_velocity`` scale the process noise diagonal,
    ``r_position``/``r_encoder`` scale the measurement noise diagonal.
    A scale of zero switches the group off.
    """

    q_position: float = 1.0
    q_velocity: float = 1.0
    r_position: float = 1.0
    r_encoder: float = 1.0

    def __post_init__(self):
        for name in ("q_position", "q_velocity", "r_position", "r_encoder"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")

    @classmethod
    def zero(cls) -> "NoiseScale":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Measurement:
    """One sensor frame: the stacked measurement vector plus landmark context."""

    z: np.ndarray
    landmark_distance: Optional[float] = None
    landmark_id: Optional[str] = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        if z.shape != (MEAS_DIM,):
            raise ValueError(f"measurement must have shape ({MEAS_DIM},), got {z.shape}")
        if not np.all(np.isfinite(z[EL:])):
            raise ValueError("encoder readings must be finite")
        if self.landmark_distance is not None and not self.landmark_distance > 0:
            raise ValueError("landmark_distance must be > 0 when present")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def encoders(self) -> np.ndarray:
        return self.z[EL:]

    @property
    def has_landmark(self) -> bool:
        return self.landmark_distance is not None


# ---------------------------------------------------------------------------
# kinematics


def wheel_to_body_velocity(control: Sequence[float], geom: RobotGeometry):
    """Forward mecanum kinematics: wheel speeds (rad/s) to body velocity.

    Returns
    -------
    tuple of float
        ``(vx, vy, omega)`` in in/s, in/s and rad/s.
    """
    m1, m2, m3, m4 = (float(m) for m in control)
    k = geom.wheel_radius / 4.0
    vx = k * (m1 + m2 + m3 + m4)
    vy = k * (m1 - m2 - m3 + m4)
    omega = k * (-m1 + m2 - m3 + m4) / geom.wheelbase_sum
    return vx, vy, omega


def body_to_wheel_velocity(vx: float, vy: float, omega: float,
                           geom: RobotGeometry) -> np.ndarray:
    """Inverse mecanum kinematics: body velocity to the four wheel speeds."""
    k = geom.wheelbase_sum * omega
    inv_r = 1.0 / geom.wheel_radius
    return np.array([
        inv_r * (vx + vy - k),
        inv_r * (vx - vy + k),
        inv_r * (vx - vy - k),
        inv_r * (vx + vy + k),
    ])


def odometry_to_body_velocity(e_left: float, e_right: float, e_aux: float,
                              geom: RobotGeometry):
    """Recover ``(vx, vy, omega)`` from the three dead-wheel speeds."""
    omega = (e_right - e_left) / (2.0 * geom.encoder_track)
    vx = 0.5 * (e_right + e_left)
    vy = e_aux + geom.encoder_offset * omega
    return vx, vy, omega


# ---------------------------------------------------------------------------
# process model


def state_transition(state: np.ndarray, control: Sequence[float], dt: float,
                     geom: RobotGeometry) -> np.ndarray:
    """Propagate ``state`` by one Euler step of length ``dt``.

    Position rows integrate the body velocity rotated into the global frame;
    velocity rows are replaced by the wheel command, independent of the prior
    velocity.
    """
    x, y, theta, vx, vy, omega = (float(s) for s in state)
    c, s = math.cos(theta), math.sin(theta)
    nvx, nvy, nomega = wheel_to_body_velocity(control, geom)
    return np.array([
        x + dt * (vx * c - vy * s),
        y + dt * (vx * s + vy * c),
        theta + dt * omega,
        nvx,
        nvy,
        nomega,
    ])


def transition_jacobian(state: np.ndarray, dt: float) -> np.ndarray:
    """Jacobian of :func:`state_transition` with respect to the state."""
    theta, vx, vy = float(state[THETA]), float(state[VX]), float(state[VY])
    c, s = math.cos(theta), math.sin(theta)
    A = np.zeros((STATE_DIM, STATE_DIM))
    A[0, 0] = A[1, 1] = A[2, 2] = 1.0
    A[0, 2] = dt * (-vx * s - vy * c)
    A[0, 3] = dt * c
    A[0, 4] = -dt * s
    A[1, 2] = dt * (vx * c - vy * s)
    A[1, 3] = dt * s
    A[1, 4] = dt * c
    A[2, 5] = dt
    return A


def process_noise_cov(dt: float, scale: NoiseScale = NoiseScale()) -> np.ndarray:
    """Diagonal process noise ``Q``.

    Position variances grow linearly with ``dt``; velocity variances do not
    depend on it.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    pos = 0.002 * dt * scale.q_position
    vel = 0.45 * scale.q_velocity
    return np.diag([pos, pos, pos, vel, vel, vel])


# ---------------------------------------------------------------------------
# measurement model


def measurement_fn(state: np.ndarray, geom: RobotGeometry) -> np.ndarray:
    """Predicted measurement: camera pose rows and dead-wheel speeds."""
    x, y, theta, vx, vy, omega = (float(s) for s in state)
    W, D = geom.encoder_track, geom.encoder_offset
    return np.array([x, y, theta, vx - W * omega, vx + W * omega, vy - D * omega])


def measurement_jacobian(geom: RobotGeometry) -> np.ndarray:
    """Constant Jacobian of :func:`measurement_fn`."""
    H = np.zeros((MEAS_DIM, STATE_DIM))
    H[0, 0] = H[1, 1] = H[2, 2] = 1.0
    H[3, 3] = 1.0
    H[3, 5] = -geom.encoder_track
    H[4, 3] = 1.0
    H[4, 5] = geom.encoder_track
    H[5, 4] = 1.0
    H[5, 5] = -geom.encoder_offset
    return H


def measurement_noise_cov(landmark_distance: Optional[float],
                          encoder_readings: Sequence[float],
                          scale: NoiseScale = NoiseScale(),
                          no_landmark_variance: float = NO_LANDMARK_VARIANCE) -> np.ndarray:
    """Diagonal measurement noise ``R``.

    Camera rows get ``0.001 d^2 + 0.001`` for a landmark at distance ``d``,
    or ``no_landmark_variance`` when nothing is in view. Encoder row ``i``
    gets ``0.002 E_i^2 + 0.001``.
    """
    enc = np.asarray(encoder_readings, dtype=float)
    if enc.shape != (3,) or not np.all(np.isfinite(enc)):
        raise ValueError(f"encoder readings must be 3 finite values, got {encoder_readings!r}")
    if landmark_distance is None:
        d_var = no_landmark_variance
    else:
        if landmark_distance < 0 or not math.isfinite(landmark_distance):
            raise ValueError(f"landmark_distance must be >= 0, got {landmark_distance!r}")
        d_var = (0.001 * landmark_distance ** 2 + 0.001) * scale.r_position
    e_var = (0.002 * enc ** 2 + 0.001) * scale.r_encoder
    return np.diag([d_var, d_var, d_var, e_var[0], e_var[1], e_var[2]])
