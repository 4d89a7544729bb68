"""Wheel speeds, body velocity and one filter step.

Run with ``python demos/01_kinematics.py``. Cells are separated by ``# %%``
so the file also opens as a notebook in editors that understand that marker.
"""

# %% Forward and inverse kinematics
import numpy as np

from mecanum_ekf.vehicle_model import (RobotGeometry, body_to_wheel_velocity,
                                       measurement_fn, process_noise_cov,
                                       measurement_noise_cov, state_transition,
                                       wheel_to_body_velocity)

geom = RobotGeometry()
wheels = body_to_wheel_velocity(10.0, 0.0, 0.0, geom)
print("pure forward at 10 in/s needs wheel speeds", np.round(wheels, 4))
print("strafing at 10 in/s needs", np.round(body_to_wheel_velocity(0.0, 10.0, 0.0, geom), 4))
print("back to body frame:", np.round(wheel_to_body_velocity(wheels, geom), 12))

# %% One Euler step of the motion model
state = np.array([0.0, 0.0, np.pi / 4, 0.0, 0.0, 0.0])
nxt = state_transition(state, wheels, 0.1, geom)
print("after 0.1 s facing 45 deg:", np.round(nxt, 4))
print("predicted encoder readings:", np.round(measurement_fn(nxt, geom)[3:], 4))

# %% Noise schedules
print("Q diagonal at dt=0.01:", np.diag(process_noise_cov(0.01)))
print("R diagonal, landmark 10 in away, encoders still:",
      np.diag(measurement_noise_cov(10.0, np.zeros(3))))
print("R diagonal, no landmark:", np.diag(measurement_noise_cov(None, np.zeros(3))))
