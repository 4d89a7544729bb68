"""Extended Kalman filter prediction and correction.

The functions here are written against numpy arrays and work for any state
and measurement dimension, although the rest of the package only uses the
6-state / 6-measurement mecanum system.

All operations are pure: they take a :class:`BeliefState` and return a new
one. Covariances are re-symmetrized after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .vehicle_model import wrap_angle

# pivot^2 / diagonal below this marks an innovation dimension as singular
_SINGULAR_RTOL = 1e-13


class FilterError(ValueError):
    """Raised for non-finite inputs or a singular innovation covariance."""


@dataclass(frozen=True)
class BeliefState:
    """Gaussian belief: state mean and covariance ``P``."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class PredictionModel:
    """Process model ``x' = f(x, u, dt)`` with Jacobian and noise schedule."""

    transition: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    transition_jacobian: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    process_noise: Callable[[float], np.ndarray]


@dataclass(frozen=True)
class MeasurementModel:
    """Measurement model ``z = h(x)``.

    ``angle_indices`` lists measurement rows holding angles; their residuals
    are wrapped into ``(-pi, pi]`` before the gain is applied.
    """

    measure: Callable[[np.ndarray], np.ndarray]
    measurement_jacobian: Callable[[np.ndarray], np.ndarray]
    measurement_noise: Optional[np.ndarray] = None
    angle_indices: Tuple[int, ...] = field(default=(2,))


def _check_finite(name: str, value: np.ndarray) -> None:
    value = np.asarray(value)
    if not np.all(np.isfinite(value)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(value))[0])
        index = bad[0] if len(bad) == 1 else bad
        raise FilterError(f"{name} has non-finite entry at index {index}: {value[bad]!r}")


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _factor_innovation(S: np.ndarray) -> None:
    """Raise :class:`FilterError` naming the dimension if ``S`` is (near) singular."""
    n = S.shape[0]
    diag = np.diag(S)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        ratio = np.diag(L) ** 2 / np.where(diag > 0, diag, 1.0)
        bad = np.flatnonzero((ratio < _SINGULAR_RTOL) | (diag <= 0))
        if bad.size == 0:
            return
        dim = int(bad[0])
    else:
        # first leading block that fails to factor
        dim = n - 1
        for k in range(1, n + 1):
            try:
                np.linalg.cholesky(S[:k, :k])
            except np.linalg.LinAlgError:
                dim = k - 1
                break
    raise FilterError(
        f"innovation covariance is singular or not positive definite "
        f"(near-singular along measurement dimension {dim} of {n})")


def kalman_gain(P_pred: np.ndarray, H: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``K = P H^T (H P H^T + R)^-1`` computed with a linear solve."""
    P_pred = np.asarray(P_pred, dtype=float)
    H = np.asarray(H, dtype=float)
    R = np.asarray(R, dtype=float)
    S = H @ P_pred @ H.T + R
    _factor_innovation(S)
    # S and P are symmetric, so K^T = S^-1 H P
    return np.linalg.solve(S, H @ P_pred).T


def predict(belief: BeliefState, control: Sequence[float], dt: float,
            model: PredictionModel) -> BeliefState:
    """Time update: push the mean through ``f`` and the covariance through ``A``."""
    if not dt > 0:
        raise FilterError(f"dt must be > 0, got {dt!r}")
    control = np.asarray(control, dtype=float)
    _check_finite("belief mean", belief.mean)
    _check_finite("belief covariance", belief.covariance)
    _check_finite("control", control)
    mean = np.asarray(model.transition(belief.mean, control, dt), dtype=float)
    A = np.asarray(model.transition_jacobian(belief.mean, control, dt), dtype=float)
    Q = np.asarray(model.process_noise(dt), dtype=float)
    P = A @ belief.covariance @ A.T + Q
    return BeliefState(mean, symmetrize(P))


def update(belief: BeliefState, measurement: Sequence[float], model: MeasurementModel,
           measurement_noise: Optional[np.ndarray] = None) -> BeliefState:
    """Measurement update.

    ``measurement_noise`` overrides ``model.measurement_noise`` for this call;
    one of the two must be given.
    """
    R = model.measurement_noise if measurement_noise is None else measurement_noise
    if R is None:
        raise FilterError("no measurement noise covariance supplied")
    R = np.asarray(R, dtype=float)
    z = np.asarray(measurement, dtype=float)
    _check_finite("measurement", z)
    _check_finite("measurement noise", R)
    if np.any(np.diag(R) <= 0):
        dim = int(np.flatnonzero(np.diag(R) <= 0)[0])
        raise FilterError(f"measurement noise variance must be > 0 (dimension {dim})")
    x_pred = belief.mean
    P_pred = belief.covariance
    H = np.asarray(model.measurement_jacobian(x_pred), dtype=float)
    residual = z - np.asarray(model.measure(x_pred), dtype=float)
    if model.angle_indices:
        idx = list(model.angle_indices)
        residual[idx] = wrap_angle(residual[idx])
    K = kalman_gain(P_pred, H, R)
    mean = x_pred + K @ residual
    P = P_pred - K @ H @ P_pred
    return BeliefState(mean, symmetrize(P))
