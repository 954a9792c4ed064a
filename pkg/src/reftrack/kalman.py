"""Constant-velocity Kalman filter over box state (cx, cy, a, h, velocities).

The trajectory predictor models each target linearly in position and
velocity: the 8-vector state is box center, aspect ratio a = w/h, height,
and their per-frame derivatives. Measurements are full boxes observed as
(cx, cy, a, h) with diagonal noise scaled by box height, which keeps the
filter linear. States are immutable values; predict/update return new ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBox, DegenerateState
from .geometry import BBox

_DIM = 8
_F = np.eye(_DIM)
_F[:4, 4:] = np.eye(4)  # position += velocity, dt = 1
_H = np.eye(4, _DIM)


@dataclass(frozen=True)
class NoiseConfig:
    """Noise std multipliers relative to box height (standard SORT-family values)."""

    position_weight: float = 1.0 / 20.0
    velocity_weight: float = 1.0 / 160.0

    def __post_init__(self):
        if self.position_weight <= 0 or self.velocity_weight <= 0:
            raise ValueError("noise weights must be positive")


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray        # (8,)
    covariance: np.ndarray  # (8, 8) symmetric PSD

    def copy_with(self, mean: np.ndarray, covariance: np.ndarray) -> "KalmanState":
        return KalmanState(np.asarray(mean, dtype=np.float64), np.asarray(covariance, dtype=np.float64))


def _measurement(b: BBox) -> np.ndarray:
    if b.width <= 0.0 or b.height <= 0.0:
        raise DegenerateBox(f"box has no area: {b.as_tuple()}")
    cx, cy = b.center
    return np.array([cx, cy, b.width / b.height, b.height], dtype=np.float64)


def init_from_box(b: BBox, cfg: NoiseConfig = NoiseConfig()) -> KalmanState:
    """Start a track at a box: velocities zero, velocity covariance inflated.

    The 40x velocity inflation lets a fresh track absorb its true velocity
    within a handful of updates (a 5-frame burn-in suffices for pixel
    velocities of a few box-fractions per frame).
    """
    z = _measurement(b)
    mean = np.zeros(_DIM)
    mean[:4] = z
    h = z[3]
    std = np.array([
        2 * cfg.position_weight * h,
        2 * cfg.position_weight * h,
        1e-2,
        2 * cfg.position_weight * h,
        40 * cfg.velocity_weight * h,
        40 * cfg.velocity_weight * h,
        1e-5,
        40 * cfg.velocity_weight * h,
    ])
    return KalmanState(mean, np.diag(std * std))


def _process_noise(h: float, cfg: NoiseConfig) -> np.ndarray:
    std = np.array([
        cfg.position_weight * h,
        cfg.position_weight * h,
        1e-2,
        cfg.position_weight * h,
        cfg.velocity_weight * h,
        cfg.velocity_weight * h,
        1e-5,
        cfg.velocity_weight * h,
    ])
    return np.diag(std * std)


def _measurement_noise(h: float, cfg: NoiseConfig) -> np.ndarray:
    std = np.array([
        cfg.position_weight * h,
        cfg.position_weight * h,
        1e-1,
        cfg.position_weight * h,
    ])
    return np.diag(std * std)


def predict(s: KalmanState, cfg: NoiseConfig = NoiseConfig()) -> KalmanState:
    """One constant-velocity step; covariance propagated and inflated by process noise."""
    mean = _F @ s.mean
    cov = _F @ s.covariance @ _F.T + _process_noise(s.mean[3], cfg)
    cov = (cov + cov.T) / 2.0
    return s.copy_with(mean, cov)


def update(s: KalmanState, measurement: BBox, cfg: NoiseConfig = NoiseConfig()) -> KalmanState:
    """Kalman correction on the observed (cx, cy, a, h) components (Joseph form)."""
    z = _measurement(measurement)
    R = _measurement_noise(s.mean[3], cfg)
    S = _H @ s.covariance @ _H.T + R
    K = s.covariance @ _H.T @ np.linalg.inv(S)
    mean = s.mean + K @ (z - _H @ s.mean)
    ikh = np.eye(_DIM) - K @ _H
    cov = ikh @ s.covariance @ ikh.T + K @ R @ K.T
    cov = (cov + cov.T) / 2.0
    return s.copy_with(mean, cov)


def state_to_box(s: KalmanState) -> BBox:
    """Inverse of the init parameterization: center/aspect/height back to corners."""
    cx, cy, a, h = s.mean[:4]
    if a <= 0.0 or h <= 0.0:
        raise DegenerateState(f"non-positive aspect or height in state: a={a}, h={h}")
    w = a * h
    return BBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
