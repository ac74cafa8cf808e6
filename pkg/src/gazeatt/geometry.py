"""Gaze angle conventions and the small amount of vector math built on them.

Frame: x = image-right, y = image-down, z = depth away from the camera.
Positive yaw turns the gaze toward image-right, positive pitch toward
image-down, so the unit gaze vector is

    v = (cos(pitch) sin(yaw), sin(pitch), cos(pitch) cos(yaw))

and dropping z gives the gaze direction on the image plane directly.
Angles are radians everywhere in this module.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

EPS_2D = 1e-6


class GazeAngle(NamedTuple):
    yaw: float
    pitch: float

    @classmethod
    def from_degrees(cls, yaw_deg: float, pitch_deg: float) -> "GazeAngle":
        return cls(math.radians(yaw_deg), math.radians(pitch_deg))

    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.yaw), math.degrees(self.pitch)


class DegenerateDirection(ValueError):
    """A 2D direction whose norm is at or below ``EPS_2D``."""


def angles_to_vector(yaw, pitch):
    """Unit gaze vector(s) for yaw/pitch in radians.

    Works on scalars or broadcastable arrays; the last axis of the result
    holds (x, y, z).
    """
    yaw = np.asarray(yaw, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    cp = np.cos(pitch)
    return np.stack([cp * np.sin(yaw), np.sin(pitch), cp * np.cos(yaw)], axis=-1)


def vector_to_angles(v) -> GazeAngle:
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("cannot take the gaze angle of a zero or non-finite vector")
    x, y, z = v / n
    pitch = math.asin(min(1.0, max(-1.0, y)))
    yaw = math.atan2(x, z)
    return GazeAngle(yaw, pitch)


def project_gaze(v):
    """Image-plane direction of a gaze vector: (x, y), depth dropped."""
    v = np.asarray(v, dtype=np.float64)
    return v[..., :2]


def angular_error(a, b) -> float:
    """Angle in degrees between two gaze directions given as (yaw, pitch)."""
    va = angles_to_vector(*a)
    vb = angles_to_vector(*b)
    c = float(np.clip(np.dot(va, vb), -1.0, 1.0))
    return math.degrees(math.acos(c))


def angular_errors(pred, true):
    """Vectorized ``angular_error`` over (N, 2) arrays of (yaw, pitch)."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    true = np.asarray(true, dtype=np.float64).reshape(-1, 2)
    va = angles_to_vector(pred[:, 0], pred[:, 1])
    vb = angles_to_vector(true[:, 0], true[:, 1])
    c = np.clip(np.einsum("ij,ij->i", va, vb), -1.0, 1.0)
    return np.degrees(np.arccos(c))


def cosine_distance_2d(u, w, eps: float = EPS_2D) -> float:
    """1 - cos(angle between u and w), in [0, 2].

    Raises DegenerateDirection when either vector is too short to have a
    direction; callers drop the loss term for that sample.
    """
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    nu = math.hypot(u[0], u[1])
    nw = math.hypot(w[0], w[1])
    if nu <= eps or nw <= eps:
        raise DegenerateDirection(f"degenerate direction (|u|={nu:.3g}, |w|={nw:.3g})")
    c = (u[0] * w[0] + u[1] * w[1]) / (nu * nw)
    return 1.0 - min(1.0, max(-1.0, c))
