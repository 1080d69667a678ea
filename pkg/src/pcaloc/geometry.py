"""Partly calibrated array geometry and steering vectors.

Each subarray is internally calibrated: its sensor positions are known and
its response toward a candidate location follows a spherical-wave, phase-only
model. Nothing is assumed about gain or phase relations *between* subarrays;
those are carried by the unknown propagation coefficients elsewhere.

Locations are real vectors of dimension D (1, 2 or 3), in meters. Batched
evaluation is supported throughout: a ``points`` argument of shape (..., D)
yields steering vectors of shape (..., M_l).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DuplicateLocation, ZeroDistance

# Distances at or below this are treated as coincident points (meters).
_ZERO_DISTANCE = 1e-12

SensorResponse = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _as_points(p, dim: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if p.shape[-1] != dim:
        raise ValueError(f"location dimension {p.shape[-1]} does not match geometry dimension {dim}")
    return p


@dataclass(frozen=True, eq=False)
class SubarrayGeometry:
    """One fully calibrated subarray.

    Args:
        sensor_positions: (M_l, D) sensor coordinates in meters.
        reference_position: delay/phase reference point of the subarray.
            Defaults to the sensor centroid.
        response: optional directional sensor model. Called as
            ``response(sensor_positions, points)`` with ``points`` of shape
            (..., D); must return complex gains of shape (..., M_l). The
            resulting steering vector is renormalized to unit norm.
    """

    sensor_positions: np.ndarray
    reference_position: Optional[np.ndarray] = None
    response: Optional[SensorResponse] = field(default=None, repr=False)

    def __post_init__(self):
        pos = np.array(self.sensor_positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] not in (1, 2, 3):
            raise ValueError("sensor_positions must have shape (M_l, D) with M_l >= 1 and D in {1, 2, 3}")
        ref = pos.mean(axis=0) if self.reference_position is None else np.array(self.reference_position, dtype=float).reshape(-1)
        if ref.shape != (pos.shape[1],):
            raise ValueError("reference_position dimension does not match sensor positions")
        pos.setflags(write=False)
        ref.setflags(write=False)
        object.__setattr__(self, "sensor_positions", pos)
        object.__setattr__(self, "reference_position", ref)

    @property
    def n_sensors(self) -> int:
        return self.sensor_positions.shape[0]

    @property
    def dim(self) -> int:
        return self.sensor_positions.shape[1]

    def translated(self, offset) -> "SubarrayGeometry":
        """Rigidly displaced copy (sensors and reference move together)."""
        offset = np.asarray(offset, dtype=float)
        return SubarrayGeometry(self.sensor_positions + offset, self.reference_position + offset, self.response)


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """L >= 2 subarrays sharing a carrier and a propagation medium."""

    subarrays: Sequence[SubarrayGeometry]
    carrier_angular_frequency: float
    propagation_speed: float = 299_792_458.0

    def __post_init__(self):
        subs = tuple(self.subarrays)
        if len(subs) < 2:
            raise ValueError("a partly calibrated array needs at least two subarrays")
        dims = {s.dim for s in subs}
        if len(dims) != 1:
            raise ValueError("all subarrays must share the same dimension D")
        if not self.carrier_angular_frequency > 0 or not self.propagation_speed > 0:
            raise ValueError("carrier_angular_frequency and propagation_speed must be positive")
        object.__setattr__(self, "subarrays", subs)

    @property
    def n_subarrays(self) -> int:
        return len(self.subarrays)

    @property
    def dim(self) -> int:
        return self.subarrays[0].dim

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(s.n_sensors for s in self.subarrays)

    @property
    def n_sensors(self) -> int:
        return sum(self.block_sizes)

    @property
    def wavelength(self) -> float:
        return 2 * np.pi * self.propagation_speed / self.carrier_angular_frequency

    def composite(self, l: int, points) -> np.ndarray:
        """Composite steering vector(s) of subarray ``l``."""
        return composite_steering(self.subarrays[l], points, self.carrier_angular_frequency, self.propagation_speed)

    def displaced(self, offsets) -> "ArrayGeometry":
        """Copy with subarray ``l`` rigidly shifted by ``offsets[l]``."""
        offsets = np.asarray(offsets, dtype=float).reshape(self.n_subarrays, self.dim)
        subs = [s.translated(o) for s, o in zip(self.subarrays, offsets)]
        return ArrayGeometry(subs, self.carrier_angular_frequency, self.propagation_speed)


def linear_subarray(center, n_sensors: int, spacing: float, direction=(1.0, 0.0)) -> SubarrayGeometry:
    """Uniform linear subarray centred on ``center`` along ``direction``."""
    center = np.asarray(center, dtype=float).reshape(-1)
    direction = np.asarray(direction, dtype=float).reshape(-1)
    direction = direction / np.linalg.norm(direction)
    offsets = (np.arange(n_sensors) - (n_sensors - 1) / 2) * spacing
    return SubarrayGeometry(center + offsets[:, None] * direction, center)


def circular_subarray(center, n_sensors: int, radius: float, phase: float = 0.0) -> SubarrayGeometry:
    """Uniform circular subarray in the plane (D = 2)."""
    center = np.asarray(center, dtype=float).reshape(2)
    ang = phase + 2 * np.pi * np.arange(n_sensors) / n_sensors
    return SubarrayGeometry(center + radius * np.column_stack([np.cos(ang), np.sin(ang)]), center)


# --- batched kernels -------------------------------------------------------

def _sensor_distances(sub: SubarrayGeometry, points: np.ndarray) -> np.ndarray:
    diff = points[..., None, :] - sub.sensor_positions
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _reference_distance(sub: SubarrayGeometry, points: np.ndarray) -> np.ndarray:
    diff = points - sub.reference_position
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _steering(sub, points, omega, speed):
    d_sens = _sensor_distances(sub, points)
    d_ref = _reference_distance(sub, points)
    valid = d_sens.min(axis=-1) > _ZERO_DISTANCE
    a = np.exp(-1j * omega * (d_sens - d_ref[..., None]) / speed)
    if sub.response is not None:
        a = a * np.asarray(sub.response(sub.sensor_positions, points))
        norm = np.linalg.norm(a, axis=-1, keepdims=True)
        a = a / np.where(norm > 0, norm, 1.0)
    else:
        a = a / np.sqrt(sub.n_sensors)
    return a, d_ref, valid


def composite_steering_batch(sub: SubarrayGeometry, points: np.ndarray, omega: float, speed: float):
    """Composite steering for a stack of points without raising.

    Returns:
        (vectors, valid): vectors of shape (..., M_l) and a boolean mask that
        is False wherever a point coincides with a sensor or the reference.
    """
    a, d_ref, valid = _steering(sub, points, omega, speed)
    return a * np.exp(-1j * omega * d_ref / speed)[..., None], valid & (d_ref > _ZERO_DISTANCE)


# --- public operations -----------------------------------------------------

def propagation_delay(sub: SubarrayGeometry, p, speed: float):
    """Delay (seconds) from ``p`` to the subarray's reference position."""
    p = _as_points(p, sub.dim)
    d = _reference_distance(sub, p)
    if np.any(d <= _ZERO_DISTANCE):
        raise ZeroDistance("location coincides with the subarray reference position")
    return d / speed


def steering_vector(sub: SubarrayGeometry, p, omega: float, speed: float) -> np.ndarray:
    """Unit-norm spherical-wave steering vector relative to the reference.

    Entry m is ``exp(-j*omega*(|p - s_m| - |p - ref|)/speed) / sqrt(M_l)`` for
    isotropic sensors. ``p`` may be a single location (D,) or a stack (..., D).
    """
    p = _as_points(p, sub.dim)
    a, _, valid = _steering(sub, p, omega, speed)
    if not np.all(valid):
        raise ZeroDistance("location coincides with a sensor")
    return a


def composite_steering(sub: SubarrayGeometry, p, omega: float, speed: float) -> np.ndarray:
    """Steering vector multiplied by the inter-subarray delay phase."""
    p = _as_points(p, sub.dim)
    a = steering_vector(sub, p, omega, speed)
    tau = propagation_delay(sub, p, speed)
    return a * np.exp(-1j * omega * tau)[..., None]


def check_distinct(P, eps: float = 1e-9) -> None:
    """Raise DuplicateLocation if two rows of ``P`` are closer than ``eps``."""
    P = np.asarray(P, dtype=float)
    if P.shape[0] < 2:
        return
    diff = P[:, None, :] - P[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist[np.diag_indices(P.shape[0])] = np.inf
    if dist.min() < eps:
        raise DuplicateLocation(f"candidate locations closer than {eps} m")


def steering_matrix(sub: SubarrayGeometry, P, omega: float, speed: float, eps: float = 1e-9) -> np.ndarray:
    """M_l x Q matrix whose column q is the composite steering toward ``P[q]``."""
    P = _as_points(P, sub.dim)
    if P.ndim == 1:
        P = P[None, :]
    if P.shape[0] < 1:
        raise ValueError("need at least one location")
    check_distinct(P, eps)
    return composite_steering(sub, P, omega, speed).T
