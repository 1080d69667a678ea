"""Grid search, peak picking and alternating projection.

Costs handed to this module are vectorized: a single-location cost maps an
array of points (K, D) to values (K,), a multi-location cost maps candidate
sets (K, q, D) to values (K,). Non-finite values mark invalid points.
Evaluation is chunked with a fixed chunk size, so results do not depend on
the number of worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import AllInvalid, NoProgress, PCALocError

CHUNK_SIZE = 4096


@dataclass(frozen=True, eq=False)
class SearchGrid:
    """Uniform lattice ``lo + k * step`` per dimension, up to ``hi``.

    Points are enumerated in C order over the axes, which is lexicographic
    order of their coordinates.
    """

    bounds: Sequence[Sequence[float]]
    resolution: Sequence[float]
    budget: int = 1_000_000

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        res = np.broadcast_to(np.asarray(self.resolution, dtype=float), (bounds.shape[0],)).copy()
        if np.any(res <= 0) or np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("grid needs positive resolution and max > min")
        counts = np.floor((bounds[:, 1] - bounds[:, 0]) / res + 1e-9).astype(int) + 1
        if np.any(counts < 2):
            raise ValueError("grid needs at least two points per dimension")
        if int(np.prod(counts)) > self.budget:
            raise ValueError(f"grid has {int(np.prod(counts))} points, budget is {self.budget}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", res)
        axes = tuple(lo + step * np.arange(n) for (lo, _), step, n in zip(bounds, res, counts))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_counts(cls, bounds, counts, budget: int = 1_000_000) -> "SearchGrid":
        bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        counts = np.broadcast_to(np.asarray(counts), (bounds.shape[0],))
        res = (bounds[:, 1] - bounds[:, 0]) / (counts - 1)
        return cls(bounds, res, budget)

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.resolution))

    def cells_apart(self, a, b) -> np.ndarray:
        """Largest per-dimension distance between a and b, in grid steps."""
        return np.max(np.abs(np.asarray(a) - np.asarray(b)) / self.resolution, axis=-1)


def evaluate_grid(cost: Callable, points: np.ndarray, vectorized: bool = True, workers: int = 1,
                  chunk_size: int = CHUNK_SIZE) -> np.ndarray:
    """Evaluate ``cost`` on every point; invalid points come back as -inf."""
    if not vectorized:
        def scalar(p):
            try:
                return float(cost(p))
            except PCALocError:
                return -np.inf
        vals = np.array([scalar(p) for p in points], dtype=float)
    else:
        chunks = [points[i:i + chunk_size] for i in range(0, len(points), chunk_size)]
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(cost, chunks))
        else:
            parts = [cost(c) for c in chunks]
        vals = np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])
    return np.where(np.isfinite(vals), vals, -np.inf)


def _argmax(values: np.ndarray) -> int:
    if not np.any(np.isfinite(values)):
        raise AllInvalid("cost is invalid at every grid point")
    # np.argmax returns the first maximum: the lexicographically smallest point.
    return int(np.argmax(values))


def grid_argmax(cost: Callable, grid: SearchGrid, vectorized: bool = True, workers: int = 1,
                chunk_size: int = CHUNK_SIZE):
    """Maximize a single-location cost over the lattice.

    Ties go to the lexicographically smallest coordinates. With
    ``vectorized=False`` the cost is called once per point and library errors
    count as invalid points.

    Returns:
        (location, value)
    """
    vals = evaluate_grid(cost, grid.points, vectorized, workers, chunk_size)
    i = _argmax(vals)
    return grid.points[i].copy(), float(vals[i])


@dataclass
class PeakList:
    locations: np.ndarray
    values: np.ndarray
    short: bool  # fewer than the requested number of peaks were found


def local_maxima(values: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Flat indices of points strictly greater than all lattice neighbours."""
    v = np.asarray(values, dtype=float).reshape(shape)
    v = np.where(np.isfinite(v), v, -np.inf)
    footprint = np.ones((3,) * len(shape), dtype=bool)
    footprint[(1,) * len(shape)] = False
    neigh = ndimage.maximum_filter(v, footprint=footprint, mode="constant", cval=-np.inf)
    return np.flatnonzero((v > neigh) & np.isfinite(v))


def pick_peaks(values: np.ndarray, grid: SearchGrid, Q: int, min_separation: float = 0.0) -> PeakList:
    """The Q highest local maxima, pairwise at least ``min_separation`` apart."""
    if Q < 1:
        raise ValueError("Q must be positive")
    values = np.asarray(values, dtype=float).reshape(-1)
    idx = local_maxima(values, grid.shape)
    idx = idx[np.argsort(-values[idx], kind="stable")]
    chosen = []
    for i in idx:
        p = grid.points[i]
        if all(np.linalg.norm(p - grid.points[j]) >= min_separation for j in chosen):
            chosen.append(i)
            if len(chosen) == Q:
                break
    chosen = np.asarray(chosen, dtype=int)
    return PeakList(grid.points[chosen].reshape(-1, grid.dim), values[chosen], len(chosen) < Q)


@dataclass
class APState:
    """Progress of an alternating-projection run.

    ``history`` holds the full-Q cost after initialization and after every
    sweep; it is non-decreasing.
    """

    current: np.ndarray
    iteration: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""


def _coordinate_values(cost, grid, est, q, workers, chunk_size):
    """Cost over the grid for coordinate ``q`` with the other rows of ``est`` fixed."""
    pts = grid.points
    others = np.delete(est, q, axis=0)

    def chunk_cost(chunk):
        cand = np.empty((len(chunk), est.shape[0], est.shape[1]))
        cand[:] = est
        cand[:, q] = chunk
        return cost(cand)

    vals = evaluate_grid(chunk_cost, pts, True, workers, chunk_size)
    for o in others:
        # Coincident candidates make the whitening singular; skip the cell.
        vals[grid.cells_apart(pts, o) < 0.5] = -np.inf
    return vals


def alternating_projection(cost: Callable, grid: SearchGrid, Q: int, tol: float = 1e-8, max_iter: int = 50,
                           move_tol_cells: float = 1.0, workers: int = 1,
                           chunk_size: int = CHUNK_SIZE) -> APState:
    """Coordinate ascent over Q locations using single-location grid searches.

    Initialization adds sources one at a time, each maximized with the
    earlier ones held fixed. Each later sweep re-maximizes every source with
    the rest fixed. Stops when no source moved by more than
    ``move_tol_cells`` grid steps, when the relative cost gain falls below
    ``tol``, or after ``max_iter`` sweeps.
    """
    est = np.zeros((0, grid.dim))
    for q in range(Q):
        trial = np.vstack([est, np.zeros((1, grid.dim))])
        vals = _coordinate_values(cost, grid, trial, q, workers, chunk_size)
        if not np.any(np.isfinite(vals)):
            raise NoProgress(f"could not place source {q + 1} during initialization")
        trial[q] = grid.points[_argmax(vals)]
        est = trial
    state = APState(current=est, history=[float(np.asarray(cost(est[None]))[0])])
    if Q == 1:
        state.converged, state.reason = True, "single source"
        return state
    for k in range(1, max_iter + 1):
        old = est.copy()
        for q in range(Q):
            vals = _coordinate_values(cost, grid, est, q, workers, chunk_size)
            est = est.copy()
            est[q] = grid.points[_argmax(vals)]
        value = float(np.asarray(cost(est[None]))[0])
        prev = state.history[-1]
        state.history.append(value)
        state.current, state.iteration = est, k
        moved = float(np.max(grid.cells_apart(est, old)))
        if moved <= move_tol_cells:
            state.converged, state.reason = True, "locations stable"
            break
        if value - prev <= tol * abs(prev):
            state.converged, state.reason = True, "cost gain below tolerance"
            break
    else:
        state.reason = "max_iter reached"
    return state
