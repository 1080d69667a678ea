"""Synthetic data under the partly calibrated array model.

Subarray ``l`` observes ``X_l = A_l(P0) diag(b_l) S + N_l`` where the columns
of ``A_l`` are composite steering vectors, ``b_l`` holds the unknown complex
propagation coefficients (inter-subarray phase offsets are folded into them),
``S`` is the Q x N signal matrix and ``N_l`` is white complex Gaussian noise.
"""
from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidCorrelation, ZeroBlock
from .geometry import ArrayGeometry, steering_matrix

SNAPSHOT_MAGIC = b"PCAS"
_HEADER = struct.Struct("<4sIII")


class SignalKind(str, enum.Enum):
    NONCOHERENT = "noncoherent"
    COHERENT = "coherent"
    SINGLE = "single"


@dataclass(frozen=True, eq=False)
class SignalModel:
    """Statistics of the emitted waveforms.

    ``correlation`` applies to the noncoherent case only and defaults to the
    identity. Coherent sources share one waveform (identical rows of S).
    """

    kind: SignalKind = SignalKind.NONCOHERENT
    n_sources: int = 1
    correlation: Optional[np.ndarray] = None
    power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SignalKind(self.kind))
        if self.n_sources < 1:
            raise ValueError("n_sources must be positive")
        if self.kind is SignalKind.SINGLE and self.n_sources != 1:
            raise ValueError("single-signal model requires exactly one source")
        if not self.power > 0:
            raise ValueError("signal power must be positive")
        if self.correlation is not None:
            C = np.asarray(self.correlation, dtype=complex)
            if C.shape != (self.n_sources, self.n_sources):
                raise InvalidCorrelation("correlation must be Q x Q")
            object.__setattr__(self, "correlation", C)


@dataclass(frozen=True, eq=False)
class Snapshots:
    """Per-subarray data blocks X_l (M_l x N) and their row stacking X."""

    blocks: Sequence[np.ndarray]

    def __post_init__(self):
        blocks = tuple(np.atleast_2d(np.asarray(b, dtype=complex)) for b in self.blocks)
        if not blocks:
            raise ValueError("need at least one block")
        if len({b.shape[1] for b in blocks}) != 1:
            raise ValueError("all blocks must have the same number of snapshots")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_stacked(cls, X, block_sizes: Sequence[int]) -> "Snapshots":
        X = np.asarray(X, dtype=complex)
        if sum(block_sizes) != X.shape[0]:
            raise ValueError("block sizes do not add up to the row count")
        edges = np.cumsum([0, *block_sizes])
        return cls([X[a:b] for a, b in zip(edges[:-1], edges[1:])])

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack(self.blocks)

    @property
    def n_snapshots(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    def scaled(self, factors) -> "Snapshots":
        return Snapshots([b * f for b, f in zip(self.blocks, factors)])

    # Binary layout: 16-byte little-endian header (magic "PCAS", M, N, L as
    # uint32), then L uint32 block sizes, then X as row-major complex128
    # (interleaved re/im float64).
    def to_bytes(self) -> bytes:
        X = self.stacked
        head = _HEADER.pack(SNAPSHOT_MAGIC, X.shape[0], X.shape[1], len(self.blocks))
        sizes = np.asarray(self.block_sizes, dtype="<u4").tobytes()
        return head + sizes + np.ascontiguousarray(X, dtype="<c16").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Snapshots":
        magic, M, N, L = _HEADER.unpack_from(data, 0)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError("not a snapshot file")
        off = _HEADER.size
        sizes = np.frombuffer(data, dtype="<u4", count=L, offset=off)
        off += 4 * L
        X = np.frombuffer(data, dtype="<c16", count=M * N, offset=off).reshape(M, N)
        return cls.from_stacked(X.astype(complex), [int(s) for s in sizes])

    def write_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read_binary(cls, path) -> "Snapshots":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subarray", "sensor", "snapshot", "re", "im"])
            for l, blk in enumerate(self.blocks):
                for m in range(blk.shape[0]):
                    for n in range(blk.shape[1]):
                        z = blk[m, n]
                        w.writerow([l, m, n, repr(float(z.real)), repr(float(z.imag))])


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Everything needed to synthesize one dataset.

    ``coefficient_magnitude`` is either a constant or a (low, high) range for
    a uniform draw of |b_lq|. ``phase_offsets`` is "random" or one value per
    subarray (radians). ``aligned_coefficients`` gives every b_lq of a
    subarray the same phase.
    """

    geometry: ArrayGeometry
    true_locations: np.ndarray
    signal: SignalModel
    noise_variance: float = 0.0
    n_snapshots: int = 100
    location_perturbation_std: float = 0.0
    phase_offsets: Union[str, Sequence[float]] = "random"
    rng_seed: int = 0
    coefficient_magnitude: Union[float, Sequence[float]] = 1.0
    aligned_coefficients: bool = False

    def __post_init__(self):
        P = np.array(self.true_locations, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        if P.shape[1] != self.geometry.dim:
            raise ValueError("source dimension does not match geometry")
        if P.shape[0] != self.signal.n_sources:
            raise ValueError("number of true locations must equal signal.n_sources")
        if self.noise_variance < 0 or self.location_perturbation_std < 0:
            raise ValueError("variances must be nonnegative")
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be positive")
        mag = np.atleast_1d(np.asarray(self.coefficient_magnitude, dtype=float))
        if mag.size not in (1, 2) or not 0 < mag[0] <= mag[-1]:
            raise ValueError("coefficient magnitudes must be positive")
        if not isinstance(self.phase_offsets, str) and len(self.phase_offsets) != self.geometry.n_subarrays:
            raise ValueError("need one phase offset per subarray")
        P.setflags(write=False)
        object.__setattr__(self, "true_locations", P)

    @property
    def n_sources(self) -> int:
        return self.true_locations.shape[0]


@dataclass(frozen=True, eq=False)
class Synthesis:
    """Output of synthesize_snapshots, including the ground truth."""

    snapshots: Snapshots
    coefficients: np.ndarray  # L x Q, row l is b_l
    signals: np.ndarray  # Q x N
    geometry: ArrayGeometry  # geometry actually used for synthesis


def _complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _psd_sqrt(C: np.ndarray, require_full_rank: bool) -> np.ndarray:
    if not np.allclose(C, C.conj().T, atol=1e-12):
        raise InvalidCorrelation("correlation matrix is not Hermitian")
    w, V = np.linalg.eigh((C + C.conj().T) / 2)
    tol = 1e-10 * max(abs(w).max(), 1.0)
    if w.min() < -tol:
        raise InvalidCorrelation("correlation matrix is not positive semidefinite")
    if require_full_rank and w.min() <= tol:
        raise InvalidCorrelation("noncoherent correlation must have full rank")
    return V * np.sqrt(np.clip(w, 0, None))


def generate_signals(model: SignalModel, N: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the Q x N zero-mean complex Gaussian signal matrix S."""
    if N < 1:
        raise ValueError("N must be positive")
    Q = model.n_sources
    if model.kind is SignalKind.NONCOHERENT:
        C = np.eye(Q, dtype=complex) if model.correlation is None else model.correlation
        root = _psd_sqrt(C, require_full_rank=True)
        return np.sqrt(model.power) * (root @ _complex_normal(rng, (Q, N)))
    s = _complex_normal(rng, (1, N), model.power)
    return np.repeat(s, Q, axis=0)


def draw_coefficients(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """L x Q propagation coefficients with the phase offsets folded in."""
    L, Q = cfg.geometry.n_subarrays, cfg.n_sources
    mag = cfg.coefficient_magnitude
    if np.ndim(mag) == 0:
        amp = np.full((L, Q), float(mag))
    else:
        amp = rng.uniform(mag[0], mag[1], size=(L, Q))
    if cfg.aligned_coefficients:
        phase = np.repeat(rng.uniform(0, 2 * np.pi, size=(L, 1)), Q, axis=1)
    else:
        phase = rng.uniform(0, 2 * np.pi, size=(L, Q))
    if isinstance(cfg.phase_offsets, str):
        if cfg.phase_offsets != "random":
            raise ValueError("phase_offsets must be 'random' or a sequence")
        offsets = rng.uniform(0, 2 * np.pi, size=L)
    else:
        offsets = np.asarray(cfg.phase_offsets, dtype=float)
    return amp * np.exp(1j * (phase + offsets[:, None]))


def synthesize_snapshots(cfg: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> Synthesis:
    """Draw signals, coefficients, geometry perturbation and noise; build X_l."""
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    geom = cfg.geometry
    S = generate_signals(cfg.signal, cfg.n_snapshots, rng)
    b = draw_coefficients(cfg, rng)
    if cfg.location_perturbation_std > 0:
        shift = rng.normal(0.0, cfg.location_perturbation_std, size=(geom.n_subarrays, geom.dim))
        geom = geom.displaced(shift)
    blocks = []
    for l, sub in enumerate(geom.subarrays):
        A = steering_matrix(sub, cfg.true_locations, geom.carrier_angular_frequency, geom.propagation_speed)
        X = (A * b[l]) @ S
        if cfg.noise_variance > 0:
            X = X + _complex_normal(rng, X.shape, cfg.noise_variance)
        blocks.append(X)
    return Synthesis(Snapshots(blocks), b, S, geom)


def normalize_power(x: Snapshots) -> Snapshots:
    """Scale every block so that tr(X_l X_l^H) = 1."""
    energies = [float(np.vdot(b, b).real) for b in x.blocks]
    if any(e <= 0 for e in energies):
        raise ZeroBlock("cannot normalize an all-zero subarray block")
    return x.scaled([1 / np.sqrt(e) for e in energies])


def noise_variance_for_snr(snr_db: float, power: float = 1.0, coefficient_power: float = 1.0) -> float:
    """Noise variance giving the requested array SNR.

    Array SNR is the per-source signal power at the output of one unit-norm
    subarray beamformer over the per-sensor noise variance:
    ``power * E|b|^2 / sigma_n^2``.
    """
    return power * coefficient_power / 10 ** (snr_db / 10)


@dataclass(frozen=True, eq=False)
class SampleCovariance:
    """Hermitian M x M matrix R = X X^H with cached eigendecomposition.

    Eigenvalues are sorted in descending order; for repeated eigenvalues the
    choice of basis inside the eigenspace is whatever the solver returns.
    """

    matrix: np.ndarray
    block_sizes: tuple[int, ...]
    eigenvalues: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        R = np.asarray(self.matrix, dtype=complex)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or sum(self.block_sizes) != R.shape[0]:
            raise ValueError("covariance shape does not match block sizes")
        R = (R + R.conj().T) / 2
        w, V = np.linalg.eigh(R)
        order = np.argsort(w)[::-1]
        for arr in (R, w, V):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", R)
        object.__setattr__(self, "block_sizes", tuple(int(s) for s in self.block_sizes))
        object.__setattr__(self, "eigenvalues", w[order])
        object.__setattr__(self, "eigenvectors", V[:, order])

    @property
    def offsets(self) -> np.ndarray:
        return np.cumsum([0, *self.block_sizes])

    @property
    def n_subarrays(self) -> int:
        return len(self.block_sizes)

    def rows(self, l: int) -> slice:
        o = self.offsets
        return slice(int(o[l]), int(o[l + 1]))

    def block(self, l: int, k: int) -> np.ndarray:
        return self.matrix[self.rows(l), self.rows(k)]

    def segment(self, vectors: np.ndarray, l: int) -> np.ndarray:
        """Rows of ``vectors`` belonging to subarray ``l``."""
        return vectors[self.rows(l)]


def sample_covariance(x: Snapshots) -> SampleCovariance:
    """R = X X^H (no 1/N scaling)."""
    X = x.stacked
    return SampleCovariance(X @ X.conj().T, x.block_sizes)
