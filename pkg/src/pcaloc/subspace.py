"""Projection and whitening algebra on block-diagonal steering structures.

Every cost in the library reduces to the small LQ x LQ matrix
``G = Ã^H R Ã`` where ``Ã`` is block diagonal with orthonormalized blocks
``Ã_l = A_l (A_l^H A_l)^{-1/2}``. Nonzero eigenvalues of ``G`` coincide with
those of ``P_A R P_A`` (cyclic permutation), so the M x M and N x N problems
never have to be formed.

All functions accept a leading batch shape: steering matrices of shape
(..., M_l, Q) give reduced matrices of shape (..., LQ, LQ).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import RankDeficientSteering
from .geometry import ArrayGeometry, composite_steering_batch
from .scenario import SampleCovariance, Snapshots

MAX_GRAM_CONDITION = 1e12


def whiten(A: np.ndarray, max_condition: float = MAX_GRAM_CONDITION):
    """Orthonormalize the columns of ``A`` through the inverse Gram root.

    Returns:
        (Ã, valid): ``Ã = A (A^H A)^{-1/2}`` and a mask that is False where the
        Gram matrix condition number exceeds ``max_condition``.
    """
    gram = np.swapaxes(A.conj(), -1, -2) @ A
    w, U = np.linalg.eigh(gram)
    wmax = w[..., -1]
    valid = (wmax > 0) & (w[..., 0] > wmax / max_condition)
    floor = np.where(wmax > 0, wmax / max_condition, 1.0)[..., None]
    inv_root = (U / np.sqrt(np.maximum(w, floor))[..., None, :]) @ np.swapaxes(U.conj(), -1, -2)
    return A @ inv_root, valid


@dataclass(frozen=True, eq=False)
class SteeringBlock:
    """Per-subarray steering matrices A_l and their whitened forms."""

    per_subarray: tuple
    whitened: tuple
    valid: np.ndarray

    @property
    def n_subarrays(self) -> int:
        return len(self.per_subarray)

    @property
    def n_locations(self) -> int:
        return self.per_subarray[0].shape[-1]

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(a.shape[-2] for a in self.per_subarray)

    def block_diagonal(self, whitened: bool = True) -> np.ndarray:
        """Dense M x LQ block-diagonal matrix (single candidate only)."""
        mats = self.whitened if whitened else self.per_subarray
        M, Q = sum(self.block_sizes), self.n_locations
        out = np.zeros((M, self.n_subarrays * Q), dtype=complex)
        r = 0
        for l, a in enumerate(mats):
            out[r:r + a.shape[0], l * Q:(l + 1) * Q] = a
            r += a.shape[0]
        return out

    def projector(self) -> np.ndarray:
        """Dense block-diagonal projector P_A (single candidate only)."""
        At = self.block_diagonal()
        return At @ At.conj().T


def steering_block_from_matrices(mats: Sequence[np.ndarray], strict: bool = True) -> SteeringBlock:
    """Wrap precomputed steering matrices A_l (each (..., M_l, Q))."""
    mats = tuple(np.asarray(a, dtype=complex) for a in mats)
    pairs = [whiten(a) for a in mats]
    valid = np.logical_and.reduce([v for _, v in pairs])
    if strict and not np.all(valid):
        raise RankDeficientSteering("steering Gram matrix condition number exceeds 1e12")
    return SteeringBlock(mats, tuple(w for w, _ in pairs), np.asarray(valid))


def build_steering_block(geom: ArrayGeometry, P, strict: bool = True) -> SteeringBlock:
    """Steering block for candidate sets ``P`` of shape (Q, D) or (..., Q, D).

    With ``strict=True`` any rank-deficient or coincident candidate raises
    RankDeficientSteering; otherwise the offending entries are flagged in
    ``valid`` and left for the caller to discard.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    mats, ok = [], np.ones(P.shape[:-2], dtype=bool)
    for sub in geom.subarrays:
        a, v = composite_steering_batch(sub, P, geom.carrier_angular_frequency, geom.propagation_speed)
        mats.append(np.swapaxes(a, -1, -2))
        ok &= np.all(v, axis=-1)
    if strict and not np.all(ok):
        raise RankDeficientSteering("candidate location coincides with a sensor")
    sb = steering_block_from_matrices(mats, strict=strict)
    return SteeringBlock(sb.per_subarray, sb.whitened, sb.valid & ok)


def project_block(sb: SteeringBlock, x: Snapshots) -> list:
    """P_{A_l} X_l for every subarray, via Ã_l (Ã_l^H X_l)."""
    out = []
    for At, X in zip(sb.whitened, x.blocks):
        out.append(At @ (np.swapaxes(At.conj(), -1, -2) @ X))
    return out


def reduced_matrix(sb: SteeringBlock, cov: SampleCovariance) -> np.ndarray:
    """G = Ã^H R Ã assembled block by block from R_{l,k}."""
    L, Q = sb.n_subarrays, sb.n_locations
    if tuple(cov.block_sizes) != sb.block_sizes:
        raise ValueError("covariance blocks do not match the steering block")
    batch = sb.whitened[0].shape[:-2]
    G = np.empty(batch + (L * Q, L * Q), dtype=complex)
    R = cov.matrix
    AH = [np.swapaxes(a.conj(), -1, -2) for a in sb.whitened]
    for k in range(L):
        T = R[:, cov.rows(k)] @ sb.whitened[k]
        for l in range(L):
            G[..., l * Q:(l + 1) * Q, k * Q:(k + 1) * Q] = AH[l] @ T[..., cov.rows(l), :]
    return (G + np.swapaxes(G.conj(), -1, -2)) / 2


def top_eigensum(G: np.ndarray, Q: int):
    """Sum of the Q largest eigenvalues of Hermitian G (batched)."""
    if Q > G.shape[-1]:
        raise ValueError("Q exceeds the matrix dimension")
    w = np.linalg.eigvalsh(G)
    s = w[..., G.shape[-1] - Q:].sum(axis=-1)
    return float(s) if np.ndim(s) == 0 else s
