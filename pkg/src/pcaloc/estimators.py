"""Location costs and spectra for partly calibrated arrays.

Every cost is maximized. Multi-location costs take candidate sets ``P`` of
shape (Q, D), returning a float and raising on an invalid candidate, or a
stack of shape (..., Q, D), returning an array with ``-inf`` at invalid
entries. Single-location costs and spectra take ``p`` of shape (D,) or
(..., D) with the same convention.

Relaxed ML: with the coefficient matrices relaxed to full matrices and the
waveforms concentrated out, the cost is the sum of the Q largest eigenvalues
of ``G(P) = Ã^H(P) R Ã(P)`` (noncoherent), its largest eigenvalue
(coherent) or the largest eigenvalue of the L x L matrix for one source.

Reduced complexity: the per-candidate eigenvectors are replaced by the
global signal eigenvectors of R, giving
``sum_q sum_m lam_m |v_m^H P_A(P) v_q|^2``.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import RankDeficient, RankDeficientSteering, SingularCovariance, SingularHadamardGram
from .geometry import ArrayGeometry, composite_steering_batch
from .scenario import SampleCovariance, Snapshots
from .subspace import MAX_GRAM_CONDITION, build_steering_block, reduced_matrix

MUSIC_FLOOR = 1e-30
MVDR_LOADING = 1e-6
MAX_COVARIANCE_CONDITION = 1e14


def _candidates(P):
    P = np.asarray(P, dtype=float)
    return P, P.ndim == 2


def _finish(values, valid, single: bool, what: str = "steering"):
    values = np.where(valid, values, -np.inf)
    if single:
        if not bool(valid):
            raise RankDeficientSteering(f"invalid candidate ({what} is rank deficient or degenerate)")
        return float(values)
    return values


def _reduced(geom, cov, P):
    P, single = _candidates(P)
    sb = build_steering_block(geom, P, strict=False)
    return reduced_matrix(sb, cov), sb, single


# --- relaxed maximum likelihood -------------------------------------------

def rml_cost_noncoherent(geom: ArrayGeometry, cov: SampleCovariance, P):
    """Sum of the Q largest eigenvalues of Ã^H(P) R Ã(P), Q = len(P)."""
    G, sb, single = _reduced(geom, cov, P)
    Q = sb.n_locations
    w = np.linalg.eigvalsh(G)
    return _finish(w[..., -Q:].sum(axis=-1), sb.valid, single)


def rml_cost_coherent(geom: ArrayGeometry, cov: SampleCovariance, P):
    """Largest eigenvalue of Ã^H(P) R Ã(P)."""
    G, sb, single = _reduced(geom, cov, P)
    return _finish(np.linalg.eigvalsh(G)[..., -1], sb.valid, single)


def rml_cost_single(geom: ArrayGeometry, cov: SampleCovariance, p):
    """Largest eigenvalue of the L x L matrix built from composite steering."""
    p = np.asarray(p, dtype=float)
    return rml_cost_coherent(geom, cov, p[..., None, :])


# --- reduced complexity ----------------------------------------------------

def _signal_projections(sb, cov, n_signals: int, truncation: Optional[float]):
    lam, V = cov.eigenvalues, cov.eigenvectors
    keep = lam.size
    if truncation is not None:
        keep = max(int(np.count_nonzero(lam >= truncation * lam[0])), n_signals)
    parts = []
    for l, At in enumerate(sb.whitened):
        U = np.swapaxes(At.conj(), -1, -2) @ V[cov.rows(l), :keep]  # (..., Q, m)
        parts.append(np.swapaxes(U.conj(), -1, -2) @ U[..., :n_signals])  # (..., m, q)
    return lam[:keep], parts


def rc_cost(geom: ArrayGeometry, cov: SampleCovariance, P, n_signals: Optional[int] = None,
            truncation: Optional[float] = None, form: str = "joint"):
    """Reduced-complexity signal-subspace cost.

    Args:
        n_signals: number of global signal eigenvectors in the q-sum
            (defaults to the number of candidate locations).
        truncation: if set, drop eigenvectors with ``lam_m < truncation * lam_1``.
        form: ``"joint"`` evaluates ``sum lam_m |v_m^H P_A v_q|^2`` with the
            subarray contributions summed inside the modulus (equal to the trace
            form ``tr(V_S^H P_A R P_A V_S)``). ``"separable"`` sums
            ``|v_ml^H P_Al v_ql|^2`` per subarray, dropping the cross-subarray
            terms.
    """
    P, single = _candidates(P)
    sb = build_steering_block(geom, P, strict=False)
    n_signals = sb.n_locations if n_signals is None else n_signals
    lam, parts = _signal_projections(sb, cov, n_signals, truncation)
    if form == "joint":
        C = sum(parts)
        val = np.einsum("m,...mq->...", lam, np.abs(C) ** 2)
    elif form == "separable":
        val = sum(np.einsum("m,...mq->...", lam, np.abs(C) ** 2) for C in parts)
    else:
        raise ValueError(f"unknown form {form!r}")
    return _finish(val, sb.valid, single)


def rc_cost_coherent(geom: ArrayGeometry, cov: SampleCovariance, P, **kwargs):
    """Reduced-complexity cost using only the principal eigenvector."""
    return rc_cost(geom, cov, P, n_signals=1, **kwargs)


def rc_cost_single(geom: ArrayGeometry, cov: SampleCovariance, p, **kwargs):
    p = np.asarray(p, dtype=float)
    return rc_cost(geom, cov, p[..., None, :], n_signals=1, **kwargs)


# --- MUSIC-like and MVDR-like spectra -------------------------------------

def _composite_all(geom, p):
    vecs, ok = [], np.ones(p.shape[:-1], dtype=bool)
    for sub in geom.subarrays:
        a, v = composite_steering_batch(sub, p, geom.carrier_angular_frequency, geom.propagation_speed)
        vecs.append(a)
        ok &= v
    return vecs, ok


def music_spectrum(geom: ArrayGeometry, cov: SampleCovariance, p, Q: int, floor: float = MUSIC_FLOOR):
    """Inverse of the summed noise-subspace energy of each subarray's steering.

    Uses the global noise eigenvectors v_{Q+1..M} of R, segmented per
    subarray; no per-location eigendecomposition. Meaningful only for
    noncoherent sources.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    if not 0 < Q < sum(cov.block_sizes):
        raise ValueError("need 0 < Q < M")
    noise = cov.eigenvectors[:, Q:]
    vecs, ok = _composite_all(geom, p)
    den = 0.0
    for l, a in enumerate(vecs):
        proj = a @ noise[cov.rows(l)].conj()  # (..., M-Q): v_il^H a_l
        den = den + np.sum(np.abs(proj) ** 2, axis=-1)
    return _finish(1.0 / np.maximum(den, floor), ok, single, "location")


def mvdr_inverse_blocks(cov: SampleCovariance, loading: float = MVDR_LOADING) -> list:
    """Diagonal blocks (R^{-1})_{l,l} of the inverse of the loaded covariance.

    Loading adds ``loading * tr(R) / M`` to the diagonal before inversion.
    """
    R = cov.matrix
    M = R.shape[0]
    Rl = R + loading * np.trace(R).real / M * np.eye(M)
    if not np.isfinite(np.linalg.cond(Rl)) or np.linalg.cond(Rl) > MAX_COVARIANCE_CONDITION:
        raise SingularCovariance("covariance is singular even after diagonal loading")
    Rinv = np.linalg.inv(Rl)
    Rinv = (Rinv + Rinv.conj().T) / 2
    return [Rinv[cov.rows(l), cov.rows(l)] for l in range(cov.n_subarrays)]


def mvdr_spectrum(geom: ArrayGeometry, inv_blocks: Sequence[np.ndarray], p):
    """1 / sum_l ã_l^H (R^{-1})_{l,l} ã_l using blocks of the full inverse."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    vecs, ok = _composite_all(geom, p)
    den = 0.0
    for a, B in zip(vecs, inv_blocks):
        den = den + np.einsum("...i,ij,...j->...", a.conj(), B, a).real
    return _finish(1.0 / den, ok, single, "location")


# --- coefficient estimates and the exact ML cost --------------------------

def _check_gram(H, exc, what):
    w = np.linalg.eigvalsh(H)
    if not w[-1] > 0 or w[0] <= w[-1] / MAX_GRAM_CONDITION:
        raise exc(f"{what} Gram matrix is singular")


def estimate_b_relaxed(A: np.ndarray, X: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Relaxed (full-matrix) LS estimate (A^H A)^{-1} A^H X S^H (S S^H)^{-1}."""
    AA = A.conj().T @ A
    SS = S @ S.conj().T
    _check_gram(AA, RankDeficient, "steering")
    _check_gram(SS, RankDeficient, "signal")
    left = np.linalg.solve(AA, A.conj().T @ X @ S.conj().T)
    return np.linalg.solve(SS.T, left.T).T


def _hadamard_gram(A, S, transpose: bool):
    SS = S @ S.conj().T
    return (np.swapaxes(A.conj(), -1, -2) @ A) * (SS.T if transpose else SS)


def estimate_b_exact(A: np.ndarray, X: np.ndarray, S: np.ndarray, transpose: bool = True) -> np.ndarray:
    """Diagonal-constrained LS estimate of b_l minimizing ||X - A diag(b) S||_F.

    Solves ``((A^H A) o (S S^H)^T) b = diag(A^H X S^H)``. ``transpose=False``
    uses ``(S S^H)`` without the transpose, which is only correct when
    ``S S^H`` is real.
    """
    H = _hadamard_gram(A, S, transpose)
    _check_gram(H, SingularHadamardGram, "Hadamard")
    d = np.sum(A.conj() * (X @ S.conj().T), axis=0)
    return np.linalg.solve(H, d)


def exact_ml_cost(geom: ArrayGeometry, x: Snapshots, P, S: np.ndarray, transpose: bool = True):
    """sum_l d_l^H H_l^{-1} d_l with d_l = diag(A_l^H X_l S^H) and the Hadamard Gram H_l.

    Equals ``sum_l (||X_l||_F^2 - min_b ||X_l - A_l diag(b) S||_F^2)``; requires
    the signal matrix ``S``.
    """
    P, single = _candidates(P)
    sb = build_steering_block(geom, P, strict=False)
    total, valid = 0.0, sb.valid.copy()
    for A, X in zip(sb.per_subarray, x.blocks):
        H = _hadamard_gram(A, S, transpose)
        d = np.sum(A.conj() * (X @ S.conj().T), axis=-2)
        w, U = np.linalg.eigh(H)
        valid &= (w[..., -1] > 0) & (w[..., 0] > w[..., -1] / MAX_GRAM_CONDITION)
        c = np.swapaxes(U.conj(), -1, -2) @ d[..., None]
        total = total + np.sum(np.abs(c[..., 0]) ** 2 / np.where(w > 0, w, np.inf), axis=-1)
    if single and not bool(valid):
        raise SingularHadamardGram("Hadamard Gram matrix is singular")
    return _finish(total, valid, single)


def beamformer_weights(A: np.ndarray, v_segment: np.ndarray) -> np.ndarray:
    """Subarray beamformer P_{A_l} v_{1_l}: the LS fit A_l b of the eigenvector segment."""
    AA = A.conj().T @ A
    _check_gram(AA, RankDeficient, "steering")
    return A @ np.linalg.solve(AA, A.conj().T @ v_segment)


def two_level_power(weights: Sequence[np.ndarray], x: Snapshots) -> float:
    """sum_n |sum_l w_l^H x_l(t_n)|^2 for per-subarray weight vectors."""
    out = sum(w.conj() @ X for w, X in zip(weights, x.blocks))
    return float(np.sum(np.abs(out) ** 2))
