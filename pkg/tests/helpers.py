"""Shared scenes and independent linear-algebra oracles for the tests.

The oracles form dense projectors and run full eigendecompositions on
purpose: they are slow but share no code with the library.
"""
import types

import numpy as np

from pcaloc.geometry import ArrayGeometry, linear_subarray
from pcaloc.scenario import Snapshots

C = 3.0e8
OMEGA = 2 * np.pi * 3.0e8  # 1 m wavelength


def square_geometry(n_sensors=6, side=1000.0, offset=100.0):
    """Four half-wavelength ULAs facing a side x side region from outside."""
    mid = side / 2
    subs = [
        linear_subarray([mid, -offset], n_sensors, 0.5, [1, 0]),
        linear_subarray([side + offset, mid], n_sensors, 0.5, [0, 1]),
        linear_subarray([mid, side + offset], n_sensors, 0.5, [1, 0]),
        linear_subarray([-offset, mid], n_sensors, 0.5, [0, 1]),
    ]
    return ArrayGeometry(subs, OMEGA, C)


def one_subarray(sub, omega=OMEGA, speed=C):
    """Duck-typed single-subarray array; ArrayGeometry itself insists on L >= 2."""
    return types.SimpleNamespace(subarrays=(sub,), carrier_angular_frequency=omega, propagation_speed=speed,
                                 n_subarrays=1, dim=sub.dim, block_sizes=(sub.n_sensors,))


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def projector(A):
    return A @ np.linalg.inv(A.conj().T @ A) @ A.conj().T


def block_diag(mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols), dtype=complex)
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r, c = r + m.shape[0], c + m.shape[1]
    return out


def nonzero_eigs(H, rel=1e-9):
    w = np.sort(np.linalg.eigvalsh((H + H.conj().T) / 2))[::-1]
    return w[w > rel * max(w[0], 1e-300)]


def random_model(rng, L, M, Q, N, noise=0.1):
    """Random steering matrices, diagonal coefficients, signals and data."""
    A = [crandn(rng, M, Q) for _ in range(L)]
    b = crandn(rng, L, Q)
    S = crandn(rng, Q, N)
    X = [(A[l] * b[l]) @ S + noise * crandn(rng, M, N) for l in range(L)]
    return A, b, S, Snapshots(X)


def principal_angles(U, V):
    """Principal angles (rad) between the column spans of U and V."""
    qu, _ = np.linalg.qr(U)
    qv, _ = np.linalg.qr(V)
    # arcsin of the residual is accurate for tiny angles, arccos is not
    resid = np.linalg.svd(qv - qu @ (qu.conj().T @ qv), compute_uv=False)
    return np.arcsin(np.clip(resid, 0, 1))


def population_covariance(geom, P0, b, noise_variance, signal_cov=None):
    """A diag-stacked(b) R_s diag-stacked(b)^H A^H + sigma^2 I, built densely."""
    from pcaloc.scenario import SampleCovariance
    from pcaloc.subspace import build_steering_block

    P0 = np.asarray(P0, dtype=float)
    L, Q = geom.n_subarrays, len(P0)
    A = block_diag(build_steering_block(geom, P0).per_subarray)
    D = np.zeros((L * Q, Q), dtype=complex)
    for l in range(L):
        D[l * Q:(l + 1) * Q] = np.diag(b[l])
    Rs = np.eye(Q) if signal_cov is None else signal_cov
    R = A @ D @ Rs @ D.conj().T @ A.conj().T + noise_variance * np.eye(geom.n_sensors)
    return SampleCovariance(R, geom.block_sizes)
