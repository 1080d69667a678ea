import csv
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pcaloc.errors import InvalidCorrelation, ZeroBlock
from pcaloc.geometry import steering_matrix
from pcaloc.scenario import (SampleCovariance, ScenarioConfig, SignalKind, SignalModel, Snapshots, generate_signals,
                             noise_variance_for_snr, normalize_power, sample_covariance, synthesize_snapshots)

from helpers import crandn, square_geometry

GEOM = square_geometry(4)


def scenario(Q=2, kind="noncoherent", **kw):
    pts = [[300.0, 400.0], [700.0, 650.0], [550.0, 200.0]][:Q]
    return ScenarioConfig(GEOM, pts, SignalModel(kind, Q), **kw)


# --- signals ---------------------------------------------------------------

def test_coherent_rows_are_identical(rng):
    S = generate_signals(SignalModel("coherent", 3), 50, rng)
    assert S.shape == (3, 50)
    assert np.array_equal(S[0], S[1]) and np.array_equal(S[1], S[2])


def test_noncoherent_identity_correlation_by_law_of_large_numbers(rng):
    S = generate_signals(SignalModel("noncoherent", 3), 100_000, rng)
    assert np.max(np.abs(S @ S.conj().T / S.shape[1] - np.eye(3))) < 0.05


def test_requested_correlation_and_power(rng):
    Cq = np.array([[1.0, 0.6j], [-0.6j, 1.0]])
    S = generate_signals(SignalModel("noncoherent", 2, Cq, power=2.0), 100_000, rng)
    assert np.max(np.abs(S @ S.conj().T / S.shape[1] - 2.0 * Cq)) < 0.1


def test_single_snapshot_shape(rng):
    assert generate_signals(SignalModel("single", 1), 1, rng).shape == (1, 1)


@pytest.mark.parametrize("corr", [
    [[1.0, 2.0], [2.0, 1.0]],   # indefinite
    [[1.0, 1.0], [1.0, 1.0]],   # rank deficient, noncoherent needs full rank
])
def test_bad_correlation_raises(rng, corr):
    with pytest.raises(InvalidCorrelation):
        generate_signals(SignalModel("noncoherent", 2, np.array(corr)), 10, rng)


def test_single_kind_needs_one_source():
    with pytest.raises(ValueError):
        SignalModel(SignalKind.SINGLE, 2)


# --- synthesis -------------------------------------------------------------

def test_noiseless_single_source_blocks_are_rank_one_outer_products(rng):
    syn = synthesize_snapshots(scenario(1, "single"), rng)
    s = syn.signals[0]
    for l, X in enumerate(syn.snapshots.blocks):
        a = GEOM.composite(l, [300.0, 400.0])
        np.testing.assert_allclose(X, syn.coefficients[l, 0] * np.outer(a, s), atol=1e-12)
        assert np.linalg.matrix_rank(X, tol=1e-10 * np.linalg.norm(X)) == 1


@pytest.mark.parametrize("kind", ["noncoherent", "coherent"])
def test_noiseless_model_identity(rng, kind):
    cfg = scenario(3, kind, coefficient_magnitude=(0.5, 2.0))
    syn = synthesize_snapshots(cfg, rng)
    for l, (sub, X) in enumerate(zip(GEOM.subarrays, syn.snapshots.blocks)):
        A = steering_matrix(sub, cfg.true_locations, GEOM.carrier_angular_frequency, GEOM.propagation_speed)
        resid = X - A @ np.diag(syn.coefficients[l]) @ syn.signals
        assert np.linalg.norm(resid) < 1e-10 * np.linalg.norm(X)
    assert np.all(syn.coefficients != 0)


def test_noise_variance_estimate(rng):
    cfg = scenario(1, "single", noise_variance=0.3, n_snapshots=5000)
    syn = synthesize_snapshots(cfg, rng)
    clean = synthesize_snapshots(ScenarioConfig(GEOM, cfg.true_locations, cfg.signal, n_snapshots=5000),
                                 np.random.default_rng(20240601))
    noise = syn.snapshots.stacked - clean.snapshots.stacked
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(0.3, rel=0.05)
    # circular symmetry: real and imaginary parts carry half each
    assert np.var(noise.real) == pytest.approx(0.15, rel=0.05)


def test_same_seed_same_data():
    a = synthesize_snapshots(scenario(2, noise_variance=0.1, rng_seed=5))
    b = synthesize_snapshots(scenario(2, noise_variance=0.1, rng_seed=5))
    assert np.array_equal(a.snapshots.stacked, b.snapshots.stacked)


def test_fixed_phase_offsets_enter_coefficients(rng):
    offs = [0.0, 0.5, 1.0, 1.5]
    cfg = scenario(2, phase_offsets=offs, aligned_coefficients=True)
    syn = synthesize_snapshots(cfg, rng)
    ph = np.angle(syn.coefficients)
    # aligned: both sources share a phase per subarray
    np.testing.assert_allclose(np.exp(1j * (ph[:, 0] - ph[:, 1])), 1, atol=1e-12)


def test_perturbation_moves_subarrays_rigidly(rng):
    syn = synthesize_snapshots(scenario(1, "single", location_perturbation_std=2.0), rng)
    for nominal, actual in zip(GEOM.subarrays, syn.geometry.subarrays):
        d = actual.sensor_positions - nominal.sensor_positions
        np.testing.assert_allclose(d - d[0], 0, atol=1e-9)
        np.testing.assert_allclose(actual.reference_position - nominal.reference_position, d[0], atol=1e-9)
        assert np.linalg.norm(d[0]) > 0


def test_snr_to_noise_variance():
    assert noise_variance_for_snr(20.0) == pytest.approx(0.01)
    assert noise_variance_for_snr(10.0, power=2.0, coefficient_power=0.5) == pytest.approx(0.1)


# --- power normalization ---------------------------------------------------

@given(st.integers(0, 2 ** 32 - 1))
def test_normalized_blocks_have_unit_energy(seed):
    r = np.random.default_rng(seed)
    x = Snapshots([crandn(r, 3, 7) * 10 ** r.uniform(-5, 5), crandn(r, 2, 7)])
    y = normalize_power(x)
    for b in y.blocks:
        assert np.trace(b @ b.conj().T).real == pytest.approx(1, abs=1e-12)
    z = normalize_power(y)
    for b, c in zip(y.blocks, z.blocks):
        np.testing.assert_allclose(b, c, atol=1e-12)
    w = normalize_power(x.scaled([7.0, 1.0]))
    for b, c in zip(y.blocks, w.blocks):
        np.testing.assert_allclose(b, c, atol=1e-12)
    np.testing.assert_array_equal(y.stacked, np.vstack(y.blocks))


def test_zero_block_raises():
    with pytest.raises(ZeroBlock):
        normalize_power(Snapshots([np.ones((2, 3)), np.zeros((2, 3))]))


# --- sample covariance -----------------------------------------------------

def test_single_snapshot_covariance(rng):
    x = crandn(rng, 5, 1)
    cov = sample_covariance(Snapshots.from_stacked(x, [2, 3]))
    np.testing.assert_allclose(cov.matrix, x @ x.conj().T, atol=1e-14)
    assert cov.eigenvalues[0] == pytest.approx(np.linalg.norm(x) ** 2)
    assert np.all(cov.eigenvalues[1:] < 1e-12 * cov.eigenvalues[0])


def test_blocks_match_full_matrix(rng):
    x = Snapshots([crandn(rng, 2, 9), crandn(rng, 3, 9), crandn(rng, 4, 9)])
    cov = sample_covariance(x)
    R = x.stacked @ x.stacked.conj().T
    o = [0, 2, 5, 9]
    for l in range(3):
        for k in range(3):
            np.testing.assert_array_equal(cov.block(l, k), cov.matrix[o[l]:o[l + 1], o[k]:o[k + 1]])
            np.testing.assert_allclose(cov.block(l, k), x.blocks[l] @ x.blocks[k].conj().T, atol=1e-12)
    np.testing.assert_allclose(cov.matrix, R, atol=1e-12)
    assert np.array_equal(cov.matrix, cov.matrix.conj().T)
    assert np.all(np.diff(cov.eigenvalues) <= 0)
    assert cov.eigenvalues[-1] >= -1e-10 * cov.eigenvalues[0]
    np.testing.assert_allclose(cov.matrix @ cov.eigenvectors, cov.eigenvectors * cov.eigenvalues, atol=1e-10)


@pytest.mark.parametrize("Q", [1, 2, 3])
def test_noiseless_noncoherent_rank_equals_q(rng, Q):
    cov = sample_covariance(synthesize_snapshots(scenario(Q, "single" if Q == 1 else "noncoherent"), rng).snapshots)
    lam = cov.eigenvalues
    assert np.sum(lam > 1e-10 * lam[0]) == Q


@pytest.mark.parametrize("aligned", [True, False])
def test_noiseless_coherent_covariance_rank(rng, aligned):
    # identical waveforms make X = (stacked A b) s^T whatever the coefficients
    cov = sample_covariance(synthesize_snapshots(scenario(3, "coherent", aligned_coefficients=aligned), rng).snapshots)
    lam = cov.eigenvalues
    rank = int(np.sum(lam > 1e-10 * lam[0]))
    assert 1 <= rank <= 3
    assert rank == 1


def test_rank_one_covariance_segments(rng):
    sizes = [3, 4, 2]
    v = crandn(rng, sum(sizes))
    R = np.outer(v, v.conj()) + 0.3 * np.eye(sum(sizes))
    cov = SampleCovariance(R, sizes)
    for l in range(3):
        w, U = np.linalg.eigh(cov.block(l, l))
        u = U[:, -1]
        seg = cov.segment(v, l)
        seg = seg / np.linalg.norm(seg)
        assert abs(abs(np.vdot(u, seg)) - 1) < 1e-10
        # eigenvalue-scaled version recovers the segment including its norm
        scaled = np.sqrt(w[-1] - 0.3) * u
        phase = np.vdot(scaled, cov.segment(v, l))
        np.testing.assert_allclose(scaled * phase / abs(phase), cov.segment(v, l), atol=1e-10)


def test_covariance_rejects_mismatched_blocks():
    with pytest.raises(ValueError):
        SampleCovariance(np.eye(4), (2, 3))


# --- serialization ---------------------------------------------------------

@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_binary_round_trip(sizes, N, seed):
    r = np.random.default_rng(seed)
    x = Snapshots([crandn(r, m, N) for m in sizes])
    y = Snapshots.from_bytes(x.to_bytes())
    assert y.block_sizes == x.block_sizes
    assert np.array_equal(y.stacked, x.stacked)


def test_binary_layout(tmp_path):
    x = Snapshots([np.array([[1 + 2j, 3 - 4j]]), np.array([[5j, -6.0]])])
    path = tmp_path / "x.pcas"
    x.write_binary(path)
    data = path.read_bytes()
    assert data[:16] == struct.pack("<4sIII", b"PCAS", 2, 2, 2)
    assert struct.unpack_from("<2I", data, 16) == (1, 1)
    assert struct.unpack_from("<8d", data, 24) == (1, 2, 3, -4, 0, 5, -6, 0)
    assert np.array_equal(Snapshots.read_binary(path).stacked, x.stacked)
    with pytest.raises(ValueError):
        Snapshots.from_bytes(b"XXXX" + data[4:])


def test_csv_export(tmp_path):
    x = Snapshots([np.array([[1 + 2j]]), np.array([[3.5 - 1j], [0.25j]])])
    x.write_csv(tmp_path / "x.csv")
    rows = list(csv.reader(open(tmp_path / "x.csv")))
    assert rows[0] == ["subarray", "sensor", "snapshot", "re", "im"]
    assert rows[1:] == [["0", "0", "0", "1.0", "2.0"], ["1", "0", "0", "3.5", "-1.0"], ["1", "1", "0", "0.0", "0.25"]]
