import numpy as np
import pytest

from coprime_mmse import (
    SnapshotBatch,
    SourceScene,
    generate_snapshots,
    nominal_autocorrelation,
    sample_autocorrelation,
    trial_rng,
)
from coprime_mmse.combining import moment_transfer_matrix
from coprime_mmse.numerics import vec
from coprime_mmse.simulation import load_snapshots, save_snapshots

from conftest import random_scene


class TestSourceScene:
    def test_rejects_negative_power(self):
        with pytest.raises(ValueError):
            SourceScene(thetas=[0.1], powers=[-1.0], noise_power=1.0)

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            SourceScene(thetas=[0.1, 0.2], powers=[1.0], noise_power=1.0)

    def test_capacity_check(self, geometry23):
        scene = SourceScene(
            thetas=np.linspace(-1, 1, 8), powers=np.ones(8), noise_power=1.0
        )
        with pytest.raises(ValueError):
            scene.validate_for(geometry23)


class TestNominalAutocorrelation:
    def test_single_broadside_source_noise_free(self, geometry23):
        scene = SourceScene(thetas=[0.0], powers=[1.0], noise_power=0.0)
        r_mat, r = nominal_autocorrelation(scene, geometry23)
        np.testing.assert_allclose(r_mat, np.ones((6, 6)), atol=1e-14)
        np.testing.assert_allclose(r, np.ones(36), atol=1e-14)

    def test_hermitian_and_eigenvalue_floor(self, geometry23):
        rng = np.random.default_rng(31)
        for _ in range(10):
            scene = random_scene(rng, n_sources=3)
            r_mat, _ = nominal_autocorrelation(scene, geometry23)
            assert np.max(np.abs(r_mat - r_mat.conj().T)) < 1e-14
            eigs = np.linalg.eigvalsh(r_mat)
            assert eigs.min() >= scene.noise_power - 1e-10

    def test_matches_factored_form(self, geometry23):
        # r equals the moment transfer matrix applied to vec(I)
        rng = np.random.default_rng(32)
        scene = random_scene(rng, n_sources=2)
        _, r = nominal_autocorrelation(scene, geometry23)
        v = moment_transfer_matrix(scene, geometry23)
        i_vec = vec(np.eye(scene.n_sources + geometry23.n_elements))
        np.testing.assert_allclose(v @ i_vec, r, atol=1e-12)


class TestGenerateSnapshots:
    def test_noise_free_single_source_is_scaled_steering(self, geometry23):
        scene = SourceScene(thetas=[0.4], powers=[2.0], noise_power=0.0)
        batch = generate_snapshots(scene, geometry23, 1, 7)
        y = batch.y[:, 0]
        # y = s * xi, and |s_l| = 1, so normalizing by any entry recovers s
        from coprime_mmse import steering_vector

        s = steering_vector(geometry23, 0.4)
        np.testing.assert_allclose(y / y[0], s / s[0], atol=1e-12)

    def test_entry_variance_matches_nominal(self, geometry23):
        rng = np.random.default_rng(33)
        scene = random_scene(rng, n_sources=2)
        batch = generate_snapshots(scene, geometry23, 100_000, 42)
        r_mat, _ = nominal_autocorrelation(scene, geometry23)
        empirical = np.mean(np.abs(batch.y) ** 2, axis=1)
        np.testing.assert_allclose(empirical, np.diag(r_mat).real, rtol=0.03)

    def test_symbol_power(self, geometry23):
        # per-symbol second moment: with one noise-free source, each entry of
        # a snapshot has |y|^2 = |symbol|^2
        scene = SourceScene(thetas=[0.2], powers=[3.0], noise_power=0.0)
        batch = generate_snapshots(scene, geometry23, 100_000, 5)
        sq = np.abs(batch.y[0]) ** 2
        stderr = sq.std() / np.sqrt(len(sq))
        assert abs(sq.mean() - 3.0) < 3 * stderr

    def test_determinism(self, geometry23):
        rng = np.random.default_rng(34)
        scene = random_scene(rng)
        a = generate_snapshots(scene, geometry23, 64, 99)
        b = generate_snapshots(scene, geometry23, 64, 99)
        np.testing.assert_array_equal(a.y, b.y)

    def test_q_must_be_positive(self, geometry23):
        scene = SourceScene(thetas=[0.1], powers=[1.0], noise_power=1.0)
        with pytest.raises(ValueError):
            generate_snapshots(scene, geometry23, 0, 1)


class TestSampleAutocorrelation:
    def test_single_snapshot_rank_one(self, geometry23):
        rng = np.random.default_rng(35)
        scene = random_scene(rng)
        batch = generate_snapshots(scene, geometry23, 1, 11)
        r_hat, _ = sample_autocorrelation(batch)
        y = batch.y[:, 0]
        np.testing.assert_allclose(r_hat, np.outer(y, y.conj()), atol=1e-12)
        assert np.linalg.matrix_rank(r_hat, tol=1e-10) == 1

    def test_vec_and_kronecker_forms_agree(self, geometry23):
        rng = np.random.default_rng(36)
        scene = random_scene(rng)
        batch = generate_snapshots(scene, geometry23, 16, 12)
        _, r_hat = sample_autocorrelation(batch)
        kron_form = sum(
            np.kron(batch.y[:, q].conj(), batch.y[:, q]) for q in range(batch.q)
        ) / batch.q
        np.testing.assert_allclose(r_hat, kron_form, atol=1e-12)

    def test_unbiasedness(self, geometry23):
        # mean of the estimate over many batches matches the nominal vector
        # within five standard errors per entry
        rng = np.random.default_rng(37)
        scene = random_scene(rng)
        _, r = nominal_autocorrelation(scene, geometry23)
        n_batches = 10_000
        acc = np.zeros(36, dtype=complex)
        acc_sq = np.zeros(36)
        for t in range(n_batches):
            batch = generate_snapshots(scene, geometry23, 4, trial_rng(1234, t))
            _, r_hat = sample_autocorrelation(batch)
            acc += r_hat
            acc_sq += np.abs(r_hat) ** 2
        mean = acc / n_batches
        var = acc_sq / n_batches - np.abs(mean) ** 2
        stderr = np.sqrt(var / n_batches)
        assert np.all(np.abs(mean - r) < 5 * np.maximum(stderr, 1e-12))

    def test_error_shrinks_with_sample_support(self, geometry23):
        rng = np.random.default_rng(38)
        scene = random_scene(rng)
        r_mat, _ = nominal_autocorrelation(scene, geometry23)
        wins = 0
        trials = 200
        for t in range(trials):
            small = generate_snapshots(scene, geometry23, 10, trial_rng(55, 2 * t))
            large = generate_snapshots(scene, geometry23, 10_000, trial_rng(55, 2 * t + 1))
            err_small = np.linalg.norm(sample_autocorrelation(small)[0] - r_mat)
            err_large = np.linalg.norm(sample_autocorrelation(large)[0] - r_mat)
            wins += err_large < err_small
        assert wins / trials >= 0.95


class TestSnapshotIo:
    def test_roundtrip(self, tmp_path, geometry23):
        rng = np.random.default_rng(39)
        scene = random_scene(rng)
        batch = generate_snapshots(scene, geometry23, 8, 77)
        path = tmp_path / "snapshots.txt"
        save_snapshots(batch, path)
        loaded = load_snapshots(path)
        assert loaded.q == batch.q
        assert loaded.seed == 77
        np.testing.assert_allclose(loaded.y, batch.y, atol=0)

    def test_batch_validation(self):
        with pytest.raises(ValueError):
            SnapshotBatch(y=np.ones((3, 2), dtype=complex), q=5)
