import numpy as np
import pytest

from coprime_mmse import (
    SourceScene,
    apply_combiner,
    averaging_combiner,
    estimate_doas,
    generate_snapshots,
    music_spectrum,
    nominal_autocorrelation,
    sample_autocorrelation,
    spatial_smooth,
    virtual_steering,
)
from coprime_mmse.coarray import smoothing_operator, spatial_smooth_explicit

from conftest import random_scene


def nominal_coarray_vector(scene, geometry, sel):
    _, r = nominal_autocorrelation(scene, geometry)
    return apply_combiner(sel, r)


def virtual_ula_autocorrelation(scene, n_virtual):
    steer = virtual_steering(n_virtual, scene.thetas)
    return (steer * scene.powers[None, :]) @ steer.conj().T + scene.noise_power * np.eye(
        n_virtual
    )


class TestSpatialSmooth:
    def test_single_broadside_source(self, geometry23, sel23):
        scene = SourceScene(thetas=[0.0], powers=[1.0], noise_power=1.0)
        r_co = nominal_coarray_vector(scene, geometry23, sel23)
        z = spatial_smooth(r_co, source="selection")
        np.testing.assert_allclose(z.matrix, np.ones((8, 8)) + np.eye(8), atol=1e-12)
        assert z.source == "selection"

    def test_slicing_equals_explicit_operator(self):
        rng = np.random.default_rng(61)
        r_co = rng.standard_normal(15) + 1j * rng.standard_normal(15)
        fast = spatial_smooth(r_co).matrix
        explicit = spatial_smooth_explicit(r_co)
        np.testing.assert_array_equal(fast, explicit)

    def test_nominal_matches_virtual_ula_form(self, geometry23, sel23):
        rng = np.random.default_rng(62)
        for _ in range(20):
            scene = random_scene(rng, n_sources=int(rng.integers(1, 5)))
            r_co = nominal_coarray_vector(scene, geometry23, sel23)
            z = spatial_smooth(r_co).matrix
            direct = virtual_ula_autocorrelation(scene, geometry23.n_virtual)
            assert np.linalg.norm(z - direct) < 1e-10

    def test_linearity(self):
        rng = np.random.default_rng(63)
        r1 = rng.standard_normal(15) + 1j * rng.standard_normal(15)
        r2 = rng.standard_normal(15) + 1j * rng.standard_normal(15)
        lhs = spatial_smooth(2.5 * r1 + 1j * r2).matrix
        rhs = 2.5 * spatial_smooth(r1).matrix + 1j * spatial_smooth(r2).matrix
        np.testing.assert_array_equal(lhs, rhs)

    def test_rejects_even_length(self):
        with pytest.raises(ValueError):
            spatial_smooth(np.ones(14))

    def test_operator_shape(self):
        op = smoothing_operator(8)
        assert op.shape == (8, 8 * 15)


class TestMusicSpectrum:
    def test_exact_single_source(self, geometry23, sel23):
        scene = SourceScene(thetas=[0.3], powers=[1.0], noise_power=1.0)
        z = spatial_smooth(nominal_coarray_vector(scene, geometry23, sel23))
        # grid contains the source angle exactly (odd-length symmetric span)
        grid = np.linspace(0.3 - 0.5, 0.3 + 0.5, 1001)
        result = music_spectrum(z, 1, grid)
        step = grid[1] - grid[0]
        assert result.spectrum[500] < 1e-8
        assert abs(result.estimates[0] - 0.3) < step / 2
        assert result.complete

    def test_more_sources_than_sensors(self, geometry23, sel23):
        # five sources exceed the six-element array's classic limit but stay
        # below the virtual length; all are recovered on a fine grid
        thetas = np.radians([-70.0, -35.0, -5.0, 20.0, 55.0])
        scene = SourceScene(
            thetas=thetas, powers=np.full(5, 10.0), noise_power=1.0
        )
        z = spatial_smooth(nominal_coarray_vector(scene, geometry23, sel23))
        grid = np.radians(np.arange(-90, 90.0001, 0.05))
        result = music_spectrum(z, 5, grid)
        assert result.complete
        np.testing.assert_allclose(
            np.degrees(result.estimates), np.degrees(thetas), atol=0.5
        )

    def test_spectrum_bounds(self, geometry23, sel23):
        rng = np.random.default_rng(64)
        scene = random_scene(rng, n_sources=2)
        z = spatial_smooth(nominal_coarray_vector(scene, geometry23, sel23))
        grid = np.linspace(-np.pi / 2, np.pi / 2, 801)
        result = music_spectrum(z, 2, grid)
        assert np.all(result.spectrum >= 0)
        # the residual of a unit-modulus steering vector cannot exceed its norm
        assert np.all(result.spectrum <= geometry23.n_virtual * (1 + 1e-12))

    def test_scaling_invariance(self, geometry23, sel23):
        rng = np.random.default_rng(65)
        scene = random_scene(rng, n_sources=3)
        z = spatial_smooth(nominal_coarray_vector(scene, geometry23, sel23)).matrix
        grid = np.linspace(-np.pi / 2, np.pi / 2, 2001)
        a = music_spectrum(z, 3, grid)
        b = music_spectrum(7.3 * z, 3, grid)
        np.testing.assert_allclose(a.estimates, b.estimates, atol=1e-12)

    def test_too_many_sources_rejected(self, geometry23, sel23):
        z = np.eye(geometry23.n_virtual)
        with pytest.raises(ValueError):
            music_spectrum(z, geometry23.n_virtual, np.linspace(-1, 1, 101))


class TestEstimateDoas:
    def test_high_sample_support_two_sources(self, geometry23, lag_map23, avg23):
        scene = SourceScene(
            thetas=[-0.6, 0.4], powers=[10.0, 10.0], noise_power=1.0
        )
        batch = generate_snapshots(scene, geometry23, 10_000, 3)
        _, r_hat = sample_autocorrelation(batch)
        z = spatial_smooth(apply_combiner(avg23, r_hat), source="averaging")
        grid = np.linspace(-np.pi / 2, np.pi / 2, 2001)
        result = estimate_doas(z, 2, grid)
        np.testing.assert_allclose(
            np.degrees(result.estimates), np.degrees([-0.6, 0.4]), atol=0.5
        )

    def test_exact_matrix_matches_spectrum_path(self, geometry23, sel23):
        rng = np.random.default_rng(66)
        scene = random_scene(rng, n_sources=2)
        z = spatial_smooth(nominal_coarray_vector(scene, geometry23, sel23))
        grid = np.linspace(-np.pi / 2, np.pi / 2, 2001)
        np.testing.assert_array_equal(
            estimate_doas(z, 2, grid).estimates,
            music_spectrum(z, 2, grid).estimates,
        )

    def test_zero_sources(self, geometry23, sel23):
        rng = np.random.default_rng(67)
        scene = random_scene(rng, n_sources=1)
        z = spatial_smooth(nominal_coarray_vector(scene, geometry23, sel23))
        result = estimate_doas(z, 0, np.linspace(-1, 1, 101))
        assert result.estimates.size == 0
        assert result.complete

    def test_padding_flags_incomplete(self, geometry23, sel23):
        # a three-point grid has a single interior point, so at most one
        # minimum can exist; requesting two forces midpoint padding + flag
        scene = SourceScene(thetas=[0.0], powers=[1.0], noise_power=1.0)
        z = spatial_smooth(nominal_coarray_vector(scene, geometry23, sel23))
        grid = np.array([-0.5, 0.0, 0.5])
        result = estimate_doas(z, 2, grid)
        assert not result.complete
        assert len(result.estimates) == 2
        assert grid[1] in result.estimates


class TestNominalEndToEnd:
    @pytest.mark.parametrize("kind", ["selection", "averaging", "mmse"])
    def test_recovers_well_separated_sources(self, kind, geometry23, lag_map23, sel23):
        # nominal path: any combiner feeds smoothing and subspace estimation
        # that recover all sources to within a grid step
        from coprime_mmse import MmseDesignInputs, PowerPrior, UniformPrior, design_mmse_combiner

        thetas = np.radians([-55.0, -20.0, 10.0, 25.0, 60.0, 75.0, -75.0])
        k = len(thetas)
        scene = SourceScene(thetas=np.sort(thetas), powers=np.full(k, 10.0), noise_power=1.0)
        if kind == "selection":
            comb = sel23
        elif kind == "averaging":
            comb = averaging_combiner(lag_map23)
        else:
            # at finite design support the combiner deliberately shrinks the
            # lag values toward the prior mean; the exact-recovery statement
            # is its large-sample regime
            comb = design_mmse_combiner(
                MmseDesignInputs(
                    geometry=geometry23, n_sources=k,
                    prior=UniformPrior(-np.pi / 2, np.pi / 2),
                    power=PowerPrior.known(np.full(k, 10.0), 1.0),
                    q=10_000_000, selection=sel23,
                )
            )
        _, r = nominal_autocorrelation(scene, geometry23)
        r_co = apply_combiner(comb, r)
        z = spatial_smooth(r_co, source=kind)
        grid = np.radians(np.arange(-90, 90.0001, 0.02))
        result = estimate_doas(z, k, grid)
        assert result.complete
        step = np.radians(0.02)
        np.testing.assert_allclose(result.estimates, np.sort(thetas), atol=step)
