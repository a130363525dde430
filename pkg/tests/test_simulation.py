import numpy as np
import pytest
from pydantic import ValidationError

from modules.errors import NumericError, ParameterError
from modules.geom import RasterCovariate
from modules.quadrature import simpson
from modules.simulation import (
    GRFSpec,
    ModelSpec,
    build_model_covariates,
    distance_field,
    gaussian_random_field,
    ise_rel,
    model_intensity,
    simulate_poisson,
    true_relative_density,
)


class TestGaussianRandomField:
    def test_reproducible(self):
        spec = GRFSpec(ncols=16, nrows=16, seed=9)
        np.testing.assert_array_equal(gaussian_random_field(spec).values, gaussian_random_field(spec).values)

    def test_circulant_covariance(self):
        spec = GRFSpec(ncols=40, nrows=40)
        rng = np.random.default_rng(21)
        fields = np.stack([gaussian_random_field(spec, rng).values for _ in range(1000)])
        assert np.mean(fields**2) == pytest.approx(0.01, rel=0.05)
        # four cells apart is one range unit
        corr = np.mean(fields[:, :, :-4] * fields[:, :, 4:]) / 0.01
        assert corr == pytest.approx(np.exp(-1.0), abs=0.03)
        assert np.mean(fields) == pytest.approx(0.0, abs=0.005)

    def test_dense_variance(self):
        spec = GRFSpec(ncols=10, nrows=10, method="cholesky")
        rng = np.random.default_rng(22)
        fields = np.stack([gaussian_random_field(spec, rng).values for _ in range(300)])
        assert np.mean(fields**2) == pytest.approx(0.01, rel=0.1)

    def test_grid_limits(self):
        with pytest.raises(ParameterError):
            gaussian_random_field(GRFSpec(ncols=600, nrows=8))
        with pytest.raises(ParameterError):
            gaussian_random_field(GRFSpec(ncols=200, nrows=200, method="cholesky"))

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            GRFSpec(sigma=0.0)
        with pytest.raises(ValidationError):
            GRFSpec(method="spectral")

    def test_unset_seed_follows_the_run(self):
        assert GRFSpec().seeded(5).seed == 5
        assert GRFSpec(seed=7).seeded(5).seed == 7
        assert GRFSpec().field_seed == 0
        first = build_model_covariates(ModelSpec(model_id=1, target_m=50), GRFSpec(ncols=16, nrows=16).seeded(1))
        second = build_model_covariates(ModelSpec(model_id=1, target_m=50), GRFSpec(ncols=16, nrows=16).seeded(2))
        assert not np.array_equal(first[1].values, second[1].values)


class TestModels:
    def test_default_coefficients(self):
        spec = ModelSpec(model_id=3, target_m=50)
        assert (spec.beta0, spec.beta1, spec.covariate_source) == (5.0, -3.0, "distance")

    def test_explicit_coefficients_win(self):
        assert ModelSpec(model_id=1, target_m=50, beta1=2.0).beta1 == 2.0

    def test_unknown_model(self):
        with pytest.raises(ValidationError):
            ModelSpec(model_id=4, target_m=50)

    def test_distance_field_range(self):
        d = distance_field(32, 32)
        assert d.values.min() == 0.0
        assert d.values.max() == pytest.approx(1.0)

    def test_model_two_hides_the_error_field(self):
        grf = GRFSpec(ncols=16, nrows=16, seed=4)
        gen1, obs1 = build_model_covariates(ModelSpec(model_id=1, target_m=50), grf)
        gen2, obs2 = build_model_covariates(ModelSpec(model_id=2, target_m=50), grf)
        np.testing.assert_array_equal(obs1.values, obs2.values)
        np.testing.assert_array_equal(gen1.values, obs1.values)
        assert not np.allclose(gen2.values, obs2.values)

    @pytest.mark.parametrize("model_id", [1, 2, 3])
    def test_intensity_mass(self, model_id):
        spec = ModelSpec(model_id=model_id, target_m=75)
        generating, _ = build_model_covariates(spec, GRFSpec(ncols=32, nrows=32, seed=1))
        lam = model_intensity(spec, generating)
        assert lam.values.sum() * lam.cell_area == pytest.approx(75.0, rel=1e-9)

    def test_model_three_decreases_with_distance(self):
        spec = ModelSpec(model_id=3, target_m=100)
        d, _ = build_model_covariates(spec, GRFSpec(ncols=32, nrows=32))
        lam = model_intensity(spec, d).values.ravel()
        order = np.argsort(d.values.ravel(), kind="stable")
        assert np.all(np.diff(lam[order]) <= 1e-12 * lam.max())

    def test_overflow(self, raster_x):
        with pytest.raises(NumericError):
            model_intensity(ModelSpec(model_id=1, target_m=10, beta1=1e4), raster_x)


class TestSimulatePoisson:
    def test_constant_intensity_count(self, unit_window):
        lam = RasterCovariate(unit_window, np.full((8, 8), 50.0))
        rng = np.random.default_rng(3)
        counts = np.array([simulate_poisson(lam, rng=rng).n for _ in range(400)])
        assert abs(counts.mean() - 50.0) < 4 * np.sqrt(50.0 / 400)

    def test_model_intensity_count(self):
        spec = ModelSpec(model_id=1, target_m=100)
        generating, _ = build_model_covariates(spec, GRFSpec(ncols=32, nrows=32, seed=2))
        lam = model_intensity(spec, generating)
        rng = np.random.default_rng(4)
        counts = [simulate_poisson(lam, rng=rng).n for _ in range(200)]
        assert np.mean(counts) == pytest.approx(100.0, rel=0.1)

    def test_follows_the_covariate(self, raster_x):
        lam = raster_x.with_values(2000.0 * raster_x.values)
        pattern = simulate_poisson(lam, seed=5)
        assert np.mean(pattern.x) == pytest.approx(2.0 / 3.0, abs=0.05)

    def test_reproducible(self, raster_x):
        lam = raster_x.with_values(100.0 * raster_x.values)
        np.testing.assert_array_equal(simulate_poisson(lam, seed=1).points, simulate_poisson(lam, seed=1).points)

    def test_half_window_counts_are_uncorrelated(self, raster_x):
        lam = raster_x.with_values(100.0 * raster_x.values)
        rng = np.random.default_rng(6)
        patterns = [simulate_poisson(lam, rng=rng) for _ in range(400)]
        left = np.array([np.count_nonzero(p.x < 0.5) for p in patterns])
        right = np.array([p.n for p in patterns]) - left
        assert abs(np.corrcoef(left, right)[0, 1]) < 0.15
        assert left.mean() == pytest.approx(12.5, rel=0.1)
        assert left.var(ddof=1) == pytest.approx(left.mean(), rel=0.25)

    def test_zero_intensity(self, raster_x):
        assert simulate_poisson(raster_x.with_values(np.zeros((200, 200))), seed=0).n == 0

    def test_negative_intensity(self, raster_x):
        with pytest.raises(ParameterError):
            simulate_poisson(raster_x.with_values(raster_x.values - 0.5), seed=0)


class TestErrorCriteria:
    def test_ise_rel_of_exact_estimate(self, raster_x):
        lam = raster_x.with_values(1.0 + raster_x.values)
        assert ise_rel(lam, lam) == 0.0

    def test_ise_rel_of_scaled_estimate(self, raster_x):
        lam = raster_x.with_values(1.0 + raster_x.values)
        assert ise_rel(lam.with_values(1.1 * lam.values), lam) == pytest.approx(0.01)

    def test_ise_rel_grid_mismatch(self, raster_x, unit_window):
        other = RasterCovariate(unit_window, np.ones((10, 10)))
        with pytest.raises(ParameterError):
            ise_rel(other, raster_x.with_values(np.ones((200, 200))))

    def test_ise_rel_needs_positive_truth(self, raster_x):
        with pytest.raises(ParameterError):
            ise_rel(raster_x, raster_x.with_values(np.zeros((200, 200))))

    def test_true_relative_density(self, raster_x, dist_x):
        f = true_relative_density(raster_x.with_values(1.0 + raster_x.values), raster_x, dist_x)
        z = dist_x.z_grid
        inner = (z > 0.15) & (z < 0.85)
        assert simpson(f, z) == pytest.approx(1.0)
        np.testing.assert_allclose(f[inner], (1.0 + z[inner]) / 1.5, atol=0.02)

    def test_true_relative_density_needs_bandwidth(self, raster_x, flat_dist):
        with pytest.raises(ParameterError):
            true_relative_density(raster_x, raster_x, flat_dist)
