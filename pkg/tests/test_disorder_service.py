import math

import numpy as np
import pytest

from cascade_types.errors import DisorderDomainError, MomentEvaluationError, NumericalError
from models.weight_law import BETA_C, WeightLaw
from services.disorder_service import LOG2, disorder_service

STRONG_LAWS = [
    WeightLaw.gaussian(2.0),
    WeightLaw.two_point(2.8, 0.1, 1 / 3),
    WeightLaw.polymer(2.0, WeightLaw.boundary_gaussian()),
]


class TestClassification:
    def test_gaussian_at_critical_beta(self):
        regime = disorder_service.classify_disorder(WeightLaw.gaussian(BETA_C))
        assert regime.disorder_class == "critical"
        assert abs(regime.margin) < 1e-12

    def test_constant_weight_is_weak(self):
        regime = disorder_service.classify_disorder(WeightLaw.point_mass(0.0))
        assert regime.disorder_class == "weak"
        assert regime.margin == pytest.approx(-LOG2, abs=1e-12)

    def test_two_point_is_strong(self):
        assert disorder_service.classify_disorder(WeightLaw.two_point(2.8, 0.1, 1 / 3)).disorder_class == "strong"

    def test_boundary_gaussian_is_critical(self):
        assert disorder_service.classify_disorder(WeightLaw.boundary_gaussian()).disorder_class == "critical"

    def test_closed_form_moments_match_quadrature(self):
        law = WeightLaw.gaussian(1.0)
        closed = disorder_service.compute_moments(law)
        numeric = disorder_service.compute_moments(law, closed_form=False)
        assert numeric.mean_x == pytest.approx(1.0, abs=1e-8)
        assert numeric.x_log_x == pytest.approx(closed.x_log_x, abs=1e-8)
        assert numeric.sigma_sq == pytest.approx(closed.sigma_sq, abs=1e-8)

    def test_boundary_sigma_squared(self):
        assert disorder_service.compute_moments(WeightLaw.boundary_gaussian()).sigma_sq == pytest.approx(2 * LOG2, abs=1e-12)

    def test_expect_on_atoms_is_a_finite_sum(self):
        law = WeightLaw.discrete_w([0.0, 1.0], [0.25, 0.75])
        assert disorder_service.expect(law, lambda w: w, "E W") == pytest.approx(0.75, abs=1e-15)


class TestAlpha:
    def test_gaussian_alpha_is_one_half(self):
        alpha = disorder_service.solve_alpha(WeightLaw.gaussian(2 * BETA_C))
        assert alpha == pytest.approx(0.5, abs=1e-8)

    @pytest.mark.parametrize("beta", [1.5, 2.0, 4.0])
    def test_boundary_polymer_alpha_is_inverse_beta(self, beta):
        alpha = disorder_service.solve_alpha(WeightLaw.polymer(beta, WeightLaw.boundary_gaussian()))
        assert alpha == pytest.approx(1.0 / beta, abs=1e-8)

    def test_two_point_alpha_solves_the_entropy_equation(self):
        law = WeightLaw.two_point(2.8, 0.1, 1 / 3)
        alpha = disorder_service.solve_alpha(law)
        assert 0 < alpha < 1
        assert disorder_service.alpha_objective(law, alpha) == pytest.approx(LOG2, abs=1e-10)

    def test_weak_law_has_no_alpha(self):
        with pytest.raises(DisorderDomainError):
            disorder_service.solve_alpha(WeightLaw.gaussian(0.5))

    def test_x_to_w_rejects_alpha_outside_unit_interval(self):
        with pytest.raises(DisorderDomainError):
            disorder_service.x_to_w(WeightLaw.gaussian(2.0), 0.0)


class TestBoundaryForm:
    @pytest.mark.parametrize("law", STRONG_LAWS, ids=lambda law: law.kind)
    def test_strong_laws_normalize_to_the_boundary(self, law):
        boundary = disorder_service.x_to_w(law, disorder_service.solve_alpha(law))
        assert disorder_service.boundary_residuals(boundary).worst < 1e-8

    def test_boundary_gaussian_residuals_by_quadrature(self):
        residuals = disorder_service.boundary_residuals(WeightLaw.boundary_gaussian(), quadrature=True)
        assert residuals.worst < 1e-8

    def test_standard_normal_energy_normalizes_to_boundary_gaussian(self):
        law = WeightLaw.gaussian_w(0.0, 1.0)
        assert disorder_service.find_critical_beta(law) == pytest.approx(math.sqrt(2 * LOG2), abs=1e-14)
        assert disorder_service.boundary_normalize(law).kind == "boundary_gaussian"

    def test_atom_energy_normalization(self):
        law = WeightLaw.discrete_w([0.0, 1.0], [0.25, 0.75])
        boundary = disorder_service.boundary_normalize(law)
        assert boundary.kind == "discrete_w"
        assert disorder_service.is_boundary(boundary)

    def test_constant_energy_has_no_critical_beta(self):
        with pytest.raises(NumericalError):
            disorder_service.find_critical_beta(WeightLaw.point_mass(1.0))

    def test_constant_weight_maps_to_log_two(self):
        law = disorder_service.x_to_w(WeightLaw.two_point(1.0, 1.0, 0.5), 1.0)
        assert law.kind == "point_mass"
        assert law.params["w"] == pytest.approx(LOG2, abs=1e-15)


class TestSizeBiasedMoment:
    def test_gaussian_energy_matches_the_closed_form(self):
        mean, std = 0.3, 0.8
        expected = math.exp(-mean + std ** 2 / 2) * ((mean - std ** 2) ** 2 + std ** 2)
        assert disorder_service.size_biased_moment(WeightLaw.gaussian_w(mean, std)) == pytest.approx(expected, rel=1e-8)

    def test_atom_energy_is_a_finite_sum(self):
        law = WeightLaw.discrete_w([0.0, 1.0], [0.25, 0.75])
        assert disorder_service.size_biased_moment(law) == pytest.approx(0.75 * math.exp(-1.0), abs=1e-15)
        assert disorder_service.size_biased_moment_finite(law)

    def test_boundary_gaussian_is_finite(self):
        assert disorder_service.size_biased_moment_finite(WeightLaw.boundary_gaussian())

    def test_overflowing_atom_is_not_finite(self):
        law = WeightLaw.discrete_w([-800.0, 0.0], [0.5, 0.5])
        assert not disorder_service.size_biased_moment_finite(law)

    def test_failed_quadrature_is_not_finite(self, mocker):
        mocker.patch.object(disorder_service, "expect", side_effect=MomentEvaluationError("did not converge"))
        assert not disorder_service.size_biased_moment_finite(WeightLaw.gaussian_w(0.0, 1.0))


class TestSampling:
    def test_boundary_gaussian_exponential_mean(self, rng):
        draws = disorder_service.sample_w_array(WeightLaw.boundary_gaussian(), 1_000_000, rng)
        # Var e^{-W} = 3/4, so three standard errors
        assert abs(np.exp(-draws).mean() - 0.5) < 3 * math.sqrt(0.75 / 1e6)

    def test_atom_sampling_hits_only_atoms(self, rng):
        draws = disorder_service.sample_w_array(WeightLaw.two_point(2.8, 0.1, 1 / 3), 1000, rng)
        assert set(np.round(np.exp(-draws), 12)) <= {2.8, 0.1}

    def test_point_mass_sampling(self, rng):
        assert disorder_service.sample_w(WeightLaw.point_mass(1.5), rng) == 1.5
