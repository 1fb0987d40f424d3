import math

import numpy as np
import pytest
from scipy import stats

from cascade_types.errors import (
    DegenerateSampleError,
    DisorderDomainError,
    ExcessiveResamplingError,
    ToleranceUnachievableError,
    VertexRangeError,
)
from cascade_types.limit_types import DecoratedPPP, LimitSample
from config.settings import settings
from models.decoration import DecorationSpec
from models.weight_law import WeightLaw
from services.cascade_service import cascade_service
from services.limit_service import limit_service
from services.stats_service import stats_service
from utils.vertex_paths import level_offset, level_vertices

LOG2 = math.log(2.0)


def single_center(sample, x, t=0.0, decoration=None):
    """The sample's field and intervals with one hand-placed Poisson center"""
    decoration = decoration or DecorationSpec()
    values, pointers = decoration.sample(1, np.random.default_rng(0))
    ppp = DecoratedPPP(
        strip_length=sample.intervals.total_length,
        x=np.array([x]),
        t=np.array([t]),
        decoration_values=values,
        decoration_pointers=pointers,
        beta_min=2.0,
        tail_tol=1.0,
        tail_bound=0.0,
        decoration=decoration,
    )
    return LimitSample(field=sample.field, intervals=sample.intervals, ppp=ppp, theta=1.0)


class TestDerivativeField:
    def test_constant_log_two_weights(self, rng):
        approx = limit_service.approx_dinfty(WeightLaw.point_mass(LOG2), 5, rng)
        assert approx.value == pytest.approx(5 * LOG2, rel=1e-12)
        assert approx.previous == pytest.approx(4 * LOG2, rel=1e-12)
        assert approx.positive

    def test_depth_zero_field_is_a_single_leaf(self, boundary_law, rng):
        field = limit_service.build_field(boundary_law, 0, 6, rng)
        assert field.weights.size == 0
        assert field.root_value > 0
        assert field.d(()) == field.root_value

    def test_field_recursion(self, limit_sample):
        field = limit_sample.field
        for vertex in level_vertices(1):
            children = [vertex + (-1,), vertex + (1,)]
            rebuilt = sum(math.exp(-field.w(child)) * field.d(child) for child in children)
            assert rebuilt == pytest.approx(field.d(vertex), rel=1e-12)
        assert np.all(field.d_by_level[field.depth] > 0)

    def test_root_has_no_weight(self, limit_sample):
        with pytest.raises(VertexRangeError):
            limit_sample.field.w(())

    def test_leaf_depth_must_cover_field_depth(self, boundary_law, rng):
        with pytest.raises(DisorderDomainError):
            limit_service.build_field(boundary_law, 4, 3, rng)

    def test_always_negative_law_is_refused(self, rng):
        with pytest.raises(ExcessiveResamplingError):
            limit_service.build_field(WeightLaw.point_mass(-1.0), 1, 3, rng)


class TestIntervals:
    def test_children_tile_parents(self, limit_sample):
        intervals = limit_sample.intervals
        assert intervals.total_length == pytest.approx(limit_sample.field.root_value, rel=1e-15)
        for vertex in level_vertices(1):
            left, length = intervals.interval(vertex)
            left_a, length_a = intervals.interval(vertex + (-1,))
            left_b, length_b = intervals.interval(vertex + (1,))
            assert left_a == left
            assert left_b == pytest.approx(left_a + length_a, rel=1e-14)
            assert length_a + length_b == pytest.approx(length, rel=1e-12)

    def test_lengths_are_discounted_field_values(self, limit_sample):
        field, intervals = limit_sample.field, limit_sample.intervals
        vertex = (1, -1)
        energy = field.w((1,)) + field.w(vertex)
        assert intervals.interval(vertex)[1] == pytest.approx(math.exp(-energy) * field.d(vertex), rel=1e-12)

    def test_origin_belongs_to_the_leftmost_vertex(self, limit_sample):
        assert limit_service.locate_vertex(limit_sample.intervals, 0.0, 2) == (-1, -1)
        assert limit_service.locate_vertex(limit_sample.intervals, 0.0, 0) == ()

    def test_right_endpoint_is_excluded(self, limit_sample):
        with pytest.raises(VertexRangeError):
            limit_service.locate_vertex(limit_sample.intervals, limit_sample.intervals.total_length, 2)
        with pytest.raises(VertexRangeError):
            limit_service.locate_vertex(limit_sample.intervals, 0.0, 3)

    def test_boundary_point_goes_right(self, limit_sample):
        left, _ = limit_sample.intervals.interval((1,))
        assert limit_service.locate_vertex(limit_sample.intervals, left, 1) == (1,)

    def test_descent_matches_vectorized_lookup(self, limit_sample, rng):
        intervals = limit_sample.intervals
        points = rng.uniform(0.0, intervals.total_length, 500)
        offsets = limit_service._locate_offsets(intervals, points, 2)
        for point, offset in zip(points, offsets):
            assert level_offset(limit_service.locate_vertex(intervals, float(point), 2)) == offset


class TestPoissonProcess:
    def test_dirac_process(self, rng):
        ppp = limit_service.sample_ppp(2.0, 2.0, 1e-2, DecorationSpec(), rng)
        assert ppp.count >= 1
        assert np.all(np.diff(ppp.x) > 0)
        assert np.all((ppp.t >= 0) & (ppp.t < 2.0))
        assert np.unique(ppp.t).size == ppp.count
        assert ppp.decoration_values.tolist() == [0.0] * ppp.count
        assert ppp.tail_bound < 1e-2
        assert ppp.truncation_report()['count'] == ppp.count

    @pytest.mark.parametrize(
        "strip_length, beta_min, tail_tol",
        [(0.0, 2.0, 1e-2), (1.0, 1.0, 1e-2), (1.0, 2.0, 0.0)],
    )
    def test_invalid_arguments(self, rng, strip_length, beta_min, tail_tol):
        with pytest.raises(DisorderDomainError):
            limit_service.sample_ppp(strip_length, beta_min, tail_tol, DecorationSpec(), rng)

    def test_cap_is_enforced_before_sampling(self, mocker, rng):
        mocker.patch.object(limit_service, "ppp_cap", 10)
        with pytest.raises(ToleranceUnachievableError, match="cap"):
            limit_service.sample_ppp(1.0, 2.0, 1e-3, DecorationSpec(), rng)

    def test_truncation_does_not_depend_on_the_strip(self):
        short = limit_service.sample_ppp(0.05, 2.0, 1e-2, DecorationSpec(), np.random.default_rng(4))
        long = limit_service.sample_ppp(500.0, 2.0, 1e-2, DecorationSpec(), np.random.default_rng(4))
        assert short.count == long.count
        assert short.tail_bound == long.tail_bound <= 1e-2
        assert np.allclose(long.x - short.x, math.log(0.05 / 500.0), rtol=0, atol=1e-12)

    def test_long_strip_fits_a_small_cap(self, mocker, rng):
        # beta = 2, tail_tol = 1e-3 stops near the 1000th arrival
        mocker.patch.object(limit_service, "ppp_cap", 2000)
        ppp = limit_service.sample_ppp(1.0e4, 2.0, 1e-3, DecorationSpec(), rng)
        assert ppp.count <= 2000
        assert ppp.tail_bound <= 1e-3

    def test_center_count_is_poisson(self, rng):
        # At beta = 2 the stopping arrival is the first one past 1 / tail_tol, whatever T is
        draws = 200
        extra = sum(limit_service.sample_ppp(1.0, 2.0, 1e-2, DecorationSpec(), rng).count - 1 for _ in range(draws))
        low, high = stats_service.poisson_interval(draws * 100.0, level=0.999)
        assert low <= extra <= high

    def test_centers_below_zero_are_poisson(self, rng):
        # centers with x <= 0 are Poisson(T) in number
        counts = [
            limit_service.center_statistics(limit_service.sample_ppp(3.0, 2.0, 1e-1, DecorationSpec(), rng), 0.0)[1]
            for _ in range(500)
        ]
        low, high = stats_service.poisson_interval(500 * 3.0, level=0.999)
        assert low <= sum(counts) <= high

    def test_atoms_decoration_contributions(self, rng):
        decoration = DecorationSpec(kind="atoms", params={"offsets": [0.0, LOG2]})
        ppp = limit_service.sample_ppp(1.0, 2.0, 1e-2, decoration, rng)
        expected = -2.0 * ppp.x + math.log(1.25)
        assert np.allclose(ppp.log_contributions(2.0), expected, rtol=0, atol=1e-12)
        assert ppp.decoration_of(0).tolist() == [0.0, LOG2]


class TestSuperposition:
    def test_clusters_follow_their_centers(self, rng):
        decoration = DecorationSpec(kind="poisson_exponential", params={"rate": 1.5, "scale": 0.3})
        a = limit_service.sample_ppp(1.0, 2.0, 1e-1, decoration, rng)
        b = limit_service.sample_ppp(1.0, 2.0, 1e-1, decoration, rng)
        merged = limit_service.superpose(a, b, LOG2, 0.5)

        assert merged.count == a.count + b.count
        assert np.all(np.diff(merged.x) >= 0)
        assert merged.decoration_pointers[-1] == merged.decoration_values.size

        origin = {}
        for ppp, shift in ((a, LOG2), (b, 0.5)):
            for i in range(ppp.count):
                origin[float(ppp.t[i])] = (float(ppp.x[i]) + shift, ppp.decoration_of(i).tolist())
        for i in range(merged.count):
            x, cluster = origin[float(merged.t[i])]
            assert merged.x[i] == pytest.approx(x, abs=1e-15)
            assert merged.decoration_of(i).tolist() == cluster

    def test_strip_lengths_must_match(self, rng):
        a = limit_service.sample_ppp(1.0, 2.0, 1e-1, DecorationSpec(), rng)
        b = limit_service.sample_ppp(2.0, 2.0, 1e-1, DecorationSpec(), rng)
        with pytest.raises(ValueError):
            limit_service.superpose(a, b, 0.0, 0.0)

    def test_center_statistics(self, rng):
        ppp = limit_service.sample_ppp(1.0, 2.0, 1e-2, DecorationSpec(), rng)
        lowest, below = limit_service.center_statistics(ppp, 0.0)
        assert lowest == ppp.x[0]
        assert below == int(np.sum(ppp.x <= 0.0))


class TestLimitMeasures:
    def test_levels_are_additive(self, limit_sample):
        levels = limit_service.compute_I(limit_sample, 2.5)
        assert len(levels) == limit_sample.depth + 1
        for level in range(1, len(levels)):
            assert np.allclose(levels[level][0::2] + levels[level][1::2], levels[level - 1], rtol=1e-12, atol=0)

    def test_levels_are_cached(self, limit_sample):
        assert limit_service.compute_I(limit_sample, 3.0) is limit_service.compute_I(limit_sample, 3.0)

    def test_beta_must_exceed_one(self, limit_sample):
        with pytest.raises(DisorderDomainError):
            limit_service.compute_I(limit_sample, 1.0)

    def test_single_center_mass(self, limit_sample):
        decoration = DecorationSpec(kind="atoms", params={"offsets": [0.0, LOG2]})
        sample = single_center(limit_sample, 0.5, decoration=decoration)
        expected = math.exp(-2.0 * 0.5) * (1.0 + 0.25)
        assert limit_service.i_value(sample, 2.0, ()) == pytest.approx(expected, rel=1e-14)
        assert limit_service.i_value(sample, 2.0, (-1, -1)) == pytest.approx(expected, rel=1e-14)
        assert limit_service.i_value(sample, 2.0, (1,)) == 0.0
        assert limit_service.limit_prob(sample, 2.0)[2].tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_vanishing_mass_is_degenerate(self, limit_sample):
        sample = single_center(limit_sample, 1e4)
        with pytest.raises(DegenerateSampleError):
            limit_service.limit_prob(sample, 2.0)

    def test_probabilities_sum_to_one(self, limit_sample):
        for level in limit_service.limit_prob(limit_sample, 2.0):
            assert math.fsum(level) == pytest.approx(1.0, abs=1e-12)

    def test_fourier_coefficients(self, limit_sample):
        probs = limit_service.limit_prob(limit_sample, 2.0)
        assert limit_service.limit_fourier(limit_sample, 2.0, []) == 1.0
        assert limit_service.limit_fourier(limit_sample, 2.0, [1]) == pytest.approx(probs[1][1] - probs[1][0], abs=1e-14)
        pair = probs[2][0] - probs[2][1] - probs[2][2] + probs[2][3]
        assert limit_service.limit_fourier(limit_sample, 2.0, [1, 2]) == pytest.approx(pair, abs=1e-14)
        with pytest.raises(VertexRangeError):
            limit_service.limit_fourier(limit_sample, 2.0, [3])

    def test_localization_profile(self, limit_sample):
        profile = limit_service.localization_profile(limit_sample, [1.5, 3.0])
        assert all(0.25 <= value <= 1.0 for value in profile)


class TestRadonNikodym:
    def test_equal_betas_give_one(self, limit_sample):
        t0 = float(limit_sample.ppp.t[0])
        assert limit_service.rn_derivative(limit_sample, t0, 2.0, 2.0) == 1.0

    def test_unknown_center_is_refused(self, limit_sample):
        with pytest.raises(DisorderDomainError):
            limit_service.rn_derivative(limit_sample, -1.0, 2.0, 3.0)

    def test_reciprocity(self, limit_sample):
        for t0 in limit_sample.ppp.t[:5]:
            forward = limit_service.rn_derivative(limit_sample, float(t0), 2.0, 3.0)
            backward = limit_service.rn_derivative(limit_sample, float(t0), 3.0, 2.0)
            assert forward * backward == pytest.approx(1.0, rel=1e-12)

    def test_derivative_reweights_one_measure_into_the_other(self, limit_sample):
        weights_2 = np.exp(limit_sample.ppp.log_contributions(2.0)) / limit_service.i_value(limit_sample, 2.0, ())
        rn = np.exp(limit_service._log_rn(limit_sample, 3.0, 2.0))
        assert math.fsum(weights_2 * rn) == pytest.approx(1.0, abs=1e-12)

    def test_table_lists_the_lowest_centers(self, limit_sample):
        rows = limit_service.rn_derivative_table(limit_sample, 2.0, 3.0, top=3)
        assert [row['x'] for row in rows] == limit_sample.ppp.x[:3].tolist()
        for row in rows:
            assert row['rn'] == pytest.approx(limit_service.rn_derivative(limit_sample, row['t'], 2.0, 3.0), rel=1e-14)


class TestGenealogy:
    def test_vertices_follow_the_limit_measure(self, limit_sample, rng):
        draws = limit_service.genealogy_sample(limit_sample, 2.0, 2, 20_000, rng)
        assert all(len(vertex) == 2 for vertex in draws)
        counts = [sum(1 for v in draws if v == vertex) for vertex in level_vertices(2)]
        result = stats_service.chi_square_occupancy(counts, limit_service.limit_prob(limit_sample, 2.0)[2])
        assert result.p_approx > 1e-4

    def test_depth_is_checked(self, limit_sample, rng):
        with pytest.raises(VertexRangeError):
            limit_service.genealogy_sample(limit_sample, 2.0, 3, 10, rng)


class TestStableCrossCheck:
    def test_beta_two_is_a_levy_law(self, rng):
        draws = limit_service.stable_cross_check(2.0, 1.0, 20_000, rng)
        assert stats.kstest(draws, stats.levy(scale=0.5).cdf).pvalue > 1e-3

    def test_beta_two_has_a_half_tail(self, rng):
        draws = limit_service.stable_cross_check(2.0, 1.0, 20_000, rng)
        assert stats_service.hill_index(draws).index == pytest.approx(0.5, abs=0.1)

    def test_mass_scales_as_a_power(self, rng):
        unit = limit_service.stable_cross_check(3.0, 1.0, 100, np.random.default_rng(9))
        scaled = limit_service.stable_cross_check(3.0, 2.0, 100, np.random.default_rng(9))
        assert np.allclose(scaled, 8.0 * unit, rtol=1e-12)

    def test_domain(self, rng):
        with pytest.raises(DisorderDomainError):
            limit_service.stable_cross_check(1.0, 1.0, 10, rng)
        with pytest.raises(DisorderDomainError):
            limit_service.stable_cross_check(2.0, 0.0, 10, rng)

    def test_scale(self):
        assert limit_service.stable_scale(2.0) == pytest.approx(1.0 / math.pi, rel=1e-12)


class TestContinuityAndFreezing:
    def test_identical_betas_have_zero_distance(self, limit_sample):
        assert limit_service.tv_continuity_probe(limit_sample, [2.0, 2.0]) == [0.0]

    def test_distances_are_bounded(self, limit_sample):
        distances = limit_service.tv_continuity_probe(limit_sample, [1.5, 2.0, 4.0, 8.0])
        assert len(distances) == 3
        assert all(0.0 <= d <= 1.0 for d in distances)

    def test_grid_must_be_sorted(self, limit_sample):
        with pytest.raises(DisorderDomainError):
            limit_service.tv_continuity_probe(limit_sample, [3.0, 2.0])
        with pytest.raises(DisorderDomainError):
            limit_service.tv_continuity_probe(limit_sample, [1.0, 2.0])

    def test_large_beta_freezes_on_the_lowest_center(self, limit_sample):
        row = limit_service.frozen_limit(limit_sample, [60.0])[0]
        assert row['frozen'] == pytest.approx(math.exp(-limit_sample.ppp.x[0]), rel=1e-15)
        assert 1.0 - 1e-12 <= row['value'] / row['frozen'] <= 1.1


class TestCalibration:
    def test_theta_recovers_a_known_scale(self):
        beta = 2.5
        unit = [1.0, 2.0, 3.0]
        finite = [4.0**beta * value for value in unit]
        assert limit_service.theta_from_medians(unit, finite, beta) == pytest.approx(4.0, rel=1e-12)

    def test_unit_value_removes_theta(self, limit_sample):
        sample = LimitSample(field=limit_sample.field, intervals=limit_sample.intervals, ppp=limit_sample.ppp, theta=3.0)
        assert limit_service.unit_i_root(sample, 2.0) == pytest.approx(
            limit_service.i_value(limit_sample, 2.0, ()) / 9.0, rel=1e-14
        )

    def test_empty_inputs(self):
        with pytest.raises(ValueError):
            limit_service.calibrate_theta([], [1.0], 2.0)


class TestInvariants:
    @pytest.mark.parametrize("seed", range(8))
    def test_seeded_samples_pass(self, boundary_law, seed):
        rng = np.random.default_rng(seed)
        sample = limit_service.build_limit_sample(boundary_law, 3, 8, 1.0, 2.0, 1e-3, DecorationSpec(), rng)
        reports = limit_service.check_invariants(sample, [2.0, 3.0])
        assert [report.name for report in reports] == [
            'field_recursion',
            'interval_tiling',
            'i_additivity',
            'limit_partition_of_unity',
            'rn_reciprocity',
            'rn_chain_rule',
            'truncation_soundness',
        ]
        assert all(report.passed for report in reports), [r.to_dict() for r in reports if not r.passed]

    def test_manifest(self, limit_sample):
        manifest = limit_sample.manifest()
        assert manifest['k'] == 2 and manifest['N'] == 8
        assert manifest['strip_length'] == pytest.approx(limit_sample.field.root_value)




def limit_samples(law, count, k, n, beta_min, tail_tol, first_seed=0):
    return [
        limit_service.build_limit_sample(law, k, n, 1.0, beta_min, tail_tol, DecorationSpec(), np.random.default_rng(seed))
        for seed in range(first_seed, first_seed + count)
    ]


@pytest.mark.slow
class TestLimitLaws:
    def test_default_truncation_holds_across_seeds(self, boundary_law):
        for seed in range(60):
            sample = limit_service.build_limit_sample(
                boundary_law, 1, settings.CASCADE_LEAF_DEPTH, 1.0, 1.5, settings.CASCADE_TAIL_TOL, DecorationSpec(),
                np.random.default_rng(seed),
            )
            assert sample.ppp.tail_bound <= settings.CASCADE_TAIL_TOL
            reports = {report.name: report for report in limit_service.check_invariants(sample, [1.5, 2.0])}
            assert reports['truncation_soundness'].passed, (seed, reports['truncation_soundness'].to_dict())

    def test_field_levels_are_copies_of_the_leaf_law(self, boundary_law):
        fields = [limit_service.build_field(boundary_law, 3, 12, np.random.default_rng(seed)) for seed in range(150)]
        rng = np.random.default_rng(10_000)
        fresh = []
        while len(fresh) < 1200:
            draw = limit_service.approx_dinfty(boundary_law, 12, rng)
            if draw.positive:
                fresh.append(draw.value)
        for level in range(4):
            pooled = np.concatenate([field.d_by_level[level] for field in fields])
            assert not stats_service.ks_two_sample(pooled, fresh).reject_at_1pct, level

    def test_root_functional_has_a_stable_tail(self, boundary_law):
        samples = limit_samples(boundary_law, 5000, 0, 12, 2.0, 1e-2)
        roots = [float(limit_service.compute_I(sample, 2.0)[0][0]) for sample in samples]
        assert stats_service.hill_index(roots).index == pytest.approx(0.5, abs=0.15)
        # given the strip, the functional is exactly 1/2-stable
        unit = [root / sample.ppp.strip_length ** 2 for root, sample in zip(roots, samples)]
        assert stats_service.hill_index(unit).index == pytest.approx(0.5, abs=0.1)

    def test_depth_one_masses_match_finite_cascades(self, boundary_law):
        passed = 0
        for seed in range(10):
            base = 1000 * seed
            finite = []
            for replica in range(base, base + 300):
                real = cascade_service.simulate_tree(boundary_law, 16, np.random.default_rng(replica))
                finite.append(float(cascade_service.level_measures(cascade_service.partition_table(real, 1.5, 1), 1)[0]))
            limit = [
                float(limit_service.limit_prob(sample, 1.5)[1][0])
                for sample in limit_samples(boundary_law, 300, 1, 12, 1.5, 1e-2, first_seed=500_000 + base)
            ]
            passed += not stats_service.ks_two_sample(finite, limit).reject_at_1pct
        assert passed >= 8

    def test_shifted_copies_superpose(self):
        passed = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            direct, merged = [], []
            for _ in range(500):
                direct.append(limit_service.center_statistics(limit_service.sample_ppp(1.0, 2.0, 1e-2, DecorationSpec(), rng), 0.0))
                copy_a = limit_service.sample_ppp(1.0, 2.0, 1e-2, DecorationSpec(), rng)
                copy_b = limit_service.sample_ppp(1.0, 2.0, 1e-2, DecorationSpec(), rng)
                merged.append(limit_service.center_statistics(limit_service.superpose(copy_a, copy_b, LOG2, LOG2), 0.0))
            minima = stats_service.ks_two_sample([d[0] for d in direct], [m[0] for m in merged])
            counts = stats_service.ks_two_sample([d[1] for d in direct], [m[1] for m in merged])
            passed += not (minima.reject_at_1pct or counts.reject_at_1pct)
        assert passed >= 9

    def test_mass_localizes_as_beta_grows(self, boundary_law):
        monotone = 0
        for sample in limit_samples(boundary_law, 200, 2, 10, 1.5, 1e-2):
            profile = limit_service.localization_profile(sample, [1.5, 3.0, 6.0, 12.0])
            monotone += all(later >= earlier - 1e-12 for earlier, later in zip(profile, profile[1:]))
        assert monotone >= 190

    def test_continuity_refines_with_the_grid(self, boundary_law):
        refined = 0
        for sample in limit_samples(boundary_law, 200, 2, 10, 2.0, 1e-2):
            fine = max(limit_service.tv_continuity_probe(sample, [2.0, 2.25, 2.5]))
            coarse = limit_service.tv_continuity_probe(sample, [2.0, 2.5])[0]
            refined += fine < coarse
        assert refined >= 190
