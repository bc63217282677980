import math
from fractions import Fraction

import numpy as np
import pytest

from stochmatch.errors import BoundViolated, EpsilonOutOfRange, LemmaViolated, TypeNotInRule
from stochmatch.instances import Instance, TypeDistribution, generate_random, worst_case_instance
from stochmatch.rules import PermutationRule
from stochmatch.rng import substream
from stochmatch.analysis import (
    CASE_RATIO_TARGETS,
    GAMMA_IID,
    GAMMA_WARMUP,
    TARGET_MIN1,
    TARGET_P,
    QuadraticBound,
    bernoullize,
    builtin_bounds,
    certify_case,
    check_warmup_lemmas,
    default_mu_grid,
    experiment_to_csv,
    hardness_search,
    ratio_from_bound,
    rule_mean,
    rule_score_expectations,
    sample_worst_case_y,
    split_vertex,
    verify_lower_bound,
    windowed_mix_trend,
    worst_case_expectations,
    worst_case_experiment,
)

from conftest import random_rule_instance


class TestBoundsCatalog:
    def test_thirteen_bounds(self):
        catalog = builtin_bounds()
        assert len(catalog.bounds) == 13
        assert [len(catalog.case(c)) for c in ("a", "b", "c", "d")] == [2, 2, 7, 2]

    def test_case_a_low_range_triple(self):
        bound = builtin_bounds().case("a")[0]
        assert (bound.a, bound.b, bound.d) == (-0.3, 1.0, 0.0)
        assert (bound.mu_lo, bound.mu_hi) == (0.0, 0.35)
        assert bound.gamma_kind == GAMMA_WARMUP and bound.target == TARGET_MIN1

    def test_case_c_sixth_triple(self):
        bound = builtin_bounds().case("c")[5]
        assert (bound.a, bound.b, bound.d) == (-0.4295, 1.3589, -0.0750)
        assert (bound.mu_lo, bound.mu_hi) == (0.78, 0.91)

    def test_case_d_low_range_triple(self):
        bound = builtin_bounds().case("d")[0]
        assert (bound.a, bound.b, bound.d) == (-0.252, 1.0, 0.0)
        assert bound.mu_hi == 0.4 and bound.target == TARGET_P

    def test_ranges_cover_unit_interval(self):
        catalog = builtin_bounds()
        for case in ("a", "b", "c", "d"):
            bounds = sorted(catalog.case(case), key=lambda b: b.mu_lo)
            assert bounds[0].mu_lo == 0.0
            assert bounds[-1].mu_hi == 1.0
            for prev, nxt in zip(bounds, bounds[1:]):
                assert nxt.mu_lo <= prev.mu_hi


class TestVerifyLowerBound:
    def test_all_builtin_bounds_dominate(self):
        for bound in builtin_bounds().bounds:
            verify_lower_bound(bound, grid_step=1e-4, tol=1e-6)

    def test_point_check_case_a(self):
        # -0.3*1 + 1*1 + 0 = 0.7 <= min(1,1)
        bound = builtin_bounds().case("a")[0]
        assert bound.a * 1 + bound.b * 1 + bound.d <= 1.0

    def test_simple_quadratic_never_exceeds_min(self):
        bound = QuadraticBound(-0.3, 1.0, 0.0, TARGET_MIN1, 0.0, 1.0, GAMMA_WARMUP, "a")
        report = verify_lower_bound(bound, grid_step=1e-4, tol=0.0)
        assert report.max_gap <= 0.0

    def test_rounded_guarantee_bound_holds_tightly(self):
        bound = QuadraticBound(-0.252, 1.0, 0.0, TARGET_P, 0.0, 0.4, GAMMA_IID, "d")
        verify_lower_bound(bound, grid_step=1e-4, tol=1e-9)

    def test_violating_bound_rejected(self):
        bad = QuadraticBound(-0.1, 1.2, 0.0, TARGET_MIN1, 0.0, 1.0, GAMMA_WARMUP, "a")
        with pytest.raises(BoundViolated):
            verify_lower_bound(bad)

    def test_tail_cutoff_is_larger_root(self):
        bound = builtin_bounds().case("a")[0]
        report = verify_lower_bound(bound)
        assert report.y_star == pytest.approx(1 / 0.3, abs=1e-12)


class TestRatioFromBound:
    def test_case_a_first_bound_minimum(self):
        # (-0.3*gamma + mu)/mu = 0.7 - 0.15*mu, minimized at mu = 0.35
        bound = builtin_bounds().case("a")[0]
        assert ratio_from_bound(bound) == pytest.approx(0.6475, abs=1e-12)

    def test_case_constants(self):
        catalog = builtin_bounds()
        certified = {case: certify_case(catalog, case) for case in ("a", "b", "c", "d")}
        for case, target in CASE_RATIO_TARGETS.items():
            assert certified[case] >= target - 1e-12
            assert certified[case] <= target + 1e-3  # binds within a thousandth

    def test_frozen_case_values(self):
        catalog = builtin_bounds()
        assert certify_case(catalog, "a") == pytest.approx(0.64643, abs=1e-9)
        assert certify_case(catalog, "b") == pytest.approx(0.63465, abs=1e-9)
        assert certify_case(catalog, "c") == pytest.approx(0.7310495924, abs=1e-7)
        assert certify_case(catalog, "d") == pytest.approx(0.7040953572, abs=1e-7)


class TestSplitVertex:
    def single_arrival_instance(self):
        dist = TypeDistribution.from_pairs(
            [([0], Fraction(1, 2)), ([0], Fraction(1, 4)), ([], Fraction(1, 4))]
        )
        inst = Instance.make([1.0], [dist])
        rule = PermutationRule(((0, 0), (0, 1)))
        return inst, rule

    def test_full_epsilon_drops_first_type(self):
        inst, rule = self.single_arrival_instance()
        split, new_rule = split_vertex(inst, rule, 0, Fraction(1, 2))
        # remainder keeps the second edge type and the empty type, rescaled
        assert split.n_online == 2
        assert split.arrivals[0].masses == (Fraction(1, 2), Fraction(1, 2))
        assert split.arrivals[1].masses == (Fraction(1, 2), Fraction(1, 2))
        assert new_rule.pairs == ((1, 0), (0, 0))

    def test_partial_epsilon_keeps_first_type(self):
        inst, rule = self.single_arrival_instance()
        split, new_rule = split_vertex(inst, rule, 0, Fraction(1, 4))
        assert split.arrivals[0].masses == (Fraction(1, 3), Fraction(1, 3), Fraction(1, 3))
        assert split.arrivals[1].masses == (Fraction(1, 4), Fraction(3, 4))
        assert new_rule.pairs == ((0, 0), (1, 0), (0, 1))

    def test_epsilon_validation(self):
        inst, rule = self.single_arrival_instance()
        with pytest.raises(EpsilonOutOfRange):
            split_vertex(inst, rule, 0, Fraction(3, 4))
        with pytest.raises(EpsilonOutOfRange):
            split_vertex(inst, rule, 0, 0)

    def test_unruled_arrival_rejected(self):
        dist = TypeDistribution.from_pairs([([0], Fraction(1, 2)), ([], Fraction(1, 2))])
        inst = Instance.make([1.0], [dist, dist])
        rule = PermutationRule(((0, 0),))
        with pytest.raises(TypeNotInRule):
            split_vertex(inst, rule, 1, Fraction(1, 4))

    def test_mean_preserved_and_scores_monotone(self):
        rng = substream(314, "split-tests")
        for _ in range(10):
            inst, rule = random_rule_instance(rng)
            ey0, emin0, eocs0 = rule_score_expectations(inst, rule)
            for j in sorted(rule.arrivals()):
                m1 = inst.arrivals[j].masses[rule.selected_type_ids(j)[0]]
                for num in (1, 2, 3, 4, 5):
                    eps = m1 * Fraction(num, 5)
                    split, new_rule = split_vertex(inst, rule, j, eps)
                    ey1, emin1, eocs1 = rule_score_expectations(split, new_rule)
                    assert ey1 == ey0
                    assert emin1 <= emin0
                    assert eocs1 <= eocs0 + 1e-12

    def test_bernoullize_reaches_bernoulli_form(self):
        rng = substream(271, "bernoullize-tests")
        for _ in range(6):
            inst, rule = random_rule_instance(rng)
            mean0 = rule_mean(inst, rule)
            flat, flat_rule = bernoullize(inst, rule)
            assert all(len(flat_rule.selected_type_ids(j)) <= 1 for j in range(flat.n_online))
            assert rule_mean(flat, flat_rule) == mean0


class TestWorstCaseExperiment:
    def test_sampler_mean_matches_mu(self):
        rng = substream(5, "sampler-test")
        for mu in (0.2, 0.8):
            eps = 1 - (1 - mu) ** (1 / 50)
            y = sample_worst_case_y(50, eps, 200_000, rng)
            assert y.mean() == pytest.approx(mu, abs=0.01)

    def test_sampler_saturates_at_eps_one(self):
        rng = substream(6, "sampler-test")
        assert np.all(sample_worst_case_y(10, 1.0, 100, rng) == 1.0)

    def test_sampler_tracks_exact_enumeration(self):
        # 2^n oracle at small n
        rng = substream(7, "sampler-test")
        n, mu = 12, 0.8
        ey, emin, eocs = worst_case_expectations(n, mu)
        eps = 1 - (1 - mu) ** (1 / n)
        y = sample_worst_case_y(n, eps, 300_000, rng)
        assert ey == pytest.approx(mu, abs=1e-12)
        assert np.minimum(y, 1).mean() == pytest.approx(emin, abs=5e-3)
        from stochmatch.evaluation import ocs_guarantee

        assert ocs_guarantee(y).mean() == pytest.approx(eocs, abs=5e-3)

    def test_small_mu_limits(self):
        # a lone realization dominates and carries y ~ 1: the fractional ratio
        # tends to 1 while the rounded ratio tends to p(1) ~ 0.8134
        points = worst_case_experiment(200, [0.01], samples=200_000, seed=3)
        assert points[0].frac_ratio >= 0.98
        assert points[0].ocs_ratio == pytest.approx(0.8134, abs=0.02)

    def test_default_grid(self):
        grid = default_mu_grid()
        assert len(grid) == 100
        assert grid[0] == 0.01 and grid[-1] == 1.0

    def test_curve_reproducible_and_serializable(self, tmp_path):
        pts1 = worst_case_experiment(100, [0.3, 0.6], samples=20_000, seed=9)
        pts2 = worst_case_experiment(100, [0.3, 0.6], samples=20_000, seed=9)
        assert pts1 == pts2
        path = tmp_path / "curve.csv"
        experiment_to_csv(pts1, path, ["seed=9"])
        lines = path.read_text().splitlines()
        assert lines[1] == "mu,frac_ratio,ocs_ratio,stderr_frac,stderr_ocs"
        assert len(lines) == 4


class TestHardnessSearch:
    def test_best_value_and_ratio(self):
        result = hardness_search(grid_step=1e-3)
        assert abs(result.best_value - 1.5) <= 1e-9
        assert abs(result.best_ratio - 0.75) <= 1e-9

    def test_best_split_saturates_budget(self):
        result = hardness_search(grid_step=1e-2)
        assert sum(result.best_split) == pytest.approx(1.0, abs=1e-9)

    def test_idle_first_arrival_scores_one(self):
        # no fractions on the first arrival: only the forced second match counts
        value = 0.5 * (min(0 + 1, 1) + min(0, 1)) + 0.5 * (min(0, 1) + min(0 + 1, 1))
        assert value == 1.0


class TestWarmupLemmas:
    def test_point_mass_instance_trivial(self):
        dist = TypeDistribution.from_pairs([([0], 1.0)])
        inst = Instance.make([1.0], [dist])
        report = check_warmup_lemmas(inst, 0)
        assert report.mu == 1.0

    def test_random_instances_pass(self):
        for seed in range(4):
            inst = generate_random(
                3, 3, 2, 0.6, (0.5, 2.0), seed % 2 == 0, seed=seed, mass_denominator=10
            )
            for u in range(inst.n_offline):
                check_warmup_lemmas(inst, u)

    def test_worst_case_rule_gives_equality(self):
        inst, rule = worst_case_instance(3, 0.5)
        report = check_warmup_lemmas(inst, 0, rule=rule)
        # independent and history-conditioned fractions coincide on this family
        assert report.per_arrival_slack == (0.0, 0.0, 0.0)
        assert report.mu == pytest.approx(0.5, abs=1e-12)

    def test_violation_raises(self):
        # a rule-free report on a tiny instance cannot violate; force a failure
        dist = TypeDistribution.from_pairs([([0], Fraction(1, 2)), ([], Fraction(1, 2))])
        inst = Instance.make([1.0], [dist] * 2)
        with pytest.raises(LemmaViolated):
            check_warmup_lemmas(inst, 0, slack=-1.0)  # impossible slack flips the gate


class TestTrend:
    def test_trend_reports_all_sizes(self):
        trend = windowed_mix_trend(n_values=(10, 20), mu=0.8, trials=400, seed=1)
        assert [n for n, _ in trend] == [10, 20]
        assert all(0.6 <= ratio <= 1.0 for _, ratio in trend)
