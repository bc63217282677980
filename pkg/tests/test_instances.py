from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochmatch.errors import (
    InvalidInstance,
    MassNotNormalized,
    MuOutOfRange,
    NegativeWeight,
    NeighborOutOfRange,
)
from stochmatch.instances import (
    Instance,
    OfflineVertex,
    TypeDistribution,
    generate_random,
    hardness_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    save_instance,
    validate,
    worst_case_instance,
)

from conftest import brute_force_max_weight


def bernoulli_dist(q):
    return TypeDistribution.from_pairs([([0], q), ([], 1 - q)])


class TestValidate:
    def test_hardness_instance_is_valid(self):
        validate(hardness_instance())

    def test_unnormalized_masses_rejected(self):
        dist = TypeDistribution.from_pairs([([0], 0.5), ([], 0.4)])
        inst = Instance.make([1.0], [dist])
        with pytest.raises(MassNotNormalized):
            validate(inst)

    def test_neighbor_out_of_range_rejected(self):
        dist = TypeDistribution.from_pairs([([1], 1.0)])
        inst = Instance.make([1.0], [dist])
        with pytest.raises(NeighborOutOfRange):
            validate(inst)

    def test_negative_weight_rejected(self):
        inst = Instance.make([-0.5], [bernoulli_dist(0.5)])
        with pytest.raises(NegativeWeight):
            validate(inst)

    def test_negative_mass_rejected(self):
        dist = TypeDistribution(
            (TypeDistribution.from_pairs([([0], 1.0)]).types[0],), (-1.0,)
        )
        inst = Instance.make([1.0], [dist])
        with pytest.raises(MassNotNormalized):
            validate(inst)

    def test_no_arrivals_rejected(self):
        inst = Instance(tuple([OfflineVertex(0, 1.0)]), (), False)
        with pytest.raises(InvalidInstance):
            validate(inst)

    def test_inconsistent_iid_flag_rejected(self):
        inst = Instance.make([1.0], [bernoulli_dist(0.5)] * 2)
        bad = Instance(inst.offline, inst.arrivals, False)
        with pytest.raises(InvalidInstance):
            validate(bad)

    def test_zero_mass_types_pruned_at_construction(self):
        dist = TypeDistribution.from_pairs([([0], 1.0), ([], 0.0)])
        assert dist.support_size == 1
        assert dist.types[0].neighbors == frozenset({0})


class TestGenerateRandom:
    def test_edge_prob_zero_gives_empty_types(self):
        inst = generate_random(3, 4, 2, 0.0, (1.0, 2.0), False, seed=1)
        assert all(t.is_empty for d in inst.arrivals for t in d.types)

    def test_edge_prob_one_single_type_is_complete_bipartite(self):
        inst = generate_random(3, 4, 1, 1.0, (1.0, 2.0), False, seed=1)
        for d in inst.arrivals:
            assert d.support_size == 1
            assert d.types[0].neighbors == frozenset({0, 1, 2})
            assert d.masses[0] == 1.0

    def test_same_seed_reproduces_instance(self):
        a = generate_random(3, 3, 2, 0.5, (0.5, 2.0), False, seed=77)
        b = generate_random(3, 3, 2, 0.5, (0.5, 2.0), False, seed=77)
        assert a == b

    def test_iid_arrivals_compare_equal_elementwise(self):
        inst = generate_random(3, 5, 2, 0.5, (0.5, 2.0), True, seed=3)
        assert inst.iid_flag
        assert all(d == inst.arrivals[0] for d in inst.arrivals)

    def test_generated_instances_validate(self):
        for seed in range(10):
            validate(generate_random(4, 4, 3, 0.4, (0.1, 3.0), seed % 2 == 0, seed=seed))
        validate(generate_random(4, 4, 3, 0.4, (0.1, 3.0), True, seed=5, mass_denominator=12))


class TestWorstCase:
    def test_n1_is_bernoulli_mu(self):
        inst, rule = worst_case_instance(1, 0.3)
        assert inst.arrivals[0].masses[0] == pytest.approx(0.3, abs=1e-15)
        assert rule.pairs == ((0, 0),)

    def test_large_n_closed_form(self):
        inst, _ = worst_case_instance(1000, 0.5)
        assert inst.arrivals[0].masses[0] == pytest.approx(1 - 0.5 ** (1 / 1000), abs=1e-15)

    def test_eps_solves_realization_identity(self):
        # independent bisection oracle for 1-(1-eps)^4 = 0.7
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = (lo + hi) / 2
            if 1 - (1 - mid) ** 4 < 0.7:
                lo = mid
            else:
                hi = mid
        inst, _ = worst_case_instance(4, 0.7)
        eps = inst.arrivals[0].masses[0]
        assert eps == pytest.approx((lo + hi) / 2, abs=1e-12)
        assert eps == pytest.approx(0.2599, abs=5e-5)

    def test_realization_probability_uniform_across_arrivals(self):
        inst, _ = worst_case_instance(7, 0.42)
        masses = {d.masses[0] for d in inst.arrivals}
        assert len(masses) == 1
        eps = masses.pop()
        assert abs(1 - (1 - eps) ** 7 - 0.42) <= 1e-12

    def test_rule_orders_descending(self):
        _, rule = worst_case_instance(5, 0.5)
        assert [j for j, _ in rule.pairs] == [4, 3, 2, 1, 0]

    def test_mu_validation(self):
        with pytest.raises(MuOutOfRange):
            worst_case_instance(5, 0.0)
        with pytest.raises(MuOutOfRange):
            worst_case_instance(5, 1.2)

    def test_mu_one_degenerates_to_point_mass(self):
        inst, _ = worst_case_instance(3, 1.0)
        validate(inst)
        assert all(d.support_size == 1 for d in inst.arrivals)

    def test_generated_instance_validates(self):
        inst, _ = worst_case_instance(6, 0.8)
        validate(inst)
        assert inst.iid_flag


class TestHardness:
    def test_shape(self):
        inst = hardness_instance()
        assert [v.weight for v in inst.offline] == [1.0, 1.0]
        assert inst.arrivals[0].support_size == 1
        assert inst.arrivals[0].types[0].neighbors == frozenset({0, 1})
        assert inst.arrivals[0].masses[0] == 1
        assert inst.arrivals[1].support_size == 2
        assert set(inst.arrivals[1].masses) == {Fraction(1, 2)}

    def test_every_realization_has_perfect_matching(self):
        inst = hardness_instance()
        weights = inst.weights()
        for tid in range(2):
            nbrs = (
                inst.arrivals[0].types[0].neighbors,
                inst.arrivals[1].types[tid].neighbors,
            )
            assert brute_force_max_weight(weights, nbrs) == 2.0


class TestSerialization:
    def test_rational_round_trip_is_lossless(self, tmp_path):
        inst = hardness_instance()
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        again = load_instance(path)
        assert again == inst
        assert isinstance(again.arrivals[1].masses[0], Fraction)

    def test_float_round_trip(self, tmp_path):
        inst = generate_random(3, 3, 2, 0.5, (0.5, 2.0), False, seed=5)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        assert load_instance(path) == inst

    def test_dict_schema(self):
        doc = instance_to_dict(hardness_instance())
        assert set(doc) == {"offline", "arrivals"}
        assert doc["offline"][0] == {"id": 0, "weight": 1.0}
        assert doc["arrivals"][1]["types"][0]["mass"] == "1/2"

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_random_rational_instances_round_trip(self, seed):
        inst = generate_random(3, 3, 2, 0.5, (0.5, 2.0), False, seed=seed, mass_denominator=9)
        assert instance_from_dict(instance_to_dict(inst)) == inst
