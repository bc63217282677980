"""Shared fixtures and independent oracles for the test suite.

The brute-force matcher below enumerates every injective assignment of
online vertices to offline neighbors; it is the reference the production
augmenting-path solver is checked against and stays independent of it.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from stochmatch.instances import Instance, TypeDistribution
from stochmatch.rules import PermutationRule


def brute_force_max_weight(weights, neighbor_sets) -> float:
    """Maximum total weight of matched offline vertices, by exhaustive search."""
    n = len(neighbor_sets)

    def best(j: int, used: frozenset) -> float:
        if j == n:
            return 0.0
        skip = best(j + 1, used)
        take = max(
            (weights[u] + best(j + 1, used | {u}) for u in neighbor_sets[j] if u not in used),
            default=float("-inf"),
        )
        return max(skip, take)

    return best(0, frozenset())


def rational_masses(rng: np.random.Generator, k: int) -> list[Fraction]:
    raw = [int(x) for x in rng.integers(1, 9, size=k)]
    total = sum(raw)
    return [Fraction(r, total) for r in raw]


def random_rational_instance(
    rng: np.random.Generator,
    n_offline: int,
    n_online: int,
    max_types: int,
    iid: bool,
    edge_prob: float = 0.6,
) -> Instance:
    """Random instance with exact masses, suitable for rational-mode checks."""

    def one() -> TypeDistribution:
        k = int(rng.integers(1, max_types + 1))
        masses = rational_masses(rng, k)
        pairs = []
        for t in range(k):
            nbrs = [u for u in range(n_offline) if rng.random() < edge_prob]
            pairs.append((nbrs, masses[t]))
        return TypeDistribution.from_pairs(pairs)

    weights = [round(float(w), 3) for w in rng.uniform(0.5, 2.0, size=n_offline)]
    if iid:
        dist = one()
        arrivals = [dist] * n_online
    else:
        arrivals = [one() for _ in range(n_online)]
    return Instance.make(weights, arrivals)


def single_offline_iid_instance(rng: np.random.Generator, n_online: int, max_types: int = 3) -> Instance:
    """One offline vertex, identical arrivals, exact masses, at least one edge type."""
    while True:
        k = int(rng.integers(1, max_types + 1))
        masses = rational_masses(rng, k)
        pairs = [([0] if rng.random() < 0.6 else [], m) for m in masses]
        if any(nbrs for nbrs, _ in pairs):
            break
    dist = TypeDistribution.from_pairs(pairs)
    return Instance.make([1.0], [dist] * n_online)


def random_rule_instance(
    rng: np.random.Generator, max_online: int = 4, max_types: int = 3
) -> tuple[Instance, PermutationRule]:
    """Single-offline instance plus a random permutation rule over its edge types."""
    while True:
        n = int(rng.integers(2, max_online + 1))
        dists = []
        for _ in range(n):
            k = int(rng.integers(2, max_types + 1))
            masses = rational_masses(rng, k)
            pairs = [([0] if rng.random() < 0.7 else [], m) for m in masses]
            dists.append(TypeDistribution.from_pairs(pairs))
        instance = Instance.make([1.0], dists)
        pairs = [(j, t.id) for j in range(n) for t in dists[j].types if t.neighbors]
        if pairs:
            order = rng.permutation(len(pairs))
            return instance, PermutationRule(tuple(pairs[i] for i in order))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
