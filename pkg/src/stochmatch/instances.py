"""Stochastic bipartite instances.

An instance is a set of weighted offline vertices plus an ordered sequence of
arrival distributions.  Each arrival independently realizes a *type*, i.e. a
set of offline neighbors; the empty neighbor set is an ordinary type, not a
sentinel.  Instances are immutable after construction and safe to share
across evaluation workers.

Masses may be floats or :class:`fractions.Fraction`; when every mass in an
instance is exact (int or Fraction), downstream enumeration runs in rational
arithmetic and identity tests hold exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import (
    InvalidInstance,
    MassNotNormalized,
    MuOutOfRange,
    NegativeWeight,
    NeighborOutOfRange,
)
from .rng import substream
from .rules import PermutationRule

Mass = Union[int, float, Fraction]

MASS_TOL = 1e-12


@dataclass(frozen=True)
class OfflineVertex:
    id: int
    weight: float


@dataclass(frozen=True)
class OnlineType:
    """One realizable type of an arrival: its id within the distribution and
    the offline vertices it brings edges to."""

    id: int
    neighbors: frozenset[int]

    @property
    def is_empty(self) -> bool:
        return not self.neighbors


@dataclass(frozen=True)
class TypeDistribution:
    types: tuple[OnlineType, ...]
    masses: tuple[Mass, ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Iterable[int], Mass]]) -> "TypeDistribution":
        """Build a distribution from (neighbors, mass) pairs.

        Zero-mass types are pruned here so that every retained type is
        realizable; validation then only has to check normalization.
        """
        types: list[OnlineType] = []
        masses: list[Mass] = []
        for neighbors, mass in pairs:
            if mass == 0:
                continue
            types.append(OnlineType(len(types), frozenset(int(v) for v in neighbors)))
            masses.append(mass)
        return cls(tuple(types), tuple(masses))

    @property
    def support_size(self) -> int:
        return len(self.types)

    def mass_of(self, type_id: int) -> Mass:
        return self.masses[type_id]

    def is_exact(self) -> bool:
        return all(isinstance(m, (int, Fraction)) for m in self.masses)

    def value_key(self) -> tuple:
        return tuple((t.neighbors, m) for t, m in zip(self.types, self.masses))


@dataclass(frozen=True)
class Instance:
    offline: tuple[OfflineVertex, ...]
    arrivals: tuple[TypeDistribution, ...]
    iid_flag: bool

    @classmethod
    def make(
        cls,
        weights: Sequence[float],
        arrivals: Sequence[TypeDistribution],
    ) -> "Instance":
        offline = tuple(OfflineVertex(i, w) for i, w in enumerate(weights))
        arrivals = tuple(arrivals)
        iid = all(d.value_key() == arrivals[0].value_key() for d in arrivals) if arrivals else False
        return cls(offline, arrivals, iid)

    @property
    def n_offline(self) -> int:
        return len(self.offline)

    @property
    def n_online(self) -> int:
        return len(self.arrivals)

    def weights(self) -> tuple[float, ...]:
        return tuple(v.weight for v in self.offline)

    def is_exact(self) -> bool:
        return all(d.is_exact() for d in self.arrivals)

    def support_profile(self) -> tuple[int, ...]:
        return tuple(d.support_size for d in self.arrivals)


def validate(instance: Instance) -> None:
    """Check every structural invariant; raise on the first violation."""
    ids = [v.id for v in instance.offline]
    if ids != list(range(len(ids))):
        raise InvalidInstance("offline ids must be 0..|L|-1 in order")
    for v in instance.offline:
        if v.weight < 0:
            raise NegativeWeight(v.id, v.weight)
    if not instance.arrivals:
        raise InvalidInstance("instance must have at least one arrival")
    n_off = instance.n_offline
    for j, dist in enumerate(instance.arrivals):
        if len(dist.types) != len(dist.masses):
            raise InvalidInstance(f"arrival {j}: types/masses length mismatch")
        for t in dist.types:
            for u in t.neighbors:
                if not 0 <= u < n_off:
                    raise NeighborOutOfRange(j, t.id, u, n_off)
        if any(m < 0 for m in dist.masses):
            raise MassNotNormalized(j, sum(dist.masses))
        total = sum(dist.masses)
        if abs(total - 1) > MASS_TOL:
            raise MassNotNormalized(j, total)
        if [t.id for t in dist.types] != list(range(len(dist.types))):
            raise InvalidInstance(f"arrival {j}: type ids must be 0..k-1 in order")
    first = instance.arrivals[0].value_key()
    iid = all(d.value_key() == first for d in instance.arrivals)
    if iid != instance.iid_flag:
        raise InvalidInstance("iid_flag inconsistent with arrival distributions")


def generate_random(
    n_offline: int,
    n_online: int,
    types_per_vertex: int,
    edge_prob: float,
    weight_range: tuple[float, float],
    iid: bool,
    seed: int,
    *,
    mass_denominator: int | None = None,
) -> Instance:
    """Random instance with Bernoulli(edge_prob) neighbor sets.

    With ``mass_denominator`` set, type masses are Fractions over that
    denominator scale, making the instance exact for rational-mode runs.
    Deterministic given the seed.
    """
    if min(n_offline, n_online, types_per_vertex) < 1:
        raise ValueError("n_offline, n_online and types_per_vertex must be >= 1")
    if not 0 <= edge_prob <= 1:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = substream(seed, "generate-random")
    lo, hi = weight_range
    weights = [float(w) for w in rng.uniform(lo, hi, size=n_offline)]

    def one_distribution() -> TypeDistribution:
        pairs = []
        for _ in range(types_per_vertex):
            flips = rng.random(n_offline) < edge_prob
            pairs.append([u for u in range(n_offline) if flips[u]])
        if mass_denominator is not None:
            raw = [int(x) for x in rng.integers(1, mass_denominator + 1, size=types_per_vertex)]
            total = sum(raw)
            masses: list[Mass] = [Fraction(r, total) for r in raw]
        else:
            raw_f = rng.uniform(0.05, 1.0, size=types_per_vertex)
            masses = [float(x) for x in raw_f / raw_f.sum()]
        return TypeDistribution.from_pairs(zip(pairs, masses))

    if iid:
        dist = one_distribution()
        arrivals = [dist] * n_online
    else:
        arrivals = [one_distribution() for _ in range(n_online)]
    instance = Instance.make(weights, arrivals)
    validate(instance)
    return instance


def worst_case_instance(n: int, mu: float) -> tuple[Instance, PermutationRule]:
    """Single offline vertex, n Bernoulli arrivals, rule picking the latest hit.

    Each arrival realizes the edge type with mass eps where
    ``1 - (1 - eps)**n == mu``; otherwise it realizes the empty type.  The
    returned rule orders the edge types by descending arrival index, so the
    selected arrival is always the last realized one.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < mu <= 1:
        raise MuOutOfRange(mu)
    eps = 1.0 - (1.0 - mu) ** (1.0 / n)
    dist = TypeDistribution.from_pairs([([0], eps), ([], 1.0 - eps)])
    instance = Instance.make([1.0], [dist] * n)
    rule = PermutationRule(tuple((j, 0) for j in range(n - 1, -1, -1)))
    return instance, rule


def hardness_instance() -> Instance:
    """Two unit-weight offline vertices; the first arrival connects to both,
    the second connects to exactly one of them with equal probability.

    Every realization of this instance admits a perfect matching, yet no
    online algorithm can gather more than 3/4 of it in expectation.
    """
    first = TypeDistribution.from_pairs([([0, 1], Fraction(1))])
    second = TypeDistribution.from_pairs([([0], Fraction(1, 2)), ([1], Fraction(1, 2))])
    return Instance.make([1.0, 1.0], [first, second])


# ---------------------------------------------------------------------------
# Serialization.  Masses that are Fractions round-trip losslessly as "p/q"
# strings; floats stay JSON numbers.
# ---------------------------------------------------------------------------


def _mass_to_json(mass: Mass):
    if isinstance(mass, Fraction):
        return f"{mass.numerator}/{mass.denominator}"
    return mass


def _mass_from_json(value) -> Mass:
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, bool):
        raise InvalidInstance("mass must be numeric")
    return value


def instance_to_dict(instance: Instance) -> dict:
    return {
        "offline": [{"id": v.id, "weight": v.weight} for v in instance.offline],
        "arrivals": [
            {
                "types": [
                    {"neighbors": sorted(t.neighbors), "mass": _mass_to_json(m)}
                    for t, m in zip(d.types, d.masses)
                ]
            }
            for d in instance.arrivals
        ],
    }


def instance_from_dict(data: dict) -> Instance:
    offline = sorted(data["offline"], key=lambda v: v["id"])
    weights = [v["weight"] for v in offline]
    if [v["id"] for v in offline] != list(range(len(offline))):
        raise InvalidInstance("offline ids must be 0..|L|-1")
    arrivals = [
        TypeDistribution.from_pairs(
            (t["neighbors"], _mass_from_json(t["mass"])) for t in arrival["types"]
        )
        for arrival in data["arrivals"]
    ]
    return Instance.make(weights, arrivals)


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=2) + "\n")


def load_instance(path: str | Path, *, validate_instance: bool = True) -> Instance:
    instance = instance_from_dict(json.loads(Path(path).read_text()))
    if validate_instance:
        validate(instance)
    return instance
