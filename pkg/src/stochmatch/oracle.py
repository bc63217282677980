"""Offline optimum oracle and conditional match probabilities.

Only offline vertices carry weights, so the sets of simultaneously matchable
offline vertices form a transversal matroid and greedy-by-weight insertion
with augmenting paths is exactly optimal.  The matching is a pure function of
the realized graph and a tie-break policy:

* ``CANONICAL``: offline vertices are inserted in decreasing weight (ties by
  ascending id) and augmenting searches visit online vertices in index
  order.  Fully deterministic, used by default on non-identical arrivals.
* ``EXCHANGEABLE``: augmenting searches visit online vertices in the order
  of a uniformly random priority permutation that is part of the optimum's
  own randomness.  This makes identically distributed arrivals symmetric to
  the optimum, which the window identities require; exact enumeration
  averages over all n! priorities.

The exact oracle enumerates every type vector (and priority) once and then
answers arbitrary conditional queries by summation; with rational masses the
answers are exact.  Monte-Carlo mode resamples the unconditioned coordinates
instead and is deterministic given its seed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import BudgetExceeded, EmptyConditioning, NotIID
from .instances import Instance, Mass
from .rng import substream

DEFAULT_BUDGET = 10_000_000


class PolicyMode(str, Enum):
    CANONICAL = "canonical"
    EXCHANGEABLE = "exchangeable"


def default_policy_mode(instance: Instance) -> PolicyMode:
    return PolicyMode.EXCHANGEABLE if instance.iid_flag else PolicyMode.CANONICAL


@dataclass(frozen=True)
class TieBreakPolicy:
    """Concrete tie-break for one matching computation.

    ``priority`` lists online indices in visit order; required iff the mode
    is EXCHANGEABLE.
    """

    mode: PolicyMode
    priority: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.mode is PolicyMode.EXCHANGEABLE:
            if self.priority is None:
                raise ValueError("EXCHANGEABLE policy needs a priority permutation")
            if sorted(self.priority) != list(range(len(self.priority))):
                raise ValueError("priority must be a permutation of 0..n-1")


CANONICAL_POLICY = TieBreakPolicy(PolicyMode.CANONICAL)


@dataclass(frozen=True)
class RealizedGraph:
    weights: tuple[float, ...]
    neighbor_sets: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class SelectionOutcome:
    """Per offline vertex: the matched online index, or None."""

    matches: tuple[Optional[int], ...]

    def value(self, weights: Sequence[float]) -> float:
        return sum(w for w, j in zip(weights, self.matches) if j is not None)

    def matched_to(self, u: int) -> Optional[int]:
        return self.matches[u]


def realized_graph(instance: Instance, type_ids: Sequence[int]) -> RealizedGraph:
    nbrs = tuple(
        instance.arrivals[j].types[tid].neighbors for j, tid in enumerate(type_ids)
    )
    return RealizedGraph(instance.weights(), nbrs)


def max_weight_matching(graph: RealizedGraph, policy: TieBreakPolicy = CANONICAL_POLICY) -> SelectionOutcome:
    """Maximum-weight matching of the offline side, deterministic in (graph, policy)."""
    n = len(graph.neighbor_sets)
    n_off = len(graph.weights)
    if policy.mode is PolicyMode.EXCHANGEABLE:
        order = policy.priority
    else:
        order = tuple(range(n))
    rank = {j: k for k, j in enumerate(order)}
    adjacency: list[list[int]] = [[] for _ in range(n_off)]
    for j, nbrs in enumerate(graph.neighbor_sets):
        for u in nbrs:
            adjacency[u].append(j)
    for u in range(n_off):
        adjacency[u].sort(key=rank.__getitem__)

    online_owner: list[Optional[int]] = [None] * n

    def augment(u: int, visited: set[int]) -> bool:
        for j in adjacency[u]:
            if j in visited:
                continue
            visited.add(j)
            owner = online_owner[j]
            if owner is None or augment(owner, visited):
                online_owner[j] = u
                return True
        return False

    for u in sorted(range(n_off), key=lambda v: (-graph.weights[v], v)):
        augment(u, set())

    matches: list[Optional[int]] = [None] * n_off
    for j, u in enumerate(online_owner):
        if u is not None:
            matches[u] = j
    return SelectionOutcome(tuple(matches))


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JointAtom:
    types: tuple[int, ...]
    outcome: SelectionOutcome
    probability: Mass


class ExactOracle:
    """Full enumeration of (type vector, priority) pairs for one instance.

    Construction cost is the product of support sizes times (n! in
    EXCHANGEABLE mode); conditional queries afterwards are sums over the
    precomputed table and are memoized.
    """

    def __init__(
        self,
        instance: Instance,
        policy_mode: PolicyMode,
        budget: int = DEFAULT_BUDGET,
    ) -> None:
        self.instance = instance
        self.policy_mode = policy_mode
        n = instance.n_online
        supports = instance.support_profile()
        n_vecs = math.prod(supports)
        self.n_perms = math.factorial(n) if policy_mode is PolicyMode.EXCHANGEABLE else 1
        required = n_vecs * self.n_perms
        if required > budget:
            raise BudgetExceeded(required, budget)
        self.exact = instance.is_exact()

        if policy_mode is PolicyMode.EXCHANGEABLE:
            policies = [
                TieBreakPolicy(PolicyMode.EXCHANGEABLE, perm)
                for perm in itertools.permutations(range(n))
            ]
        else:
            policies = [CANONICAL_POLICY]

        self.tvecs: list[tuple[int, ...]] = []
        self.tvec_mass: list[Mass] = []
        # per tvec: {outcome matches tuple -> number of priorities producing it}
        self.outcome_counts: list[dict[tuple[Optional[int], ...], int]] = []
        # per tvec, per offline u: list over j of counts, plus unmatched count
        self.match_counts: list[list[list[int]]] = []

        weights = instance.weights()
        n_off = instance.n_offline
        for tvec in itertools.product(*(range(s) for s in supports)):
            mass: Mass = 1
            for j, tid in enumerate(tvec):
                mass = mass * instance.arrivals[j].masses[tid]
            graph = RealizedGraph(
                weights,
                tuple(instance.arrivals[j].types[tid].neighbors for j, tid in enumerate(tvec)),
            )
            counts: dict[tuple[Optional[int], ...], int] = {}
            per_u = [[0] * n for _ in range(n_off)]
            for policy in policies:
                outcome = max_weight_matching(graph, policy)
                counts[outcome.matches] = counts.get(outcome.matches, 0) + 1
            for matches, cnt in counts.items():
                for u, j in enumerate(matches):
                    if j is not None:
                        per_u[u][j] += cnt
            self.tvecs.append(tvec)
            self.tvec_mass.append(mass)
            self.outcome_counts.append(counts)
            self.match_counts.append(per_u)

        self._share = Fraction(1, self.n_perms) if self.exact else 1.0 / self.n_perms
        self._cond_cache: dict = {}

    # -- unconditional ------------------------------------------------------

    def match_prob(self, u: int, j: int) -> Mass:
        """Pr[(u, v_j) in the optimum]."""
        return self.cond_match_prob(u, j, (), ())

    def matched_prob(self, u: int) -> Mass:
        """Pr[u is matched in the optimum]."""
        return sum(self.match_prob(u, j) for j in range(self.instance.n_online))

    def joint_distribution(self) -> list[JointAtom]:
        atoms = []
        for tvec, mass, counts in zip(self.tvecs, self.tvec_mass, self.outcome_counts):
            for matches, cnt in sorted(counts.items(), key=lambda kv: str(kv[0])):
                atoms.append(JointAtom(tvec, SelectionOutcome(matches), mass * cnt * self._share))
        return atoms

    # -- conditional --------------------------------------------------------

    def _conditioning_mass(self, index_set: tuple[int, ...], assignment: tuple[int, ...]) -> Mass:
        mass: Mass = 1
        for i, tid in zip(index_set, assignment):
            mass = mass * self.instance.arrivals[i].masses[tid]
        return mass

    def cond_match_prob(
        self,
        u: int,
        j: int,
        index_set: Sequence[int],
        assignment: Sequence[int],
    ) -> Mass:
        """Pr[(u, v_j) in the optimum | types on index_set equal assignment]."""
        key = ("match", u, j, tuple(index_set), tuple(assignment))
        cached = self._cond_cache.get(key)
        if cached is not None:
            return cached
        value = self._cond_query(tuple(index_set), tuple(assignment), u, (j,))
        self._cond_cache[key] = value
        return value

    def cond_match_within(
        self,
        u: int,
        window: Sequence[int],
        index_set: Sequence[int],
        assignment: Sequence[int],
    ) -> Mass:
        """Pr[u matched to some arrival in `window` | conditioning]."""
        key = ("within", u, tuple(window), tuple(index_set), tuple(assignment))
        cached = self._cond_cache.get(key)
        if cached is not None:
            return cached
        value = self._cond_query(tuple(index_set), tuple(assignment), u, tuple(window))
        self._cond_cache[key] = value
        return value

    def _cond_query(
        self,
        index_set: tuple[int, ...],
        assignment: tuple[int, ...],
        u: int,
        targets: tuple[int, ...],
    ) -> Mass:
        denom = self._conditioning_mass(index_set, assignment)
        if denom == 0:
            raise EmptyConditioning(f"conditioning {dict(zip(index_set, assignment))} has zero mass")
        fixed = dict(zip(index_set, assignment))
        numer: Mass = 0
        for tvec, mass, per_u in zip(self.tvecs, self.tvec_mass, self.match_counts):
            if any(tvec[i] != tid for i, tid in fixed.items()):
                continue
            cnt = sum(per_u[u][j] for j in targets)
            if cnt:
                numer = numer + mass * cnt
        return numer * self._share / denom


def exact_enumerate(
    instance: Instance,
    policy_mode: PolicyMode,
    budget: int = DEFAULT_BUDGET,
) -> list[JointAtom]:
    """Joint distribution over (type vector, selection outcome)."""
    return ExactOracle(instance, policy_mode, budget).joint_distribution()


# ---------------------------------------------------------------------------
# Probability-mode plumbing shared with the estimator layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactMode:
    budget: int = DEFAULT_BUDGET


@dataclass(frozen=True)
class MonteCarloMode:
    samples: int
    seed: int


ProbabilityMode = Union[ExactMode, MonteCarloMode]


def samples_for_accuracy(epsilon: float = 0.005) -> int:
    """Sample count making the 3-sigma additive error of an indicator mean
    at most epsilon (worst case sigma = 1/2)."""
    return math.ceil((1.5 / epsilon) ** 2)


def _mc_cond_match_prob(
    instance: Instance,
    u: int,
    j: int,
    index_set: tuple[int, ...],
    assignment: tuple[int, ...],
    mode: MonteCarloMode,
    policy_mode: PolicyMode,
    call_index: int = 0,
) -> float:
    rng = substream(mode.seed, "cond-match-prob", call_index)
    n = instance.n_online
    fixed = dict(zip(index_set, assignment))
    free = [i for i in range(n) if i not in fixed]
    draws = {}
    for i in free:
        masses = [float(m) for m in instance.arrivals[i].masses]
        draws[i] = rng.choice(len(masses), size=mode.samples, p=masses)
    weights = instance.weights()
    hits = 0
    for k in range(mode.samples):
        tvec = [0] * n
        for i, tid in fixed.items():
            tvec[i] = tid
        for i in free:
            tvec[i] = int(draws[i][k])
        if policy_mode is PolicyMode.EXCHANGEABLE:
            policy = TieBreakPolicy(
                PolicyMode.EXCHANGEABLE, tuple(int(x) for x in rng.permutation(n))
            )
        else:
            policy = CANONICAL_POLICY
        graph = RealizedGraph(
            weights,
            tuple(instance.arrivals[i].types[tid].neighbors for i, tid in enumerate(tvec)),
        )
        if max_weight_matching(graph, policy).matches[u] == j:
            hits += 1
    return hits / mode.samples


def cond_match_prob(
    instance: Instance,
    u: int,
    j: int,
    index_set: Iterable[int],
    assignment: Iterable[int],
    mode: ProbabilityMode = ExactMode(),
    policy_mode: Optional[PolicyMode] = None,
    *,
    oracle: Optional[ExactOracle] = None,
    call_index: int = 0,
) -> Mass:
    """Pr[(u, v_j) in the optimum | realized types on index_set].

    ``index_set`` must contain ``j``.  Exact mode enumerates the remaining
    coordinates; Monte-Carlo mode resamples them ``mode.samples`` times and
    is deterministic given ``mode.seed``.
    """
    index_set = tuple(index_set)
    assignment = tuple(assignment)
    if j not in index_set:
        raise ValueError("index_set must contain the queried arrival")
    if policy_mode is None:
        policy_mode = default_policy_mode(instance)
    if isinstance(mode, MonteCarloMode):
        if _conditioning_mass_zero(instance, index_set, assignment):
            raise EmptyConditioning("conditioned types have zero probability")
        return _mc_cond_match_prob(
            instance, u, j, index_set, assignment, mode, policy_mode, call_index
        )
    if oracle is None:
        oracle = ExactOracle(instance, policy_mode, mode.budget)
    return oracle.cond_match_prob(u, j, index_set, assignment)


def _conditioning_mass_zero(
    instance: Instance, index_set: tuple[int, ...], assignment: tuple[int, ...]
) -> bool:
    mass = 1
    for i, tid in zip(index_set, assignment):
        mass = mass * instance.arrivals[i].masses[tid]
    return mass == 0


def window_match_probability(
    instance: Instance,
    u: int,
    ell: int,
    type_ids: Sequence[int],
    policy_mode: PolicyMode = PolicyMode.EXCHANGEABLE,
    *,
    budget: int = DEFAULT_BUDGET,
    oracle: Optional[ExactOracle] = None,
) -> Mass:
    """Probability that u is matched to one of the first ``ell`` arrivals,
    conditioned on their types.

    Requires identical arrival distributions: by exchangeability the value
    depends on the window only through its length, so the leading window is
    canonical.
    """
    if not instance.iid_flag:
        raise NotIID("window probabilities are defined for identical arrivals only")
    if not 1 <= ell <= instance.n_online:
        raise ValueError("window length out of range")
    if len(type_ids) != ell:
        raise ValueError("need one conditioned type per window position")
    if oracle is None:
        oracle = ExactOracle(instance, policy_mode, budget)
    window = tuple(range(ell))
    return oracle.cond_match_within(u, window, window, tuple(type_ids))
