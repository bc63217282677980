"""Fractional online algorithms built from conditional match probabilities.

Each estimator assigns arrival ``j`` a fraction vector whose entry for an
offline vertex ``u`` is the probability that the optimum matches ``(u, v_j)``
conditioned on some subset of the realized types that always contains ``j``
itself.  Conditioning subsets distinguish the family members:

* independent: only the current type ``{j}``;
* fully correlated: the whole history ``[0..j]``;
* even mix: the average of the two;
* windowed mix: a convex combination of the last-``r`` windows, weights
  ``beta/n`` for ``r <= j`` and the remainder on the full-history window;
* subset: an arbitrary caller-supplied history subset containing ``j``;
* rule independent: same as independent but against an explicit permutation
  selection rule for a single offline vertex instead of the optimum.

By the tower rule every member is unbiased: the expected fraction equals the
unconditional probability that the optimum (or the rule) picks ``(u, v_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .errors import NotIID
from .instances import Instance, Mass
from .oracle import (
    ExactMode,
    ExactOracle,
    MonteCarloMode,
    PolicyMode,
    ProbabilityMode,
    cond_match_prob,
    default_policy_mode,
)
from .rng import substream
from .rules import PermutationRule, permutation_select

__all__ = [
    "PermutationRule",
    "permutation_select",
    "EstimatorKind",
    "EstimatorSpec",
    "FractionalOutcome",
    "independent_fraction",
    "fully_correlated_fraction",
    "even_mix_fraction",
    "windowed_fraction",
    "windowed_mix_fraction",
    "subset_fraction",
    "rule_independent_fraction",
    "rule_selection_distribution",
    "run_fractional",
]

DEFAULT_BETA = 0.79


class EstimatorKind:
    INDEPENDENT = "independent"
    FULLY_CORRELATED = "fully_correlated"
    EVEN_MIX = "even_mix"
    WINDOWED_MIX = "windowed_mix"
    SUBSET = "subset"
    RULE_INDEPENDENT = "rule_independent"

    ALL = (INDEPENDENT, FULLY_CORRELATED, EVEN_MIX, WINDOWED_MIX, SUBSET, RULE_INDEPENDENT)


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and how its probabilities are computed.

    ``policy_mode=None`` resolves to EXCHANGEABLE on identical arrivals and
    CANONICAL otherwise.  ``subset_selector(j, n)`` must return an index set
    within ``[0..j]`` containing ``j``.  When ``rule`` is set, every kind
    conditions the rule's selection indicator instead of the optimum's, and
    only ``rule_offline`` receives fractions.
    """

    kind: str
    beta: Mass = DEFAULT_BETA
    policy_mode: Optional[PolicyMode] = None
    mode: ProbabilityMode = field(default_factory=ExactMode)
    subset_selector: Optional[Callable[[int, int], Iterable[int]]] = None
    rule: Optional[PermutationRule] = None
    rule_offline: int = 0

    def __post_init__(self) -> None:
        if self.kind not in EstimatorKind.ALL:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == EstimatorKind.WINDOWED_MIX and not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if self.kind == EstimatorKind.SUBSET and self.subset_selector is None:
            raise ValueError("subset estimator needs a selector")
        if self.kind == EstimatorKind.RULE_INDEPENDENT and self.rule is None:
            raise ValueError("rule estimator needs a permutation rule")

    def resolve_policy(self, instance: Instance) -> PolicyMode:
        return self.policy_mode if self.policy_mode is not None else default_policy_mode(instance)


@dataclass(frozen=True)
class FractionalOutcome:
    """Fraction matrix of one online run: ``x[u][j]`` plus row sums ``y[u]``."""

    x: tuple[tuple[Mass, ...], ...]
    y: tuple[Mass, ...]
    types: tuple[int, ...]


# ---------------------------------------------------------------------------
# Optimum-based fractions
# ---------------------------------------------------------------------------


def independent_fraction(
    instance: Instance,
    u: int,
    j: int,
    t_j: int,
    mode: ProbabilityMode = ExactMode(),
    policy_mode: Optional[PolicyMode] = None,
    *,
    oracle: Optional[ExactOracle] = None,
    call_index: int = 0,
) -> Mass:
    """Match probability of (u, v_j) conditioned on the current type only."""
    return cond_match_prob(
        instance, u, j, (j,), (t_j,), mode, policy_mode, oracle=oracle, call_index=call_index
    )


def fully_correlated_fraction(
    instance: Instance,
    u: int,
    j: int,
    prefix_types: Sequence[int],
    mode: ProbabilityMode = ExactMode(),
    policy_mode: Optional[PolicyMode] = None,
    *,
    oracle: Optional[ExactOracle] = None,
    call_index: int = 0,
) -> Mass:
    """Match probability of (u, v_j) conditioned on the whole arrived history."""
    if len(prefix_types) < j + 1:
        raise ValueError("need the types of all arrivals up to j")
    index_set = tuple(range(j + 1))
    return cond_match_prob(
        instance,
        u,
        j,
        index_set,
        tuple(prefix_types[: j + 1]),
        mode,
        policy_mode,
        oracle=oracle,
        call_index=call_index,
    )


def even_mix_fraction(
    instance: Instance,
    u: int,
    j: int,
    prefix_types: Sequence[int],
    mode: ProbabilityMode = ExactMode(),
    policy_mode: Optional[PolicyMode] = None,
    *,
    oracle: Optional[ExactOracle] = None,
    call_index: int = 0,
) -> Mass:
    ind = independent_fraction(
        instance, u, j, prefix_types[j], mode, policy_mode, oracle=oracle, call_index=call_index
    )
    cor = fully_correlated_fraction(
        instance, u, j, prefix_types, mode, policy_mode, oracle=oracle, call_index=call_index + 1
    )
    return (ind + cor) / 2


def windowed_fraction(
    instance: Instance,
    u: int,
    j: int,
    r: int,
    window_types: Sequence[int],
    mode: ProbabilityMode = ExactMode(),
    policy_mode: Optional[PolicyMode] = None,
    *,
    oracle: Optional[ExactOracle] = None,
    call_index: int = 0,
) -> Mass:
    """Match probability of (u, v_j) conditioned on the last r arrived types.

    ``window_types`` are the types of arrivals ``j-r+1 .. j``.  r=1 is the
    independent estimator; r=j+1 is the fully correlated one.
    """
    if not instance.iid_flag:
        raise NotIID("windowed estimators require identical arrivals")
    if not 1 <= r <= j + 1:
        raise ValueError("window length must lie in [1, j+1]")
    if len(window_types) != r:
        raise ValueError("need one type per window position")
    index_set = tuple(range(j - r + 1, j + 1))
    return cond_match_prob(
        instance,
        u,
        j,
        index_set,
        tuple(window_types),
        mode,
        policy_mode,
        oracle=oracle,
        call_index=call_index,
    )


def windowed_mix_fraction(
    instance: Instance,
    u: int,
    j: int,
    prefix_types: Sequence[int],
    beta: Mass = DEFAULT_BETA,
    mode: ProbabilityMode = ExactMode(),
    policy_mode: Optional[PolicyMode] = None,
    *,
    oracle: Optional[ExactOracle] = None,
    call_index: int = 0,
) -> Mass:
    """Convex mix of all windows ending at j.

    Window r < j+1 gets weight beta/n; the full-history window absorbs the
    rest, so the weights always sum to one and the mix stays unbiased.
    """
    if not instance.iid_flag:
        raise NotIID("the windowed mix requires identical arrivals")
    n = instance.n_online
    total: Mass = 0
    for r in range(1, j + 1):
        x_r = windowed_fraction(
            instance,
            u,
            j,
            r,
            prefix_types[j - r + 1 : j + 1],
            mode,
            policy_mode,
            oracle=oracle,
            call_index=call_index + r,
        )
        total = total + (beta * x_r) / n
    x_full = windowed_fraction(
        instance,
        u,
        j,
        j + 1,
        prefix_types[: j + 1],
        mode,
        policy_mode,
        oracle=oracle,
        call_index=call_index,
    )
    if j == 0:
        return x_full  # single window with full weight
    return total + (1 - (j * beta) / n) * x_full


def subset_fraction(
    instance: Instance,
    u: int,
    j: int,
    index_set: Iterable[int],
    prefix_types: Sequence[int],
    mode: ProbabilityMode = ExactMode(),
    policy_mode: Optional[PolicyMode] = None,
    *,
    oracle: Optional[ExactOracle] = None,
    call_index: int = 0,
) -> Mass:
    """Match probability conditioned on an arbitrary arrived subset containing j."""
    index_set = tuple(sorted(set(index_set)))
    if j not in index_set:
        raise ValueError("index set must contain the current arrival")
    if index_set and (index_set[0] < 0 or index_set[-1] > j):
        raise ValueError("index set must only reference arrived vertices")
    assignment = tuple(prefix_types[i] for i in index_set)
    return cond_match_prob(
        instance, u, j, index_set, assignment, mode, policy_mode, oracle=oracle, call_index=call_index
    )


# ---------------------------------------------------------------------------
# Rule-based fractions
# ---------------------------------------------------------------------------


def rule_selection_distribution(
    instance: Instance,
    rule: PermutationRule,
    conditioned: Mapping[int, int],
) -> dict[int, Mass]:
    """Exact Pr[rule selects j | fixed types] for every arrival j.

    Walks the rule's pairs once.  A pair (i, t) fires iff arrival i realizes
    t and no earlier pair fired; across arrivals the realizations are
    independent, so the firing probability is the pair's own mass times the
    survival factors of all other arrivals.
    """
    selected: dict[int, Mass] = {}
    # survival factor per unconditioned arrival: mass not yet passed over
    survive: dict[int, Mass] = {}
    dead = False
    for i, tid in rule.pairs:
        if dead:
            break
        if i in conditioned:
            if conditioned[i] != tid:
                continue
            prob = _survival_product(survive, exclude=i)
            selected[i] = selected.get(i, 0) + prob
            dead = True
        else:
            mass = instance.arrivals[i].masses[tid]
            prob = mass * _survival_product(survive, exclude=i)
            selected[i] = selected.get(i, 0) + prob
            survive[i] = survive.get(i, 1) - mass
    return selected


def _survival_product(survive: Mapping[int, Mass], exclude: int) -> Mass:
    prod: Mass = 1
    for i in sorted(survive):
        if i != exclude:
            prod = prod * survive[i]
    return prod


def rule_independent_fraction(
    rule: PermutationRule,
    instance: Instance,
    j: int,
    t_j: int,
    mode: ProbabilityMode = ExactMode(),
) -> Mass:
    """Pr[rule selects j | t_j], all other arrivals resampled."""
    if isinstance(mode, MonteCarloMode):
        return _mc_rule_fraction(rule, instance, j, {j: t_j}, mode)
    return rule_selection_distribution(instance, rule, {j: t_j}).get(j, 0)


def rule_conditional_fraction(
    rule: PermutationRule,
    instance: Instance,
    j: int,
    conditioned: Mapping[int, int],
    mode: ProbabilityMode = ExactMode(),
) -> Mass:
    """Pr[rule selects j | an arbitrary set of fixed types containing j]."""
    if j not in conditioned:
        raise ValueError("conditioning must fix the current arrival's type")
    if isinstance(mode, MonteCarloMode):
        return _mc_rule_fraction(rule, instance, j, conditioned, mode)
    return rule_selection_distribution(instance, rule, conditioned).get(j, 0)


def _mc_rule_fraction(
    rule: PermutationRule,
    instance: Instance,
    j: int,
    conditioned: Mapping[int, int],
    mode: MonteCarloMode,
    call_index: int = 0,
) -> float:
    rng = substream(mode.seed, "rule-fraction", call_index)
    n = instance.n_online
    free = [i for i in range(n) if i not in conditioned]
    draws = {
        i: rng.choice(
            instance.arrivals[i].support_size,
            size=mode.samples,
            p=[float(m) for m in instance.arrivals[i].masses],
        )
        for i in free
    }
    hits = 0
    tvec = [0] * n
    for i, tid in conditioned.items():
        tvec[i] = tid
    for k in range(mode.samples):
        for i in free:
            tvec[i] = int(draws[i][k])
        if permutation_select(rule, tvec) == j:
            hits += 1
    return hits / mode.samples


# ---------------------------------------------------------------------------
# Online driver
# ---------------------------------------------------------------------------

_FEASIBILITY_TOL = 1e-9


def run_fractional(
    instance: Instance,
    spec: EstimatorSpec,
    type_ids: Sequence[int],
    *,
    oracle: Optional[ExactOracle] = None,
) -> FractionalOutcome:
    """Run one online pass over a realized type vector.

    The fraction vector of arrival j is a function of the first j+1 realized
    types only.  If Monte-Carlo noise pushes a column sum above one, the
    column is scaled back onto the simplex; exact mode never triggers this.
    """
    n = instance.n_online
    n_off = instance.n_offline
    if len(type_ids) != n:
        raise ValueError("need one realized type per arrival")
    policy = spec.resolve_policy(instance)
    if spec.kind == EstimatorKind.WINDOWED_MIX and not instance.iid_flag:
        raise NotIID("the windowed mix requires identical arrivals")
    rule_based = spec.rule is not None or spec.kind == EstimatorKind.RULE_INDEPENDENT
    needs_oracle = not rule_based and isinstance(spec.mode, ExactMode)
    if needs_oracle and oracle is None:
        oracle = ExactOracle(instance, policy, spec.mode.budget)

    columns: list[list[Mass]] = []
    for j in range(n):
        prefix = tuple(type_ids[: j + 1])
        call_base = j * (n + 2) * n_off
        column = [
            _fraction_for(instance, spec, u, j, prefix, policy, oracle, call_base + u * (n + 2))
            for u in range(n_off)
        ]
        total = sum(column)
        if total > 1:
            if isinstance(spec.mode, ExactMode) and total <= 1 + _FEASIBILITY_TOL:
                pass  # rounding noise only; keep the exact values
            else:
                column = [x / total for x in column]
        columns.append(column)

    x_rows = tuple(tuple(columns[j][u] for j in range(n)) for u in range(n_off))
    y = tuple(sum(row) for row in x_rows)
    return FractionalOutcome(x_rows, y, tuple(type_ids))


def _conditioning_sets(spec: EstimatorSpec, j: int, n: int) -> list[tuple[Mass, tuple[int, ...]]]:
    """(weight, index set) terms of the kind's conditional-probability mix."""
    kind = spec.kind
    if kind in (EstimatorKind.INDEPENDENT, EstimatorKind.RULE_INDEPENDENT):
        return [(1, (j,))]
    if kind == EstimatorKind.FULLY_CORRELATED:
        return [(1, tuple(range(j + 1)))]
    if kind == EstimatorKind.EVEN_MIX:
        return [(Fraction(1, 2), (j,)), (Fraction(1, 2), tuple(range(j + 1)))]
    if kind == EstimatorKind.WINDOWED_MIX:
        if j == 0:
            return [(1, (0,))]
        terms: list[tuple[Mass, tuple[int, ...]]] = [
            (spec.beta / n, tuple(range(j - r + 1, j + 1))) for r in range(1, j + 1)
        ]
        terms.append((1 - (j * spec.beta) / n, tuple(range(j + 1))))
        return terms
    if kind == EstimatorKind.SUBSET:
        index_set = tuple(sorted(set(spec.subset_selector(j, n))))
        if j not in index_set or index_set[0] < 0 or index_set[-1] > j:
            raise ValueError("subset selector must return a set within [0..j] containing j")
        return [(1, index_set)]
    raise ValueError(f"unknown estimator kind {kind!r}")


def _rule_fraction_for(
    instance: Instance,
    spec: EstimatorSpec,
    u: int,
    j: int,
    prefix: tuple[int, ...],
) -> Mass:
    if u != spec.rule_offline:
        return 0
    value: Mass = 0
    for weight, index_set in _conditioning_sets(spec, j, instance.n_online):
        conditioned = {i: prefix[i] for i in index_set}
        value = value + weight * rule_conditional_fraction(
            spec.rule, instance, j, conditioned, spec.mode
        )
    return value


def _fraction_for(
    instance: Instance,
    spec: EstimatorSpec,
    u: int,
    j: int,
    prefix: tuple[int, ...],
    policy: PolicyMode,
    oracle: Optional[ExactOracle],
    call_index: int,
) -> Mass:
    kind = spec.kind
    if spec.rule is not None or kind == EstimatorKind.RULE_INDEPENDENT:
        return _rule_fraction_for(instance, spec, u, j, prefix)
    if kind == EstimatorKind.INDEPENDENT:
        return independent_fraction(
            instance, u, j, prefix[j], spec.mode, policy, oracle=oracle, call_index=call_index
        )
    if kind == EstimatorKind.FULLY_CORRELATED:
        return fully_correlated_fraction(
            instance, u, j, prefix, spec.mode, policy, oracle=oracle, call_index=call_index
        )
    if kind == EstimatorKind.EVEN_MIX:
        return even_mix_fraction(
            instance, u, j, prefix, spec.mode, policy, oracle=oracle, call_index=call_index
        )
    if kind == EstimatorKind.WINDOWED_MIX:
        return windowed_mix_fraction(
            instance,
            u,
            j,
            prefix,
            spec.beta,
            spec.mode,
            policy,
            oracle=oracle,
            call_index=call_index,
        )
    if kind == EstimatorKind.SUBSET:
        index_set = spec.subset_selector(j, instance.n_online)
        return subset_fraction(
            instance, u, j, index_set, prefix, spec.mode, policy, oracle=oracle, call_index=call_index
        )
    raise ValueError(f"unknown estimator kind {kind!r}")
