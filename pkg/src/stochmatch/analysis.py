"""Certification of competitive-ratio constants and structural inequalities.

Four ingredients:

* a catalog of quadratic lower bounds ``a*y^2 + b*y + d <= f(y)`` that turn
  second-moment caps into ratio constants, with a grid verifier for the
  domination and a minimizer for the implied constant;
* the online-vertex splitting transformation, which preserves the mean of a
  permutation rule's accumulated fraction while weakly decreasing any concave
  score of it, driving every distribution toward Bernoulli form;
* the regularized worst-case family: n Bernoulli arrivals with a
  latest-realized-wins rule, sampled in closed form for the ratio-vs-mean
  experiment (no matching solves needed);
* the two-arrival hardness search showing no online algorithm beats 3/4.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import BoundViolated, EpsilonOutOfRange, LemmaViolated, TypeNotInRule
from .estimators import rule_conditional_fraction, rule_selection_distribution
from .evaluation import ocs_guarantee
from .instances import Instance, Mass, TypeDistribution
from .oracle import ExactOracle, PolicyMode, default_policy_mode
from .rng import substream
from .rules import PermutationRule

# ---------------------------------------------------------------------------
# Quadratic lower bounds
# ---------------------------------------------------------------------------

TARGET_MIN1 = "min1"
TARGET_P = "p"

GAMMA_WARMUP = "warmup"  # gamma(mu) = mu + mu^2/2
GAMMA_IID = "iid"  # gamma(mu) = 1.05771*mu + 0.231*mu^2

_GAMMA_COEFS = {GAMMA_WARMUP: (1.0, 0.5), GAMMA_IID: (1.05771, 0.231)}


@dataclass(frozen=True)
class QuadraticBound:
    """A quadratic minorant of a concave score, valid on a mean range."""

    a: float
    b: float
    d: float
    target: str
    mu_lo: float
    mu_hi: float
    gamma_kind: str
    case: str

    def __post_init__(self) -> None:
        if self.a > 0:
            raise ValueError("quadratic coefficient must be non-positive")
        if self.mu_lo > self.mu_hi:
            raise ValueError("empty mu range")

    def gamma(self, mu):
        lin, quad = _GAMMA_COEFS[self.gamma_kind]
        return lin * mu + quad * mu * mu

    def target_values(self, y):
        if self.target == TARGET_MIN1:
            return np.minimum(y, 1.0)
        return ocs_guarantee(y)


@dataclass(frozen=True)
class BoundCatalog:
    bounds: tuple[QuadraticBound, ...]

    def case(self, name: str) -> tuple[QuadraticBound, ...]:
        return tuple(b for b in self.bounds if b.case == name)

    CASES = ("a", "b", "c", "d")


# Minimum ratio each catalog case certifies.
CASE_RATIO_TARGETS = {"a": 0.646, "b": 0.634, "c": 0.731, "d": 0.704}


def builtin_bounds() -> BoundCatalog:
    """The full coefficient catalog, one entry per (case, mean range)."""
    rows = [
        # case a: fractional score under the even-mix moment cap
        (-0.3, 1.0, 0.0, TARGET_MIN1, 0.0, 0.35, GAMMA_WARMUP, "a"),
        (-0.35368, 1.20735, -0.03040, TARGET_MIN1, 0.35, 1.0, GAMMA_WARMUP, "a"),
        # case b: rounded score under the even-mix moment cap
        (-0.3, 1.0, 0.0, TARGET_P, 0.0, 0.4, GAMMA_WARMUP, "b"),
        (-0.3099, 1.1108, -0.0113, TARGET_P, 0.4, 1.0, GAMMA_WARMUP, "b"),
        # case c: fractional score under the windowed-mix moment cap
        (-0.25, 1.0, 0.0, TARGET_MIN1, 0.0, 0.07, GAMMA_IID, "c"),
        (-0.2622, 1.0242, -0.0006, TARGET_MIN1, 0.07, 0.21, GAMMA_IID, "c"),
        (-0.2907, 1.0813, -0.0057, TARGET_MIN1, 0.21, 0.37, GAMMA_IID, "c"),
        (-0.3265, 1.1528, -0.0179, TARGET_MIN1, 0.37, 0.64, GAMMA_IID, "c"),
        (-0.3714, 1.2427, -0.0397, TARGET_MIN1, 0.64, 0.78, GAMMA_IID, "c"),
        (-0.4295, 1.3589, -0.0750, TARGET_MIN1, 0.78, 0.91, GAMMA_IID, "c"),
        (-0.4654, 1.4307, -0.0997, TARGET_MIN1, 0.91, 1.0, GAMMA_IID, "c"),
        # case d: rounded score under the windowed-mix moment cap
        (-0.252, 1.0, 0.0, TARGET_P, 0.0, 0.4, GAMMA_IID, "d"),
        (-0.347711, 1.180665, -0.028471, TARGET_P, 0.4, 1.0, GAMMA_IID, "d"),
    ]
    return BoundCatalog(tuple(QuadraticBound(*row) for row in rows))


@dataclass(frozen=True)
class BoundVerification:
    max_gap: float
    y_star: float
    points: int


def verify_lower_bound(
    bound: QuadraticBound, grid_step: float = 1e-4, tol: float = 1e-6
) -> BoundVerification:
    """Check quadratic domination on [0, y*].

    y* is the quadratic's larger root: beyond it the quadratic is
    non-positive while both score functions are non-negative, so the tail
    needs no scanning.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    a, b, d = bound.a, bound.b, bound.d
    if a == 0:
        raise ValueError("degenerate quadratic")
    disc = b * b - 4 * a * d
    if disc <= 0:
        return BoundVerification(float("-inf"), 0.0, 0)
    y_star = (-b - math.sqrt(disc)) / (2 * a)
    if y_star <= 0:
        return BoundVerification(float("-inf"), 0.0, 0)
    ys = np.arange(0.0, y_star + grid_step, grid_step)
    quad = a * ys * ys + b * ys + d
    gaps = quad - bound.target_values(ys)
    worst = int(np.argmax(gaps))
    max_gap = float(gaps[worst])
    if max_gap > tol:
        raise BoundViolated(float(ys[worst]), max_gap)
    return BoundVerification(max_gap, y_star, len(ys))


def ratio_from_bound(bound: QuadraticBound, mu_step: float = 1e-4) -> float:
    """Worst ratio the bound certifies on its mean range:
    min over mu of (a*gamma(mu) + b*mu + d)/mu."""
    lin, quad = _GAMMA_COEFS[bound.gamma_kind]

    def value(mu: float) -> float:
        if mu == 0.0:
            if bound.d != 0:
                raise ValueError("ratio undefined at mu=0 with nonzero offset")
            return bound.a * lin + bound.b
        return (bound.a * bound.gamma(mu) + bound.b * mu + bound.d) / mu

    lo, hi = bound.mu_lo, bound.mu_hi
    grid = np.arange(lo, hi + mu_step / 2, mu_step)
    best = min(value(float(m)) for m in grid)
    return min(best, value(lo), value(hi))


def certify_case(catalog: BoundCatalog, case: str, grid_step: float = 1e-4, tol: float = 1e-6) -> float:
    """Verify every bound of a case and return the certified ratio constant."""
    bounds = catalog.case(case)
    if not bounds:
        raise ValueError(f"unknown case {case!r}")
    for bound in bounds:
        verify_lower_bound(bound, grid_step, tol)
    return min(ratio_from_bound(b) for b in bounds)


# ---------------------------------------------------------------------------
# Splitting an online vertex
# ---------------------------------------------------------------------------


def split_vertex(
    instance: Instance,
    rule: PermutationRule,
    j: int,
    epsilon: Mass,
) -> tuple[Instance, PermutationRule]:
    """Split arrival j into a scaled remainder plus a Bernoulli(epsilon) twin.

    Let ``a1`` be the scan-earliest rule type of arrival j with mass ``m1``.
    The remainder keeps every type of arrival j with masses divided by
    ``1 - epsilon`` except that ``a1`` keeps ``(m1 - epsilon)/(1 - epsilon)``
    (dropped entirely at epsilon == m1).  The twin realizes a copy of ``a1``
    with mass epsilon and is ranked directly after the remainder's ``a1`` in
    the rewritten rule, so the selection distribution's mean is unchanged.
    """
    if not 0 <= j < instance.n_online:
        raise ValueError("arrival index out of range")
    selected = rule.selected_type_ids(j)
    if not selected:
        raise TypeNotInRule(j)
    a1 = selected[0]
    dist = instance.arrivals[j]
    m1 = dist.masses[a1]
    if not 0 < epsilon <= m1:
        raise EpsilonOutOfRange(epsilon, m1)

    keep_remainder = epsilon != 1  # epsilon == 1 forces m1 == 1: arrival was deterministic
    keep_a1 = epsilon != m1

    remap: dict[int, int] = {}
    remainder_pairs: list[tuple[frozenset, Mass]] = []
    if keep_remainder:
        denom = 1 - epsilon
        for t, m in zip(dist.types, dist.masses):
            if t.id == a1:
                if keep_a1:
                    remap[t.id] = len(remainder_pairs)
                    remainder_pairs.append((t.neighbors, (m1 - epsilon) / denom))
            else:
                remap[t.id] = len(remainder_pairs)
                remainder_pairs.append((t.neighbors, m / denom))
    remainder = TypeDistribution.from_pairs(remainder_pairs) if remainder_pairs else None

    a1_neighbors = dist.types[a1].neighbors
    twin = TypeDistribution.from_pairs([(a1_neighbors, epsilon), (frozenset(), 1 - epsilon)])

    arrivals = list(instance.arrivals)
    inserted = [d for d in (remainder, twin) if d is not None]
    arrivals[j : j + 1] = inserted
    shift = len(inserted) - 1
    j_remainder = j if remainder is not None else None
    j_twin = j + (1 if remainder is not None else 0)

    new_pairs: list[tuple[int, int]] = []
    for i, tid in rule.pairs:
        if i < j:
            new_pairs.append((i, tid))
        elif i > j:
            new_pairs.append((i + shift, tid))
        elif tid == a1:
            if keep_a1 and j_remainder is not None:
                new_pairs.append((j_remainder, remap[a1]))
            new_pairs.append((j_twin, 0))
        else:
            if j_remainder is None:
                raise TypeNotInRule(j)  # unreachable: other rule types imply mass < 1
            new_pairs.append((j_remainder, remap[tid]))

    new_instance = Instance.make([v.weight for v in instance.offline], arrivals)
    return new_instance, PermutationRule(tuple(new_pairs))


def bernoullize(instance: Instance, rule: PermutationRule) -> tuple[Instance, PermutationRule]:
    """Iterate splits with epsilon equal to the earliest rule type's mass
    until every arrival has at most one rule-selected type."""
    while True:
        target = None
        for j in range(instance.n_online):
            if len(rule.selected_type_ids(j)) >= 2:
                target = j
                break
        if target is None:
            return instance, rule
        a1 = rule.selected_type_ids(target)[0]
        eps = instance.arrivals[target].masses[a1]
        instance, rule = split_vertex(instance, rule, target, eps)


def rule_mean(instance: Instance, rule: PermutationRule) -> Mass:
    """Expected accumulated fraction of the rule's target vertex: the
    probability that the rule selects anything."""
    return sum(rule_selection_distribution(instance, rule, {}).values())


def rule_score_expectations(instance: Instance, rule: PermutationRule) -> tuple[Mass, Mass, float]:
    """(E[y], E[min(y,1)], E[p(y)]) for the rule's independent estimator,
    by exact enumeration of the product support."""
    per_arrival: list[list[Mass]] = []
    for i, dist in enumerate(instance.arrivals):
        per_arrival.append(
            [rule_selection_distribution(instance, rule, {i: tid}).get(i, 0) for tid in range(dist.support_size)]
        )
    mean: Mass = 0
    emin: Mass = 0
    eocs = 0.0
    for tvec in itertools.product(*(range(d.support_size) for d in instance.arrivals)):
        mass: Mass = 1
        for i, tid in enumerate(tvec):
            mass = mass * instance.arrivals[i].masses[tid]
        y: Mass = 0
        for i, tid in enumerate(tvec):
            y = y + per_arrival[i][tid]
        mean = mean + mass * y
        emin = emin + mass * min(y, 1 if isinstance(y, (int, Fraction)) else 1.0)
        eocs = eocs + float(mass) * ocs_guarantee(float(y))
    return mean, emin, eocs


# ---------------------------------------------------------------------------
# Worst-case family experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentPoint:
    mu: float
    frac_ratio: float
    ocs_ratio: float
    stderr_frac: float
    stderr_ocs: float


def default_mu_grid() -> list[float]:
    return [round(k / 100, 2) for k in range(1, 101)]


def sample_worst_case_y(n: int, eps: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw accumulated fractions from the n-arrival Bernoulli family.

    Each arrival i realizes independently with probability eps and then
    contributes (1-eps)^(n-1-i); realized positions are generated by
    geometric gap skipping, so the cost scales with the number of hits, not
    with n."""
    if eps >= 1.0:
        return np.ones(size)
    q = 1.0 - eps
    y = np.zeros(size)
    pos = rng.geometric(eps, size) - 1
    active = pos < n
    while active.any():
        idx = np.nonzero(active)[0]
        y[idx] += q ** (n - 1 - pos[idx])
        pos[idx] += rng.geometric(eps, idx.size)
        active[idx] = pos[idx] < n
    return y


def _ratio_and_stderr(score: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    t = score.size
    ratio = float(score.mean() / y.mean())
    loo = (score.sum() - score) / (y.sum() - y)
    stderr = float(np.sqrt((t - 1) * np.mean((loo - loo.mean()) ** 2)))
    return ratio, stderr


def worst_case_experiment(
    n: int,
    mu_grid: Optional[Sequence[float]] = None,
    samples: int = 200_000,
    seed: int = 0,
) -> list[ExperimentPoint]:
    """Ratio curve of the worst-case family over a grid of means."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if mu_grid is None:
        mu_grid = default_mu_grid()
    points = []
    for k, mu in enumerate(mu_grid):
        if not 0 < mu <= 1:
            raise ValueError(f"mu={mu} outside (0, 1]")
        rng = substream(seed, "worst-case-experiment", k)
        eps = 1.0 - (1.0 - mu) ** (1.0 / n)
        y = sample_worst_case_y(n, eps, samples, rng)
        frac, se_f = _ratio_and_stderr(np.minimum(y, 1.0), y)
        ocs, se_o = _ratio_and_stderr(ocs_guarantee(y), y)
        points.append(ExperimentPoint(float(mu), frac, ocs, se_f, se_o))
    return points


def worst_case_expectations(n: int, mu: float) -> tuple[float, float, float]:
    """Exact (E[y], E[min(y,1)], E[p(y)]) for the n-arrival family.

    Enumerates all 2^n realization patterns; intended as a small-n oracle."""
    if n > 24:
        raise ValueError("exact enumeration is limited to n <= 24")
    eps = 1.0 - (1.0 - mu) ** (1.0 / n)
    q = 1.0 - eps
    ys = np.zeros(1)
    pr = np.ones(1)
    for m in range(n):
        ys = np.concatenate([ys, ys + q**m])
        pr = np.concatenate([pr * (1 - eps), pr * eps])
    ey = float(pr @ ys)
    emin = float(pr @ np.minimum(ys, 1.0))
    eocs = float(pr @ ocs_guarantee(ys))
    return ey, emin, eocs


EXPERIMENT_CSV_HEADER = ["mu", "frac_ratio", "ocs_ratio", "stderr_frac", "stderr_ocs"]


def experiment_to_csv(points: Sequence[ExperimentPoint], path, metadata: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in metadata:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(EXPERIMENT_CSV_HEADER)
        for p in points:
            writer.writerow(
                [
                    format(p.mu, ".12g"),
                    format(p.frac_ratio, ".12g"),
                    format(p.ocs_ratio, ".12g"),
                    format(p.stderr_frac, ".12g"),
                    format(p.stderr_ocs, ".12g"),
                ]
            )


# ---------------------------------------------------------------------------
# Hardness search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HardnessResult:
    best_value: float
    best_ratio: float
    best_split: tuple[float, float]


def hardness_search(grid_step: float = 1e-3) -> HardnessResult:
    """Best expected value any first-arrival split achieves on the two-vertex
    hard instance, against an offline optimum of 2.

    The second arrival's action is forced (match its realized neighbor
    fully), so sweeping the first-arrival split (x1, x2) is exact.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    xs = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    x1, x2 = np.meshgrid(xs, xs, indexing="ij")
    feasible = x1 + x2 <= 1.0 + 1e-15
    value = 0.5 * (np.minimum(x1 + 1.0, 1.0) + np.minimum(x2, 1.0)) + 0.5 * (
        np.minimum(x1, 1.0) + np.minimum(x2 + 1.0, 1.0)
    )
    value = np.where(feasible, value, -np.inf)
    flat = int(np.argmax(value))
    i, k = np.unravel_index(flat, value.shape)
    best = float(value[i, k])
    return HardnessResult(best, best / 2.0, (float(xs[i]), float(xs[k])))


# ---------------------------------------------------------------------------
# Warm-up moment inequalities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WarmupLemmaReport:
    mu: float
    independent_slack: float
    correlated_slack: float
    per_arrival_slack: tuple[float, ...]
    mix_slack: float


def check_warmup_lemmas(
    instance: Instance,
    u: int,
    policy_mode: Optional[PolicyMode] = None,
    slack: float = 1e-12,
    *,
    oracle: Optional[ExactOracle] = None,
    rule: Optional[PermutationRule] = None,
) -> WarmupLemmaReport:
    """Exact verification of the second-moment inequalities behind the even mix.

    With mu = Pr[u matched], independent fractions x^ and history fractions
    x~ accumulated into y^ and y~:

    * E[y^2] of the independent run is at most mu^2 + sum_j E[x^_j^2];
    * E[y~2] of the history run is at most 2*mu - sum_j E[x~_j^2];
    * E[x^_j^2] <= E[x~_j^2] arrival by arrival;
    * the even mix satisfies E[y^2] <= mu + mu^2/2.

    With ``rule`` given, the selection indicator of that rule replaces the
    optimum's (the inequalities only need that at most one arrival is
    selected).  Raises LemmaViolated on the first inequality failing beyond
    the slack.
    """
    if rule is None:
        if policy_mode is None:
            policy_mode = default_policy_mode(instance)
        if oracle is None:
            oracle = ExactOracle(instance, policy_mode)

        def x_independent(j, tvec):
            return oracle.cond_match_prob(u, j, (j,), (tvec[j],))

        def x_correlated(j, tvec):
            return oracle.cond_match_prob(u, j, tuple(range(j + 1)), tvec[: j + 1])

        mu = oracle.matched_prob(u)
    else:

        def x_independent(j, tvec):
            return rule_conditional_fraction(rule, instance, j, {j: tvec[j]})

        def x_correlated(j, tvec):
            return rule_conditional_fraction(rule, instance, j, {i: tvec[i] for i in range(j + 1)})

        mu = rule_mean(instance, rule)
    n = instance.n_online

    ind_sq: Mass = 0
    cor_sq: Mass = 0
    mix_sq: Mass = 0
    ind_x_sq: list[Mass] = [0] * n
    cor_x_sq: list[Mass] = [0] * n
    for tvec in itertools.product(*(range(s) for s in instance.support_profile())):
        mass: Mass = 1
        for i, tid in enumerate(tvec):
            mass = mass * instance.arrivals[i].masses[tid]
        if mass == 0:
            continue
        y_ind: Mass = 0
        y_cor: Mass = 0
        for j in range(n):
            x_ind = x_independent(j, tvec)
            x_cor = x_correlated(j, tvec)
            y_ind = y_ind + x_ind
            y_cor = y_cor + x_cor
            ind_x_sq[j] = ind_x_sq[j] + mass * x_ind * x_ind
            cor_x_sq[j] = cor_x_sq[j] + mass * x_cor * x_cor
        y_mix = (y_ind + y_cor) / 2
        ind_sq = ind_sq + mass * y_ind * y_ind
        cor_sq = cor_sq + mass * y_cor * y_cor
        mix_sq = mix_sq + mass * y_mix * y_mix
    gap_ind = mu * mu + sum(ind_x_sq) - ind_sq
    if gap_ind < -slack:
        raise LemmaViolated("independent-second-moment", float(gap_ind))
    gap_cor = 2 * mu - sum(cor_x_sq) - cor_sq
    if gap_cor < -slack:
        raise LemmaViolated("correlated-second-moment", float(gap_cor))
    per_arrival = []
    for j in range(n):
        gap_j = cor_x_sq[j] - ind_x_sq[j]
        if gap_j < -slack:
            raise LemmaViolated(f"per-arrival-variance[{j}]", float(gap_j))
        per_arrival.append(float(gap_j))
    gap_mix = mu + mu * mu / 2 - mix_sq
    if gap_mix < -slack:
        raise LemmaViolated("even-mix-moment-cap", float(gap_mix))
    return WarmupLemmaReport(
        float(mu), float(gap_ind), float(gap_cor), tuple(per_arrival), float(gap_mix)
    )


# ---------------------------------------------------------------------------
# Informational large-n trend for the windowed mix
# ---------------------------------------------------------------------------


def windowed_mix_trend(
    n_values: Sequence[int] = (25, 50, 100, 200),
    mu: float = 0.8,
    beta: float = 0.79,
    trials: int = 4000,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Fractional ratio of the windowed mix on the single-vertex Bernoulli
    family at growing n.  Informational: the large-n moment cap is
    asymptotic, so this trend is reported rather than gated.

    On this family the window fractions have a closed form: conditioned on m
    realized arrivals inside a window of length r (including the current
    one), the match probability is E[1/(m+K)] with K binomial over the n-r
    resampled arrivals.
    """
    results = []
    for idx, n in enumerate(n_values):
        q = 1.0 - (1.0 - mu) ** (1.0 / n)
        inv_moment_cache: dict[tuple[int, int], float] = {}

        def inv_moment(m_out: int, m_in: int) -> float:
            # E[1/(m_in + K)], K ~ Binomial(m_out, q)
            key = (m_out, m_in)
            hit = inv_moment_cache.get(key)
            if hit is not None:
                return hit
            pmf = np.zeros(m_out + 1)
            pmf[0] = (1.0 - q) ** m_out
            for k in range(m_out):
                pmf[k + 1] = pmf[k] * (m_out - k) / (k + 1) * (q / (1.0 - q))
            value = float(np.sum(pmf / (m_in + np.arange(m_out + 1))))
            inv_moment_cache[key] = value
            return value

        rng = substream(seed, "windowed-mix-trend", idx)
        ys = np.zeros(trials)
        for t in range(trials):
            realized = rng.random(n) < q
            if not realized.any():
                continue
            prefix = np.concatenate([[0], np.cumsum(realized)])
            y = 0.0
            for j in np.nonzero(realized)[0]:
                acc = 0.0
                for r in range(1, j + 1):
                    m_in = int(prefix[j + 1] - prefix[j + 1 - r])
                    acc += (beta / n) * inv_moment(n - r, m_in)
                m_full = int(prefix[j + 1])
                acc += (1.0 - j * beta / n) * inv_moment(n - (j + 1), m_full)
                y += acc
            ys[t] = y
        ratio = float(np.minimum(ys, 1.0).mean() / ys.mean())
        results.append((n, ratio))
    return results
