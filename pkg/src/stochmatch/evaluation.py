"""Scoring: selection guarantee, per-vertex ratios, and moment statistics.

Integral performance is scored analytically through the rounding guarantee
``p(y) = 1 - exp(-y - y^2/2 - c*y^3)`` with ``c = (4 - 2*sqrt(3))/3``: an
offline vertex that accumulates fraction mass ``y`` is matched by the
correlated rounding scheme with at least this probability.  Fractional
performance is scored by ``min(y, 1)``.  Both scores are concave, so ratio
quality is driven by the second moment of ``y``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConcavityViolation, MassExceedsOne
from .estimators import EstimatorKind, EstimatorSpec, FractionalOutcome, run_fractional
from .instances import Instance, Mass
from .oracle import DEFAULT_BUDGET, ExactMode, ExactOracle, MonteCarloMode
from .rng import derive_seed, substream

OCS_CUBIC_COEF = (4.0 - 2.0 * math.sqrt(3.0)) / 3.0

EXACT_TRIALS = "exact"


def ocs_guarantee(y):
    """Lower bound on the selection probability at accumulated mass y >= 0."""
    y = np.asarray(y, dtype=float)
    out = 1.0 - np.exp(-y - 0.5 * y * y - OCS_CUBIC_COEF * y**3)
    return float(out) if out.ndim == 0 else out


def guarantee_second_derivative(y):
    """Closed-form p''(y); strictly negative for y > 0."""
    c = OCS_CUBIC_COEF
    y = np.asarray(y, dtype=float)
    poly = (6 * c - 2) * y - (1 + 6 * c) * y**2 - 6 * c * y**3 - 9 * c * c * y**4
    out = poly * np.exp(-y - 0.5 * y * y - c * y**3)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConcavityReport:
    points_checked: int
    max_second_derivative: float
    max_fd_gap: float


def check_p_concavity(
    grid_step: float = 1e-3,
    y_max: float = 10.0,
    fd_step: float = 1e-4,
    fd_tol: float = 1e-6,
) -> ConcavityReport:
    """Certify concavity of the guarantee on (0, y_max].

    Evaluates the closed-form second derivative on the grid and requires it
    negative, then cross-checks against a central finite difference.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    ys = np.arange(grid_step, y_max + grid_step / 2, grid_step)
    closed = guarantee_second_derivative(ys)
    worst = int(np.argmax(closed))
    if closed[worst] >= 0:
        raise ConcavityViolation(float(ys[worst]), float(closed[worst]))
    h = fd_step
    fd = (ocs_guarantee(ys + h) - 2 * ocs_guarantee(ys) + ocs_guarantee(ys - h)) / (h * h)
    gap = float(np.max(np.abs(fd - closed)))
    if gap > fd_tol:
        raise ConcavityViolation(float(ys[int(np.argmax(np.abs(fd - closed)))]), gap)
    return ConcavityReport(len(ys), float(closed[worst]), gap)


def normalize_with_dummy(fractions: Sequence[Mass]) -> tuple[Mass, ...]:
    """Append the leftover mass as a trailing dummy entry so the vector sums to 1."""
    total = sum(fractions)
    one: Mass = Fraction(1) if isinstance(total, (int, Fraction)) else 1.0
    if total > 1 and not math.isclose(float(total), 1.0, abs_tol=1e-12):
        raise MassExceedsOne(total)
    dummy = one - total
    if dummy < 0:
        dummy = 0 * dummy
    return tuple(fractions) + (dummy,)


# ---------------------------------------------------------------------------
# Ratio reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VertexRatioRow:
    u: int
    weight: float
    mu: float
    second_moment: float
    frac_ratio: Optional[float]
    ocs_ratio: Optional[float]
    stderr_frac: float
    stderr_ocs: float


@dataclass(frozen=True)
class RatioReport:
    rows: tuple[VertexRatioRow, ...]
    trials: Union[int, str]
    overall_frac_ratio: Optional[float]
    overall_ocs_ratio: Optional[float]
    zero_mean_vertices: tuple[int, ...]

    def min_frac_ratio(self) -> Optional[float]:
        vals = [r.frac_ratio for r in self.rows if r.frac_ratio is not None]
        return min(vals) if vals else None

    def min_ocs_ratio(self) -> Optional[float]:
        vals = [r.ocs_ratio for r in self.rows if r.ocs_ratio is not None]
        return min(vals) if vals else None


CSV_HEADER = ["u", "weight", "mu", "second_moment", "frac_ratio", "ocs_ratio", "stderr_frac", "stderr_ocs"]


def report_to_csv(report: RatioReport, path, metadata: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in metadata:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in report.rows:
            writer.writerow(
                [
                    r.u,
                    _fmt(r.weight),
                    _fmt(r.mu),
                    _fmt(r.second_moment),
                    _fmt(r.frac_ratio),
                    _fmt(r.ocs_ratio),
                    _fmt(r.stderr_frac),
                    _fmt(r.stderr_ocs),
                ]
            )


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return format(float(value), ".12g")


def exact_outcome_distribution(
    instance: Instance,
    spec: EstimatorSpec,
    *,
    oracle: Optional[ExactOracle] = None,
) -> list[tuple[Mass, FractionalOutcome]]:
    """All (probability, run outcome) atoms of the realized type vector."""
    if not isinstance(spec.mode, ExactMode):
        raise ValueError("exact enumeration needs an exact-mode spec")
    policy = spec.resolve_policy(instance)
    needs_oracle = spec.kind != EstimatorKind.RULE_INDEPENDENT
    if needs_oracle and oracle is None:
        oracle = ExactOracle(instance, policy, spec.mode.budget)
    atoms = []
    for tvec in itertools.product(*(range(s) for s in instance.support_profile())):
        mass: Mass = 1
        for j, tid in enumerate(tvec):
            mass = mass * instance.arrivals[j].masses[tid]
        if mass == 0:
            continue
        atoms.append((mass, run_fractional(instance, spec, tvec, oracle=oracle)))
    return atoms


def second_moment(
    instance: Instance,
    spec: EstimatorSpec,
    u: int,
    *,
    oracle: Optional[ExactOracle] = None,
) -> tuple[Mass, Mass]:
    """Exact mean and second moment of y_u under the spec."""
    mean: Mass = 0
    sq: Mass = 0
    for mass, outcome in exact_outcome_distribution(instance, spec, oracle=oracle):
        y = outcome.y[u]
        mean = mean + mass * y
        sq = sq + mass * y * y
    return mean, sq


def _jackknife_ratio_stderr(num: np.ndarray, den: np.ndarray) -> float:
    """Leave-one-out standard error of mean(num)/mean(den)."""
    t = num.size
    if t < 2:
        return float("nan")
    sn, sd = num.sum(), den.sum()
    loo_den = sd - den
    if np.any(loo_den == 0):
        return float("nan")
    loo = (sn - num) / loo_den
    return float(np.sqrt((t - 1) * np.mean((loo - loo.mean()) ** 2)))


def ratio_report(
    instance: Instance,
    spec: EstimatorSpec,
    trials: Union[int, str],
    seed: Optional[int] = None,
    *,
    oracle: Optional[ExactOracle] = None,
) -> RatioReport:
    """Per-vertex ratio estimates E[min(y,1)]/E[y] and E[p(y)]/E[y].

    ``trials="exact"`` enumerates the realized type vectors instead of
    sampling; Monte-Carlo runs are deterministic given the seed and carry
    jackknife standard errors.  Vertices with zero mean are excluded from the
    ratio columns and listed separately.
    """
    n_off = instance.n_offline
    weights = instance.weights()
    if trials == EXACT_TRIALS:
        atoms = exact_outcome_distribution(instance, spec, oracle=oracle)
        ys = np.array([[float(out.y[u]) for u in range(n_off)] for _, out in atoms])
        masses = np.array([float(m) for m, _ in atoms])
        mu = masses @ ys
        ey2 = masses @ (ys * ys)
        emin = masses @ np.minimum(ys, 1.0)
        eocs = masses @ ocs_guarantee(ys)
        stderr_f = np.zeros(n_off)
        stderr_o = np.zeros(n_off)
        n_trials: Union[int, str] = EXACT_TRIALS
    else:
        if seed is None:
            raise ValueError("Monte-Carlo ratio reports need a seed")
        trials = int(trials)
        rng = substream(seed, "ratio-trials")
        draws = [
            rng.choice(
                d.support_size, size=trials, p=[float(m) for m in d.masses]
            )
            for d in instance.arrivals
        ]
        policy = spec.resolve_policy(instance)
        if spec.kind != EstimatorKind.RULE_INDEPENDENT and isinstance(spec.mode, ExactMode) and oracle is None:
            oracle = ExactOracle(instance, policy, spec.mode.budget)
        ys_list = []
        for k in range(trials):
            tvec = tuple(int(draws[j][k]) for j in range(instance.n_online))
            trial_spec = spec
            if isinstance(spec.mode, MonteCarloMode):
                trial_spec = replace(
                    spec,
                    mode=MonteCarloMode(spec.mode.samples, derive_seed(spec.mode.seed, "trial", k)),
                )
            out = run_fractional(instance, trial_spec, tvec, oracle=oracle)
            ys_list.append([float(v) for v in out.y])
        ys = np.array(ys_list)
        mu = ys.mean(axis=0)
        ey2 = (ys * ys).mean(axis=0)
        emin = np.minimum(ys, 1.0).mean(axis=0)
        eocs = ocs_guarantee(ys).mean(axis=0)
        stderr_f = np.array(
            [_jackknife_ratio_stderr(np.minimum(ys[:, u], 1.0), ys[:, u]) if mu[u] > 0 else 0.0 for u in range(n_off)]
        )
        stderr_o = np.array(
            [_jackknife_ratio_stderr(ocs_guarantee(ys[:, u]), ys[:, u]) if mu[u] > 0 else 0.0 for u in range(n_off)]
        )
        n_trials = trials

    rows = []
    zero_mean = []
    for u in range(n_off):
        if mu[u] > 0:
            fr, oc = float(emin[u] / mu[u]), float(eocs[u] / mu[u])
        else:
            zero_mean.append(u)
            fr = oc = None
        rows.append(
            VertexRatioRow(
                u,
                float(weights[u]),
                float(mu[u]),
                float(ey2[u]),
                fr,
                oc,
                float(stderr_f[u]),
                float(stderr_o[u]),
            )
        )
    w = np.array([float(x) for x in weights])
    denom = float(w @ mu)
    overall_f = float(w @ emin / denom) if denom > 0 else None
    overall_o = float(w @ eocs / denom) if denom > 0 else None
    return RatioReport(tuple(rows), n_trials, overall_f, overall_o, tuple(zero_mean))
