"""Marking-probability programs and analytic cost bounds.

Both marking programs and both lower bounds share one structure: minimize a
separable sum ``sum_l (k*rho_l*mu_l/x_l + c_l*x_l/mu_l)`` over ``x in (0, 1]^N``
subject to ``sum_l gamma_l*x_l/mu_l <= 1``.  For a dual value ``lam`` the
minimizer is ``x_l = min(1, mu_l*sqrt(k*rho_l/(c_l + lam*gamma_l)))`` and the
constraint slack is nondecreasing in ``lam``, so bisection on ``lam`` solves it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LAMBDA_TOL = 1e-12
SLACK_TOL = 1e-9
MAX_BISECT = 400


@dataclass(frozen=True)
class SourceParams:
    rho: float
    cost: float
    mu: float
    sigma2: float
    gamma: float

    def __post_init__(self):
        if not (0 < self.rho < math.inf):
            raise ValueError(f"rho must be positive and finite, got {self.rho!r}")
        if not (0 <= self.cost < math.inf):
            raise ValueError(f"cost must be nonnegative and finite, got {self.cost!r}")
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if not (self.sigma2 >= 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2!r}")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be nonnegative, got {self.gamma!r}")

    def theta(self) -> float:
        return 1.0 - self.sigma2 / self.mu ** 2

    def scaled(self, k: float) -> "SourceParams":
        return SourceParams(self.rho * k, self.cost * k, self.mu, self.sigma2, self.gamma)


@dataclass(frozen=True)
class ProbVector:
    probs: tuple[float, ...]
    multiplier: float

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class BoundsReport:
    """Marking solution together with the analytic bounds.

    ``lb_offline`` is the minimum of the offline lower-bound expression over
    every feasible transmission-rate vector ``f``; ``f_star`` is that minimizer.
    Minimizing over ``f`` is what makes the value a bound for any policy.
    """

    marking_probs: ProbVector
    selection_probs: tuple[float, ...]
    lb_offline: float
    ub_policy: float
    cr_bound: float
    f_star: tuple[float, ...]
    preemptive: bool = False


def _arrays(params: Sequence[SourceParams]):
    if len(params) == 0:
        raise ValueError("at least one source is required")
    rho = np.array([p.rho for p in params], dtype=float)
    cost = np.array([p.cost for p in params], dtype=float)
    mu = np.array([p.mu for p in params], dtype=float)
    gamma = np.array([p.gamma for p in params], dtype=float)
    if np.any(mu <= 0):
        raise ValueError("every mean inter-generation time must be positive")
    return rho, cost, mu, gamma


def _rates(coef, rho, cost, mu, gamma, lam):
    denom = cost + lam * gamma
    with np.errstate(divide="ignore", over="ignore"):
        x = mu * np.sqrt(coef * rho / denom)
    x = np.where(denom > 0, np.minimum(1.0, x), 1.0)
    return x


def _waterfill(coef: float, params: Sequence[SourceParams]) -> tuple[np.ndarray, float]:
    rho, cost, mu, gamma = _arrays(params)
    load = gamma / mu

    def slack(lam):
        x = _rates(coef, rho, cost, mu, gamma, lam)
        return 1.0 - float(np.dot(x, load)), x

    s0, x0 = slack(0.0)
    if s0 >= 0:
        return x0, 0.0
    hi = 1.0
    s_hi, x_hi = slack(hi)
    while s_hi < 0:
        hi *= 2
        s_hi, x_hi = slack(hi)
    lo = 0.0 if hi == 1.0 else hi / 2
    for _ in range(MAX_BISECT):
        if s_hi <= SLACK_TOL or hi - lo <= LAMBDA_TOL:
            break
        mid = (lo + hi) / 2
        if mid in (lo, hi):
            break
        s_mid, x_mid = slack(mid)
        if s_mid < 0:
            lo = mid
        else:
            hi, s_hi, x_hi = mid, s_mid, x_mid
    return x_hi, hi


def marking_objective(probs, params: Sequence[SourceParams], coef: float = 2.0) -> float:
    """Sum over sources of ``coef*rho*mu/p + c*p/mu``."""
    rho, cost, mu, _ = _arrays(params)
    p = np.asarray(probs, dtype=float)
    return float(np.sum(coef * rho * mu / p + cost * p / mu))


def solve_marking_probs(params: Sequence[SourceParams]) -> ProbVector:
    x, lam = _waterfill(2.0, params)
    return ProbVector(tuple(float(v) for v in x), float(lam))


def solve_marking_probs_preemptive(params: Sequence[SourceParams]) -> ProbVector:
    x, lam = _waterfill(3.0, params)
    return ProbVector(tuple(float(v) for v in x), float(lam))


def selection_probs(marking: ProbVector | Sequence[float], params: Sequence[SourceParams]) -> tuple[float, ...]:
    probs = marking.probs if isinstance(marking, ProbVector) else marking
    rates = [p / s.mu for p, s in zip(probs, params)]
    total = math.fsum(rates)
    if total <= 0:
        raise ValueError("all marking probabilities are zero")
    return tuple(r / total for r in rates)


def _lower_bound(params, with_service_term):
    rho, cost, mu, gamma = _arrays(params)
    f, _ = _waterfill(0.5, params)
    terms = rho * mu / (2 * f) + cost * f / mu
    if with_service_term:
        terms = terms + rho * gamma
    return float(np.mean(terms)), tuple(float(v) for v in f)


def lower_bound_offline(params: Sequence[SourceParams]) -> tuple[float, tuple[float, ...]]:
    return _lower_bound(params, True)


def lower_bound_preemptive(params: Sequence[SourceParams]) -> tuple[float, tuple[float, ...]]:
    return _lower_bound(params, False)


def _check_probs(marking, n):
    probs = np.asarray(marking.probs if isinstance(marking, ProbVector) else marking, dtype=float)
    if len(probs) != n:
        raise ValueError("marking vector length does not match the number of sources")
    if np.any(probs <= 0):
        raise ValueError("upper bound is undefined when a marking probability is zero")
    return probs


def upper_bound_sr(params: Sequence[SourceParams], marking) -> float:
    rho, cost, mu, gamma = _arrays(params)
    p = _check_probs(marking, len(params))
    theta = np.array([s.theta() for s in params])
    terms = 2 * rho * mu / p + cost * p / mu + rho * gamma - rho * mu * theta / 2
    return float(np.mean(terms))


def upper_bound_sr_preemptive(params: Sequence[SourceParams], marking) -> float:
    rho, cost, mu, _ = _arrays(params)
    p = _check_probs(marking, len(params))
    theta = np.array([s.theta() for s in params])
    terms = 3 * rho * mu / p + cost * p / mu - rho * mu * theta / 2
    return float(np.mean(terms))


def cr_bound(params: Sequence[SourceParams], preemptive: bool = False) -> float:
    worst = max(s.sigma2 / s.mu ** 2 for s in params)
    if preemptive:
        return max(6.0, 5.0 + worst)
    return max(4.0, 3.0 + worst)


def bounds_report(params: Sequence[SourceParams], preemptive: bool = False) -> BoundsReport:
    if preemptive:
        marking = solve_marking_probs_preemptive(params)
        lb, f_star = lower_bound_preemptive(params)
        ub = upper_bound_sr_preemptive(params, marking)
    else:
        marking = solve_marking_probs(params)
        lb, f_star = lower_bound_offline(params)
        ub = upper_bound_sr(params, marking)
    return BoundsReport(
        marking_probs=marking,
        selection_probs=selection_probs(marking, params),
        lb_offline=lb,
        ub_policy=ub,
        cr_bound=cr_bound(params, preemptive),
        f_star=f_star,
        preemptive=preemptive,
    )


# ---------------------------------------------------------------------------
# grid-search reference solver

def _best_capped(values: np.ndarray, budget_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each cap ``k`` return min(values[:k+1]) and its argmin (cap < 0 -> inf)."""
    run_min = np.minimum.accumulate(values)
    # index of the running minimum
    is_new = np.r_[True, values[1:] < run_min[:-1]]
    run_arg = np.maximum.accumulate(np.where(is_new, np.arange(len(values)), 0))
    safe = np.clip(budget_idx, 0, len(values) - 1)
    best = np.where(budget_idx >= 0, run_min[safe], np.inf)
    return best, run_arg[safe]


def brute_force_probs(params: Sequence[SourceParams], grid_step: float = 1e-4,
                      coef: float = 2.0) -> ProbVector:
    """Grid minimizer of the marking objective over feasible grid points.

    The last coordinate is handled through running minima over the grid (a
    prefix-minimum table indexed by remaining budget), which is an exact
    enumeration.  With three sources the first coordinate is enumerated on a
    coarse-to-fine integer search around its best value, because the full
    product grid is too large; the objective restricted to that coordinate is
    convex, so the search lands on the grid optimum up to rounding.
    """
    n = len(params)
    if not 1 <= n <= 3:
        raise ValueError("grid search supports one to three sources")
    rho, cost, mu, gamma = _arrays(params)
    m = int(round(1.0 / grid_step))
    grid = np.arange(1, m + 1) / m
    load = gamma / mu
    per = [coef * rho[i] * mu[i] / grid + cost[i] * grid / mu[i] for i in range(n)]
    eps = 1e-12

    def cap_index(i, budget):
        # largest grid index j with grid[j]*load[i] <= budget
        if load[i] == 0:
            return np.where(budget >= -eps, m - 1, -1)
        k = np.floor((budget + eps) / load[i] * m).astype(np.int64) - 1
        return np.minimum(k, m - 1)

    def solve_last_two(budget):
        """Best (value, j1, j2) over the last two coordinates for a scalar budget."""
        if n - start == 1:
            best, arg = _best_capped(per[-1], cap_index(n - 1, np.array([budget])))
            return best[0], (int(arg[0]),)
        a, b = n - 2, n - 1
        rem = budget - grid * load[a]
        best_b, arg_b = _best_capped(per[b], cap_index(b, rem))
        total = per[a] + best_b
        j = int(np.argmin(total))
        return float(total[j]), (j, int(arg_b[j]))

    if n <= 2:
        start = 0
        value, idx = solve_last_two(1.0)
        if not math.isfinite(value):
            raise ValueError("no feasible grid point")
        return ProbVector(tuple(float(grid[j]) for j in idx), math.nan)

    start = 1

    def outer(j0):
        budget = 1.0 - grid[j0] * load[0]
        if budget < -eps:
            return math.inf, ()
        v, rest = solve_last_two(budget)
        return per[0][j0] + v, rest

    lo, hi = 0, m - 1
    while hi - lo > 60:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if outer(m1)[0] <= outer(m2)[0]:
            hi = m2
        else:
            lo = m1
    cands = range(max(0, lo - 60), min(m, hi + 61))
    best = min(((outer(j)[0], j) for j in cands))
    value, rest = outer(best[1])
    if not math.isfinite(value):
        raise ValueError("no feasible grid point")
    idx = (best[1],) + rest
    return ProbVector(tuple(float(grid[j]) for j in idx), math.nan)
