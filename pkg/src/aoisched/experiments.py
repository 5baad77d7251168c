"""Named parameter sweeps that regenerate the evaluation curves as tables.

Each preset expands into sweep points.  A point carries simulated series
(one job per replication) and analytic columns.  All jobs are flattened,
run through ``engine.map_jobs`` (optionally in a process pool) and folded
back in sweep order, so output never depends on the worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import discrete, engine, optimizer as opt, policies
from .distributions import Deterministic, Exponential, LogNormal, TwoPoint, Uniform
from .metrics import estimate
from .scenario import PolicyConfig, Scenario, SlotSource, SourceSpec

BASE_RHO = (4.0, 4.0, 1.0, 1.0)
BASE_MU = (1.0, 4 / 3, 2.0, 4.0)
BASE_GAMMA = (4.0, 2.0, 4 / 3, 1.0)
BASE_COST = (2.0, 1.0, 1.0, 2.0)
SLOT_SUCCESS = (0.25, 0.5, 0.75, 1.0)
SLOT_GEN = (1.0, 0.75, 0.5, 0.25)


@dataclass
class Options:
    seed: int = 1
    reps: Optional[int] = None
    horizon: Optional[float] = None
    workers: int = 1
    search_cycles: int = 200
    lb_values: Optional[dict] = None


@dataclass
class Series:
    name: str
    jobs: list


@dataclass
class Point:
    x: float
    series: list = field(default_factory=list)
    fixed: dict = field(default_factory=dict)


@dataclass
class Table:
    preset: str
    x_name: str
    columns: list
    rows: list


def _job(args):
    kind = args[0]
    if kind == "sim":
        _, scenario, horizon, seed, rep, preemptive = args
        fn = engine.run_preemptive if preemptive else engine.run
        return fn(scenario, None, horizon, seed, rep).gamma_cost
    if kind == "slot":
        _, scenario, horizon, seed, rep = args
        return discrete.run_slotted(scenario, None, horizon, seed, rep).weighted_aoi
    if kind == "gaw_sd":
        _, service, cycles, seed, rep = args
        return policies.mean_service_threshold_aoi(service, cycles, seed, rep)
    if kind == "gaw_star":
        _, service, cycles, eval_cycles, seed, rep, what = args
        found = policies.optimize_threshold(service, cycles, seed, rep)
        if what == "beta":
            return found.beta
        # score the found threshold on draws independent of the search
        draws = policies.service_draws(service, eval_cycles, seed, 10_000 + rep)
        return policies.generate_at_will_aoi(draws, found.beta)
    raise ValueError(f"unknown job kind {kind!r}")


def _sim_series(name, scenario, horizon, reps, seed, preemptive=False):
    return Series(name, [("sim", scenario, horizon, seed, k, preemptive) for k in range(reps)])


def _exp_sources(n, rho, cost, mu, gamma):
    return tuple(SourceSpec(rho, cost, Exponential(mu), Exponential(gamma)) for _ in range(n))


def _base_sources(mu_scale, gamma_scale, cost_scale, gen_law, service_law):
    return tuple(
        SourceSpec(BASE_RHO[i], cost_scale * BASE_COST[i], gen_law(mu_scale * BASE_MU[i]),
                   service_law(gamma_scale * BASE_GAMMA[i]))
        for i in range(4)
    )


def _lognormal_or_fixed(variance):
    if variance == 0:
        return lambda mean: Deterministic(mean)
    return lambda mean: LogNormal(mean, variance)


def _bounds(params, preemptive=False):
    rep = opt.bounds_report(params, preemptive)
    return {"lb": rep.lb_offline, "ub": rep.ub_policy, "cr_bound": rep.cr_bound}


def fig3(o: Options):
    reps, H = o.reps or 32, o.horizon or 1e5
    points = []
    for n in range(1, 11):
        base = Scenario(_exp_sources(n, 1.0, 1.0, 2.0, 1.0), horizon=H, seed=o.seed)
        sr = base.with_(policy=PolicyConfig("sr"))
        th = base.with_(policy=PolicyConfig("th"))
        points.append(Point(n, [_sim_series("sr", sr, H, reps, o.seed),
                                _sim_series("th", th, H, reps, o.seed)],
                            _bounds(base.params())))
    return "n", points


def fig4(o: Options):
    reps, H = o.reps or 8, o.horizon or 1e5
    points = []
    for var in range(0, 11):
        pt = Point(float(var))
        for mu in (1.0, 2.0):
            sc = Scenario(_base_sources(mu, 1.0, 1.0, _lognormal_or_fixed(var), Exponential),
                          PolicyConfig("sr"), horizon=H, seed=o.seed)
            tag = f"mu{mu:g}"
            pt.series.append(_sim_series(f"sr_{tag}", sc, H, reps, o.seed))
            b = _bounds(sc.params())
            pt.fixed[f"lb_{tag}"] = b["lb"]
            pt.fixed[f"ub_{tag}"] = b["ub"]
        points.append(pt)
    return "sigma2", points


def fig5(o: Options):
    reps, H = o.reps or 8, o.horizon or 1e5
    points = []
    for mu in (1, 2, 4, 6, 8, 10, 15, 20, 25, 30):
        base = Scenario(_base_sources(mu, 2.0, 1.0, Exponential, Exponential),
                        horizon=H, seed=o.seed)
        points.append(Point(float(mu), [
            _sim_series("sr", base.with_(policy=PolicyConfig("sr")), H, reps, o.seed),
            _sim_series("sr_wc", base.with_(policy=PolicyConfig("sr_wc")), H, reps, o.seed),
        ], _bounds(base.params())))
    return "mu", points


def fig6(o: Options):
    reps, H = o.reps or 8, o.horizon or 1e5
    points = []
    for gamma in range(1, 11):
        pt = Point(float(gamma))
        for nu2 in (0, 4, 10):
            sc = Scenario(_base_sources(16.0, gamma, 1.0, Exponential, _lognormal_or_fixed(nu2)),
                          PolicyConfig("sr"), horizon=H, seed=o.seed)
            pt.series.append(_sim_series(f"sr_nu{nu2}", sc, H, reps, o.seed))
            if nu2 == 4:
                pt.series.append(_sim_series("sr_wc_nu4", sc.with_(policy=PolicyConfig("sr_wc")),
                                             H, reps, o.seed))
                pt.fixed.update(_bounds(sc.params()))
        points.append(pt)
    return "gamma", points


def fig7(o: Options):
    reps, H = o.reps or 8, o.horizon or 1e5
    points = []
    for c in (0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000):
        base = Scenario(_base_sources(1.0, 1.0, float(c), lambda m: LogNormal(m, 1.0), Exponential),
                        horizon=H, seed=o.seed)
        points.append(Point(float(c), [
            _sim_series("sr", base.with_(policy=PolicyConfig("sr")), H, reps, o.seed),
            _sim_series("sr_wc", base.with_(policy=PolicyConfig("sr_wc")), H, reps, o.seed),
        ], _bounds(base.params())))
    return "c", points


def slot_scenario(rate: float, kind: str, horizon: int, seed: int) -> Scenario:
    sources = tuple(SlotSource(BASE_RHO[i], rate * SLOT_GEN[i], SLOT_SUCCESS[i]) for i in range(4))
    return Scenario(sources, PolicyConfig(kind), horizon=horizon, seed=seed, slotted=True)


def fig8(o: Options):
    reps, H = o.reps or 8, int(o.horizon or 100_000)
    lb = o.lb_values or {}
    points = []
    for k in range(1, 8):
        rate = round(0.05 * k, 2)
        pt = Point(rate)
        for kind in ("sr_discrete", "rd", "mw"):
            sc = slot_scenario(rate, kind, H, o.seed)
            pt.series.append(Series(kind, [("slot", sc, H, o.seed, r) for r in range(reps)]))
        pt.fixed["lb"] = lb.get(rate, "")
        points.append(pt)
    return "gen_rate", points


def _gaw_laws(gamma):
    return {"exp": Exponential(gamma), "unif": Uniform(0.0, 2 * gamma)}


def fig9(o: Options):
    reps, cycles = o.reps or 8, int(o.horizon or 100_000)
    points = []
    for gamma in range(1, 11):
        pt = Point(float(gamma))
        for tag, law in _gaw_laws(float(gamma)).items():
            pt.series.append(Series(f"sd_{tag}", [("gaw_sd", law, cycles, o.seed, r)
                                                  for r in range(reps)]))
            pt.series.append(Series(f"star_{tag}", [
                ("gaw_star", law, o.search_cycles, cycles, o.seed, r, "aoi") for r in range(reps)]))
        points.append(pt)
    return "gamma", points


def fig10(o: Options):
    reps = o.reps or 8
    points = []
    for gamma in range(1, 11):
        pt = Point(float(gamma), fixed={"beta_sd": float(gamma)})
        for tag, law in _gaw_laws(float(gamma)).items():
            pt.series.append(Series(f"beta_star_{tag}", [
                ("gaw_star", law, o.search_cycles, 0, o.seed, r, "beta") for r in range(reps)]))
        points.append(pt)
    return "gamma", points


def two_point_scenario(alpha: float, eps: float, policy: PolicyConfig, horizon: float, seed: int):
    src = SourceSpec(1.0, 0.0, TwoPoint(eps, alpha, 0.5), Deterministic(0.0))
    return Scenario((src,), policy, horizon=horizon, seed=seed)


def example1(o: Options):
    reps, eps = o.reps or 4, 1e-3
    points = []
    for alpha in (10.0, 20.0, 50.0, 100.0):
        mu = (alpha + eps) / 2
        H = o.horizon or 2e5 * mu
        law = TwoPoint(eps, alpha, 0.5)
        sr = two_point_scenario(alpha, eps, PolicyConfig("sr"), H, o.seed)
        tp = two_point_scenario(alpha, eps, PolicyConfig("tp", thresholds=(alpha,)), H, o.seed)
        ratio = (law.variance() / mu ** 2 + 1) / 2
        points.append(Point(alpha, [_sim_series("sr", sr, H, reps, o.seed),
                                    _sim_series("tp", tp, H, reps, o.seed)],
                            {"sr_formula": law.second_moment() / (2 * mu),
                             "tp_formula": mu, "ratio_formula": ratio}))
    return "alpha", points


PRESETS: dict[str, Callable] = {
    "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7,
    "fig8": fig8, "fig9": fig9, "fig10": fig10, "example1": example1,
}


def preset_points(name: str, options: Options):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return PRESETS[name](options)


def run_preset(name: str, options: Optional[Options] = None) -> Table:
    options = options or Options()
    x_name, points = preset_points(name, options)
    jobs = [job for pt in points for s in pt.series for job in s.jobs]
    values = iter(engine.map_jobs(_job, jobs, options.workers))
    columns: list = []

    def add_col(c):
        if c not in columns:
            columns.append(c)

    rows = []
    for pt in points:
        row = {}
        for s in pt.series:
            est = estimate([next(values) for _ in s.jobs])
            row[s.name], row[f"{s.name}_ci"] = est.mean, est.half_width
            add_col(s.name)
            add_col(f"{s.name}_ci")
        for k, v in pt.fixed.items():
            row[k] = v
            add_col(k)
        rows.append((pt.x, row))
    if name == "example1":
        add_col("ratio")
        for _, row in rows:
            row["ratio"] = row["sr"] / row["tp"]
    return Table(name, x_name, columns, [[x] + [r.get(c, "") for c in columns] for x, r in rows])


def table_column(table: Table, name: str) -> np.ndarray:
    if name == table.x_name:
        return np.array([r[0] for r in table.rows], dtype=float)
    i = table.columns.index(name) + 1
    return np.array([math.nan if r[i] == "" else r[i] for r in table.rows], dtype=float)
