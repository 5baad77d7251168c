"""Command-line entry point: ``aoi solve-probs|bounds|simulate|experiment``."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import __version__, discrete, engine, experiments
from . import optimizer as opt
from .metrics import estimate
from .policies import NonConvergence, make_policy
from .scenario import ConfigError, load

PREEMPTIVE_KINDS = {"sr_preemptive", "eps", "eps_prime", "lcfs_preemptive"}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def render_csv(provenance: dict, header: list, rows: list) -> str:
    buf = io.StringIO()
    tags = " ".join(f"{k}={v}" for k, v in provenance.items())
    buf.write(f"# aoisched version={__version__} {tags}\n")
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out_dir, name: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / f"{name}.csv").write_text(text)


def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    sc = load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        changes["replications"] = args.reps
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = int(args.horizon) if sc.slotted else float(args.horizon)
    try:
        sc = sc.with_(**changes) if changes else sc
        # build the policy once so bad policy parameters surface as config errors
        if sc.slotted:
            discrete.make_slot_policy(sc.policy, sc)
        else:
            make_policy(sc.policy, sc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return sc


def _is_preemptive(args, sc):
    return args.preemptive or sc.policy.kind in PREEMPTIVE_KINDS


def cmd_solve_probs(args) -> int:
    sc = _load(args)
    params = sc.params()
    solve = opt.solve_marking_probs_preemptive if _is_preemptive(args, sc) else opt.solve_marking_probs
    marking = solve(params)
    sel = opt.selection_probs(marking, params)
    rows = [[i, p, q, ""] for i, (p, q) in enumerate(zip(marking.probs, sel))]
    rows.append(["all", "", "", marking.multiplier])
    text = render_csv({"command": "solve-probs", "config": Path(args.config).name},
                      ["source", "p", "p_hat", "lambda"], rows)
    _emit(text, args.out, "solve_probs")
    return 0


def cmd_bounds(args) -> int:
    sc = _load(args)
    rep = opt.bounds_report(sc.params(), _is_preemptive(args, sc))
    rows = [[i, p, q, f, "", "", ""] for i, (p, q, f) in
            enumerate(zip(rep.marking_probs.probs, rep.selection_probs, rep.f_star))]
    rows.append(["all", "", "", "", rep.lb_offline, rep.ub_policy, rep.cr_bound])
    text = render_csv({"command": "bounds", "config": Path(args.config).name,
                       "preemptive": rep.preemptive},
                      ["source", "p", "p_hat", "f_star", "lb", "ub", "cr_bound"], rows)
    _emit(text, args.out, "bounds")
    return 0


def _sim_job(job):
    sc, seed, rep, preemptive, trace = job
    fn = engine.run_preemptive if preemptive else engine.run
    return fn(sc, None, sc.horizon, seed, rep, trace=trace)


def _slot_job(job):
    sc, seed, rep = job
    return discrete.run_slotted(sc, None, sc.horizon, seed, rep)


def cmd_simulate(args) -> int:
    sc = _load(args)
    n = sc.n
    reps = range(sc.replications)
    if sc.slotted:
        runs = engine.map_jobs(_slot_job, [(sc, sc.seed, k) for k in reps], args.workers)
        header = ["replication", "gamma"] + [f"aoi_{i}" for i in range(n)]
        rows = [[r.replication, r.weighted_aoi] + list(r.aoi) for r in runs]
    else:
        pre = _is_preemptive(args, sc)
        trace_dir = Path(args.out or ".") if args.trace else None
        if trace_dir is not None:
            trace_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(sc, sc.seed, k, pre, str(trace_dir / f"trace_{k}.csv") if trace_dir else None)
                for k in reps]
        runs = engine.map_jobs(_sim_job, jobs, args.workers)
        header = (["replication", "gamma", "utilization"] + [f"aoi_{i}" for i in range(n)]
                  + [f"tx_cost_{i}" for i in range(n)])
        rows = [[r.replication, r.gamma_cost, r.utilization] + [s.aoi for s in r.sources]
                + [s.avg_tx_cost for s in r.sources] for r in runs]
    cols = list(zip(*rows))
    width = len(header)
    means, cis = ["mean"], ["ci95"]
    for c in range(1, width):
        est = estimate(cols[c])
        means.append(est.mean)
        cis.append(est.half_width)
    text = render_csv({"command": "simulate", "config": Path(args.config).name,
                       "seed": sc.seed, "reps": sc.replications}, header, rows + [means, cis])
    _emit(text, args.out, "simulate")
    return 0


def _read_lb_values(path):
    values = {}
    with open(path) as fh:
        for row in csv.reader(line for line in fh if not line.startswith("#")):
            if not row or row[0].strip() in ("x", "gen_rate"):
                continue
            values[round(float(row[0]), 2)] = float(row[1])
    return values


def cmd_experiment(args) -> int:
    options = experiments.Options(seed=1 if args.seed is None else args.seed, reps=args.reps,
                                  horizon=args.horizon, workers=args.workers)
    if args.lb_values:
        try:
            options.lb_values = _read_lb_values(args.lb_values)
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot read lower-bound values: {exc}") from exc
    table = experiments.run_preset(args.preset, options)
    text = render_csv({"preset": args.preset, "seed": options.seed},
                      [table.x_name] + table.columns, table.rows)
    _emit(text, args.out, args.preset)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aoi", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, reps=True, config=True):
        if config:
            p.add_argument("--config", help="scenario YAML file")
        p.add_argument("--out", help="directory for CSV output (default: stdout)")
        p.add_argument("--seed", type=int)
        if reps:
            p.add_argument("--reps", type=int)
            p.add_argument("--horizon", type=float)
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("solve-probs", help="marking and selection probabilities")
    common(p, reps=False)
    p.add_argument("--preemptive", action="store_true")
    p.set_defaults(func=cmd_solve_probs)

    p = sub.add_parser("bounds", help="lower/upper bounds and competitive-ratio bound")
    common(p, reps=False)
    p.add_argument("--preemptive", action="store_true")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="simulate a scenario")
    common(p)
    p.add_argument("--preemptive", action="store_true")
    p.add_argument("--trace", action="store_true", help="write per-replication event traces")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a named sweep")
    p.add_argument("preset", choices=sorted(experiments.PRESETS))
    common(p, config=False)
    p.add_argument("--lb-values", help="CSV of (gen_rate, lb) pairs for the slotted preset")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
