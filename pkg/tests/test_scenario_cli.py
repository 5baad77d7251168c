import csv
import io

import pytest

from aoisched import cli, experiments
from aoisched.distributions import Exponential, LogNormal, TwoPoint
from aoisched.policies import NonConvergence
from aoisched.scenario import (ConfigError, PolicyConfig, Scenario, SlotSource, SourceSpec,
                               dumps, load, loads)

CONFIG = """\
seed: 7
horizon: 2000
replications: 3
policy:
  kind: sr
sources:
  - rho: 1.0
    cost: 1.0
    gen: {kind: exponential, mean: 2.0}
    service: {kind: exponential, mean: 1.0}
  - rho: 4.0
    cost: 0.5
    gen: {kind: lognormal, mean: 1.0, variance: 2.0}
    service: {kind: uniform, a: 0.0, b: 1.0}
"""

SLOTTED = """\
slotted: true
horizon: 500
sources:
  - {rho: 4.0, gen_prob: 0.2, success_prob: 0.5}
  - {rho: 1.0, gen_prob: 0.1, success_prob: 1.0}
policy: mw
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(CONFIG)
    return str(path)


def preset_scenarios():
    for name in sorted(experiments.PRESETS):
        _, points = experiments.preset_points(name, experiments.Options())
        for pt in points:
            for s in pt.series:
                for job in s.jobs[:1]:
                    if isinstance(job[1], Scenario):
                        yield name, job[1]


def test_config_parses():
    sc = loads(CONFIG)
    assert sc.n == 2 and sc.seed == 7 and sc.replications == 3
    assert sc.sources[1].gen == LogNormal(1.0, 2.0)
    assert sc.params()[0].mu == 2.0


def test_slotted_config_parses():
    sc = loads(SLOTTED)
    assert sc.slotted and sc.horizon == 500 and isinstance(sc.horizon, int)
    assert sc.sources[0] == SlotSource(4.0, 0.2, 0.5)
    assert sc.policy.kind == "mw"


def test_every_preset_scenario_round_trips():
    seen = set()
    for name, sc in preset_scenarios():
        seen.add(name)
        assert loads(dumps(sc)) == sc, name
    assert seen == set(experiments.PRESETS) - {"fig9", "fig10"}


def test_policy_fields_round_trip():
    src = (SourceSpec(1.0, 0.0, TwoPoint(1e-3, 10.0, 0.5), Exponential(1.0)),)
    for pol in (PolicyConfig("tp", thresholds=(10.0,)), PolicyConfig("eps", epsilon=0.1),
                PolicyConfig("sr", marking_probs=(0.3,))):
        sc = Scenario(src, pol)
        assert loads(dumps(sc)) == sc


@pytest.mark.parametrize("text", [
    "sources: []",
    "horizon: 10\nsources:\n  - {rho: 1, gen: {kind: exponential, mean: 1}}",
    "bogus: 1\n" + CONFIG,
    CONFIG.replace("kind: sr", "kind: fastest"),
    CONFIG.replace("kind: lognormal", "kind: pareto"),
    CONFIG.replace("rho: 1.0", "rho: -1.0"),
    "[unbalanced",
    "just a string",
], ids=["no-sources", "missing-service", "unknown-key", "unknown-policy", "unknown-law",
        "negative-weight", "bad-yaml", "not-a-mapping"])
def test_bad_configs_raise_config_error(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "nope.yaml")


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# aoisched version=")
    return lines[0], list(csv.reader(lines[1:]))


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_probs_output(capsys, config):
    code, out, _ = run_cli(capsys, "solve-probs", "--config", config)
    assert code == 0
    head, rows = read_csv(out)
    assert "command=solve-probs" in head
    assert rows[0] == ["source", "p", "p_hat", "lambda"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "all"]
    assert sum(float(r[2]) for r in rows[1:3]) == pytest.approx(1.0)


def test_bounds_output(capsys, config):
    code, out, _ = run_cli(capsys, "bounds", "--config", config)
    assert code == 0
    _, rows = read_csv(out)
    last = dict(zip(rows[0], rows[-1]))
    assert float(last["lb"]) <= float(last["ub"]) <= float(last["lb"]) * float(last["cr_bound"])


def test_simulate_writes_file_and_trace(capsys, config, tmp_path):
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(capsys, "simulate", "--config", config, "--out", str(out_dir),
                           "--reps", "2", "--trace")
    assert code == 0 and out == ""
    head, rows = read_csv((out_dir / "simulate.csv").read_text())
    assert "seed=7" in head and "reps=2" in head
    assert [r[0] for r in rows[1:]] == ["0", "1", "mean", "ci95"]
    trace = (out_dir / "trace_0.csv").read_text().splitlines()
    assert trace[0] == "time,event,source,age_before,age_after"


def test_simulate_slotted(capsys, tmp_path):
    path = tmp_path / "slot.yaml"
    path.write_text(SLOTTED)
    code, out, _ = run_cli(capsys, "simulate", "--config", str(path), "--seed", "3")
    assert code == 0
    _, rows = read_csv(out)
    assert rows[0] == ["replication", "gamma", "aoi_0", "aoi_1"]


def test_config_errors_exit_with_two(capsys, tmp_path, config):
    bad = tmp_path / "bad.yaml"
    bad.write_text(CONFIG.replace("kind: sr", "kind: tp"))  # thresholds missing
    for argv in (["simulate", "--config", str(bad)], ["bounds"],
                 ["bounds", "--config", str(tmp_path / "missing.yaml")],
                 ["experiment", "fig8", "--lb-values", str(tmp_path / "missing.csv")]):
        code, _, err = run_cli(capsys, *argv)
        assert code == 2, argv
        assert err.startswith("config error")


def test_nonconvergence_exits_with_three(capsys, monkeypatch, config):
    def boom(*args, **kwargs):
        raise NonConvergence("stuck")
    monkeypatch.setattr(cli.opt, "bounds_report", boom)
    code, _, err = run_cli(capsys, "bounds", "--config", config)
    assert code == 3 and "stuck" in err


def test_simulate_is_bit_identical_across_runs_and_workers(capsys, config, tmp_path):
    outs = []
    for workers in ("1", "1", "3"):
        d = tmp_path / f"w{len(outs)}"
        assert cli.main(["simulate", "--config", config, "--out", str(d),
                         "--workers", workers]) == 0
        outs.append((d / "simulate.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_experiment_small_run(capsys, tmp_path):
    lb = tmp_path / "lb.csv"
    lb.write_text("gen_rate,lb\n0.05,3.5\n")
    code, out, _ = run_cli(capsys, "experiment", "fig8", "--reps", "2", "--horizon", "300",
                           "--lb-values", str(lb))
    assert code == 0
    head, rows = read_csv(out)
    assert "preset=fig8" in head and "seed=1" in head
    table = [dict(zip(rows[0], r)) for r in rows[1:]]
    assert table[0]["lb"] == "3.5" and table[1]["lb"] == ""
    assert len(table) == 7


def test_shipped_configs_load():
    from pathlib import Path
    paths = sorted((Path(__file__).parents[1] / "configs").glob("*.yaml"))
    assert paths
    for path in paths:
        args = cli.build_parser().parse_args(["simulate", "--config", str(path)])
        assert cli._load(args).n >= 1
