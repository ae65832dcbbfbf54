import csv
import json
import math

import numpy as np
import pytest

from tiucb.environments import CostAdjusted, CurveEnvironment, TraceEnvironment, write_trace
from tiucb.errors import CoverageError, UnsupportedError
from tiucb.harness import config as cfgmod
from tiucb.harness import runner


def base(**over):
    d = {
        "horizon": 300,
        "replications": 3,
        "seed": 7,
        "environment": {"kind": "sampled", "families": ["exp", "poly"], "param_seed": 2},
        "policies": [{"name": "ti-ucb", "params": {"omega": 10}}, {"name": "sw-ucb"}, {"name": "rexp3"}],
    }
    d.update(over)
    return cfgmod.parse_config(d)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = base()
        assert cfg.workers == 1 and cfg.environment.noise_std == 0.1
        assert cfgmod.ExperimentConfig.model_fields["replications"].default == 20

    def test_errors_list_every_field(self):
        with pytest.raises(cfgmod.ConfigValidationError) as info:
            cfgmod.parse_config(
                {"horizon": 0, "environment": {"kind": "sampled"}, "policies": [{"name": "nope"}], "extra": 1}
            )
        text = "\n".join(info.value.problems)
        for field in ("horizon", "environment", "policies.0.name", "extra"):
            assert field in text

    def test_duplicate_labels(self):
        with pytest.raises(cfgmod.ConfigValidationError, match="duplicate"):
            base(policies=[{"name": "sw-ucb"}, {"name": "sw-ucb"}])

    def test_labels_disambiguate(self):
        cfg = base(policies=[{"name": "sw-ucb"}, {"name": "sw-ucb", "label": "sw-ucb-short", "params": {"tau": 10}}])
        assert [p.key for p in cfg.policies] == ["sw-ucb", "sw-ucb-short"]

    def test_yaml_and_json_agree(self, tmp_path):
        data = base().model_dump(mode="json")
        (tmp_path / "c.json").write_text(json.dumps(data))
        import yaml

        (tmp_path / "c.yaml").write_text(yaml.safe_dump(data))
        assert cfgmod.load_config(tmp_path / "c.json") == cfgmod.load_config(tmp_path / "c.yaml")

    def test_overrides(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps(base().model_dump(mode="json")))
        cfg = cfgmod.load_config(tmp_path / "c.json", {"horizon": 50, "seed": None})
        assert cfg.horizon == 50 and cfg.seed == 7

    def test_relative_trace_path(self, tmp_path):
        write_trace(tmp_path / "t.csv", [[0.1] * 5])
        data = {"horizon": 5, "environment": {"kind": "trace", "path": "t.csv"}, "policies": [{"name": "greedy"}]}
        (tmp_path / "sub").mkdir()
        (tmp_path / "c.json").write_text(json.dumps(data))
        cfg = cfgmod.load_config(tmp_path / "c.json")
        assert cfg.environment.path == str((tmp_path / "t.csv").resolve())

    def test_unknown_policy_parameter(self):
        with pytest.raises(Exception, match="unknown parameters"):
            runner.validate(base(policies=[{"name": "sw-ucb", "params": {"window": 3}}]))

    def test_bad_file(self, tmp_path):
        (tmp_path / "c.yaml").write_text("horizon: [1,\n")
        with pytest.raises(cfgmod.ConfigValidationError):
            cfgmod.load_config(tmp_path / "c.yaml")


class TestRun:
    def test_greedy_noiseless_is_all_zero(self, tmp_path):
        cfg = base(
            replications=1,
            environment={"kind": "sampled", "families": ["exp", "poly", "exp"], "noise_std": 0.0},
            policies=[{"name": "greedy"}],
        )
        runner.run(cfg, tmp_path)
        rows = read_csv(tmp_path / "regret_curves.csv")
        assert rows[0] == ["step", "policy", "mean_regret", "stderr"]
        assert len(rows) == 301
        assert all(float(r[2]) == 0.0 and float(r[3]) == 0.0 for r in rows[1:])

    def test_outputs_and_headers(self, tmp_path):
        cfg = base(horizon=2500)
        res = runner.run(cfg, tmp_path)
        assert read_csv(tmp_path / "detections.csv")[0] == ["policy", "replication", "arm", "step"]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["replication_seeds"] == res.seeds
        assert manifest["environments"][0]["arms"][0]["type"] == "exp"
        assert manifest["resolved_policies"]["ti-ucb"]["params"]["delta"] == 1 / 2500
        assert manifest["software"]["package"] == "tiucb"
        plot = json.loads((tmp_path / "plot_data.json").read_text())
        assert len(plot["steps"]) == 2000 and plot["steps"][0] == 1 and plot["steps"][-1] == 2500
        for key in res.policies:
            assert len(res.mean[key]) == 2500
            assert res.counts[key].sum(axis=1).tolist() == [2500] * 3

    def test_repeat_is_byte_identical(self, tmp_path):
        cfg = base()
        runner.run(cfg, tmp_path / "a")
        runner.run(cfg, tmp_path / "b")
        for name in ("regret_curves.csv", "detections.csv", "manifest.json", "plot_data.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_config_reproduces_run(self, tmp_path):
        runner.run(base(), tmp_path / "a")
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        runner.run(cfgmod.parse_config(manifest["config"]), tmp_path / "b")
        assert (tmp_path / "a" / "regret_curves.csv").read_bytes() == (tmp_path / "b" / "regret_curves.csv").read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        cfg = base()
        runner.run(cfg, tmp_path / "a", workers=1)
        runner.run(cfg, tmp_path / "b", workers=2)
        for name in ("regret_curves.csv", "detections.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_aggregation_matches_debug_traces(self, tmp_path):
        cfg = base(debug=True, replications=4)
        runner.run(cfg, tmp_path)
        per = np.load(tmp_path / "replications.npz")
        rows = read_csv(tmp_path / "regret_curves.csv")[1:]
        for key in ("ti-ucb", "sw-ucb", "rexp3"):
            x = per[key]
            assert x.shape == (4, 300)
            mine = [(float(r[2]), float(r[3])) for r in rows if r[1] == key]
            for t in (0, 149, 299):
                col = x[:, t]
                mean = math.fsum(col) / 4
                sd = math.sqrt(math.fsum((c - mean) ** 2 for c in col) / 3)
                assert mine[t][0] == pytest.approx(mean, abs=1e-12)
                assert mine[t][1] == pytest.approx(sd / 2, abs=1e-12)

    def test_replications_use_distinct_seeds(self):
        res = runner.execute(base())
        assert len(set(res.seeds)) == 3

    def test_environment_fixed_unless_resampled(self):
        cfg = base()
        assert runner.build_environment(cfg, 0).describe() == runner.build_environment(cfg, 5).describe()
        env = dict(cfg.environment.model_dump(), resample_per_replication=True)
        cfg2 = base(environment=env)
        assert runner.build_environment(cfg2, 0).describe() != runner.build_environment(cfg2, 1).describe()
        res = runner.execute(cfg2)
        assert len(res.manifest["environments"]) == 3

    def test_cost_wrapper_from_config(self):
        env = base(environment={"kind": "arms", "arms": [{"type": "constant", "value": 0.5}],
                                "cost": {"per_arm": 0.01}})
        built = runner.build_environment(env)
        assert isinstance(built, CostAdjusted) and built.mean(0, 3) == pytest.approx(0.48)

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            runner.run(base(replications=1, horizon=20), blocker / "out")


def trace_cfg(tmp_path, known=True, policies=None):
    rng = np.random.default_rng(0)
    write_trace(tmp_path / "t.csv", [rng.random(200).tolist(), (0.5 + 0.1 * rng.random(200)).tolist()])
    return base(
        horizon=100,
        environment={"kind": "trace", "path": str(tmp_path / "t.csv"), "known_means": known, "noise_std": 0.05},
        policies=policies or [{"name": "ti-ucb", "params": {"omega": 5}}, {"name": "sw-ucb"}],
    )


class TestTraces:
    def test_known_means_regret(self, tmp_path):
        res = runner.execute(trace_cfg(tmp_path, policies=[{"name": "greedy"}]))
        assert np.all(res.mean["greedy"] == 0.0)

    def test_estimated_means(self, tmp_path):
        # with one arm every policy follows the greedy path, so the estimates cover it
        write_trace(tmp_path / "one.csv", [np.linspace(0, 1, 50).tolist()])
        cfg = base(
            horizon=50,
            environment={"kind": "trace", "path": str(tmp_path / "one.csv"), "known_means": False, "noise_std": 0.1},
        )
        res = runner.execute(cfg)
        assert all(np.all(res.mean[k] == 0.0) for k in res.policies)

    def test_estimates_average_replications(self):
        outs = [
            runner._ReplicationOutput(r, 0, {"p": np.array([0, 1, 0])}, None,
                                      {"p": np.array([1.0, 2.0, 3.0]) + r}, {}, {})
            for r in range(2)
        ]
        est = runner._estimate_means(outs, 2, 3)
        assert est[0, :2].tolist() == [1.5, 3.5] and est[1, 0] == 2.5
        assert np.isnan(est[1, 1]) and np.isnan(est[0, 2])

    def test_estimates_must_cover_greedy(self, tmp_path):
        cfg = base(
            horizon=30,
            replications=2,
            environment={"kind": "trace", "path": str(tmp_path / "t.csv"), "known_means": False},
            policies=[{"name": "sw-ucb"}],
        )
        write_trace(tmp_path / "t.csv", [[0.0] * 30, [1.0] * 30])
        with pytest.raises(CoverageError):
            runner.execute(cfg)

    def test_oracle_needs_means(self, tmp_path):
        with pytest.raises(UnsupportedError):
            runner.oracle(trace_cfg(tmp_path, known=False))

    def test_greedy_needs_means(self, tmp_path):
        with pytest.raises(UnsupportedError):
            runner.validate(trace_cfg(tmp_path, known=False, policies=[{"name": "greedy"}]))


class TestSweep:
    def test_single_omega_equals_run(self, tmp_path):
        cfg = base(policies=[{"name": "ti-ucb", "params": {"omega": 4}}])
        rows = runner.sweep_window(cfg, [4], tmp_path / "sweep")
        res = runner.run(cfg, tmp_path / "run")
        assert rows == [(4, res.final_mean("ti-ucb"), res.final_stderr("ti-ucb"))]
        assert (tmp_path / "sweep" / "omega_4" / "regret_curves.csv").read_bytes() == (
            tmp_path / "run" / "regret_curves.csv"
        ).read_bytes()

    def test_fourteen_rows(self, tmp_path):
        cfg = base(horizon=100, replications=2)
        rows = runner.sweep_window(cfg, None, tmp_path)
        table = read_csv(tmp_path / "sweep.csv")
        assert table[0] == ["omega", "mean_final_regret", "stderr"]
        assert [int(r[0]) for r in table[1:]] == [2**k for k in range(14)] == [r[0] for r in rows]

    def test_needs_ti_ucb(self, tmp_path):
        with pytest.raises(Exception, match="ti-ucb"):
            runner.sweep_window(base(policies=[{"name": "sw-ucb"}]), [2], tmp_path)


class TestOracle:
    def test_single_arm(self):
        cfg = base(environment={"kind": "arms", "arms": [{"type": "constant", "value": 0.3}]})
        assert runner.oracle(cfg)["counts"] == [300]

    def test_two_arm_example(self):
        cfg = base(
            horizon=4,
            environment={"kind": "arms", "arms": [{"type": "constant", "value": 0.5},
                                                  {"type": "sequence", "values": [0.1, 0.9]}]},
        )
        report = runner.oracle(cfg)
        assert report["counts"] == [4, 0]
        assert report["total_reward"] == pytest.approx(2.0)
        assert report["min_gap"] == pytest.approx(0.4)
        assert json.loads(json.dumps(report)) == report


def test_curve_environment_round_trip_through_manifest():
    env = runner.build_environment(base())
    assert isinstance(env, CurveEnvironment)
    again = runner.build_environment(base())
    assert env.describe() == again.describe()


def test_trace_environment_kind(tmp_path):
    assert isinstance(runner.build_environment(trace_cfg(tmp_path)), TraceEnvironment)
