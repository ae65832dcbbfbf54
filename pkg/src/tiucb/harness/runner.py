"""Seeded multi-replication execution, aggregation and result files."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tiucb import __version__
from tiucb.baselines import KLUCB, SWKLUCB, SWTS, SWUCB, BaselineParams, GreedyOracle, Rexp3, Ser4
from tiucb.core import Environment, Policy, run_episode
from tiucb.environments import (
    CostAdjusted,
    CurveEnvironment,
    FamilyRanges,
    arm_from_dict,
    load_trace,
    sample_family,
)
from tiucb.errors import ConfigurationError, CoverageError, UnsupportedError
from tiucb.harness.config import ExperimentConfig, PolicyConfig
from tiucb.policy import TiUcbParams, TiUcbPolicy
from tiucb.regret import greedy_allocation, mean_table, min_gap, realized_rewards

log = logging.getLogger(__name__)

MAX_PLOT_POINTS = 2000

# spawn-key namespaces under the master seed
_REPLICATION_NS = 2
_ENV_NS = 3

_BASELINE_KEYS = {
    "kl-ucb": {"c": "kl_ucb_c"},
    "sw-ucb": {"tau": "sw_ucb_tau", "xi": "sw_ucb_xi"},
    "sw-ts": {"tau": "sw_ts_tau"},
    "sw-kl-ucb": {"tau": "sw_kl_ucb_tau", "c": "kl_ucb_c"},
    "rexp3": {"batch": "rexp3_batch", "gamma": "rexp3_gamma", "variation": "rexp3_variation"},
    "ser4": {"delta": "ser4_delta", "epsilon": "ser4_epsilon", "phi": "ser4_phi", "switches": "ser4_switches"},
}


def replication_seed(master: int, replication: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(_REPLICATION_NS, replication))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _param_seed(cfg: ExperimentConfig, replication: int) -> np.random.SeedSequence:
    env = cfg.environment
    base = env.param_seed if env.param_seed is not None else cfg.seed
    if env.resample_per_replication:
        return np.random.SeedSequence(base, spawn_key=(_ENV_NS, replication))
    return np.random.SeedSequence(base, spawn_key=(_ENV_NS,))


def build_environment(cfg: ExperimentConfig, replication: int = 0) -> Environment:
    e = cfg.environment
    if e.kind == "sampled":
        ranges = FamilyRanges(**e.ranges.model_dump())
        arms = sample_family(e.families, rng=np.random.default_rng(_param_seed(cfg, replication)), ranges=ranges)
        env: Environment = CurveEnvironment(arms, e.noise_std, e.clip)
    elif e.kind == "arms":
        env = CurveEnvironment([arm_from_dict(a) for a in e.arms], e.noise_std, e.clip)
    else:
        env = load_trace(e.path, noise_std=e.noise_std, known_means=e.known_means)
    if e.cost is not None:
        env = CostAdjusted(env, e.cost.per_arm, e.cost.stall_window, e.cost.stall_threshold)
    return env


def _baseline_kwargs(pc: PolicyConfig, bp: BaselineParams) -> dict:
    keys = _BASELINE_KEYS[pc.name]
    return {k: getattr(bp, f) for k, f in keys.items() if hasattr(bp, f)}


def resolve_policy_params(pc: PolicyConfig, n_arms: int, horizon: int) -> dict:
    """Every parameter the policy will actually use, defaults filled in."""
    if pc.name == "greedy":
        if pc.params:
            raise ConfigurationError("greedy takes no parameters")
        return {}
    if pc.name == "ti-ucb":
        allowed = {"delta", "omega", "gamma", "exploration_scale"}
        unknown = set(pc.params) - allowed
        if unknown:
            raise ConfigurationError(f"policy {pc.key}: unknown parameters {sorted(unknown)}")
        p = TiUcbParams.for_horizon(horizon, **pc.params)
        return {"delta": p.delta, "omega": p.omega, "gamma": p.gamma, "exploration_scale": p.exploration_scale}
    keys = _BASELINE_KEYS[pc.name]
    unknown = set(pc.params) - set(keys)
    if unknown:
        raise ConfigurationError(f"policy {pc.key}: unknown parameters {sorted(unknown)}")
    overrides = {keys[k]: v for k, v in pc.params.items()}
    bp = BaselineParams.resolve(horizon, n_arms, **overrides)
    return _baseline_kwargs(pc, bp)


def make_policy(pc: PolicyConfig, env: Environment, horizon: int, bounds=(0.0, 1.0)) -> Policy:
    k = env.num_arms
    params = resolve_policy_params(pc, k, horizon)
    if pc.name == "greedy":
        if not env.has_known_means:
            raise UnsupportedError("greedy policy needs known means")
        return GreedyOracle(env)
    if pc.name == "ti-ucb":
        return TiUcbPolicy(k, horizon, TiUcbParams(**params))
    bounded = {"bounds": tuple(bounds)}
    if pc.name == "kl-ucb":
        return KLUCB(k, params["c"], **bounded)
    if pc.name == "sw-ucb":
        return SWUCB(k, params["tau"], params["xi"], **bounded)
    if pc.name == "sw-ts":
        return SWTS(k, params["tau"], **bounded)
    if pc.name == "sw-kl-ucb":
        return SWKLUCB(k, params["tau"], params["c"], **bounded)
    if pc.name == "rexp3":
        return Rexp3(k, params["batch"], params["gamma"], **bounded)
    if pc.name == "ser4":
        return Ser4(k, params["delta"], params["epsilon"], params["phi"], **bounded)
    raise ConfigurationError(f"unknown policy {pc.name}")


def validate(cfg: ExperimentConfig) -> Environment:
    """Build everything once without running; raises on any inconsistency."""
    env = build_environment(cfg, 0)
    for pc in cfg.policies:
        make_policy(pc, env, cfg.horizon, cfg.environment.reward_bounds)
    return env


@dataclass
class _ReplicationOutput:
    replication: int
    seed: int
    arms: dict[str, np.ndarray]
    regret: dict[str, np.ndarray] | None
    values: dict[str, np.ndarray] | None
    detections: dict[str, list[tuple[int, int]]]
    env_description: dict


def _describe(env: Environment) -> dict:
    return env.describe() if hasattr(env, "describe") else {"kind": type(env).__name__}


def _run_replication(cfg: ExperimentConfig, replication: int) -> _ReplicationOutput:
    env = build_environment(cfg, replication)
    seed = replication_seed(cfg.seed, replication)
    T = cfg.horizon
    known = env.has_known_means
    if known:
        table = mean_table(env, T)
        greedy = greedy_allocation(table, T)
    arms, regret, values, detections = {}, {}, {}, {}
    for pc in cfg.policies:
        policy = make_policy(pc, env, T, cfg.environment.reward_bounds)
        samples = run_episode(env, policy, T, seed)
        a = np.fromiter((s.arm for s in samples), dtype=np.int32, count=T)
        arms[pc.key] = a
        if known:
            regret[pc.key] = greedy.cumulative - np.cumsum(realized_rewards(table, a))
        else:
            values[pc.key] = np.fromiter((s.value for s in samples), dtype=float, count=T)
        detections[pc.key] = list(getattr(policy, "detections", []))
    return _ReplicationOutput(
        replication, seed, arms, regret if known else None, None if known else values, detections, _describe(env)
    )


def _run_one(args):
    return _run_replication(*args)


def _estimate_means(outs: list[_ReplicationOutput], n_arms: int, horizon: int) -> np.ndarray:
    """Per-pull averages of observed rewards across all replications and policies."""
    sums = np.zeros((n_arms, horizon))
    counts = np.zeros((n_arms, horizon))
    for out in outs:
        for key, a in out.arms.items():
            idx = np.zeros(len(a), dtype=np.int64)
            for i in range(n_arms):
                mask = a == i
                idx[mask] = np.arange(int(mask.sum()))
            np.add.at(sums, (a, idx), out.values[key])
            np.add.at(counts, (a, idx), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def _greedy_on_estimates(table: np.ndarray, horizon: int):
    def fn(i):
        def f(n):
            v = table[i, n - 1] if n <= table.shape[1] else math.nan
            if math.isnan(v):
                raise CoverageError(i, n)
            return float(v)

        return f

    return greedy_allocation([fn(i) for i in range(table.shape[0])], horizon)


@dataclass
class RunResult:
    policies: list[str]
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    final: dict[str, np.ndarray]  # final regret of every replication
    counts: dict[str, np.ndarray]  # (R, K) final pull counts
    detections: list[tuple[str, int, int, int]]
    seeds: list[int]
    wall_clock: float
    manifest: dict = field(repr=False, default_factory=dict)
    per_replication: dict[str, np.ndarray] | None = field(repr=False, default=None)

    def final_mean(self, policy: str) -> float:
        return float(self.final[policy].mean())

    def final_stderr(self, policy: str) -> float:
        return _stderr(self.final[policy])


def _stderr(x: np.ndarray, axis: int = 0):
    r = x.shape[axis]
    if r < 2:
        return np.zeros_like(np.take(x, 0, axis=axis), dtype=float) if x.ndim > 1 else 0.0
    return x.std(axis=axis, ddof=1) / math.sqrt(r)


def execute(cfg: ExperimentConfig, workers: int | None = None) -> RunResult:
    """Run every replication and aggregate; writes nothing."""
    t0 = time.perf_counter()
    workers = workers or cfg.workers
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_one, jobs))
    else:
        outs = [_run_one(j) for j in jobs]
    outs.sort(key=lambda o: o.replication)

    keys = [pc.key for pc in cfg.policies]
    T = cfg.horizon
    if outs[0].regret is None:
        est = _estimate_means(outs, _n_arms(outs), T)
        greedy = _greedy_on_estimates(est, T)
        for o in outs:
            o.regret = {key: greedy.cumulative - np.cumsum(realized_rewards(est, a)) for key, a in o.arms.items()}

    stack = {key: np.vstack([o.regret[key] for o in outs]) for key in keys}
    n_arms = _n_arms(outs)
    result = RunResult(
        policies=keys,
        mean={k: s.mean(axis=0) for k, s in stack.items()},
        stderr={k: _stderr(s) if s.shape[0] > 1 else np.zeros(T) for k, s in stack.items()},
        final={k: s[:, -1].copy() for k, s in stack.items()},
        counts={k: np.vstack([np.bincount(o.arms[k], minlength=n_arms) for o in outs]) for k in keys},
        detections=[(k, o.replication, a, t) for k in keys for o in outs for (a, t) in o.detections[k]],
        seeds=[o.seed for o in outs],
        wall_clock=time.perf_counter() - t0,
        per_replication=stack if cfg.debug else None,
    )
    result.manifest = build_manifest(cfg, outs)
    return result


def _n_arms(outs) -> int:
    d = outs[0].env_description
    for key in ("arms", "lengths"):
        if key in d:
            return len(d[key])
    if "inner" in d:
        return _n_arms([_ReplicationOutput(0, 0, {}, None, None, {}, d["inner"])])
    return max(int(a.max()) for o in outs for a in o.arms.values()) + 1


def build_manifest(cfg: ExperimentConfig, outs: list[_ReplicationOutput]) -> dict:
    env0 = build_environment(cfg, 0)
    policies = {
        pc.key: {"name": pc.name, "params": resolve_policy_params(pc, env0.num_arms, cfg.horizon)}
        for pc in cfg.policies
    }
    envs = (
        [o.env_description for o in outs]
        if cfg.environment.resample_per_replication
        else [outs[0].env_description]
    )
    return {
        "software": {"package": "tiucb", "version": __version__},
        "config": cfg.model_dump(mode="json"),
        "replication_seeds": [o.seed for o in outs],
        "environments": envs,
        "resolved_policies": policies,
    }


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_out(path: Path):
    return open(path, "w", newline="", encoding="utf-8")


def downsample_indices(n: int, max_points: int = MAX_PLOT_POINTS) -> np.ndarray:
    if n <= max_points:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_points).round().astype(np.int64))


def write_outputs(result: RunResult, out_dir: str | Path, debug: bool = False) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with _open_out(out / "regret_curves.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "policy", "mean_regret", "stderr"])
        for key in result.policies:
            m, s = result.mean[key], result.stderr[key]
            for t in range(len(m)):
                w.writerow([t + 1, key, _fmt(m[t]), _fmt(s[t])])
    with _open_out(out / "detections.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "replication", "arm", "step"])
        w.writerows(result.detections)
    idx = downsample_indices(len(result.mean[result.policies[0]]))
    plot = {
        "steps": (idx + 1).tolist(),
        "curves": {
            k: {"mean": result.mean[k][idx].tolist(), "stderr": result.stderr[k][idx].tolist()}
            for k in result.policies
        },
    }
    (out / "plot_data.json").write_text(json.dumps(plot) + "\n", encoding="utf-8")
    manifest = dict(result.manifest)
    manifest["final_regret"] = {
        k: {"mean": result.final_mean(k), "stderr": result.final_stderr(k)} for k in result.policies
    }
    manifest["final_counts"] = {k: result.counts[k].tolist() for k in result.policies}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (out / "timing.json").write_text(json.dumps({"wall_clock_seconds": result.wall_clock}) + "\n")
    if debug and result.per_replication is not None:
        np.savez_compressed(out / "replications.npz", **result.per_replication)
    return out


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None, workers: int | None = None) -> RunResult:
    validate(cfg)
    result = execute(cfg, workers)
    write_outputs(result, out_dir or cfg.output_dir, debug=cfg.debug)
    log.info("run finished in %.1fs", result.wall_clock)
    return result


def _with_omega(cfg: ExperimentConfig, omega: int) -> ExperimentConfig:
    tis = [pc for pc in cfg.policies if pc.name == "ti-ucb"]
    if not tis:
        raise ConfigurationError("sweep needs a ti-ucb policy in 'policies'")
    pc = tis[0].model_copy(update={"params": {**tis[0].params, "omega": omega}})
    return cfg.model_copy(update={"policies": [pc]})


def sweep_window(
    cfg: ExperimentConfig,
    omegas: list[int] | None = None,
    out_dir: str | Path | None = None,
    workers: int | None = None,
) -> list[tuple[int, float, float]]:
    """One TI-UCB run per window size; writes ``sweep.csv`` plus one run directory per omega."""
    if omegas is None:
        omegas = cfg.sweep.omegas if cfg.sweep else [2**k for k in range(14)]
    out = Path(out_dir or cfg.output_dir)
    rows = []
    for omega in omegas:
        sub = _with_omega(cfg, omega)
        res = run(sub, out / f"omega_{omega}", workers)
        key = sub.policies[0].key
        rows.append((omega, res.final_mean(key), res.final_stderr(key)))
        log.info("omega=%d final regret %.2f", omega, rows[-1][1])
    out.mkdir(parents=True, exist_ok=True)
    with _open_out(out / "sweep.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "mean_final_regret", "stderr"])
        for omega, m, s in rows:
            w.writerow([omega, _fmt(m), _fmt(s)])
    return rows


def oracle(cfg: ExperimentConfig) -> dict:
    """Greedy-optimal allocation report for the (replication-0) environment."""
    env = build_environment(cfg, 0)
    if not env.has_known_means:
        raise UnsupportedError("oracle needs known means; trace has known_means: false")
    T = cfg.horizon
    table = mean_table(env, T)
    g = greedy_allocation(table, T)
    return {
        "horizon": T,
        "counts": list(g.counts),
        "total_reward": g.total,
        "min_gap": min_gap(table, T),
    }
