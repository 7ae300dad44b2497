"""Experiment harness: seeded replications, metrics, baselines, sweeps, CSV export.

A run is fully determined by (config, seed, cell index, replication index):
every random stream is derived from that tuple, so sweeps give identical
results at any parallelism degree.  Per-step metrics cover the realized
instantaneous and cumulative regret, their running averages, the local
averaged regret and arm-selection ratios at a fixed probe point, and the
cumulative reward (the only score available in classification mode).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .environments import (
    BanditSample,
    ClassificationEnvironment,
    SourceSpec,
    SyntheticEnvSpec,
    SyntheticEnvironment,
    behavior_policy_vector,
    classification_to_bandit,
    gen_aux_dataset,
    ingest_classification_csv,
)
from .estimation import DEFAULT_C_CONF
from .policy import Policy, PolicyConfig, RunRecord, StepRow, run_policy


class ConfigError(ValueError):
    """Raised when an experiment configuration fails validation."""


@dataclass(frozen=True)
class ClassificationDataSpec:
    """Target data taken from an ingested (scaled) classification CSV."""

    data: str
    label_column: str
    d: int


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    probe_x is the fixed point for the local metrics; it defaults to
    (1/3, ..., 1/3).  record_every thins the per-step CSV rows (structural
    events are never thinned).
    """

    env: SyntheticEnvSpec | ClassificationDataSpec
    epsilon: float
    n_target: int
    sources: tuple[SourceSpec, ...] = ()
    c_conf: float = DEFAULT_C_CONF
    policy: str = "ldp"
    seed: int = 0
    replications: int = 1
    probe_x: Optional[tuple[float, ...]] = None
    max_depth: Optional[int] = None
    record_every: int = 1
    name: str = "experiment"

    def __post_init__(self):
        if self.policy not in ("ldp", "uniform", "oracle"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive (inf for non-private)")
        if self.n_target < 1:
            raise ConfigError("n_target must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        if self.record_every < 1:
            raise ConfigError("record_every must be positive")
        if not self.c_conf > 0:
            raise ConfigError("c_conf must be positive")

    @property
    def dim(self) -> int:
        return self.env.d

    @property
    def probe(self) -> tuple[float, ...]:
        return self.probe_x if self.probe_x is not None else (1.0 / 3.0,) * self.dim


def _parse_epsilon(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"bad epsilon value {value!r}")
    return float(value)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    data = dict(raw)
    env_raw = data.pop("env", None)
    if not isinstance(env_raw, dict):
        raise ConfigError("config requires an 'env' object")
    kind = env_raw.get("kind", "synthetic")
    try:
        if kind == "synthetic":
            env = SyntheticEnvSpec(
                d=int(env_raw["d"]),
                n_arms=int(env_raw["n_arms"]),
                reward_family=env_raw.get("reward_family", "logistic_bump"),
                noise=env_raw.get("noise", "bernoulli"),
                noise_sd=float(env_raw.get("noise_sd", 0.25)),
            )
        elif kind == "classification":
            env = ClassificationDataSpec(
                data=str(env_raw["data"]),
                label_column=str(env_raw.get("label_column", "label")),
                d=int(env_raw["d"]),
            )
        else:
            raise ConfigError(f"unknown env kind {kind!r}")
        sources = tuple(
            SourceSpec(
                gamma=float(s.get("gamma", 0.0)),
                kappa=float(s.get("kappa", 1.0)),
                epsilon=_parse_epsilon(s.get("epsilon", "inf")),
                n_samples=int(s["n_samples"]),
                data=s.get("data"),
            )
            for s in data.pop("sources", [])
        )
        probe = data.pop("probe_x", None)
        cfg = ExperimentConfig(
            env=env,
            epsilon=_parse_epsilon(data.pop("epsilon")),
            n_target=int(data.pop("n_target")),
            sources=sources,
            c_conf=float(data.pop("c_conf", DEFAULT_C_CONF)),
            policy=str(data.pop("policy", "ldp")),
            seed=int(data.pop("seed", 0)),
            replications=int(data.pop("replications", 1)),
            probe_x=tuple(float(v) for v in probe) if probe is not None else None,
            max_depth=(lambda v: None if v is None else int(v))(data.pop("max_depth", None)),
            record_every=int(data.pop("record_every", 1)),
            name=str(data.pop("name", "experiment")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if data:
        raise ConfigError(f"unknown config fields: {sorted(data)}")
    if len(cfg.probe) != cfg.dim:
        raise ConfigError("probe_x dimension mismatch")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw)


# --------------------------------------------------------------------- runs


@dataclass
class MetricSeries:
    """Per-target-step series; regret entries are NaN in classification mode."""

    t: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    global_avg_regret: np.ndarray
    local_avg_regret: np.ndarray
    arm_ratio: np.ndarray  # (n_target, K): running average of P(arm | probe)
    cum_reward: np.ndarray
    n_bins: np.ndarray
    n_active_arms_total: np.ndarray


@dataclass
class RunResult:
    """One replication: the raw record, derived metrics and final learner state."""

    config_id: str
    seed: int
    rep: int
    record: RunRecord
    metrics: MetricSeries
    snapshot: dict


def derive_rngs(seed: int, cell: int, rep: int) -> dict[str, np.random.Generator]:
    """Independent streams for one (seed, sweep cell, replication) triple."""
    root = np.random.SeedSequence([int(seed), int(cell), int(rep)])
    names = ("context", "reward", "aux", "arm", "noise", "tie", "perm")
    return {
        name: np.random.default_rng(child)
        for name, child in zip(names, root.spawn(len(names)))
    }


class _ProbeCollector:
    """Accumulates per-step metrics during a run (target phase only)."""

    def __init__(self, env, probe: tuple[float, ...], n_arms: int):
        self.env = env
        self.probe = np.asarray(probe)
        self.n_arms = n_arms
        if env.has_regret:
            self.probe_best = env.best_arm(self.probe)
            self.probe_regret = np.array(
                [env.instant_regret(self.probe, k) for k in range(1, n_arms + 1)]
            )
        self.inst: list[float] = []
        self.local: list[float] = []
        self.ratio: list[np.ndarray] = []
        self.reward: list[float] = []
        self.n_bins: list[int] = []
        self.n_arms_total: list[int] = []

    def observe_policy(self, policy: Policy, row: StepRow) -> None:
        if row.source != 0:
            return
        arms = policy.active_arms_at(self.probe)
        probs = np.zeros(self.n_arms)
        probs[[k - 1 for k in arms]] = 1.0 / len(arms)
        self._push(row, probs, policy.n_active_bins, policy.total_active_arms)

    def observe_fixed(self, row: StepRow, probs: np.ndarray) -> None:
        self._push(row, probs, 1, self.n_arms)

    def _push(self, row: StepRow, probs: np.ndarray, n_bins: int, n_arms_total: int):
        self.inst.append(row.regret)
        self.reward.append(row.reward)
        self.ratio.append(probs)
        if self.env.has_regret:
            self.local.append(float(np.dot(probs, self.probe_regret)))
        else:
            self.local.append(math.nan)
        self.n_bins.append(n_bins)
        self.n_arms_total.append(n_arms_total)

    def series(self) -> MetricSeries:
        n = len(self.inst)
        t = np.arange(1, n + 1, dtype=float)
        inst = np.asarray(self.inst)
        cum = np.cumsum(inst)
        local = np.cumsum(np.asarray(self.local)) / t
        ratio = np.cumsum(np.asarray(self.ratio), axis=0) / t[:, None]
        return MetricSeries(
            t=t,
            inst_regret=inst,
            cum_regret=cum,
            global_avg_regret=cum / t,
            local_avg_regret=local,
            arm_ratio=ratio,
            cum_reward=np.cumsum(np.asarray(self.reward)),
            n_bins=np.asarray(self.n_bins, dtype=float),
            n_active_arms_total=np.asarray(self.n_arms_total, dtype=float),
        )


def _load_classification_rows(path: str, d: int, label_column: str):
    rows, meta = ingest_classification_csv(path, d, label_column)
    return rows, meta["n_arms"]


def _build_environment(config: ExperimentConfig, rngs) -> tuple[object, list[list[BanditSample]]]:
    """Instantiate the target environment and generate the auxiliary datasets."""
    if isinstance(config.env, SyntheticEnvSpec):
        env = SyntheticEnvironment(config.env)
        aux = [gen_aux_dataset(s, config.env, rngs["aux"]) for s in config.sources]
        return env, aux
    rows, n_arms = _load_classification_rows(
        config.env.data, config.env.d, config.env.label_column
    )
    if config.n_target > len(rows):
        raise ConfigError(
            f"n_target={config.n_target} exceeds dataset size {len(rows)}"
        )
    target_rows = classification_to_bandit(rows, "target", rngs["perm"])
    env = ClassificationEnvironment(target_rows, n_arms)
    aux = []
    for s in config.sources:
        if s.data is None:
            raise ConfigError("classification-mode sources need a 'data' path")
        src_rows, src_arms = _load_classification_rows(
            s.data, config.env.d, config.env.label_column
        )
        if src_arms > n_arms:
            raise ConfigError("source dataset has labels outside the target's arms")
        samples = classification_to_bandit(
            src_rows, "source", rngs["aux"], behavior_policy_vector(s.kappa, n_arms)
        )
        if s.n_samples > len(samples):
            raise ConfigError("source n_samples exceeds dataset size")
        aux.append(samples[: s.n_samples])
    return env, aux


def run_single(config: ExperimentConfig, cell: int = 0, rep: int = 0,
               config_id: Optional[str] = None) -> RunResult:
    """One fully seeded replication of the configured experiment."""
    rngs = derive_rngs(config.seed, cell, rep)
    env, aux = _build_environment(config, rngs)
    collector = _ProbeCollector(env, config.probe, env.n_arms)
    cid = config_id if config_id is not None else config.name

    if config.policy == "ldp":
        pol = Policy(
            PolicyConfig(
                n_arms=env.n_arms,
                dim=config.dim,
                epsilon=config.epsilon,
                n_target=config.n_target,
                source_epsilons=tuple(s.epsilon for s in config.sources),
                source_sizes=tuple(len(ds) for ds in aux),
                c_conf=config.c_conf,
                max_depth=config.max_depth,
            ),
            rng_arm=rngs["arm"],
            rng_noise=rngs["noise"],
            rng_tie=rngs["tie"],
        )
        record = run_policy(
            pol, env, aux, rngs["context"], rngs["reward"],
            on_step=collector.observe_policy,
        )
        snapshot = pol.snapshot()
    else:
        record, snapshot = _run_fixed_policy(config, env, collector, rngs)
    return RunResult(cid, config.seed, rep, record, collector.series(), snapshot)


def _run_fixed_policy(config, env, collector, rngs):
    """Uniform-random and oracle reference policies share the run loop."""
    if config.policy == "oracle" and not env.has_regret:
        raise ConfigError("oracle policy needs known reward functions")
    n_arms = env.n_arms
    record = RunRecord(aux_total=0, n_target=config.n_target)
    uniform = np.full(n_arms, 1.0 / n_arms)
    for t in range(1, config.n_target + 1):
        x = env.sample_context(rngs["context"])
        if config.policy == "uniform":
            arm = int(rngs["arm"].integers(n_arms)) + 1
            probs = uniform
        else:
            arm = env.best_arm(x)
            probs = np.zeros(n_arms)
            probs[env.best_arm(collector.probe) - 1] = 1.0
        reward = float(env.draw_reward(arm, x, rngs["reward"]))
        row = StepRow(t, 0, tuple(float(v) for v in x), arm, reward)
        row.regret = float(env.instant_regret(x, arm))
        record.steps.append(row)
        collector.observe_fixed(row, probs)
    return record, {"policy": config.policy}


def run_experiment(config: ExperimentConfig, config_id: Optional[str] = None,
                   cell: int = 0) -> list[RunResult]:
    """All replications of one configuration, sequentially."""
    return [
        run_single(config, cell=cell, rep=rep, config_id=config_id)
        for rep in range(config.replications)
    ]


def expected_regret_probe(policy: Policy, env, n_mc: int,
                          rng: np.random.Generator) -> float:
    """Monte Carlo estimate of the current policy's instantaneous expected regret."""
    total = 0.0
    for _ in range(n_mc):
        x = env.sample_context(rng)
        arms = policy.active_arms_at(x)
        total += sum(env.instant_regret(x, k) for k in arms) / len(arms)
    return total / n_mc


def baseline_policies() -> dict[str, dict]:
    """Config overrides for the reference baselines (plug into any config)."""
    return {
        "uniform": {"policy": "uniform"},
        "oracle": {"policy": "oracle"},
        "nonprivate": {"policy": "ldp", "epsilon": math.inf},
    }


# ---------------------------------------------------------------- CSV export


def results_columns(n_arms: int) -> list[str]:
    return (
        ["config_id", "seed", "t", "cum_regret", "inst_regret",
         "global_avg_regret", "local_avg_regret"]
        + [f"arm_ratio_{k}" for k in range(1, n_arms + 1)]
        + ["cum_reward", "n_bins", "n_active_arms_total"]
    )


EVENT_COLUMNS = ["config_id", "seed", "t", "kind", "bin_depth", "bin_index", "detail"]


def _fmt(value: float) -> str:
    return repr(float(value))


def results_rows(result: RunResult, record_every: int = 1) -> Iterable[list]:
    """Thinned per-step rows in the results-CSV schema (last step always kept)."""
    m = result.metrics
    n = len(m.t)
    for i in range(n):
        step = i + 1
        if step % record_every and step != n:
            continue
        yield (
            [result.config_id, result.seed, step,
             _fmt(m.cum_regret[i]), _fmt(m.inst_regret[i]),
             _fmt(m.global_avg_regret[i]), _fmt(m.local_avg_regret[i])]
            + [_fmt(v) for v in m.arm_ratio[i]]
            + [_fmt(m.cum_reward[i]), int(m.n_bins[i]), int(m.n_active_arms_total[i])]
        )


def event_rows(result: RunResult) -> Iterable[list]:
    """Structural events with t relative to the start of the target phase."""
    offset = result.record.aux_total
    for e in result.record.events:
        yield [result.config_id, result.seed, e.step - offset,
               e.kind, e.bin.depth, e.bin.index, e.detail]


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def export_results(results: Sequence[RunResult], out_dir: str | Path,
                   record_every: int = 1) -> dict[str, Path]:
    """Write results.csv, events.csv and state.json for a batch of runs."""
    if not results:
        raise ValueError("nothing to export")
    n_arms = results[0].metrics.arm_ratio.shape[1]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out / "results.csv",
        "events": out / "events.csv",
        "state": out / "state.json",
    }
    write_csv(
        paths["results"],
        results_columns(n_arms),
        itertools.chain.from_iterable(results_rows(r, record_every) for r in results),
    )
    write_csv(
        paths["events"],
        EVENT_COLUMNS,
        itertools.chain.from_iterable(event_rows(r) for r in results),
    )
    state = {f"{r.config_id}/rep{r.rep}": r.snapshot for r in results}
    paths["state"].write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")
    return paths


# -------------------------------------------------------------------- sweeps


def mean_ci(values: Sequence[float], z: float = 1.96) -> tuple[float, float, float]:
    """Normal-approximation mean and 95% confidence interval across seeds."""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, mean, mean
    half = z * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, mean - half, mean + half


def wilcoxon_less(x: Sequence[float], y: Sequence[float]) -> float:
    """One-sided Wilcoxon signed-rank p-value for paired x < y."""
    from scipy.stats import wilcoxon

    return float(wilcoxon(np.asarray(x) - np.asarray(y), alternative="less").pvalue)


def _set_dotted(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


@dataclass(frozen=True)
class SweepCell:
    index: int
    config_id: str
    assignment: tuple[tuple[str, object], ...]
    config: ExperimentConfig


def expand_sweep(base: dict, axes: dict[str, list]) -> list[SweepCell]:
    """Cartesian product of axis values applied onto the base config dict."""
    if not axes:
        axes = {}
    names = sorted(axes)
    cells = []
    for idx, combo in enumerate(itertools.product(*(axes[n] for n in names))):
        raw = json.loads(json.dumps(base))  # deep copy via round-trip
        for name, value in zip(names, combo):
            _set_dotted(raw, name, value)
        cfg = config_from_dict(raw)
        label = ",".join(f"{n}={v}" for n, v in zip(names, combo))
        cid = f"{cfg.name}[{label}]" if label else cfg.name
        cells.append(SweepCell(idx, cid, tuple(zip(names, combo)), cfg))
    return cells


def _sweep_task(args) -> tuple[int, int, list, list, float, float]:
    cell_dict, cell_index, config_id, rep = args
    cfg = config_from_dict(cell_dict)
    result = run_single(cfg, cell=cell_index, rep=rep, config_id=config_id)
    res_rows = [list(r) for r in results_rows(result, cfg.record_every)]
    ev_rows = [list(r) for r in event_rows(result)]
    final_regret = float(result.metrics.cum_regret[-1])
    final_reward = float(result.metrics.cum_reward[-1])
    return cell_index, rep, res_rows, ev_rows, final_regret, final_reward


def run_sweep(base: dict, axes: dict[str, list], jobs: int = 1):
    """Run all cells x replications; returns (cells, results rows, event rows, summary rows).

    Each task owns rng streams derived from (seed, cell index, replication),
    so the output is independent of the parallelism degree.
    """
    cells = expand_sweep(base, axes)
    tasks = []
    for cell in cells:
        raw = json.loads(json.dumps(base))
        for name, value in cell.assignment:
            _set_dotted(raw, name, value)
        for rep in range(cell.config.replications):
            tasks.append((raw, cell.index, cell.config_id, rep))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_task, tasks))
    else:
        outcomes = [_sweep_task(t) for t in tasks]
    outcomes.sort(key=lambda o: (o[0], o[1]))
    all_results: list[list] = []
    all_events: list[list] = []
    finals: dict[int, list[tuple[float, float]]] = {}
    for cell_index, rep, res_rows, ev_rows, freg, frew in outcomes:
        all_results.extend(res_rows)
        all_events.extend(ev_rows)
        finals.setdefault(cell_index, []).append((freg, frew))
    summary = []
    for cell in cells:
        pairs = finals.get(cell.index, [])
        regrets = [p[0] for p in pairs]
        rewards = [p[1] for p in pairs]
        reg_mean, reg_lo, reg_hi = mean_ci(regrets)
        rew_mean, rew_lo, rew_hi = mean_ci(rewards)
        summary.append(
            [cell.config_id]
            + [v for _, v in cell.assignment]
            + [len(pairs), _fmt(reg_mean), _fmt(reg_lo), _fmt(reg_hi),
               _fmt(rew_mean), _fmt(rew_lo), _fmt(rew_hi)]
        )
    return cells, all_results, all_events, summary


def summary_columns(axes: dict[str, list]) -> list[str]:
    return (
        ["config_id"]
        + sorted(axes)
        + ["replications", "mean_final_cum_regret", "ci95_lo", "ci95_hi",
           "mean_final_cum_reward", "reward_ci95_lo", "reward_ci95_hi"]
    )
