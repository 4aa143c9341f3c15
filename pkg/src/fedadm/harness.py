"""Experiment orchestration: sweeps, multi-seed averaging, CSV emission.

Four sweep kinds are supported: training-episode count, consumer-domain
capacity, offered-load scale and federation-cost scale.  Every cell derives
its random streams from (experiment kind, sweep value, algorithm, repetition)
hashes, so results are reproducible regardless of scheduling.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .agents import (
    LearningParams,
    completed_policy,
    evaluate_policy,
    greedy_action,
    q_learning_train,
    r_learning_train,
)
from .dp import DpParams, policy_iteration
from .env import derive_seed
from .errors import ConfigError, SweepCellError
from .mdp import Mdp, exact_average_profit
from .model import SystemConfig

SWEEP_KINDS = ("episodes", "local_capacity", "offered_load", "federation_cost")

DEFAULT_GRIDS = {
    "episodes": (10, 25, 50, 100, 150, 200),
    "local_capacity": (10, 20, 30, 45, 60, 90, 120),
    "offered_load": (0.25, 0.5, 1.0, 1.5, 2.0),
    "federation_cost": (0.0, 0.5, 1.0, 1.5, 2.0, 3.0),
}

CSV_HEADER = (
    "experiment", "sweep", "algorithm", "seed",
    "avg_profit", "gap", "accepted", "federated", "rejected",
)

MEAN_SEED = "mean"


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: str  # dp | greedy | q | r
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("dp", "greedy", "q", "r"):
            raise ConfigError(f"unknown algorithm kind {self.kind!r}")
        if self.kind == "q" and self.gamma is None:
            raise ConfigError("q-learning algorithm needs a gamma")

    @property
    def label(self) -> str:
        if self.kind == "q":
            return f"QL-{self.gamma:g}"
        return {"dp": "dp", "greedy": "greedy", "r": "RL"}[self.kind]

    @property
    def is_learner(self) -> bool:
        return self.kind in ("q", "r")


def parse_algorithms(text: str) -> tuple[AlgorithmSpec, ...]:
    """Parse a comma-separated algorithm list like ``dp,greedy,QL-0.9,RL``."""
    out = []
    for raw in text.split(","):
        label = raw.strip()
        if not label:
            continue
        low = label.lower()
        if low == "dp":
            out.append(AlgorithmSpec("dp"))
        elif low == "greedy":
            out.append(AlgorithmSpec("greedy"))
        elif low in ("rl", "r"):
            out.append(AlgorithmSpec("r"))
        elif low.startswith("ql-"):
            out.append(AlgorithmSpec("q", gamma=float(label[3:])))
        else:
            raise ConfigError(f"unknown algorithm label {label!r}")
    if not out:
        raise ConfigError("empty algorithm list")
    return tuple(out)


DEFAULT_ALGORITHMS = (
    AlgorithmSpec("dp"),
    AlgorithmSpec("greedy"),
    AlgorithmSpec("q", gamma=0.5),
    AlgorithmSpec("q", gamma=0.9),
    AlgorithmSpec("r"),
)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    base_config: SystemConfig
    sweep_values: tuple = ()
    algorithms: tuple[AlgorithmSpec, ...] = DEFAULT_ALGORITHMS
    repetitions: int = 10
    eval_demands: int = 100_000
    eval_seeds: int = 10
    seed_base: int = 0
    learning: LearningParams = field(default_factory=LearningParams)
    dp_params: DpParams = field(default_factory=DpParams)
    # When set, the gap reference is the exact stationary-chain profit of the
    # DP policy instead of its simulated estimate.
    exact_reference: bool = False

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ConfigError(f"unknown sweep kind {self.kind!r}")
        values = self.sweep_values or DEFAULT_GRIDS[self.kind]
        values = tuple(values)
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError(f"sweep values must be strictly increasing, got {values}")
        object.__setattr__(self, "sweep_values", values)
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.eval_seeds < 1 or self.eval_demands < 1:
            raise ConfigError("eval_seeds and eval_demands must be >= 1")

    def config_for(self, value) -> SystemConfig:
        if self.kind == "episodes":
            return self.base_config
        if self.kind == "local_capacity":
            return self.base_config.with_local_capacity(int(value))
        if self.kind == "offered_load":
            return self.base_config.with_load_scale(float(value))
        return self.base_config.with_cost_scale(float(value))

    def eval_seed_list(self) -> list[int]:
        return [derive_seed(self.seed_base, self.kind, "eval", j)
                for j in range(self.eval_seeds)]

    def train_seed(self, value, label: str, rep: int) -> int:
        if self.kind == "episodes":
            # One training run serves every episode count via snapshots.
            return derive_seed(self.seed_base, self.kind, label, "train", rep)
        return derive_seed(self.seed_base, self.kind, value, label, "train", rep)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep: float
    algorithm: str
    seed: str
    avg_profit: float
    gap: float
    accepted: int
    federated: int
    rejected: int

    def as_csv(self) -> list[str]:
        return [
            self.experiment,
            repr(self.sweep) if isinstance(self.sweep, float) else str(self.sweep),
            self.algorithm,
            self.seed,
            repr(self.avg_profit),
            repr(self.gap),
            str(self.accepted),
            str(self.federated),
            str(self.rejected),
        ]


def write_rows(rows: Iterable[ResultRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.as_csv())


def read_rows(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(CSV_HEADER):
            raise ConfigError(
                f"unexpected CSV header {reader.fieldnames}, want {list(CSV_HEADER)}"
            )
        return list(reader)


def _mean_row(kind: str, value, label: str, rows: Sequence[ResultRow]) -> ResultRow:
    k = len(rows)
    return ResultRow(
        experiment=kind,
        sweep=value,
        algorithm=label,
        seed=MEAN_SEED,
        avg_profit=sum(r.avg_profit for r in rows) / k,
        gap=sum(r.gap for r in rows) / k,
        accepted=round(sum(r.accepted for r in rows) / k),
        federated=round(sum(r.federated for r in rows) / k),
        rejected=round(sum(r.rejected for r in rows) / k),
    )


def _train_one(args):
    """Worker for one learner repetition (top level so it pickles)."""
    config, algo_kind, gamma, learning, seed, snapshot_episodes = args
    params = learning if gamma is None else replace(learning, discount=gamma)
    if algo_kind == "q":
        result = q_learning_train(config, params, seed, snapshot_episodes=snapshot_episodes)
    else:
        result = r_learning_train(config, params, seed, snapshot_episodes=snapshot_episodes)
    if snapshot_episodes:
        return {ep: policy for ep, policy in result.snapshots.items()}
    return {params.episodes: result.policy}


def run_sweep(spec: ExperimentSpec, out_path: str | Path | None = None,
              jobs: int = 1, verbose: bool = False) -> list[ResultRow]:
    """Run one experiment sweep and return (and optionally write) its rows.

    Per sweep value: the DP bound is solved once, deterministic policies get
    one row, each learner gets one row per training repetition, and every
    policy is evaluated on the common per-experiment seed list.  A mean row
    per algorithm follows its seed rows.  On a cell failure the rows finished
    so far are flushed to ``out_path`` before SweepCellError propagates.
    """
    rows: list[ResultRow] = []
    say = print if verbose else (lambda *_: None)
    try:
        if spec.kind == "episodes":
            _run_episode_sweep(spec, jobs, say, rows)
        else:
            _run_config_sweep(spec, jobs, say, rows)
    except SweepCellError:
        if out_path is not None:
            write_rows(rows, out_path)
        raise
    if out_path is not None:
        write_rows(rows, out_path)
    return rows


def _evaluate_cell_policies(spec, config, value, dp_policy, dp_exact, learner_policies, say):
    """Rows for one (sweep value, config) cell given all trained policies."""
    eval_seeds = spec.eval_seed_list()
    rows: list[ResultRow] = []
    dp_report = evaluate_policy(dp_policy, config, spec.eval_demands, eval_seeds)
    reference = dp_exact if spec.exact_reference else dp_report.average_profit
    for algo in spec.algorithms:
        label = algo.label
        seed_rows: list[ResultRow] = []
        if algo.kind == "dp":
            seed_rows.append(ResultRow(
                spec.kind, value, label, "0",
                dp_report.average_profit, 0.0,
                sum(dp_report.accepted), sum(dp_report.federated), sum(dp_report.rejected),
            ))
        elif algo.kind == "greedy":
            report = evaluate_policy(
                lambda s: greedy_action(s, config), config,
                spec.eval_demands, eval_seeds, reference=reference,
            )
            seed_rows.append(ResultRow(
                spec.kind, value, label, "0",
                report.average_profit, report.optimality_gap,
                sum(report.accepted), sum(report.federated), sum(report.rejected),
            ))
        else:
            for rep, policy in enumerate(learner_policies[label]):
                report = evaluate_policy(
                    policy, config, spec.eval_demands, eval_seeds, reference=reference,
                )
                seed_rows.append(ResultRow(
                    spec.kind, value, label, str(rep),
                    report.average_profit, report.optimality_gap,
                    sum(report.accepted), sum(report.federated), sum(report.rejected),
                ))
        rows.extend(seed_rows)
        rows.append(_mean_row(spec.kind, value, label, seed_rows))
        say(f"  {label}: mean profit {rows[-1].avg_profit:.3f} gap {rows[-1].gap:.4f}")
    return rows


def _solve_dp(spec: ExperimentSpec, config: SystemConfig):
    mdp = Mdp(config)
    solved = policy_iteration(spec.dp_params, mdp)
    exact = exact_average_profit(solved.policy, mdp.space, config, mdp=mdp)
    return mdp, solved.policy, exact


def _map_tasks(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_train_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_train_one, tasks))


def _run_config_sweep(spec: ExperimentSpec, jobs: int, say, rows: list) -> None:
    for value in spec.sweep_values:
        cell = f"{spec.kind}={value}"
        try:
            say(f"[{cell}] solving DP bound")
            config = spec.config_for(value)
            _, dp_policy, dp_exact = _solve_dp(spec, config)
            tasks = []
            for algo in spec.algorithms:
                if not algo.is_learner:
                    continue
                for rep in range(spec.repetitions):
                    tasks.append((
                        config, algo.kind, algo.gamma, spec.learning,
                        spec.train_seed(value, algo.label, rep), (),
                    ))
            say(f"[{cell}] training {len(tasks)} learner runs")
            trained = _map_tasks(tasks, jobs)
            learner_policies: dict[str, list] = {}
            t = 0
            for algo in spec.algorithms:
                if not algo.is_learner:
                    continue
                policies = []
                for _ in range(spec.repetitions):
                    policies.append(trained[t][spec.learning.episodes])
                    t += 1
                learner_policies[algo.label] = policies
            rows.extend(_evaluate_cell_policies(
                spec, config, value, dp_policy, dp_exact, learner_policies, say,
            ))
        except Exception as exc:  # noqa: BLE001 - cell identity matters more
            raise SweepCellError(cell, exc) from exc


def _run_episode_sweep(spec: ExperimentSpec, jobs: int, say, rows: list) -> None:
    # Training with n episodes is bit-identical to the first n episodes of a
    # longer run (per-episode seeding), so one run per repetition snapshots
    # the read-out policy at every sweep value instead of retraining.
    config = spec.base_config
    cell = f"{spec.kind}=*"
    try:
        say(f"[{cell}] solving DP bound")
        _, dp_policy, dp_exact = _solve_dp(spec, config)
        max_episodes = max(spec.sweep_values)
        learning = replace(spec.learning, episodes=int(max_episodes))
        tasks = []
        for algo in spec.algorithms:
            if not algo.is_learner:
                continue
            for rep in range(spec.repetitions):
                tasks.append((
                    config, algo.kind, algo.gamma, learning,
                    spec.train_seed(None, algo.label, rep),
                    tuple(int(v) for v in spec.sweep_values),
                ))
        say(f"[{cell}] training {len(tasks)} learner runs to {max_episodes} episodes")
        trained = _map_tasks(tasks, jobs)
    except Exception as exc:  # noqa: BLE001
        raise SweepCellError(cell, exc) from exc

    for value in spec.sweep_values:
        cell = f"{spec.kind}={value}"
        try:
            learner_policies: dict[str, list] = {}
            t = 0
            for algo in spec.algorithms:
                if not algo.is_learner:
                    continue
                policies = []
                for _ in range(spec.repetitions):
                    policies.append(trained[t][int(value)])
                    t += 1
                learner_policies[algo.label] = policies
            rows.extend(_evaluate_cell_policies(
                spec, config, value, dp_policy, dp_exact, learner_policies, say,
            ))
        except Exception as exc:  # noqa: BLE001
            raise SweepCellError(cell, exc) from exc


def summarize(rows: Sequence[dict]) -> list[tuple]:
    """Mean profit/gap per (sweep value, algorithm) from parsed CSV rows."""
    out = []
    for row in rows:
        if row["seed"] != MEAN_SEED:
            continue
        out.append((
            row["experiment"], float(row["sweep"]), row["algorithm"],
            float(row["avg_profit"]), float(row["gap"]),
        ))
    return out
