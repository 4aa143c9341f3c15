"""Command-line interface: validate, solve, train, evaluate, sweep, report."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agents import (
    LearningParams,
    completed_policy,
    evaluate_policy,
    q_learning_train,
    r_learning_train,
)
from .dp import DpParams, policy_iteration
from .env import derive_seed
from .errors import ConfigError, FedadmError, SweepCellError
from .harness import (
    DEFAULT_ALGORITHMS,
    ExperimentSpec,
    SWEEP_KINDS,
    parse_algorithms,
    read_rows,
    run_sweep,
    summarize,
)
from .mdp import (
    Mdp,
    ROW_SUM_TOL,
    enumerate_states,
    exact_average_profit,
    load_policy,
    save_policy,
)
from .model import load_config

USAGE_EXIT = 2
FAILURE_EXIT = 1


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    mdp = Mdp(config, max_states=args.ceiling)
    tables = mdp.tables()
    deviations = []
    for k in range(len(tables.pair_action)):
        lo, hi = tables.pair_succ_ptr[k], tables.pair_succ_ptr[k + 1]
        deviations.append(abs(tables.succ_prob[lo:hi].sum() - 1.0))
    worst = max(deviations)
    print(f"states: {len(mdp.space)}")
    print(f"state-action pairs: {len(tables.pair_action)}")
    print(f"row-sum deviation: min {min(deviations):.3e} max {worst:.3e}")
    ok = worst <= ROW_SUM_TOL
    if ok:
        print(f"all row sums within {ROW_SUM_TOL:g}")
    else:
        print(f"FAIL: row sums deviate beyond {ROW_SUM_TOL:g}")
    # every successor must be a valid enumerated state (im implicit in the id
    # mapping) and rewards must follow the action semantics
    bad_rewards = 0
    for sid, state in enumerate(mdp.space.states):
        for k in range(tables.state_pair_ptr[sid], tables.state_pair_ptr[sid + 1]):
            reward = tables.pair_reward[k]
            if state.is_arrival:
                if tables.pair_action[k] == 2 and reward != 0.0:  # REJECT
                    bad_rewards += 1
            elif reward != 0.0:
                bad_rewards += 1
    if bad_rewards:
        print(f"FAIL: {bad_rewards} zero-reward actions carry a reward")
    return 0 if ok and bad_rewards == 0 else FAILURE_EXIT


def _cmd_solve(args) -> int:
    config = load_config(args.config)
    mdp = Mdp(config)
    params = DpParams(discount=args.gamma, tolerance=args.theta)
    result = policy_iteration(params, mdp)
    exact = exact_average_profit(result.policy, mdp.space, config, mdp=mdp)
    save_policy(result.policy, mdp.space, config, args.out,
                metadata={"algorithm": "policy-iteration",
                          "gamma": args.gamma, "theta": args.theta})
    report = {
        "improvement_rounds": result.improvement_rounds,
        "eval_sweeps": list(result.eval_sweeps),
        "final_delta": result.final_delta,
        "exact_average_profit": exact,
        "states": len(mdp.space),
    }
    report_path = Path(args.out).with_suffix(".report.json")
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    print(f"solved in {result.improvement_rounds} improvement rounds; "
          f"exact average profit {exact:.4f}")
    print(f"policy -> {args.out}, report -> {report_path}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config)
    params = LearningParams(
        episodes=args.episodes,
        steps_per_episode=args.steps,
        learning_rate=args.alpha,
        exploration=args.epsilon,
        discount=args.gamma,
        rho_rate=args.beta,
        episode_unit=args.episode_unit,
    )
    train = q_learning_train if args.algo == "q" else r_learning_train
    curve = None
    if args.curve:
        from .agents import CurveSpec

        curve = CurveSpec(
            seeds=tuple(derive_seed(args.seed, "curve", j) for j in range(3)),
            demands=args.curve_demands,
        )
    result = train(config, params, args.seed, curve=curve)
    space = enumerate_states(config)
    full = completed_policy(result.policy, space, config)
    save_policy(full, space, config, args.out, metadata={
        "algorithm": "q-learning" if args.algo == "q" else "r-learning",
        "seed": args.seed,
        "episodes": args.episodes,
        "steps_per_episode": args.steps,
        "gamma": args.gamma if args.algo == "q" else None,
        "visited_states": len(result.qtable),
    })
    print(f"trained {args.algo}-learning for {args.episodes} episodes; "
          f"visited {len(result.qtable)} states; policy -> {args.out}")
    if args.curve:
        with open(args.curve, "w") as fh:
            fh.write("episode,alpha,epsilon,rho,avg_profit\n")
            for p in result.curve:
                rho = "" if p.rho is None else repr(p.rho)
                profit = "" if p.average_profit is None else repr(p.average_profit)
                fh.write(f"{p.episode},{p.alpha!r},{p.epsilon!r},{rho},{profit}\n")
        print(f"curve -> {args.curve}")
    return 0


def _cmd_evaluate(args) -> int:
    config = load_config(args.config)
    space = enumerate_states(config)
    policy = load_policy(args.policy, space, config)
    seeds = [derive_seed(args.seed, "evaluate", j) for j in range(args.seeds)]
    reference = None
    if args.reference:
        ref_policy = load_policy(args.reference, space, config)
        if args.exact_reference:
            reference = exact_average_profit(ref_policy, space, config)
        else:
            reference = evaluate_policy(
                ref_policy, config, args.demands, seeds).average_profit
    trace = open(args.trace, "w") if args.trace else None
    try:
        if trace is not None:
            from .env import run_policy

            for seed in seeds:
                trace.write(json.dumps({"reset": seed}) + "\n")
                run_policy(policy, config, args.demands, seed, trace=trace)
        report = evaluate_policy(policy, config, args.demands, seeds, reference=reference)
    finally:
        if trace is not None:
            trace.close()
    print(f"average profit per demand: {report.average_profit:.4f}")
    if report.optimality_gap is not None:
        print(f"optimality gap vs reference: {100 * report.optimality_gap:.3f}%")
    print(f"accepted {sum(report.accepted)}  federated {sum(report.federated)}  "
          f"rejected {sum(report.rejected)}  (per class: "
          f"A={list(report.accepted)} F={list(report.federated)} R={list(report.rejected)})")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    algorithms = parse_algorithms(args.algorithms) if args.algorithms else DEFAULT_ALGORITHMS
    values = tuple(float(v) for v in args.values.split(",")) if args.values else ()
    learning = LearningParams(
        episodes=args.episodes, steps_per_episode=args.steps,
        episode_unit=args.episode_unit,
    )
    spec = ExperimentSpec(
        kind=args.kind,
        base_config=config,
        sweep_values=values,
        algorithms=algorithms,
        repetitions=args.repetitions,
        eval_demands=args.eval_demands,
        eval_seeds=args.eval_seeds,
        seed_base=args.seed,
        learning=learning,
        exact_reference=args.exact_reference,
    )
    run_sweep(spec, out_path=args.out, jobs=args.jobs, verbose=not args.quiet)
    print(f"results -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    rows = read_rows(args.csv)
    summary = summarize(rows)
    if not summary:
        print("no aggregate rows found")
        return FAILURE_EXIT
    print(f"{'experiment':<16} {'sweep':>8} {'algorithm':<10} {'avg_profit':>12} {'gap %':>8}")
    for experiment, sweep, algorithm, profit, gap in summary:
        print(f"{experiment:<16} {sweep:>8g} {algorithm:<10} {profit:>12.4f} {100 * gap:>8.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedadm",
        description="Admission control for service federation: exact MDP bound, "
                    "tabular learners, seeded experiments.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("validate", help="check MDP invariants for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--ceiling", type=int, default=5_000_000)

    p = sub.add_parser("solve", help="policy iteration; writes policy + report")
    p.add_argument("--config", required=True)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--theta", type=float, default=1e-6)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a tabular learner")
    p.add_argument("--algo", choices=("q", "r"), required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--epsilon", type=float, default=0.9)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episode-unit", choices=("steps", "demands"), default="steps")
    p.add_argument("--out", required=True)
    p.add_argument("--curve", default=None, help="write per-episode curve CSV here")
    p.add_argument("--curve-demands", type=int, default=5000)

    p = sub.add_parser("evaluate", help="simulate a stored policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--demands", type=int, default=100_000)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="base seed for the evaluation set")
    p.add_argument("--reference", default=None, help="policy file for the gap reference")
    p.add_argument("--exact-reference", action="store_true",
                   help="use the exact chain profit of the reference policy")
    p.add_argument("--trace", default=None, help="write a JSON-lines trajectory log")

    p = sub.add_parser("sweep", help="run one experiment sweep to CSV")
    p.add_argument("--kind", choices=SWEEP_KINDS, required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--values", default=None, help="comma-separated sweep grid override")
    p.add_argument("--algorithms", default=None,
                   help="comma-separated labels, e.g. dp,greedy,QL-0.9,RL")
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--eval-demands", type=int, default=100_000)
    p.add_argument("--eval-seeds", type=int, default=10)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--episode-unit", choices=("steps", "demands"), default="steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--exact-reference", action="store_true")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("report", help="summarize a sweep CSV")
    p.add_argument("--csv", required=True)

    return parser


COMMANDS = {
    "validate": _cmd_validate,
    "solve": _cmd_solve,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except SweepCellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE_EXIT
    except FedadmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE_EXIT


if __name__ == "__main__":
    sys.exit(main())
