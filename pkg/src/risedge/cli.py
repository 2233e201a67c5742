"""Command-line entry points: train, evaluate, baseline, sweep, report.

Every run writes its artifacts into --out using names that encode the policy
tag, trade-off value, and seed, e.g. ``trace_eval_v1e+05_seed7.csv``.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from risedge import outputs
from risedge.config import ConfigError, ExperimentConfig, load_config
from risedge.sim import (BASELINE_POLICIES, build_sim, run_baseline, run_evaluation,
                         run_training, sweep_v)

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a JSON experiment config (defaults used if omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (default: config out_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risedge",
        description="Simulate and control RIS-aided multi-device edge inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the policy, then evaluate its final episode")
    _add_common(p)
    p.add_argument("--steps", type=int, help="override agent.total_steps")

    p = sub.add_parser("evaluate", help="run a saved policy deterministically from a fresh state")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file to load")
    p.add_argument("--slots", type=int, help="evaluation length (default: episode length)")

    p = sub.add_parser("baseline", help="run a fixed or random compression policy")
    _add_common(p)
    p.add_argument("--policy", required=True, choices=BASELINE_POLICIES)
    p.add_argument("--slots", type=int, help="run length (default: episode length)")

    p = sub.add_parser("sweep", help="train and evaluate across trade-off values")
    _add_common(p)
    p.add_argument("--v", required=True, help="comma-separated trade-off values, e.g. 1e5,3e6")
    p.add_argument("--steps", type=int, help="override agent.total_steps per value")

    p = sub.add_parser("report", help="render figures from a run directory")
    p.add_argument("--run", required=True, help="directory holding run CSV/JSON artifacts")
    p.add_argument("--out", help="directory for figures (default: the run directory)")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _parse_v_list(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--v: could not parse {text!r} as comma-separated floats") from None
    if not values:
        raise ConfigError("--v: list is empty")
    return values


def cmd_train(args) -> int:
    cfg = _load(args)
    out = outputs.ensure_dir(cfg.out_dir)
    hp = cfg.agent_hyperparams()
    steps = args.steps if args.steps is not None else hp.total_steps
    tag = outputs.run_tag("train", cfg.tradeoff.v, cfg.seed)
    ckpt = f"{out}/checkpoint_{tag}.bin"

    env = build_sim(cfg, np.random.default_rng(cfg.seed))
    result = run_training(env, hp, steps, config_hash=cfg.config_hash,
                          seed=cfg.seed, checkpoint_path=ckpt)
    result.agent.save(ckpt)

    eval_tag = outputs.run_tag("eval", cfg.tradeoff.v, cfg.seed)
    outputs.write_trace_csv(f"{out}/trace_{eval_tag}.csv", result.eval_result.recorder,
                            cfg.config_hash, cfg.seed, "eval", cfg.tradeoff.v)
    outputs.write_curve_csv(f"{out}/curve_{tag}.csv", result.episode_curve,
                            cfg.config_hash, cfg.seed)
    outputs.write_update_stats_csv(f"{out}/updates_{tag}.csv", result.update_stats,
                                   cfg.config_hash, cfg.seed)
    summary = {"train": result.train_summary, "eval": result.eval_result.summary}
    outputs.write_summary_json(f"{out}/summary_{tag}.json", summary)
    print(f"trained {steps} steps; eval avg_reward={result.eval_result.summary['avg_reward']:.6g} "
          f"avg_accuracy={result.eval_result.summary['avg_accuracy']:.4f}")
    print(f"artifacts in {out}")
    return 0


def cmd_evaluate(args) -> int:
    from risedge.agent import PpoAgent

    cfg = _load(args)
    out = outputs.ensure_dir(cfg.out_dir)
    rng = np.random.default_rng(cfg.seed)
    env = build_sim(cfg, rng)
    agent = PpoAgent.load(args.checkpoint, cfg.agent_hyperparams(), rng)
    if agent.obs_dim != env.obs_dim or agent.act_dim != env.action_dim:
        raise ConfigError(
            f"--checkpoint: dimensions ({agent.obs_dim}, {agent.act_dim}) do not match "
            f"this config ({env.obs_dim}, {env.action_dim})")
    if agent.config_hash and agent.config_hash != cfg.config_hash:
        log.warning("checkpoint was trained under a different config (hash mismatch)")
    slots = args.slots if args.slots is not None else cfg.episode.length_slots
    result = run_evaluation(env, agent, slots, config_hash=cfg.config_hash, seed=cfg.seed)
    tag = outputs.run_tag("evaluate", cfg.tradeoff.v, cfg.seed)
    outputs.write_trace_csv(f"{out}/trace_{tag}.csv", result.recorder,
                            cfg.config_hash, cfg.seed, "evaluate", cfg.tradeoff.v)
    outputs.write_summary_json(f"{out}/summary_{tag}.json", result.summary)
    print(f"evaluate: avg_reward={result.summary['avg_reward']:.6g} "
          f"avg_accuracy={result.summary['avg_accuracy']:.4f}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load(args)
    out = outputs.ensure_dir(cfg.out_dir)
    slots = args.slots if args.slots is not None else cfg.episode.length_slots
    env = build_sim(cfg, np.random.default_rng(cfg.seed))
    result = run_baseline(env, args.policy, slots, config_hash=cfg.config_hash, seed=cfg.seed)
    tag = outputs.run_tag(args.policy, cfg.tradeoff.v, cfg.seed)
    outputs.write_trace_csv(f"{out}/trace_{tag}.csv", result.recorder,
                            cfg.config_hash, cfg.seed, args.policy, cfg.tradeoff.v)
    outputs.write_summary_json(f"{out}/summary_{tag}.json", result.summary)
    print(f"{args.policy}: avg_accuracy={result.summary['avg_accuracy']:.4f} "
          f"avg_power_w={result.summary['avg_power_w']:.6g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = outputs.ensure_dir(cfg.out_dir)
    v_values = _parse_v_list(args.v)
    results = sweep_v(cfg, v_values, cfg.seed, total_steps=args.steps)
    rows = []
    for v, res in zip(v_values, results):
        rows.append(res.eval_result.summary)
        tag = outputs.run_tag("eval", v, cfg.seed)
        outputs.write_trace_csv(f"{out}/trace_{tag}.csv", res.eval_result.recorder,
                                cfg.config_hash, cfg.seed, "eval", v)
        outputs.write_summary_json(f"{out}/summary_{tag}.json",
                                   {"train": res.train_summary, "eval": res.eval_result.summary})
        outputs.write_curve_csv(f"{out}/curve_{outputs.run_tag('train', v, cfg.seed)}.csv",
                                res.episode_curve, cfg.config_hash, cfg.seed)
    outputs.write_frontier_csv(f"{out}/frontier_seed{cfg.seed}.csv", rows,
                               cfg.config_hash, cfg.seed)
    for row in rows:
        delay = max(row["littles_delay_s"])
        print(f"V={row['v']:.3g}: power={row['avg_power_w']:.6g} W, "
              f"delay={delay * 1e3:.3f} ms, accuracy={row['avg_accuracy']:.4f}")
    return 0


def cmd_report(args) -> int:
    from risedge import report

    written = report.render_run_dir(args.run, args.out)
    if not written:
        print(f"no renderable artifacts found in {args.run}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
