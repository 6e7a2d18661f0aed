"""Command-line entry points for the lab.

Subcommands mirror the experiment pipeline: `init-train` produces a
weight file from plant-free sampling, `run-online` runs the 300 s
online-learning session, `eval` scores a weight file against the
evaluation script, `modify-exp` / `ik-exp` reproduce the application
experiments, and `emit-plots` turns a stored episode log into tidy CSV
tables.  `modify` and `ik` expose the two applications directly.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import experiments as exp
from .config import LabConfig, load_config
from .ik import IkProblem, solve_prioritized
from .modifier import modify
from .network import (DangerNet, forward, load_weights_file,
                      save_weights_file)
from .trainer import generate_initial_dataset, run_initial_training


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="lab config YAML (packaged default "
                        "when omitted)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config entry by dotted path")


def _load(args) -> LabConfig:
    return load_config(args.config, args.overrides)


def _load_net(args, cfg: LabConfig) -> DangerNet:
    return load_weights_file(args.weights, expected_m=cfg.arm.n_muscles)


def cmd_init_train(args) -> int:
    cfg = _load(args)
    net = DangerNet.for_arm(cfg.arm, seed=cfg.initial_train.seed)
    dataset = generate_initial_dataset(cfg.initial_train, cfg.arm)
    run_initial_training(net, dataset, cfg.initial_train)
    holdout_cfg = type(cfg.initial_train)(
        **{**cfg.initial_train.__dict__, "n_samples": 2000,
           "seed": cfg.initial_train.seed + 1})
    holdout = generate_initial_dataset(holdout_cfg, cfg.arm)
    acc = np.mean((forward(net, holdout.inputs) > 0.5) == (holdout.labels == 1))
    save_weights_file(net, args.out)
    print(f"initial training done: held-out accuracy {acc:.3f}, "
          f"weights -> {args.out}")
    return 0


def cmd_run_online(args) -> int:
    cfg = _load(args)
    net = _load_net(args, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    result, accuracies = exp.agreement_curve(cfg.arm, cfg.safety, net,
                                             cfg.experiment)
    for time_s, blob in sorted(result.checkpoints.items()):
        path = os.path.join(args.out_dir, f"checkpoint_{int(time_s):04d}s.danw")
        with open(path, "wb") as fh:
            fh.write(blob)
    save_weights_file(net, os.path.join(args.out_dir, "final.danw"))
    result.log.write_jsonl(os.path.join(args.out_dir, "episode_log.jsonl"))
    result.buffer.dump(os.path.join(args.out_dir, "buffer.jsonl"))
    exp.write_agreement_table(accuracies,
                              os.path.join(args.out_dir, "agreement.csv"))
    print(f"danger episodes: {result.log.danger_episodes()}, "
          f"danger fraction: {result.log.danger_fraction():.3f}, "
          f"stored: {len(result.log.event_ticks('stored'))}")
    for time_s, acc in sorted(accuracies.items()):
        print(f"agreement after {time_s:5.0f} s of learning: {acc:.3f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    net = _load_net(args, cfg)
    acc = exp.evaluate_agreement(net, cfg.arm, cfg.safety, cfg.experiment)
    print(f"agreement accuracy: {acc:.3f}")
    return 0


def cmd_modify_exp(args) -> int:
    cfg = _load(args)
    net = _load_net(args, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    log_off, log_on = exp.run_modification_experiment(
        cfg.arm, cfg.safety, net, cfg.experiment, cfg.modifier)
    log_off.write_jsonl(os.path.join(args.out_dir, "without_modifier.jsonl"))
    log_on.write_jsonl(os.path.join(args.out_dir, "with_modifier.jsonl"))
    exp.write_modification_compare(
        log_off, log_on, os.path.join(args.out_dir, "modification_compare.csv"))
    off, on = log_off.danger_fraction(), log_on.danger_fraction()
    print(f"danger fraction without modifier: {off:.3f}")
    print(f"danger fraction with    modifier: {on:.3f}")
    if on >= off and off > 0:
        print("modification did not reduce the danger fraction", file=sys.stderr)
        return 3
    return 0


def cmd_ik_exp(args) -> int:
    cfg = _load(args)
    net = _load_net(args, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    target = _parse_vector(args.target) if args.target else None
    safety = type(cfg.safety)(**{**cfg.safety.__dict__, "f_thre": args.f_thre})
    result = exp.run_ik_experiment(cfg.arm, safety, net, target=target,
                                   d_avoid=cfg.ik.d_avoid,
                                   p_trigger=cfg.ik.p_trigger,
                                   max_outer=cfg.ik.max_outer)
    exp.write_ik_iterations(result,
                            os.path.join(args.out_dir, "ik_iterations.csv"))
    result.execution_log.write_jsonl(
        os.path.join(args.out_dir, "ik_execution.jsonl"))
    for k, rec in enumerate(result.ik.records):
        print(f"outer {k}: p={rec.p_predicted:.3f} "
              f"reach_err={rec.reach_error_mm:.1f} mm")
    print(f"final p={result.ik.p_predicted:.3f} safe={result.ik.safe} "
          f"danger ticks during execution: {result.danger_ticks}")
    return 0 if result.ik.safe else 3


def cmd_emit_plots(args) -> int:
    log = exp.EpisodeLog.read_jsonl(args.log)
    paths = exp.emit_plot_data(log, args.out_dir)
    for path in paths:
        print(path)
    return 0


def cmd_modify(args) -> int:
    cfg = _load(args)
    net = _load_net(args, cfg)
    goal = np.loadtxt(args.goal).ravel()
    current = np.loadtxt(args.current).ravel()
    result = modify(net, goal, current, cfg.modifier)
    print("result:", " ".join(f"{v:.4f}" for v in result.command))
    print(f"p_initial={result.p_initial:.4f} p_final={result.p_final:.4f} "
          f"iterations={result.iterations}")
    if result.warning:
        print("warning: non-finite loss encountered; returned best finite "
              "iterate", file=sys.stderr)
    return 0


def cmd_ik(args) -> int:
    import json
    cfg = _load(args)
    net = _load_net(args, cfg)
    target = _parse_vector(args.target)
    theta_init = (_parse_vector(args.theta_init) if args.theta_init
                  else 0.5 * (cfg.arm.joint_lower + cfg.arm.joint_upper))
    problem = IkProblem(target, theta_init, d_avoid=cfg.ik.d_avoid,
                        p_trigger=cfg.ik.p_trigger, max_outer=cfg.ik.max_outer)
    result = solve_prioritized(problem, net, cfg.arm)
    for k, rec in enumerate(result.records):
        if args.json:
            print(json.dumps({"outer": k, "theta": rec.theta.tolist(),
                              "p_predicted": rec.p_predicted,
                              "reach_error_mm": rec.reach_error_mm}))
        else:
            print(f"outer {k}: p={rec.p_predicted:.3f} theta="
                  + " ".join(f"{v:.3f}" for v in rec.theta))
    if args.json:
        print(json.dumps({"final": True, "theta": result.theta.tolist(),
                          "l_ref": result.l_ref.tolist(),
                          "p_predicted": result.p_predicted,
                          "safe": result.safe}))
    else:
        print("command:", " ".join(f"{v:.4f}" for v in result.l_ref))
        print(f"final p={result.p_predicted:.4f} safe={result.safe}")
    return 0 if result.safe else 3


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.replace(",", " ").split()])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="danarm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-train", help="plant-free initial training")
    _add_common(p)
    p.add_argument("--out", required=True, help="output weight file")
    p.set_defaults(func=cmd_init_train)

    p = sub.add_parser("run-online", help="online-learning experiment")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run_online)

    p = sub.add_parser("eval", help="agreement accuracy of a weight file")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("modify-exp", help="paired with/without-modifier runs")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_modify_exp)

    p = sub.add_parser("ik-exp", help="avoidance IK experiment")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--target", help="x,y,z mm (engineered default when omitted)")
    p.add_argument("--f-thre", type=float, default=150.0,
                   help="safety threshold override for this experiment")
    p.set_defaults(func=cmd_ik_exp)

    p = sub.add_parser("emit-plots", help="CSV plot tables from an episode log")
    p.add_argument("--log", required=True, help="episode log JSONL")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_emit_plots)

    p = sub.add_parser("modify", help="modify one command toward safety")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--goal", required=True, help="text file with the goal vector")
    p.add_argument("--current", required=True,
                   help="text file with the currently executing command")
    p.set_defaults(func=cmd_modify)

    p = sub.add_parser("ik", help="avoidance-aware inverse kinematics")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--target", required=True, help="x,y,z mm")
    p.add_argument("--theta-init", help="initial joint angles, rad")
    p.add_argument("--json", action="store_true",
                   help="one JSON record per outer iteration")
    p.set_defaults(func=cmd_ik)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # pragma: no cover - CLI error path
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
