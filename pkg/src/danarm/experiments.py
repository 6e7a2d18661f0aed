"""Scripted desk-scale experiments: online learning, command modification,
avoidance IK, and the tabular data behind their plots.

Every experiment drives the simulated plant with seeded random pose
motion, runs the safety mechanism each tick, and records a per-tick
episode log.  Runs are deterministic given (arm seed, motion seed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ik import IkProblem, IkResult, forward_kinematics, solve_prioritized
from .modifier import ModifierConfig, modify
from .network import DangerNet, forward, load_weights, save_weights
from .plant import (ArmConfig, JointBoxZone, TICK_S, init_state,
                    muscle_length_of, step)
from .safety import SafetyParams, apply_safety, initial_safety_state, safety_step
from .trainer import ReplayBuffer, online_update

LOG_SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    duration_s: float = 300.0
    motion_seed: int = 0
    eval_seed: int = 9001            # evaluation script, distinct from motion
    checkpoint_times_s: tuple[float, ...] = (0.0, 100.0, 200.0, 300.0)
    segment_s: float = 2.0
    pretension_mm: float = 6.0       # per-pose command shortening scale (mm)
    p_threshold: float = 0.1         # predicted-danger threshold

    def __post_init__(self):
        if any(t < 0 or t > self.duration_s for t in self.checkpoint_times_s):
            raise ValueError("checkpoints must lie within [0, duration]")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration_s / TICK_S))


@dataclass
class EpisodeLog:
    """Per-tick trajectory of one experiment run.

    `l_ref` is the command before safety relaxation; the executed
    command is `l_ref + delta_l`.  Events are (tick, tag) with tags
    stored / updated / modified.
    """

    tick_s: float
    l_ref: np.ndarray
    delta_l: np.ndarray
    f: np.ndarray
    p_label: np.ndarray
    p_pred: np.ndarray
    events: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.p_label)

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(len(self)) * self.tick_s

    def danger_fraction(self) -> float:
        return float(np.mean(self.p_label == 1.0))

    def danger_episodes(self) -> int:
        """Number of contiguous runs of danger ticks."""
        d = self.p_label == 1.0
        return int(np.sum(d[1:] & ~d[:-1]) + (1 if d.size and d[0] else 0))

    def event_ticks(self, tag: str) -> list[int]:
        return [t for t, name in self.events if name == tag]

    def write_jsonl(self, path) -> None:
        """Header line with schema metadata, then one record per tick."""
        with open(path, "w") as fh:
            fh.write(json.dumps({"schema": "danarm-episode-log",
                                 "version": LOG_SCHEMA_VERSION,
                                 "tick_s": self.tick_s,
                                 "n_muscles": self.l_ref.shape[1]}) + "\n")
            events = {}
            for t, tag in self.events:
                events.setdefault(t, []).append(tag)
            for t in range(len(self)):
                fh.write(json.dumps({
                    "t": t,
                    "l_ref": np.round(self.l_ref[t], 4).tolist(),
                    "delta_l": np.round(self.delta_l[t], 4).tolist(),
                    "f": np.round(self.f[t], 4).tolist(),
                    "p_label": self.p_label[t],
                    "p_pred": round(float(self.p_pred[t]), 6),
                    "events": events.get(t, []),
                }) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "EpisodeLog":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("version") != LOG_SCHEMA_VERSION:
                raise ValueError(f"unsupported log version {header.get('version')}")
            rows = [json.loads(line) for line in fh if line.strip()]
        events = [(r["t"], tag) for r in rows for tag in r["events"]]
        return cls(header["tick_s"],
                   np.array([r["l_ref"] for r in rows]),
                   np.array([r["delta_l"] for r in rows]),
                   np.array([r["f"] for r in rows]),
                   np.array([r["p_label"] for r in rows], dtype=float),
                   np.array([r["p_pred"] for r in rows], dtype=float),
                   events)


def random_motion_stream(seed: int, arm: ArmConfig, n_ticks: int,
                         segment_s: float = 2.0, tick_s: float = TICK_S,
                         pretension_mm: float = 6.0,
                         ramp_fraction: float = 0.7) -> np.ndarray:
    """Command stream visiting random in-limit poses.

    Pose targets are uniform inside the nominal joint limits; within each
    segment the command ramps linearly to the new pose over the first
    `ramp_fraction` of the segment and then holds it (no teleporting, but
    real dwell at every pose).  Each pose's command is shortened per
    muscle by a held uniform draw from [0, 2*pretension_mm], standing in
    for the random pretension of a real pose-to-command conversion; the
    shortening is what puts runtime commands slightly off the
    initial-training manifold.  The first pose is the mid-range rest
    pose, so runs start transient-free.  Returns the (n_ticks, m) array.
    """
    rng = np.random.default_rng(seed)
    seg_ticks = max(1, int(round(segment_s / tick_s)))
    ramp_ticks = max(1, int(round(ramp_fraction * seg_ticks)))
    n_segments = math.ceil(n_ticks / seg_ticks)
    poses = rng.uniform(arm.joint_lower, arm.joint_upper,
                        size=(n_segments + 1, arm.n_joints))
    poses[0] = 0.5 * (arm.joint_lower + arm.joint_upper)
    pose_cmds = muscle_length_of(poses, arm)
    offsets = -rng.uniform(0.0, 2.0 * pretension_mm, pose_cmds.shape)
    offsets[0] = 0.0
    pose_cmds = pose_cmds + offsets
    frac = np.minimum((np.arange(n_ticks) % seg_ticks + 1) / ramp_ticks, 1.0)
    seg = np.minimum(np.arange(n_ticks) // seg_ticks, n_segments - 1)
    a = pose_cmds[seg]
    b = pose_cmds[seg + 1]
    return a + frac[:, None] * (b - a)


@dataclass
class OnlineRunResult:
    log: "EpisodeLog"
    checkpoints: dict[float, bytes]
    buffer: ReplayBuffer | None
    net: DangerNet


def _run_loop(arm: ArmConfig, safety_params: SafetyParams, net: DangerNet,
              commands: np.ndarray, buffer: ReplayBuffer | None = None,
              modifier_cfg: ModifierConfig | None = None,
              checkpoint_times_s: tuple[float, ...] = ()) -> OnlineRunResult:
    """Shared control loop; accumulation/updates run only when `buffer` is
    given, command modification only when `modifier_cfg` is given."""
    n_ticks = len(commands)
    plant_state = init_state(arm)
    safety_state = initial_safety_state(arm.n_muscles)
    last_sent = muscle_length_of(plant_state.theta, arm)
    remaining = {int(round(t / TICK_S)): t for t in checkpoint_times_s}
    checkpoints: dict[float, bytes] = {}
    events: list[tuple[int, str]] = []
    l_ref = np.empty_like(commands)
    delta_l = np.empty_like(commands)
    tension = np.empty_like(commands)
    p_label = np.empty(n_ticks)
    p_pred = np.empty(n_ticks)
    for t in range(n_ticks):
        if t in remaining:
            checkpoints[remaining.pop(t)] = save_weights(net)
        goal = commands[t]
        if modifier_cfg is not None:
            result = modify(net, goal, last_sent, modifier_cfg)
            sent = result.command
            if result.iterations > 0:
                events.append((t, "modified"))
        else:
            sent = goal
        executed = apply_safety(sent, safety_state)
        plant_state = step(plant_state, executed, arm)
        safety_state = safety_step(safety_state, plant_state.f, safety_params)
        label = safety_state.label
        prob = forward(net, sent)
        if buffer is not None:
            outcome = buffer.maybe_accumulate(sent, label, prob)
            if outcome.stored:
                events.append((t, "stored"))
                if buffer.ready:
                    online_update(net, buffer)
                    events.append((t, "updated"))
        l_ref[t] = sent
        delta_l[t] = safety_state.delta_l
        tension[t] = plant_state.f
        p_label[t] = label
        p_pred[t] = prob
        last_sent = sent
    for tick, time_s in remaining.items():
        if tick >= n_ticks:
            checkpoints[time_s] = save_weights(net)
    log = EpisodeLog(TICK_S, l_ref, delta_l, tension, p_label, p_pred, events)
    return OnlineRunResult(log, checkpoints, buffer, net)


def run_online_experiment(arm: ArmConfig, safety_params: SafetyParams,
                          net: DangerNet, cfg: ExperimentConfig,
                          buffer: ReplayBuffer | None = None) -> OnlineRunResult:
    """Random motion with the safety mechanism, accumulation and online
    updates; emits weight checkpoints at the configured times.

    Mutates `net` in place (pass `net.clone()` to keep the original).
    """
    if buffer is None:
        buffer = ReplayBuffer()
    commands = random_motion_stream(cfg.motion_seed, arm, cfg.n_ticks,
                                    cfg.segment_s,
                                    pretension_mm=cfg.pretension_mm)
    return _run_loop(arm, safety_params, net, commands, buffer=buffer,
                     checkpoint_times_s=cfg.checkpoint_times_s)


def evaluate_agreement(net: DangerNet, arm: ArmConfig,
                       safety_params: SafetyParams,
                       cfg: ExperimentConfig) -> float:
    """Fraction of evaluation ticks where thresholded prediction matches
    the safety-mechanism danger label (prediction-only replay)."""
    commands = random_motion_stream(cfg.eval_seed, arm, cfg.n_ticks,
                                    cfg.segment_s,
                                    pretension_mm=cfg.pretension_mm)
    log = _run_loop(arm, safety_params, net, commands).log
    predicted = log.p_pred > cfg.p_threshold
    actual = log.p_label == 1.0
    return float(np.mean(predicted == actual))


def agreement_curve(arm: ArmConfig, safety_params: SafetyParams,
                    net: DangerNet, cfg: ExperimentConfig
                    ) -> tuple[OnlineRunResult, dict[float, float]]:
    """Online run plus agreement accuracy of every checkpoint."""
    result = run_online_experiment(arm, safety_params, net, cfg)
    accuracies = {
        time_s: evaluate_agreement(load_weights(blob), arm, safety_params, cfg)
        for time_s, blob in sorted(result.checkpoints.items())
    }
    return result, accuracies


def run_modification_experiment(arm: ArmConfig, safety_params: SafetyParams,
                                net: DangerNet, cfg: ExperimentConfig,
                                modifier_cfg: ModifierConfig | None = None
                                ) -> tuple[EpisodeLog, EpisodeLog]:
    """The same command script without and with command modification.

    The net is frozen (no online learning) so the runs differ only in
    the modifier.  Returns (log_without, log_with).
    """
    if modifier_cfg is None:
        modifier_cfg = ModifierConfig()
    commands = random_motion_stream(cfg.motion_seed, arm, cfg.n_ticks,
                                    cfg.segment_s,
                                    pretension_mm=cfg.pretension_mm)
    log_off = _run_loop(arm, safety_params, net, commands).log
    log_on = _run_loop(arm, safety_params, net, commands,
                       modifier_cfg=modifier_cfg).log
    return log_off, log_on


@dataclass
class IkExperimentResult:
    ik: IkResult
    execution_log: EpisodeLog
    danger_ticks: int


def default_ik_target(arm: ArmConfig) -> tuple[np.ndarray, np.ndarray]:
    """(target, theta_init) engineered so the naive reach is dangerous.

    The target is the end-effector position of the first joint-box
    zone's center posture; the initial posture approaches it from
    inside the box's neighborhood so the unconstrained solve lands in
    the zone.
    """
    for zone in arm.danger_zones:
        if isinstance(zone, JointBoxZone):
            theta_danger = np.clip(zone.center, arm.joint_lower,
                                   arm.joint_upper)
            target = forward_kinematics(theta_danger, arm)
            return target, theta_danger.copy()
    raise ValueError("arm config has no joint_box danger zone; "
                     "pass an explicit target")


def run_ik_experiment(arm: ArmConfig, safety_params: SafetyParams,
                      net: DangerNet, target: np.ndarray | None = None,
                      theta_init: np.ndarray | None = None,
                      d_avoid: float = 0.2, p_trigger: float = 0.1,
                      max_outer: int = 10, execute_s: float = 5.0,
                      ramp_s: float = 2.0) -> IkExperimentResult:
    """Solve the avoidance IK problem, then execute the result.

    Execution ramps from the rest command to the solved command over
    `ramp_s` and holds it until `execute_s`, with the safety mechanism
    active; danger ticks over the whole execution are counted.
    """
    if target is None or theta_init is None:
        default_target, default_init = default_ik_target(arm)
        target = default_target if target is None else np.asarray(target, float)
        theta_init = default_init if theta_init is None else np.asarray(theta_init, float)
    problem = IkProblem(target, theta_init, d_avoid=d_avoid,
                        p_trigger=p_trigger, max_outer=max_outer)
    ik_result = solve_prioritized(problem, net, arm)
    n_ticks = int(round(execute_s / TICK_S))
    ramp_ticks = max(1, int(round(ramp_s / TICK_S)))
    rest = muscle_length_of(0.5 * (arm.joint_lower + arm.joint_upper), arm)
    frac = np.minimum(np.arange(1, n_ticks + 1) / ramp_ticks, 1.0)
    commands = rest + frac[:, None] * (ik_result.l_ref - rest)
    log = _run_loop(arm, safety_params, net, commands).log
    return IkExperimentResult(ik_result, log,
                              int(np.sum(log.p_label == 1.0)))


def fixed_end_pull(contraction_mm: float = 40.0, ramp_s: float = 0.5,
                   duration_s: float = 3.0, f_thre: float = 100.0,
                   elastic_k: float = 0.16) -> EpisodeLog:
    """Contract one fixed-end muscle and let the safety mechanism react.

    The muscle's end is fixed (zero moment arm, so the joint never
    moves); the command shortens by `contraction_mm` over `ramp_s` and
    then holds.  Reproduces the classic peak-then-settle tension trace.
    """
    arm = ArmConfig(n_joints=1, n_muscles=1, moment_arm=[[0.0]],
                    natural_length=[300.0], joint_lower=[-1.0],
                    joint_upper=[1.0], elastic_k=[elastic_k],
                    tension_noise_sd=0.0)
    params = SafetyParams(f_thre=f_thre)
    n_ticks = int(round(duration_s / TICK_S))
    ramp_ticks = max(1, int(round(ramp_s / TICK_S)))
    frac = np.minimum(np.arange(1, n_ticks + 1) / ramp_ticks, 1.0)
    commands = 300.0 - contraction_mm * frac[:, None]
    plant_state = init_state(arm, theta0=np.zeros(1))
    safety_state = initial_safety_state(1)
    l_ref = np.empty_like(commands)
    delta_l = np.empty_like(commands)
    tension = np.empty_like(commands)
    labels = np.empty(n_ticks)
    for t in range(n_ticks):
        executed = apply_safety(commands[t], safety_state)
        plant_state = step(plant_state, executed, arm)
        safety_state = safety_step(safety_state, plant_state.f, params)
        l_ref[t] = commands[t]
        delta_l[t] = safety_state.delta_l
        tension[t] = plant_state.f
        labels[t] = safety_state.label
    return EpisodeLog(TICK_S, l_ref, delta_l, tension, labels,
                      np.zeros(n_ticks))


# --- plot-data emission (column schemas documented in the README) ---

def emit_plot_data(log: EpisodeLog, outdir) -> list[str]:
    """Write the tidy per-tick tables for one episode log.

    danger_timeline.csv: t_s, p_label, p_pred, stored, updated, modified
    muscle_traces.csv:   t_s, then l_ref_i, delta_l_i, f_i per muscle
    """
    import os
    os.makedirs(outdir, exist_ok=True)
    m = log.l_ref.shape[1]
    times = log.times_s
    flags = {tag: np.zeros(len(log), dtype=int)
             for tag in ("stored", "updated", "modified")}
    for t, tag in log.events:
        flags[tag][t] = 1
    paths = []
    path = os.path.join(outdir, "danger_timeline.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "p_label", "p_pred",
                         "stored", "updated", "modified"])
        for t in range(len(log)):
            writer.writerow([f"{times[t]:.3f}", int(log.p_label[t]),
                             f"{log.p_pred[t]:.6f}", flags["stored"][t],
                             flags["updated"][t], flags["modified"][t]])
    paths.append(path)
    path = os.path.join(outdir, "muscle_traces.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t_s"]
        for i in range(m):
            header += [f"l_ref_{i}", f"delta_l_{i}", f"f_{i}"]
        writer.writerow(header)
        for t in range(len(log)):
            row = [f"{times[t]:.3f}"]
            for i in range(m):
                row += [f"{log.l_ref[t, i]:.4f}", f"{log.delta_l[t, i]:.4f}",
                        f"{log.f[t, i]:.4f}"]
            writer.writerow(row)
    paths.append(path)
    return paths


def write_agreement_table(accuracies: dict[float, float], path) -> None:
    """agreement.csv: checkpoint_s, accuracy."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["checkpoint_s", "accuracy"])
        for time_s, acc in sorted(accuracies.items()):
            writer.writerow([f"{time_s:.1f}", f"{acc:.4f}"])


def write_modification_compare(log_off: EpisodeLog, log_on: EpisodeLog,
                               path, muscle: int = 0) -> None:
    """modification_compare.csv: commands and labels of both paired runs."""
    times = log_off.times_s
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", f"l_ref_off_{muscle}", f"l_ref_on_{muscle}",
                         "p_label_off", "p_label_on"])
        for t in range(min(len(log_off), len(log_on))):
            writer.writerow([f"{times[t]:.3f}",
                             f"{log_off.l_ref[t, muscle]:.4f}",
                             f"{log_on.l_ref[t, muscle]:.4f}",
                             int(log_off.p_label[t]), int(log_on.p_label[t])])


def write_ik_iterations(result: IkExperimentResult, path) -> None:
    """ik_iterations.csv: outer_iter, p_predicted, reach_error_mm, theta_j."""
    n = len(result.ik.records[0].theta)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outer_iter", "p_predicted", "reach_error_mm"]
                        + [f"theta_{j}" for j in range(n)])
        for k, rec in enumerate(result.ik.records):
            writer.writerow([k, f"{rec.p_predicted:.6f}",
                             f"{rec.reach_error_mm:.3f}"]
                            + [f"{v:.5f}" for v in rec.theta])
