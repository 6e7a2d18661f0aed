"""Initial (plant-free) training and online learning of the danger net.

Initial training samples joint poses a little beyond the nominal limits
and labels any out-of-limit pose dangerous, bootstrapping the net before
the robot moves.  Online learning then streams (command, label) pairs
through a disagreement/ambiguity gate into a bounded FIFO buffer and
retrains on the whole buffer after every store.
"""

from __future__ import annotations

import json
import logging
import math
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .network import Adam, DangerNet, MomentumSGD, TrainBatch, train_epochs
from .plant import ArmConfig, muscle_length_of

log = logging.getLogger(__name__)

ONLINE_BATCH_SIZE = 10
ONLINE_EPOCHS = 3
# One buffer pass fires after every store, so hundreds of passes hit the
# same <=100 samples per run; the rate must be far below the offline one
# or the updates erase the global boundary knowledge between revisits.
ONLINE_SGD_LR = 1e-4


@dataclass
class InitialTrainConfig:
    margin_deg: float = 10.0
    noise_sd: float = 3.0        # C_st, mm, added to every sampled command
    n_samples: int = 12000
    batch_size: int = 100
    epochs: int = 100
    seed: int = 1
    # Adam's canonical 1e-3 stalls short of a usable boundary fit within
    # the fixed 100-epoch budget; 1e-2 converges reliably.
    adam_lr: float = 0.01

    def __post_init__(self):
        if self.margin_deg <= 0:
            raise ValueError("margin must be positive")
        if self.n_samples < self.batch_size:
            raise ValueError("need at least one full batch of samples")


def limit_labels(theta: np.ndarray, arm: ArmConfig) -> np.ndarray:
    """1.0 where any joint lies strictly outside its nominal limits.

    A joint exactly at a limit counts as inside (labels stay 0 on the
    boundary itself).
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    out = (np.any(theta < arm.joint_lower, axis=1)
           | np.any(theta > arm.joint_upper, axis=1))
    return out.astype(float)


def generate_initial_dataset(cfg: InitialTrainConfig,
                             arm: ArmConfig) -> TrainBatch:
    """Sample commands over the widened joint box with out-of-limit labels.

    Poses are uniform over [lower - margin, upper + margin]; a pose is
    dangerous when any joint lies strictly outside its nominal limits.
    Commands are the geometric muscle lengths plus gaussian noise of sd
    `noise_sd`.
    """
    rng = np.random.default_rng(cfg.seed)
    margin = math.radians(cfg.margin_deg)
    theta = rng.uniform(arm.joint_lower - margin, arm.joint_upper + margin,
                        size=(cfg.n_samples, arm.n_joints))
    commands = muscle_length_of(theta, arm)
    commands = commands + rng.normal(0.0, cfg.noise_sd, commands.shape)
    return TrainBatch(commands, limit_labels(theta, arm))


def run_initial_training(net: DangerNet, dataset: TrainBatch,
                         cfg: InitialTrainConfig) -> DangerNet:
    """Adam training on the initial dataset; mutates and returns `net`."""
    history = train_epochs(net, dataset, Adam(lr=cfg.adam_lr),
                           epochs=cfg.epochs, batch_size=cfg.batch_size)
    log.info("initial training: loss %.4f -> %.4f over %d epochs",
             history[0], history[-1], len(history))
    return net


class StoreResult(Enum):
    STORED = "stored"
    CONFIDENT_AGREEMENT = "confident_agreement"
    TOO_CLOSE = "too_close"

    @property
    def stored(self) -> bool:
        return self is StoreResult.STORED


class ReplayBuffer:
    """Bounded FIFO of (command, label) pairs behind the accumulation gate.

    A candidate is stored only when prediction and label disagree or the
    prediction is ambiguous -- (label 1 and p < 0.9) or (label 0 and
    p > 0.1) -- and the command has moved more than `min_command_distance`
    (L2, mm) from the previously stored one.  Beyond `capacity` the
    oldest pair is dropped.
    """

    def __init__(self, capacity: int = 100, activation_threshold: int = 30,
                 min_command_distance: float = 20.0):
        if capacity < 1 or activation_threshold < 1:
            raise ValueError("capacity and activation threshold must be >= 1")
        self.capacity = capacity
        self.activation_threshold = activation_threshold
        self.min_command_distance = min_command_distance
        self._entries: deque[tuple[np.ndarray, float]] = deque()
        self.l_ref_pre: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def ready(self) -> bool:
        """True once enough data has accumulated to run online updates."""
        return len(self._entries) >= self.activation_threshold

    def maybe_accumulate(self, command: np.ndarray, p_label: float,
                         p_predicted: float) -> StoreResult:
        if p_label not in (0.0, 1.0):
            raise ValueError("label must be 0 or 1")
        disagree = ((p_label == 1.0 and p_predicted < 0.9)
                    or (p_label == 0.0 and p_predicted > 0.1))
        if not disagree:
            return StoreResult.CONFIDENT_AGREEMENT
        command = np.asarray(command, dtype=float)
        if (self.l_ref_pre is not None
                and np.linalg.norm(command - self.l_ref_pre)
                <= self.min_command_distance):
            return StoreResult.TOO_CLOSE
        self._entries.append((command.copy(), float(p_label)))
        if len(self._entries) > self.capacity:
            self._entries.popleft()
        self.l_ref_pre = command.copy()
        return StoreResult.STORED

    def as_batch(self) -> TrainBatch:
        if not self._entries:
            raise ValueError("buffer is empty")
        commands = np.stack([c for c, _ in self._entries])
        labels = np.array([y for _, y in self._entries])
        return TrainBatch(commands, labels)

    def dump(self, path) -> None:
        """One JSON record per stored (command, label) pair, oldest first."""
        with open(path, "w") as fh:
            for command, label in self._entries:
                fh.write(json.dumps({"command": command.tolist(),
                                     "label": label}) + "\n")


def online_update(net: DangerNet, buffer: ReplayBuffer,
                  batch_size: int = ONLINE_BATCH_SIZE,
                  epochs: int = ONLINE_EPOCHS,
                  lr: float = ONLINE_SGD_LR) -> DangerNet:
    """Momentum-SGD pass over the whole buffer (call right after a store).

    Batch-norm running statistics stay frozen: predictions must remain
    calibrated against the full command distribution, not the buffer's.
    """
    if not buffer.ready:
        raise ValueError(
            f"buffer has {len(buffer)} entries, needs "
            f">= {buffer.activation_threshold} before online updates")
    start = time.perf_counter()
    train_epochs(net, buffer.as_batch(), MomentumSGD(lr=lr),
                 epochs=epochs, batch_size=batch_size,
                 update_running_stats=False)
    log.debug("online update on %d samples took %.2f ms",
              len(buffer), 1e3 * (time.perf_counter() - start))
    return net
