# Plant-free initial training: sample joint poses a little beyond the
# nominal limits, label out-of-limit poses dangerous, train the danger
# net on the resulting (command, label) pairs, and sweep one joint
# through its range to see the learned probability ramp at the limits.
#
# Takes ~15 s; writes initial_training.png next to this script.

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from danarm import (DangerNet, forward, generate_initial_dataset,
                    load_config, muscle_length_of, run_initial_training)

cfg = load_config()
net = DangerNet.for_arm(cfg.arm, seed=cfg.initial_train.seed)
dataset = generate_initial_dataset(cfg.initial_train, cfg.arm)
run_initial_training(net, dataset, cfg.initial_train)

holdout = generate_initial_dataset(
    type(cfg.initial_train)(**{**cfg.initial_train.__dict__,
                               "n_samples": 3000, "seed": 99}), cfg.arm)
acc = np.mean((forward(net, holdout.inputs) > 0.5) == (holdout.labels == 1))
print(f"held-out accuracy at p>0.5: {acc:.3f}")

# probability along a sweep of the elbow joint, others mid-range
arm = cfg.arm
mid = 0.5 * (arm.joint_lower + arm.joint_upper)
sweep = np.linspace(arm.joint_lower[3] - 0.45, arm.joint_upper[3] + 0.45, 300)
poses = np.tile(mid, (300, 1))
poses[:, 3] = sweep
probs = forward(net, muscle_length_of(poses, arm))

fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(sweep, probs)
for limit in (arm.joint_lower[3], arm.joint_upper[3]):
    ax.axvline(limit, color="gray", ls="--", lw=0.8)
ax.set_xlabel("elbow angle [rad] (others mid-range)")
ax.set_ylabel("predicted danger probability")
ax.set_title("Danger probability after initial training")
out = pathlib.Path(__file__).with_name("initial_training.png")
fig.savefig(out, dpi=120, bbox_inches="tight")
print(f"plot -> {out}")
