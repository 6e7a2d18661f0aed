# Avoidance-aware inverse kinematics: reach a target whose naive solution
# sits in a learned danger region.  Every dangerous posture becomes an
# avoidance ball for the next solve, so the arm finds an alternative
# elbow configuration for the same end-effector position.
#
# Writes prioritized_ik.png next to this script.

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from danarm import (DangerNet, IkProblem, TrainBatch, forward_kinematics,
                    load_config, muscle_length_of, solve_prioritized,
                    train_epochs)
from danarm.ik import elbow_position

cfg = load_config()
arm = cfg.arm

# teach a quick net that postures near one elbow configuration are bad
danger_pose = np.array([0.2, -0.4, 0.75, 1.5, 0.1])
rng = np.random.default_rng(1)
poses = rng.uniform(arm.joint_lower, arm.joint_upper, (6000, 5))
poses[:3000] = np.clip(danger_pose
                       + rng.normal(0, 0.18, (3000, 5)),
                       arm.joint_lower, arm.joint_upper)
labels = (np.linalg.norm(poses - danger_pose, axis=1) < 0.45).astype(float)
net = DangerNet.for_arm(arm, seed=1)
train_epochs(net, TrainBatch(muscle_length_of(poses, arm), labels),
             "adam", epochs=60, batch_size=100)

target = forward_kinematics(danger_pose, arm)
problem = IkProblem(target, danger_pose.copy(), d_avoid=cfg.ik.d_avoid,
                    p_trigger=cfg.ik.p_trigger, max_outer=cfg.ik.max_outer)
result = solve_prioritized(problem, net, arm)
for k, rec in enumerate(result.records):
    print(f"outer {k}: p={rec.p_predicted:.3f} "
          f"reach_err={rec.reach_error_mm:.2f} mm")
print(f"final posture safe={result.safe}, p={result.p_predicted:.3f}")

fig = plt.figure(figsize=(7, 5.5))
ax = fig.add_subplot(projection="3d")
for rec, color, label in ((result.records[0], "tab:red", "first solve"),
                          (result.records[-1], "tab:green", "final solve")):
    elbow = elbow_position(rec.theta, arm)
    tip = forward_kinematics(rec.theta, arm)
    ax.plot(*zip([0, 0, 0], elbow, tip), marker="o", color=color,
            label=f"{label} (p={rec.p_predicted:.2f})")
ax.scatter(*target, marker="*", s=120, color="black", label="target")
ax.legend()
ax.set_title("Same target, elbow swung away from the danger region")
out = pathlib.Path(__file__).with_name("prioritized_ik.png")
fig.savefig(out, dpi=120, bbox_inches="tight")
print(f"plot -> {out}")
