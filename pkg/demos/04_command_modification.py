# Gradient-descent command modification: walk a requested command out of
# a learned danger region.  A small net is trained to flag one halfspace
# of command space; the modifier then approaches a goal deep inside the
# flagged region from a safe side and stops at the boundary.
#
# Writes command_modification.png next to this script.

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from danarm import DangerNet, TrainBatch, forward, modify, train_epochs

rng = np.random.default_rng(0)
m, scale, wall = 2, 50.0, 30.0
x = rng.uniform(-2 * scale, 2 * scale, (6000, m))
labels = (x.mean(axis=1) > wall).astype(float)
net = DangerNet(m, norm_center=np.zeros(m), norm_scale=np.full(m, scale),
                seed=0)
train_epochs(net, TrainBatch(x, labels), "adam", epochs=40, batch_size=100)

current = np.array([-40.0, -20.0])
goal = np.array([70.0, 90.0])
result = modify(net, goal, current)
print(f"p(goal) = {result.p_initial:.3f}  ->  "
      f"p(modified) = {result.p_final:.3f} after {result.iterations} "
      f"iterations")
print("modified command:", np.round(result.command, 2))

# danger probability field with the walk from current toward the goal
grid = np.linspace(-2 * scale, 2 * scale, 120)
gx, gy = np.meshgrid(grid, grid)
field = forward(net, np.column_stack([gx.ravel(), gy.ravel()]))
fig, ax = plt.subplots(figsize=(6, 5.5))
im = ax.contourf(gx, gy, field.reshape(gx.shape), levels=20,
                 cmap="RdYlGn_r")
fig.colorbar(im, ax=ax, label="predicted danger probability")
ax.plot(*current, "o", color="black", label="current")
ax.plot(*goal, "x", color="tab:red", ms=10, label="requested goal")
ax.plot(*result.command, "s", color="tab:blue", label="modified")
ax.plot([current[0], result.command[0]], [current[1], result.command[1]],
        color="tab:blue", lw=1)
ax.legend(loc="lower right")
ax.set_xlabel("command 0 [mm]")
ax.set_ylabel("command 1 [mm]")
ax.set_title("Command modification stops short of the danger region")
out = pathlib.Path(__file__).with_name("command_modification.png")
fig.savefig(out, dpi=120, bbox_inches="tight")
print(f"plot -> {out}")
