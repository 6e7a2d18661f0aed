# Online learning at desk scale: drive the simulated arm through random
# poses with the safety mechanism active, accumulate gated (command,
# label) pairs into the FIFO buffer, retrain after every store, and
# score checkpoints against a fixed evaluation script.
#
# A full 300 s session takes a few minutes; this demo runs a shortened
# 120 s one.  Writes online_learning.png next to this script.

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from danarm import (DangerNet, ExperimentConfig, agreement_curve,
                    generate_initial_dataset, load_config,
                    run_initial_training)

cfg = load_config()
net = DangerNet.for_arm(cfg.arm, seed=cfg.initial_train.seed)
run_initial_training(net, generate_initial_dataset(cfg.initial_train,
                                                   cfg.arm),
                     cfg.initial_train)

exp_cfg = ExperimentConfig(duration_s=120.0, motion_seed=0,
                           checkpoint_times_s=(0.0, 40.0, 80.0, 120.0))
result, accuracies = agreement_curve(cfg.arm, cfg.safety, net, exp_cfg)
log = result.log
print(f"danger episodes: {log.danger_episodes()}, "
      f"danger fraction: {log.danger_fraction():.3f}, "
      f"stored pairs: {len(log.event_ticks('stored'))}")
for t_s, acc in sorted(accuracies.items()):
    print(f"agreement after {t_s:5.1f} s of learning: {acc:.3f}")

fig, (ax_t, ax_a) = plt.subplots(2, 1, figsize=(7, 5.5))
ax_t.fill_between(log.times_s, log.p_label, step="pre", alpha=0.6,
                  color="tab:red", label="danger state")
for tick in log.event_ticks("stored"):
    ax_t.axvline(tick * log.tick_s, color="tab:blue", lw=0.3, alpha=0.5)
ax_t.set_ylabel("danger / stores")
ax_t.set_xlabel("time [s]")
ax_t.legend(loc="upper right")
times = sorted(accuracies)
ax_a.plot(times, [accuracies[t] for t in times], marker="o")
ax_a.set_xlabel("online learning time [s]")
ax_a.set_ylabel("agreement accuracy")
ax_a.set_ylim(0, 1)
fig.suptitle("Online learning of the danger net")
out = pathlib.Path(__file__).with_name("online_learning.png")
fig.savefig(out, dpi=120, bbox_inches="tight")
print(f"plot -> {out}")
