# Contract a single fixed-end muscle by 40 mm over half a second and watch
# the relaxation controller catch the tension spike: the peak cannot be
# prevented, but the tension is pulled back to the threshold within a
# couple of seconds while the relaxation offset delta_l grows.
#
# Writes safety_mechanism.png next to this script.

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from danarm import fixed_end_pull

log = fixed_end_pull(contraction_mm=40.0, ramp_s=0.5, duration_s=3.0,
                     f_thre=100.0)

t = log.times_s
fig, (ax_f, ax_d) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
ax_f.plot(t, log.f[:, 0], color="tab:red")
ax_f.axhline(100.0, color="gray", ls="--", lw=0.8, label="f_thre")
ax_f.set_ylabel("muscle tension [N]")
ax_f.legend()
ax_d.plot(t, log.delta_l[:, 0], color="tab:blue")
ax_d.set_ylabel("relaxation delta_l [mm]")
ax_d.set_xlabel("time [s]")
fig.suptitle("Tension-triggered muscle relaxation (fixed-end pull)")
out = pathlib.Path(__file__).with_name("safety_mechanism.png")
fig.savefig(out, dpi=120, bbox_inches="tight")
print(f"peak tension {log.f[:, 0].max():.1f} N, "
      f"final tension {log.f[-1, 0]:.1f} N, plot -> {out}")
