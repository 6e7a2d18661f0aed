"""Tension-triggered muscle relaxation and the danger label derived from it.

Each muscle gets an additive relaxation offset delta_l that grows while
its tension exceeds f_thre and decays back to zero afterwards, with
asymmetric per-tick rate caps.  The binary danger label is 1 exactly
while any muscle is being relaxed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import TICK_S


@dataclass
class SafetyParams:
    """Relaxation controller constants (tensions in N, offsets in mm)."""

    f_thre: float = 200.0
    c_minus: float = 0.001
    c_plus: float = 0.003
    c_gain: float = 2.0
    tick_s: float = TICK_S

    def __post_init__(self):
        if min(self.f_thre, self.c_minus, self.c_plus, self.c_gain,
               self.tick_s) <= 0:
            raise ValueError("safety parameters must be positive")
        if self.c_plus <= self.c_minus:
            raise ValueError("c_plus must exceed c_minus")


@dataclass(frozen=True)
class SafetyState:
    """Per-muscle relaxation offsets (mm)."""

    delta_l: np.ndarray

    @property
    def label(self) -> float:
        """Danger label: 1.0 while any muscle is actively relaxed."""
        return 1.0 if np.any(self.delta_l > 0.0) else 0.0


def initial_safety_state(n_muscles: int) -> SafetyState:
    return SafetyState(np.zeros(n_muscles))


def safety_step(state: SafetyState, f: np.ndarray,
                params: SafetyParams) -> SafetyState:
    """Advance the relaxation offsets one tick for measured tensions `f`.

    Per muscle, with d = |f - f_thre|:
      f >  f_thre:  delta += max(-c_minus*d, min(c_gain*d - delta, c_plus*d))
      f <= f_thre:  delta += max(-c_minus*d, min(0 - delta, c_plus*d))
    so relaxation chases the cap c_gain*d while the per-tick change stays
    inside [-c_minus*d, c_plus*d].
    """
    f = np.asarray(f, dtype=float)
    if f.shape != state.delta_l.shape:
        raise ValueError(
            f"tension vector shape {f.shape} != state shape {state.delta_l.shape}")
    if np.any(f < 0.0):
        raise ValueError("negative muscle tension violates the plant contract")
    d = np.abs(f - params.f_thre)
    cap = np.where(f > params.f_thre, params.c_gain * d, 0.0)
    change = np.maximum(-params.c_minus * d,
                        np.minimum(cap - state.delta_l, params.c_plus * d))
    return SafetyState(state.delta_l + change)


def apply_safety(command: np.ndarray, state: SafetyState) -> np.ndarray:
    """Relaxed command actually sent to the plant: command + delta_l."""
    command = np.asarray(command, dtype=float)
    if command.shape != state.delta_l.shape:
        raise ValueError(
            f"command shape {command.shape} != state shape {state.delta_l.shape}")
    return command + state.delta_l
