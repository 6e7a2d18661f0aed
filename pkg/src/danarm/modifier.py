"""Gradient-descent modification of a command toward the nearest safe one.

When the requested command looks dangerous, walk from the currently
executing command toward the request, descending a loss that trades the
predicted danger probability against distance to the request.  Each
iteration line-searches a small grid of step sizes (including zero, so
the kept loss never increases) and keeps the best candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import DangerNet, forward, input_gradient


@dataclass
class ModifierConfig:
    distance_weight: float = 0.01   # weight of the mm-distance term
    gamma_max: float = 0.1          # largest step scale (normalized units)
    n_rates: int = 10               # candidate step sizes per iteration
    n_iters: int = 30
    p_trigger: float = 0.1          # modify only when p(goal) exceeds this

    def __post_init__(self):
        if min(self.distance_weight, self.gamma_max, self.n_rates,
               self.n_iters) <= 0:
            raise ValueError("modifier parameters must be positive")
        if not 0.0 < self.p_trigger < 1.0:
            raise ValueError("p_trigger must lie in (0, 1)")


@dataclass(frozen=True)
class ModifyResult:
    command: np.ndarray
    p_initial: float        # predicted danger of the requested goal
    p_final: float          # predicted danger of the returned command
    loss_final: float
    iterations: int
    warning: bool = False   # hit non-finite loss; best finite iterate returned


def _loss_batch(net: DangerNet, candidates: np.ndarray, goal: np.ndarray,
                weight: float) -> np.ndarray:
    p = forward(net, candidates)
    dist = np.linalg.norm(candidates - goal, axis=1)
    return p + weight * dist


def modify(net: DangerNet, goal: np.ndarray, current: np.ndarray,
           cfg: ModifierConfig | None = None) -> ModifyResult:
    """Safe variant of `goal`, approached from `current`.

    Returns `goal` untouched when its predicted danger is at most
    `p_trigger`.  Otherwise minimizes p(x) + w * |goal - x| over
    `n_iters` iterations starting from `current`; steps are taken in the
    net's normalized input space so the step-size grid is dimensionless.
    """
    if cfg is None:
        cfg = ModifierConfig()
    goal = np.asarray(goal, dtype=float)
    current = np.asarray(current, dtype=float)
    p_goal = forward(net, goal)
    if p_goal <= cfg.p_trigger:
        return ModifyResult(goal.copy(), p_goal, p_goal,
                            p_goal, 0, False)

    # gamma grid: zero step first (monotonicity guard), then a uniform
    # grid up to gamma_max
    rates = np.concatenate(
        ([0.0], cfg.gamma_max * np.arange(1, cfg.n_rates + 1) / cfg.n_rates))
    # step direction maps the normalized-space gradient back to mm
    scale_sq = net.norm_scale**2

    def loss_terms(x: np.ndarray, p: float):
        diff = x - goal
        dist = float(np.linalg.norm(diff))
        direct = cfg.distance_weight * (diff / dist) if dist > 0 else None
        return p + cfg.distance_weight * dist, 1.0, direct

    x = current.copy()
    loss = float(_loss_batch(net, x[None, :], goal, cfg.distance_weight)[0])
    warning = False
    for it in range(cfg.n_iters):
        grad = input_gradient(net, x, loss_terms)
        candidates = x[None, :] - rates[:, None] * (scale_sq * grad)[None, :]
        losses = _loss_batch(net, candidates, goal, cfg.distance_weight)
        finite = np.isfinite(losses)
        if not finite.all():
            warning = True
            if not finite.any():
                break
            losses = np.where(finite, losses, np.inf)
        best = int(np.argmin(losses))
        x = candidates[best]
        loss = float(losses[best])
    return ModifyResult(x, p_goal, forward(net, x), loss,
                        cfg.n_iters, warning)
