"""Deterministic simulated musculoskeletal arm.

The plant stands in for a real tendon-driven robot: joint angles map
linearly to muscle lengths through constant signed moment arms, muscle
tension comes from quadratic series-elastic stretch, and "dangers"
(inter-body interference, bad antagonistic command combinations) are
injected through configurable zones that add a steep tension ramp.

Units: muscle lengths in mm, joint angles in rad, tensions in N.
One `step` call advances the simulation by one 8 ms control tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

TICK_S = 0.008
"""Control period of the simulated muscle-length servo loop."""

ZONE_RAMP_N_PER_MM = 50.0
"""Extra tension per mm of danger-zone penetration on affected muscles."""


class ConfigError(ValueError):
    """Raised when an arm configuration is inconsistent."""


@dataclass
class JointBoxZone:
    """Axis-aligned box in joint space standing in for link interference.

    A muscle is affected when the joint vector is strictly inside the box
    on every axis.  Penetration depth is measured in the affected muscle's
    length coordinate: the smallest exit margin among the joints the
    muscle actually spans, converted rad -> mm through its moment arm.
    Use a large half width (e.g. 100 rad) for joints the box should not
    constrain.
    """

    center: np.ndarray
    half_width: np.ndarray
    affected_muscle: int

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_width = np.asarray(self.half_width, dtype=float)

    def depth_mm(self, theta: np.ndarray, moment_arm: np.ndarray) -> float:
        margin = self.half_width - np.abs(theta - self.center)
        if np.any(margin <= 0.0):
            return 0.0
        arms = np.abs(moment_arm[self.affected_muscle])
        spanned = arms > 0.0
        return float(np.min(margin[spanned] * arms[spanned]))


@dataclass
class MusclePairTrap:
    """Command-space trap standing in for a bad antagonistic relationship.

    Fires when the summed commands of the two trap muscles fall below
    `threshold` (both pulled too short through the closed kinematic
    loop); penetration is the shortfall in mm.
    """

    muscles: tuple[int, int]
    threshold: float
    affected: tuple[int, ...]

    def __post_init__(self):
        self.muscles = tuple(int(i) for i in self.muscles)
        self.affected = tuple(int(i) for i in self.affected)

    def depth_mm(self, command: np.ndarray) -> float:
        i, j = self.muscles
        return max(0.0, self.threshold - float(command[i] + command[j]))


DangerZone = JointBoxZone | MusclePairTrap


@dataclass
class ArmConfig:
    """Static description of the simulated arm.

    moment_arm is m x n_joints in mm/rad; a positive entry means the
    muscle shortens as the joint angle grows.  The synthetic default
    (see data/default.yaml) has antagonistic pairs on every joint and
    one polyarticular muscle spanning the elbow joints.
    """

    n_joints: int
    n_muscles: int
    moment_arm: np.ndarray
    natural_length: np.ndarray
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    elastic_k: np.ndarray
    danger_zones: list[DangerZone] = field(default_factory=list)
    tension_noise_sd: float = 0.0
    seed: int = 0
    link_lengths: tuple[float, float] = (300.0, 280.0)
    servo_gain: float = 0.3
    overtravel_rad: float = math.radians(15.0)

    def __post_init__(self):
        self.moment_arm = np.asarray(self.moment_arm, dtype=float)
        self.natural_length = np.asarray(self.natural_length, dtype=float)
        self.joint_lower = np.asarray(self.joint_lower, dtype=float)
        self.joint_upper = np.asarray(self.joint_upper, dtype=float)
        self.elastic_k = np.asarray(self.elastic_k, dtype=float)
        self.validate()

    def validate(self) -> None:
        m, n = self.n_muscles, self.n_joints
        if self.moment_arm.shape != (m, n):
            raise ConfigError(
                f"moment_arm shape {self.moment_arm.shape} != ({m}, {n})")
        for name in ("natural_length", "elastic_k"):
            if getattr(self, name).shape != (m,):
                raise ConfigError(f"{name} must have {m} entries")
        for name in ("joint_lower", "joint_upper"):
            if getattr(self, name).shape != (n,):
                raise ConfigError(f"{name} must have {n} entries")
        if not np.all(self.joint_lower < self.joint_upper):
            raise ConfigError("joint_lower must be < joint_upper elementwise")
        if not np.all(self.elastic_k > 0):
            raise ConfigError("elastic_k must be positive elementwise")
        # Single-joint rigs (test fixtures, the fixed-end pull) cannot have a
        # polyarticular muscle, so only multi-joint arms are required to.
        if n >= 2:
            poly = np.count_nonzero(self.moment_arm, axis=1) >= 2
            if not np.any(poly):
                raise ConfigError(
                    "at least one muscle must span >= 2 joints (polyarticular)")
        for z in self.danger_zones:
            self._validate_zone(z)

    def _validate_zone(self, zone: DangerZone) -> None:
        m, n = self.n_muscles, self.n_joints
        if isinstance(zone, JointBoxZone):
            if zone.center.shape != (n,) or zone.half_width.shape != (n,):
                raise ConfigError("joint_box center/half_width must have "
                                  f"{n} entries")
            if not np.all(zone.half_width > 0):
                raise ConfigError("joint_box half widths must be positive")
            if not 0 <= zone.affected_muscle < m:
                raise ConfigError("joint_box affected_muscle out of range")
            if not np.any(np.abs(self.moment_arm[zone.affected_muscle]) > 0):
                raise ConfigError("joint_box affected muscle has no moment arm")
        elif isinstance(zone, MusclePairTrap):
            if any(not 0 <= i < m for i in zone.muscles + zone.affected):
                raise ConfigError("muscle_pair_trap muscle index out of range")
            if len(zone.muscles) != 2:
                raise ConfigError("muscle_pair_trap needs exactly two muscles")
        else:
            raise ConfigError(f"unknown danger zone type {type(zone)!r}")

    @cached_property
    def pinv_moment_arm(self) -> np.ndarray:
        return np.linalg.pinv(self.moment_arm)

    def reachable_length_bounds(self, margin_rad: float | None = None
                                ) -> tuple[np.ndarray, np.ndarray]:
        """Elementwise min/max muscle length over the (widened) joint box."""
        if margin_rad is None:
            margin_rad = self.overtravel_rad
        lo = self.joint_lower - margin_rad
        hi = self.joint_upper + margin_rad
        # l = L0 - A @ theta: extremes at box corners, separable per joint
        contrib_lo = np.minimum(self.moment_arm * lo, self.moment_arm * hi)
        contrib_hi = np.maximum(self.moment_arm * lo, self.moment_arm * hi)
        return (self.natural_length - contrib_hi.sum(axis=1),
                self.natural_length - contrib_lo.sum(axis=1))

    def with_noise(self, sd: float) -> "ArmConfig":
        return replace(self, tension_noise_sd=sd)


@dataclass(frozen=True)
class PlantState:
    """Snapshot of the simulated arm after `t` control ticks."""

    theta: np.ndarray
    l_measured: np.ndarray
    f: np.ndarray
    t: int = 0


def muscle_length_of(theta: np.ndarray, cfg: ArmConfig) -> np.ndarray:
    """Geometric muscle lengths for joint angles (broadcasts over rows)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != cfg.n_joints:
        raise ConfigError(
            f"theta has {theta.shape[-1]} entries, config expects {cfg.n_joints}")
    return cfg.natural_length - theta @ cfg.moment_arm.T


def zone_depths(theta: np.ndarray, command: np.ndarray,
                cfg: ArmConfig) -> np.ndarray:
    """Penetration depth (mm) for every configured danger zone."""
    depths = np.zeros(len(cfg.danger_zones))
    for k, zone in enumerate(cfg.danger_zones):
        if isinstance(zone, JointBoxZone):
            depths[k] = zone.depth_mm(theta, cfg.moment_arm)
        else:
            depths[k] = zone.depth_mm(command)
    return depths


def danger_boost(theta: np.ndarray, command: np.ndarray,
                 cfg: ArmConfig) -> np.ndarray:
    """Per-muscle danger-zone tension ramp (N)."""
    boost = np.zeros(cfg.n_muscles)
    for zone, depth in zip(cfg.danger_zones, zone_depths(theta, command, cfg)):
        if depth <= 0.0:
            continue
        ramp = ZONE_RAMP_N_PER_MM * depth
        if isinstance(zone, JointBoxZone):
            boost[zone.affected_muscle] += ramp
        else:
            for i in zone.affected:
                boost[i] += ramp
    return boost


def tension_of(theta: np.ndarray, command: np.ndarray, cfg: ArmConfig,
               t: int = 0) -> np.ndarray:
    """Muscle tensions: quadratic elastic stretch + zone ramp + noise.

    Noise is drawn from a generator keyed on (cfg.seed, t), so tensions
    are a pure function of (theta, command, cfg, t).
    """
    stretch = np.maximum(0.0, muscle_length_of(theta, cfg) - command)
    f = cfg.elastic_k * stretch**2 + danger_boost(theta, command, cfg)
    if cfg.tension_noise_sd > 0.0:
        rng = np.random.default_rng([cfg.seed, int(t)])
        f = f + rng.normal(0.0, cfg.tension_noise_sd, cfg.n_muscles)
    return np.maximum(f, 0.0)


def init_state(cfg: ArmConfig, theta0: np.ndarray | None = None) -> PlantState:
    """Resting state at `theta0` (mid-range by default), command = geometry."""
    if theta0 is None:
        theta0 = 0.5 * (cfg.joint_lower + cfg.joint_upper)
    theta0 = np.asarray(theta0, dtype=float)
    l_geom = muscle_length_of(theta0, cfg)
    return PlantState(theta0, l_geom, tension_of(theta0, l_geom, cfg, t=0), 0)


def step(state: PlantState, command: np.ndarray, cfg: ArmConfig) -> PlantState:
    """One 8 ms tick of the muscle-length servo toward `command`.

    Joints move a fraction `servo_gain` toward the least-squares joint
    solution of the command, clamped to the joint range plus overtravel.
    Raises ValueError on non-finite commands; the caller's state is
    untouched in that case.
    """
    command = np.asarray(command, dtype=float)
    if command.shape != (cfg.n_muscles,):
        raise ConfigError(
            f"command has shape {command.shape}, expected ({cfg.n_muscles},)")
    if not np.all(np.isfinite(command)):
        raise ValueError("command contains non-finite values; state unchanged")
    l_geom = muscle_length_of(state.theta, cfg)
    theta = state.theta + cfg.servo_gain * (cfg.pinv_moment_arm @ (l_geom - command))
    theta = np.clip(theta, cfg.joint_lower - cfg.overtravel_rad,
                    cfg.joint_upper + cfg.overtravel_rad)
    t = state.t + 1
    return PlantState(theta, muscle_length_of(theta, cfg),
                      tension_of(theta, command, cfg, t=t), t)
