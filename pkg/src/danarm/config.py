"""Declarative YAML configuration for the whole lab.

One file holds every tunable: the arm geometry and danger zones, the
safety-mechanism constants, training and modifier parameters, IK
settings, and experiment scripting.  `load_config` returns typed config
objects; dotted-path overrides allow quick CLI tweaks.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .experiments import ExperimentConfig
from .modifier import ModifierConfig
from .plant import ArmConfig, ConfigError, JointBoxZone, MusclePairTrap
from .safety import SafetyParams
from .trainer import InitialTrainConfig, ReplayBuffer


@dataclass
class IkConfig:
    d_avoid: float = 0.2
    p_trigger: float = 0.1
    max_outer: int = 10


@dataclass
class BufferConfig:
    capacity: int = 100
    activation_threshold: int = 30
    min_command_distance: float = 20.0

    def make(self) -> ReplayBuffer:
        return ReplayBuffer(self.capacity, self.activation_threshold,
                            self.min_command_distance)


@dataclass
class LabConfig:
    arm: ArmConfig
    safety: SafetyParams
    initial_train: InitialTrainConfig
    buffer: BufferConfig
    modifier: ModifierConfig
    ik: IkConfig
    experiment: ExperimentConfig


def _parse_zone(node: dict):
    kind = node.get("kind")
    if kind == "joint_box":
        return JointBoxZone(np.asarray(node["center"], float),
                            np.asarray(node["half_width"], float),
                            int(node["affected_muscle"]))
    if kind == "muscle_pair_trap":
        return MusclePairTrap(tuple(node["muscles"]), float(node["threshold"]),
                              tuple(node["affected"]))
    raise ConfigError(f"unknown danger zone kind {kind!r}")


def arm_from_tree(node: dict) -> ArmConfig:
    node = dict(node)
    zones = [_parse_zone(z) for z in node.pop("danger_zones", [])]
    if "link_lengths" in node:
        node["link_lengths"] = tuple(float(v) for v in node["link_lengths"])
    return ArmConfig(danger_zones=zones, **node)


def config_from_tree(tree: dict) -> LabConfig:
    exp = dict(tree.get("experiment", {}))
    if "checkpoint_times_s" in exp:
        exp["checkpoint_times_s"] = tuple(exp["checkpoint_times_s"])
    return LabConfig(
        arm=arm_from_tree(tree["arm"]),
        safety=SafetyParams(**tree.get("safety", {})),
        initial_train=InitialTrainConfig(**tree.get("initial_train", {})),
        buffer=BufferConfig(**tree.get("online", {})),
        modifier=ModifierConfig(**tree.get("modifier", {})),
        ik=IkConfig(**tree.get("ik", {})),
        experiment=ExperimentConfig(**exp),
    )


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply `a.b.c=value` overrides (values parsed as YAML scalars).

    Numeric path components index into lists, e.g.
    `arm.danger_zones.2.threshold=610`.
    """
    tree = copy.deepcopy(tree)
    for item in overrides:
        path, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        keys = path.split(".")
        node = tree
        for key in keys[:-1]:
            if isinstance(node, list):
                node = node[int(key)]
            else:
                node = node.setdefault(key, {})
        last = keys[-1]
        value = yaml.safe_load(raw)
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return tree


def default_config_tree() -> dict:
    text = resources.files("danarm").joinpath("data/default.yaml").read_text()
    return yaml.safe_load(text)


def load_config(path=None, overrides: list[str] | None = None) -> LabConfig:
    """Load the lab config from `path` (packaged default when None)."""
    if path is None:
        tree = default_config_tree()
    else:
        with open(path) as fh:
            tree = yaml.safe_load(fh)
    if overrides:
        tree = apply_overrides(tree, overrides)
    return config_from_tree(tree)
