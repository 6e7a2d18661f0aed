"""Prioritized inverse kinematics with learned avoidance postures.

The synthetic arm is a 5-DOF chain: a 3R spherical shoulder followed by
a 2R elbow, with a point end effector at the forearm tip.  Reaching the
target position is the first-priority task; staying a joint-space
distance `d_avoid` away from every accumulated avoidance posture is the
second, handled in the nullspace of the first.  After each solve the
posture's command is screened by the danger net; dangerous postures are
appended to the avoidance list and the solve repeats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import DangerNet, forward
from .plant import ArmConfig, muscle_length_of

# Inner (task-1) solver constants: damped least squares with a per-step
# clamp, iterated until the end effector is within the position tolerance.
DLS_DAMPING = 1e-3
STEP_CLAMP_RAD = 0.1
MAX_INNER_ITERS = 100
POS_TOL_MM = 1.0
REACH_TOL_MM = 5.0
# Avoidance balls start pushing slightly outside d_avoid so the returned
# posture clears the constraint strictly.
AVOID_ACTIVATION = 1.2
AVOID_TARGET = 1.1


class UnreachableTargetError(ValueError):
    def __init__(self, target: np.ndarray, closest_mm: float):
        self.closest_mm = closest_mm
        super().__init__(
            f"target {np.round(target, 1).tolist()} unreachable; closest "
            f"achievable distance {closest_mm:.1f} mm")


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _frames(theta: np.ndarray, link_lengths: tuple[float, float]):
    l1, l2 = link_lengths
    r1 = _rot_z(theta[0])
    r12 = r1 @ _rot_y(theta[1])
    r_sh = r12 @ _rot_x(theta[2])
    elbow = r_sh @ np.array([l1, 0.0, 0.0])
    r4 = r_sh @ _rot_y(theta[3])
    r_fore = r4 @ _rot_z(theta[4])
    tip = elbow + r_fore @ np.array([l2, 0.0, 0.0])
    return r1, r12, r_sh, r4, elbow, tip


def forward_kinematics(theta: np.ndarray, cfg: ArmConfig) -> np.ndarray:
    """End-effector position (mm) of the 5-DOF shoulder+elbow chain."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (5,):
        raise ValueError("forward kinematics is defined for the 5-DOF arm")
    return _frames(theta, cfg.link_lengths)[5]


def elbow_position(theta: np.ndarray, cfg: ArmConfig) -> np.ndarray:
    """Elbow joint position (mm); depends on the shoulder angles only."""
    theta = np.asarray(theta, dtype=float)
    return _frames(theta, cfg.link_lengths)[4]


def jacobian(theta: np.ndarray, cfg: ArmConfig) -> np.ndarray:
    """Analytic 3x5 position Jacobian (mm/rad)."""
    theta = np.asarray(theta, dtype=float)
    r1, r12, r_sh, r4, elbow, tip = _frames(theta, cfg.link_lengths)
    ex, ey, ez = np.eye(3)
    axes = [ez, r1 @ ey, r12 @ ex, r_sh @ ey, r4 @ ez]
    origins = [np.zeros(3)] * 3 + [elbow] * 2
    cols = [np.cross(a, tip - o) for a, o in zip(axes, origins)]
    return np.stack(cols, axis=1)


@dataclass
class IkProblem:
    x_ref: np.ndarray
    theta_init: np.ndarray
    avoid_list: list[np.ndarray] = field(default_factory=list)
    d_avoid: float = 0.2
    p_trigger: float = 0.1
    max_outer: int = 10

    def __post_init__(self):
        self.x_ref = np.asarray(self.x_ref, dtype=float)
        self.theta_init = np.asarray(self.theta_init, dtype=float)
        self.avoid_list = [np.asarray(a, dtype=float) for a in self.avoid_list]
        if self.d_avoid <= 0:
            raise ValueError("d_avoid must be positive")


@dataclass(frozen=True)
class IkOuterRecord:
    theta: np.ndarray
    l_ref: np.ndarray
    p_predicted: float
    reach_error_mm: float
    feasible: bool


@dataclass(frozen=True)
class IkResult:
    theta: np.ndarray
    l_ref: np.ndarray
    p_predicted: float
    avoid_list: list[np.ndarray]
    records: list[IkOuterRecord]
    safe: bool       # p_predicted <= p_trigger and constraints satisfied
    reached: bool    # end effector within REACH_TOL_MM of the target
    feasible: bool   # clear of every avoidance ball


def _avoidance_push(theta: np.ndarray, avoid: list[np.ndarray],
                    d_avoid: float) -> np.ndarray:
    """Joint-space step moving out of any active avoidance ball."""
    push = np.zeros_like(theta)
    for a in avoid:
        v = theta - a
        dist = float(np.linalg.norm(v))
        if dist >= AVOID_ACTIVATION * d_avoid:
            continue
        if dist < 1e-9:
            # sitting exactly on the avoidance posture: pick a fixed
            # deterministic escape direction
            v = np.zeros_like(theta)
            v[0] = 1.0
            dist = 1.0
        push += (AVOID_TARGET * d_avoid - dist) * (v / dist)
    return push


def _solve_task(problem: IkProblem, avoid: list[np.ndarray],
                cfg: ArmConfig, start: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Damped-least-squares reach with avoidance handled in the nullspace."""
    theta = start.copy()
    damping = (DLS_DAMPING * max(cfg.link_lengths))**2
    for _ in range(MAX_INNER_ITERS):
        tip = forward_kinematics(theta, cfg)
        err = problem.x_ref - tip
        jac = jacobian(theta, cfg)
        gram = jac @ jac.T + damping * np.eye(3)
        d_reach = jac.T @ np.linalg.solve(gram, err)
        push = _avoidance_push(theta, avoid, problem.d_avoid)
        if np.any(push != 0.0):
            # second priority: project the push into the reach nullspace
            nullspace = np.eye(5) - np.linalg.pinv(jac) @ jac
            push = nullspace @ push
        d_theta = d_reach + push
        norm = np.linalg.norm(d_theta)
        if norm > STEP_CLAMP_RAD:
            d_theta *= STEP_CLAMP_RAD / norm
        theta = np.clip(theta + d_theta, cfg.joint_lower, cfg.joint_upper)
        err_norm = float(np.linalg.norm(problem.x_ref - forward_kinematics(theta, cfg)))
        clear = all(np.linalg.norm(theta - a) > problem.d_avoid for a in avoid)
        if err_norm <= POS_TOL_MM and clear:
            break
    err_norm = float(np.linalg.norm(problem.x_ref - forward_kinematics(theta, cfg)))
    feasible = all(np.linalg.norm(theta - a) > problem.d_avoid for a in avoid)
    return theta, err_norm, feasible


def solve_prioritized(problem: IkProblem, net: DangerNet,
                      cfg: ArmConfig) -> IkResult:
    """Reach `x_ref` while accumulating and avoiding dangerous postures.

    Each outer iteration solves the prioritized reach, converts the
    posture to a command, and screens it with the net; a prediction
    above `p_trigger` turns the posture into a new avoidance ball.  The
    loop stops at the first safe posture, or returns the best-probability
    candidate flagged unsafe after `max_outer` attempts.
    """
    if cfg.n_joints != 5:
        raise ValueError("prioritized IK is defined for the 5-DOF arm")
    reach_radius = sum(cfg.link_lengths)
    target_radius = float(np.linalg.norm(problem.x_ref))
    if target_radius > reach_radius:
        raise UnreachableTargetError(problem.x_ref,
                                     target_radius - reach_radius)
    avoid = [a.copy() for a in problem.avoid_list]
    records: list[IkOuterRecord] = []
    best: IkOuterRecord | None = None
    # each retry linearizes around the current target posture: warm-start
    # from the previous solution so new avoidance balls push it onward
    start = problem.theta_init
    for _ in range(problem.max_outer):
        theta, err_mm, feasible = _solve_task(problem, avoid, cfg, start)
        start = theta
        if err_mm > REACH_TOL_MM and not avoid:
            raise UnreachableTargetError(problem.x_ref, err_mm)
        l_ref = muscle_length_of(theta, cfg)
        p = forward(net, l_ref)
        record = IkOuterRecord(theta, l_ref, p, err_mm, feasible)
        records.append(record)
        ok = feasible and err_mm <= REACH_TOL_MM
        if ok and (best is None or p < best.p_predicted):
            best = record
        if ok and p <= problem.p_trigger:
            return IkResult(theta, l_ref, p, avoid, records,
                            safe=True, reached=True, feasible=True)
        avoid.append(theta.copy())
    if best is None:
        best = min(records, key=lambda r: r.p_predicted)
    return IkResult(best.theta, best.l_ref, best.p_predicted, avoid, records,
                    safe=False, reached=best.reach_error_mm <= REACH_TOL_MM,
                    feasible=best.feasible)
