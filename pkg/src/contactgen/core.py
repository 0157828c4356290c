"""Shared primitives for the planar manipulation stack.

A system state is the object's planar pose [x, y, theta] stacked with the
robot joint vector (two prismatic joints per point finger).  Everything
downstream (steppers, planners, metrics) works in these coordinates.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Yaw error is worth 0.2 m of position error; used by planners and metrics.
ORIENTATION_WEIGHT = 0.2


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    r = np.mod(theta, TWO_PI)
    r = np.where(r > np.pi, r - TWO_PI, r)
    if np.ndim(theta) == 0:
        return float(r)
    return r


def ang_diff(a, b):
    """Shortest signed angular difference a - b in (-pi, pi].

    An exact half-turn comes back as +pi, so ties break toward positive
    rotation.
    """
    return wrap_angle(np.asarray(a) - np.asarray(b))


def weighted_distance(q_obj, q_goal) -> float:
    """Distance between object poses: position norm plus weighted yaw gap."""
    q_obj = np.asarray(q_obj, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    dp = math.hypot(q_obj[0] - q_goal[0], q_obj[1] - q_goal[1])
    return dp + ORIENTATION_WEIGHT * abs(ang_diff(q_obj[2], q_goal[2]))


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemState:
    """Object pose plus robot joint vector, immutable."""

    q_obj: np.ndarray
    q_rbt: np.ndarray

    def __post_init__(self):
        q_obj = _frozen_array(self.q_obj)
        q_rbt = _frozen_array(self.q_rbt)
        if q_obj.shape != (3,):
            raise ValueError(f"q_obj must have shape (3,), got {q_obj.shape}")
        if q_rbt.ndim != 1:
            raise ValueError("q_rbt must be a flat joint vector")
        if not (np.isfinite(q_obj).all() and np.isfinite(q_rbt).all()):
            raise ValueError("state contains non-finite entries")
        object.__setattr__(self, "q_obj", q_obj)
        object.__setattr__(self, "q_rbt", q_rbt)

    @property
    def n_rbt(self) -> int:
        return self.q_rbt.shape[0]

    @property
    def q(self) -> np.ndarray:
        """Concatenated generalized coordinates [q_obj, q_rbt]."""
        return np.concatenate([self.q_obj, self.q_rbt])


@dataclass(frozen=True)
class DynamicsParams:
    """Quasi-dynamic stepper parameters.

    stiffness is the joint-space command-tracking stiffness (N/m per
    prismatic joint).  object_inertia is the diagonal regularization mass
    for the unactuated object; divided by the step duration it penalizes
    object motion within one step.  kappa controls the log-barrier
    smoothing of the smoothed stepper (larger = closer to the exact step).
    """

    h: float = 0.1                    # step duration, s
    stiffness: float = 200.0          # N/m per joint
    object_inertia: tuple = (1.0, 1.0, 0.05)
    friction: float = 0.5             # Coulomb coefficient per contact
    kappa: float = 1.0e3
    phi_min: float = 1.0e-4           # barrier floor, m
    d_max: float = 0.05               # contact detection reach, m

    def __post_init__(self):
        if self.h <= 0 or self.stiffness <= 0 or self.kappa <= 0:
            raise ValueError("h, stiffness and kappa must be positive")
        if self.friction < 0:
            raise ValueError("friction must be nonnegative")
        object.__setattr__(self, "object_inertia",
                           tuple(float(v) for v in self.object_inertia))

    def stiffness_vector(self, n_rbt: int) -> np.ndarray:
        return np.full(n_rbt, float(self.stiffness))

    def object_weight(self) -> np.ndarray:
        """Diagonal of the object motion penalty M_u / h."""
        return np.asarray(self.object_inertia) / self.h

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "stiffness": self.stiffness,
            "object_inertia": list(self.object_inertia),
            "friction": self.friction,
            "kappa": self.kappa,
            "phi_min": self.phi_min,
            "d_max": self.d_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicsParams":
        d = dict(d)
        if "object_inertia" in d:
            d["object_inertia"] = tuple(d["object_inertia"])
        return cls(**d)


@dataclass(frozen=True)
class TaskDescription:
    """Workspace, geometry, goal and tolerances for the disk-rotation task.

    The robot is n_fingers point fingers, each with two prismatic joints in
    the world frame, so the joint vector is the concatenated finger
    positions.  Joint limits equal the object workspace box so grasps
    exhaust their travel and force regrasps.
    """

    disk_radius: float = 0.3
    finger_radius: float = 0.005
    n_fingers: int = 2
    q_obj_lb: tuple = (0.35, -0.35, -math.pi)
    q_obj_ub: tuple = (0.85, 0.35, math.pi)
    goal: tuple = (0.65, 0.0, math.pi)
    success_pos_tol: float = 0.1      # m
    success_rot_tol: float = 0.2      # rad
    init_region: tuple = (0.4, 0.7)   # training-time reset area centered on the goal
    grasp_clearance: float = 1.0e-3   # gap left between finger and disk at a grasp

    def __post_init__(self):
        for name in ("q_obj_lb", "q_obj_ub", "goal"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "init_region", tuple(float(v) for v in self.init_region))
        if self.n_fingers < 1:
            raise ValueError("need at least one finger")
        if self.disk_radius <= 0 or self.finger_radius < 0:
            raise ValueError("bad geometry")

    @property
    def n_rbt(self) -> int:
        return 2 * self.n_fingers

    @property
    def contact_radius(self) -> float:
        """Center distance at which a finger touches the disk."""
        return self.disk_radius + self.finger_radius

    @property
    def q_rbt_lb(self) -> np.ndarray:
        return np.tile(np.asarray(self.q_obj_lb[:2]), self.n_fingers)

    @property
    def q_rbt_ub(self) -> np.ndarray:
        return np.tile(np.asarray(self.q_obj_ub[:2]), self.n_fingers)

    def finger_position(self, q_rbt: np.ndarray, i: int) -> np.ndarray:
        return np.asarray(q_rbt)[2 * i: 2 * i + 2]

    def goal_array(self) -> np.ndarray:
        return np.asarray(self.goal)

    def to_dict(self) -> dict:
        return {
            "disk_radius": self.disk_radius,
            "finger_radius": self.finger_radius,
            "n_fingers": self.n_fingers,
            "q_obj_lb": list(self.q_obj_lb),
            "q_obj_ub": list(self.q_obj_ub),
            "goal": list(self.goal),
            "success_pos_tol": self.success_pos_tol,
            "success_rot_tol": self.success_rot_tol,
            "init_region": list(self.init_region),
            "grasp_clearance": self.grasp_clearance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskDescription":
        d = dict(d)
        for name in ("q_obj_lb", "q_obj_ub", "goal", "init_region"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)


def canonical_hash(payload) -> str:
    """Stable short hash of a JSON-serializable payload."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def is_success(final_state: SystemState, task: TaskDescription) -> bool:
    """Goal test: position error < success_pos_tol and yaw error < success_rot_tol."""
    goal = task.goal_array()
    dp = math.hypot(final_state.q_obj[0] - goal[0], final_state.q_obj[1] - goal[1])
    dth = abs(ang_diff(final_state.q_obj[2], goal[2]))
    return bool(dp < task.success_pos_tol and dth < task.success_rot_tol)
