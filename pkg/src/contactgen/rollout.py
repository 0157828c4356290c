"""Execute plans chunk by chunk in the exact stepper.

A plan is split at its regrasp markers into chunks, each owning one
collision-free regrasp motion followed by its contact segment.  Rolling
out resets the state to the planned chunk-start state, synthesizes an
explicit retract-arc-approach finger motion for the regrasp jump, then
replays the contact actions through the exact stepper, recording every
step.  Each chunk becomes a standalone demonstration; chunks too short to
carry a training window are merged forward into the next one so no
emitted demonstration is unusably short.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DynamicsParams, SystemState, TaskDescription
from .dynamics import StepError, step_exact, step_smoothed
from .planners import Plan, Regrasp

log = logging.getLogger(__name__)

# finger-finger clearance kept during synthesized motions, in units of
# finger radius (two touching fingers have distance 2 r_f)
FINGER_GAP_FACTOR = 2.2


class RegraspMotionError(RuntimeError):
    """No collision-free retract-arc-approach motion exists."""


@dataclass(frozen=True)
class RolloutConfig:
    reset_at_chunk_start: bool = True
    retract_margin: float = 0.02      # m beyond the disk surface
    approach_speed: float = 0.01      # m of finger travel per step
    # one observation window (3) plus one action horizon (60) plus one
    min_states: int = 64

    def __post_init__(self):
        if self.retract_margin <= 0:
            raise ValueError("retract margin must be positive")
        if self.approach_speed <= 0:
            raise ValueError("approach speed must be positive")


@dataclass
class Chunk:
    """One regrasp jump (None for the leading chunk) plus the contact
    segment that follows it."""

    regrasp: Optional[np.ndarray]
    steps: list


@dataclass
class Demonstration:
    """Aligned state/action record of one rolled-out chunk group."""

    states: list
    actions: list
    step_s: float
    regrasp_indices: list
    plan_id: str
    chunk_index: int
    goal: np.ndarray

    def __post_init__(self):
        if len(self.actions) != len(self.states) - 1:
            raise ValueError("need exactly T-1 actions for T states")
        idx = list(self.regrasp_indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("regrasp indices must be strictly increasing")
        if idx and not (0 <= idx[0] and idx[-1] < len(self.states)):
            raise ValueError("regrasp index out of range")
        self.goal = np.asarray(self.goal, dtype=float)

    def __len__(self) -> int:
        return len(self.states)


def chunk_plan(plan: Plan) -> list:
    """Split a plan at its regrasp markers.

    The slice before the first regrasp, when nonempty, becomes a leading
    chunk with no regrasp of its own.
    """
    chunks: list = []
    current = Chunk(regrasp=None, steps=[])
    for item in plan.items:
        if isinstance(item, Regrasp):
            if current.regrasp is not None or current.steps:
                chunks.append(current)
            current = Chunk(regrasp=np.asarray(item.q_rbt, dtype=float),
                            steps=[])
        else:
            current.steps.append(item)
    if current.regrasp is not None or current.steps or not chunks:
        chunks.append(current)
    return chunks


def _box_radius(center: np.ndarray, bearing: float,
                task: TaskDescription) -> float:
    """Distance from the object center to the joint box along a bearing."""
    d = np.array([np.cos(bearing), np.sin(bearing)])
    lb, ub = task.q_rbt_lb[:2], task.q_rbt_ub[:2]
    r = np.inf
    for k in range(2):
        if d[k] > 1e-12:
            r = min(r, (ub[k] - center[k]) / d[k])
        elif d[k] < -1e-12:
            r = min(r, (lb[k] - center[k]) / d[k])
    return float(r)


def _resample(poly: np.ndarray, step: float) -> np.ndarray:
    """Even arclength resampling; waypoint count = ceil(length / step)."""
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    length = float(seg.sum())
    if length < 1e-12:
        return poly[-1:][:0]          # zero-length path, no waypoints
    n = int(np.ceil(length / step))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    at = np.linspace(0.0, length, n + 1)[1:]
    out = np.empty((n, 2))
    for k, t in enumerate(at):
        i = min(np.searchsorted(s, t), len(seg))
        f = (t - s[i - 1]) / max(s[i] - s[i - 1], 1e-300)
        out[k] = poly[i - 1] + f * (poly[i] - poly[i - 1])
    return out


class _MotionBuilder:
    """Validated waypoint scheduler for one candidate regrasp motion."""

    def __init__(self, state: SystemState, task: TaskDescription,
                 speed: float):
        self.task = task
        self.center = state.q_obj[:2].copy()
        self.speed = speed
        self.q = state.q_rbt.copy()
        self.actions: list = []
        self.floor = task.contact_radius + 0.1 * task.finger_radius
        # a finger that starts inside the surface (the steppers' linearized
        # cone rows plus the workspace clamp admit real overlap) is allowed
        # out along its retract leg; it may not go deeper
        self.escaped = [np.linalg.norm(task.finger_position(self.q, i)
                                       - self.center) > task.contact_radius
                        for i in range(task.n_fingers)]

    def ring(self, bearing: float, radius: float) -> float:
        return min(radius, _box_radius(self.center, bearing, self.task))

    def move(self, finger: int, poly: np.ndarray) -> bool:
        """Append waypoints moving one finger along a polyline; False when
        any waypoint collides, leaves the box, or crowds another finger."""
        task = self.task
        lb, ub = task.q_rbt_lb[:2], task.q_rbt_ub[:2]
        gap = FINGER_GAP_FACTOR * task.finger_radius
        others = np.array([task.finger_position(self.q, j)
                           for j in range(task.n_fingers) if j != finger])
        r_prev = np.linalg.norm(task.finger_position(self.q, finger)
                                - self.center)
        for p in _resample(poly, self.speed):
            r = float(np.linalg.norm(p - self.center))
            if r > task.contact_radius:
                self.escaped[finger] = True
            elif self.escaped[finger] or r < r_prev - 1e-9:
                return False
            r_prev = r
            if np.any(p < lb - 1e-12) or np.any(p > ub + 1e-12):
                return False
            if others.size and np.linalg.norm(others - p, axis=1).min() < gap:
                return False
            q = self.q.copy()
            q[2 * finger: 2 * finger + 2] = p
            self.q = q
            self.actions.append(q)
        return True

    def retract(self, finger: int, radius: float) -> bool:
        p0 = self.task.finger_position(self.q, finger)
        b = np.arctan2(*(p0 - self.center)[::-1])
        r = self.ring(b, radius)
        if r < self.floor:
            return False
        target = self.center + r * np.array([np.cos(b), np.sin(b)])
        return self.move(finger, np.array([p0, target]))

    def transfer(self, finger: int, p_to: np.ndarray, radius: float,
                 ccw: bool) -> bool:
        """Arc along the (box-clipped) ring to the target bearing, then
        approach radially."""
        p0 = self.task.finger_position(self.q, finger)
        a0 = np.arctan2(*(p0 - self.center)[::-1])
        a1 = np.arctan2(*(p_to - self.center)[::-1])
        sweep = (a1 - a0) % (2.0 * np.pi)
        if not ccw:
            sweep = sweep - 2.0 * np.pi
        n = max(1, int(np.ceil(abs(sweep) * radius / self.speed)))
        pts = [p0]
        for a in a0 + sweep * np.linspace(0.0, 1.0, n + 1):
            r = self.ring(a, radius)
            if r < self.floor:
                return False
            pts.append(self.center + r * np.array([np.cos(a), np.sin(a)]))
        pts.append(p_to)
        return self.move(finger, np.asarray(pts))


def synthesize_regrasp_motion(state: SystemState, new_q_rbt,
                              task: TaskDescription,
                              margin: float = 0.02,
                              speed: float = 0.01) -> list:
    """Collision-free finger motion realizing a regrasp jump.

    Every moving finger first retracts radially to its ring at disk radius
    + margin; fingers then take turns traveling along their ring to the
    new bearing and approaching radially.  Rings are staggered a couple of
    finger radii apart so one finger can pass another, and are pulled
    inward to the joint box where the box is closer than the ring.  Both
    finger orders and both arc directions per finger are tried; the first
    combination whose dense waypoint sweep stays collision-free and within
    limits wins.
    """
    new_q_rbt = np.asarray(new_q_rbt, dtype=float)
    if new_q_rbt.shape != state.q_rbt.shape:
        raise ValueError("grasp has wrong number of joints")
    if np.allclose(new_q_rbt, state.q_rbt, atol=1e-12):
        return []
    nf = task.n_fingers
    moves = [i for i in range(nf)
             if not np.allclose(task.finger_position(new_q_rbt, i),
                                task.finger_position(state.q_rbt, i),
                                atol=1e-12)]
    orders = [moves, moves[::-1]] if len(moves) > 1 else [moves]
    stagger = 2.5 * task.finger_radius
    for order in orders:
        rings = {f: task.disk_radius + margin + k * stagger
                 for k, f in enumerate(order)}
        for dirs in range(2 ** len(order)):
            b = _MotionBuilder(state, task, speed)
            ok = all(b.retract(f, rings[f]) for f in order)
            if ok:
                for k, f in enumerate(order):
                    if not b.transfer(f, task.finger_position(new_q_rbt, f),
                                      rings[f], bool((dirs >> k) & 1)):
                        ok = False
                        break
            if ok:
                return b.actions
    raise RegraspMotionError("both finger orders and arc directions are "
                             "blocked for this regrasp")


def _planned_starts(plan: Plan, chunks: list, params: DynamicsParams,
                    task: TaskDescription) -> list:
    """Planned state at each chunk boundary, before its regrasp jump.

    Plans store the state entering each step, so the state leaving a
    chunk's final step is recovered with one smoothed step (the plan's
    native dynamics, under which contact edges replay exactly).
    """
    starts = [plan.start]
    for chunk in chunks[:-1]:
        if chunk.steps:
            last = chunk.steps[-1]
            starts.append(step_smoothed(last.state, last.action, params,
                                        task))
        else:
            prev = starts[-1]
            q_rbt = chunk.regrasp if chunk.regrasp is not None else prev.q_rbt
            starts.append(SystemState(q_obj=prev.q_obj, q_rbt=q_rbt))
    return starts


def _object_in_bounds(state: SystemState, task: TaskDescription) -> bool:
    p = state.q_obj[:2]
    return bool(np.all(p >= np.asarray(task.q_obj_lb[:2]))
                and np.all(p <= np.asarray(task.q_obj_ub[:2])))


def rollout_plan(plan: Plan, cfg: RolloutConfig, params: DynamicsParams,
                 task: TaskDescription, drops: Optional[list] = None) -> list:
    """Roll a successful plan out through the exact stepper.

    Returns one Demonstration per chunk group; a group is one chunk, or
    several merged forward when a lone chunk would fall below
    cfg.min_states.  Chunks whose rollout fails or leaves the object
    workspace are dropped with a logged reason (appended to drops when
    given).
    """
    if not plan.success:
        raise ValueError("rollout requires a successful plan")
    chunks = chunk_plan(plan)
    starts = _planned_starts(plan, chunks, params, task)
    plan_id = f"{plan.planner}-{plan.seed}"
    # planned per-chunk record lengths guide the merge lookahead
    est = [len(c.steps) + (0 if c.regrasp is None else 20) for c in chunks]

    def _drop(reason: str):
        log.warning("%s: dropped chunk group: %s", plan_id, reason)
        if drops is not None:
            drops.append({"plan": plan_id, "reason": reason})

    demos: list = []
    state = plan.start
    i = 0
    n = len(chunks)
    while i < n:
        if cfg.reset_at_chunk_start or i == 0:
            state = starts[i]
        states = [state]
        actions: list = []
        regrasp_idx: list = []
        failure = None
        j = i
        while j < n:
            chunk = chunks[j]
            acts = []
            if chunk.regrasp is not None:
                regrasp_idx.append(len(states) - 1)
                try:
                    acts = synthesize_regrasp_motion(
                        state, chunk.regrasp, task,
                        cfg.retract_margin, cfg.approach_speed)
                except RegraspMotionError as e:
                    failure = str(e)
                    break
            acts = acts + [s.action for s in chunk.steps]
            for a in acts:
                try:
                    state = step_exact(state, a, params, task)
                except StepError as e:
                    failure = f"stepper failure: {e}"
                    break
                actions.append(np.asarray(a, dtype=float))
                states.append(state)
                if not _object_in_bounds(state, task):
                    failure = "object pose left the workspace bounds"
                    break
            if failure is not None:
                break
            j += 1
            remaining = sum(est[j:])
            if len(states) >= cfg.min_states and (
                    remaining == 0 or remaining >= cfg.min_states + 4):
                break
        if failure is not None:
            _drop(failure)
            i = j + 1
            continue
        if len(states) < cfg.min_states:
            _drop(f"group of {len(states)} states is below the "
                  f"{cfg.min_states}-state minimum")
        else:
            demos.append(Demonstration(
                states=states, actions=actions, step_s=params.h,
                regrasp_indices=regrasp_idx, plan_id=plan_id,
                chunk_index=len(demos), goal=np.asarray(plan.goal,
                                                        dtype=float)))
        i = j
    return demos
