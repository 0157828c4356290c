"""Quasi-dynamic steppers for the planar disk-and-fingers system.

Both steppers advance the state by one commanded step of duration h.  The
robot tracks joint-position commands through a stiffness controller; the
object moves only through contact.  Velocities carry no state across
steps, so each step is a static force balance over position increments:

    E(dq) = 0.5 dq_obj' (M_u/h) dq_obj
          + 0.5 (q_rbt + dq_rbt - a)' K (q_rbt + dq_rbt - a)

step_exact minimizes E subject to the linearized non-penetration cone
constraints phi_i + (J_n +- mu J_t) dq >= 0 (one row per friction cone
edge).  step_smoothed replaces the constraints with log barriers weighted
1/kappa, which lets contacts within d_max act at a distance and makes the
step differentiable; as kappa grows the two agree.
"""
from __future__ import annotations

import numpy as np

from .core import DynamicsParams, SystemState, TaskDescription, wrap_angle
from .geometry import ContactPoint, contact_set
from .solver import minimize_log_barrier, solve_qp


class StepError(RuntimeError):
    """A stepper could not produce a state (solver failure)."""


def _check_action(action: np.ndarray, state: SystemState) -> np.ndarray:
    a = np.asarray(action, dtype=float)
    if a.shape != (state.n_rbt,):
        raise ValueError(f"action must have shape ({state.n_rbt},), got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("action contains non-finite entries")
    return a


def _qp_terms(state: SystemState, action: np.ndarray, params: DynamicsParams):
    n_rbt = state.n_rbt
    k_vec = params.stiffness_vector(n_rbt)
    h_diag = np.concatenate([params.object_weight(), k_vec])
    c = np.concatenate([np.zeros(3), k_vec * (state.q_rbt - action)])
    return np.diag(h_diag), c


def _cone_rows(contacts: list[ContactPoint], mu: float):
    """Stack the two friction-cone edge rows per contact; returns (rows, phis)."""
    rows = []
    phis = []
    for c in contacts:
        for sign in (1.0, -1.0):
            rows.append(c.j_n + sign * mu * c.j_t)
            phis.append(c.phi)
    return np.asarray(rows), np.asarray(phis)


def _finish(state: SystemState, delta: np.ndarray, task: TaskDescription) -> SystemState:
    q = state.q + delta
    q_obj = q[:3]
    q_obj = np.array([q_obj[0], q_obj[1], wrap_angle(q_obj[2])])
    q_obj = np.clip(q_obj, task.q_obj_lb, task.q_obj_ub)
    q_rbt = np.clip(q[3:], task.q_rbt_lb, task.q_rbt_ub)
    return SystemState(q_obj=q_obj, q_rbt=q_rbt)


def step_exact(state: SystemState, action: np.ndarray,
               params: DynamicsParams, task: TaskDescription) -> SystemState:
    """One exact quasi-dynamic step (constrained QP), then box clamp and wrap."""
    action = _check_action(action, state)
    contacts = contact_set(state, task, params.d_max)
    h_mat, c = _qp_terms(state, action, params)
    try:
        if contacts:
            rows, phis = _cone_rows(contacts, params.friction)
            delta = solve_qp(h_mat, c, rows, -phis)
        else:
            delta = solve_qp(h_mat, c)
    except Exception as exc:  # noqa: BLE001 - wrap solver failures uniformly
        raise StepError(f"exact step failed: {exc}") from exc
    return _finish(state, delta, task)


def _smoothed_delta(state: SystemState, action: np.ndarray,
                    params: DynamicsParams, task: TaskDescription,
                    x0: np.ndarray | None = None) -> np.ndarray:
    contacts = contact_set(state, task, params.d_max)
    n_rbt = state.n_rbt
    if not contacts:
        # free space: the robot tracks the command exactly, the object rests
        return np.concatenate([np.zeros(3), action - state.q_rbt])
    h_mat, c = _qp_terms(state, action, params)
    rows, phis = _cone_rows(contacts, params.friction)
    offsets = np.maximum(phis, params.phi_min)
    return minimize_log_barrier(h_mat, c, rows, offsets, params.kappa, x0=x0)


def step_smoothed(state: SystemState, action: np.ndarray,
                  params: DynamicsParams, task: TaskDescription,
                  _x0: np.ndarray | None = None) -> SystemState:
    """One log-barrier smoothed step; contacts within d_max act at a distance."""
    action = _check_action(action, state)
    try:
        delta = _smoothed_delta(state, action, params, task, x0=_x0)
    except Exception as exc:  # noqa: BLE001
        raise StepError(f"smoothed step failed: {exc}") from exc
    return _finish(state, delta, task)
