"""One-step action selection through the smoothed dynamics.

linearize builds a local linear model of how the object pose responds to
robot commands (central finite differences of the smoothed stepper around
holding the current configuration).  steer solves a small trust-region QP
on that model to pick the command that best moves the object toward a
target pose, then advances the state with the smoothed stepper.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .core import SystemState, DynamicsParams, TaskDescription, ang_diff, wrap_angle
from .dynamics import _smoothed_delta, _finish
from .geometry import contact_set

FD_EPS = 1e-5
DELTA_MAX = 0.02
THETA_WEIGHT = 0.2
# tie-break ridge: keeps the action at zero when the object is insensitive
RIDGE = 1e-9


@dataclass(frozen=True)
class LinearizedModel:
    state: SystemState
    action: np.ndarray
    b_matrix: np.ndarray          # (3, n_rbt) object-pose sensitivity
    predicted_obj: np.ndarray     # object pose after holding still

    def __post_init__(self):
        if not np.all(np.isfinite(self.b_matrix)):
            raise ValueError("sensitivity matrix contains non-finite entries")


def _linearize_with_base(state, params, task, eps):
    nominal = state.q_rbt.copy()
    n = state.n_rbt
    contacts = contact_set(state, task, params.d_max)
    if not contacts:
        model = LinearizedModel(state, nominal, np.zeros((3, n)),
                                state.q_obj.copy())
        return model, None
    base = _smoothed_delta(state, nominal, params, task)
    b_mat = np.zeros((3, n))
    # a finger with no contact row is decoupled from the object block, so
    # its columns are exactly zero; only touching fingers need solves
    touching = sorted({ct.finger for ct in contacts})
    for f in touching:
        for j in (2 * f, 2 * f + 1):
            bump = np.zeros(n)
            bump[j] = eps
            d_plus = _smoothed_delta(state, nominal + bump, params, task, x0=base)
            d_minus = _smoothed_delta(state, nominal - bump, params, task, x0=base)
            b_mat[:, j] = (d_plus[:3] - d_minus[:3]) / (2.0 * eps)
    predicted = state.q_obj + base[:3]
    predicted[2] = wrap_angle(predicted[2])
    # the stepper box-clamps the object pose, so the hold-still prediction
    # must too; otherwise a contact loaded against a pose limit reads as a
    # phantom drift that the solver tries to cancel by retracting
    predicted = np.clip(predicted, task.q_obj_lb, task.q_obj_ub)
    return LinearizedModel(state, nominal, b_mat, predicted), base


def linearize(state: SystemState, params: DynamicsParams, task: TaskDescription,
              eps: float = FD_EPS) -> LinearizedModel:
    """Central-difference sensitivity of next object pose to the command.

    The nominal action holds the robot at its current configuration.  With
    no contact candidates the object cannot respond, so B is exactly zero
    and no solves are needed.
    """
    model, _ = _linearize_with_base(state, params, task, eps)
    return model


def _pose_residual(pose, target):
    r = np.empty(3)
    r[:2] = pose[:2] - target[:2]
    r[2] = ang_diff(pose[2], target[2])
    return r


def steer(state: SystemState, q_obj_des, params: DynamicsParams,
          task: TaskDescription, delta_max: float = DELTA_MAX,
          eps: float = FD_EPS, weights=None):
    """Pick the command minimizing predicted distance to q_obj_des.

    Minimizes 0.5 ||r0 + B da||^2_W over |da| <= delta_max componentwise
    and q_rbt + da inside joint limits, W = diag(1, 1, 0.2) unless weights
    overrides it (stiff position weights turn the step into rotation about
    a held point).  Solved as a bounded least-squares (BVLS) on the
    stacked system [sqrt(W) B; sqrt(ridge) I] so the near-singular
    directions stay well conditioned.  Returns (new_state, action) with
    new_state = step_smoothed(state, action).
    """
    if delta_max <= 0.0:
        raise ValueError("delta_max must be positive")
    q_obj_des = np.asarray(q_obj_des, dtype=float)
    lin, base = _linearize_with_base(state, params, task, eps)
    n = state.n_rbt
    lo = np.maximum(-delta_max, task.q_rbt_lb - state.q_rbt)
    hi = np.minimum(delta_max, task.q_rbt_ub - state.q_rbt)
    hi = np.maximum(hi, lo)
    r0 = _pose_residual(lin.predicted_obj, q_obj_des)
    if weights is None:
        weights = (1.0, 1.0, THETA_WEIGHT)
    w_sqrt = np.sqrt(np.asarray(weights, dtype=float))
    a_ls = np.vstack([lin.b_matrix * w_sqrt[:, None],
                      np.sqrt(RIDGE) * np.eye(n)])
    b_ls = np.concatenate([-(r0 * w_sqrt), np.zeros(n)])
    delta = np.array(lo)
    free = hi > lo
    if free.any():
        b_red = b_ls - a_ls[:, ~free] @ lo[~free]
        res = lsq_linear(a_ls[:, free], b_red, bounds=(lo[free], hi[free]),
                         method="bvls", max_iter=60 * n)
        if not res.success:
            # bvls can cycle on degenerate active sets; trf is slower but
            # always returns a feasible point
            res = lsq_linear(a_ls[:, free], b_red, bounds=(lo[free], hi[free]),
                             method="trf")
        delta[free] = res.x
    delta = np.clip(delta, lo, hi)
    action = state.q_rbt + delta
    if base is None:
        new_state = _finish(state, np.concatenate([np.zeros(3), delta]), task)
    else:
        step_delta = _smoothed_delta(state, action, params, task, x0=base)
        new_state = _finish(state, step_delta, task)
    return new_state, action
