"""Contact kinematics between point fingers and the disk.

Signed distance for a finger is phi = |p_f - p_o| - (disk_radius +
finger_radius); it does not depend on the disk yaw, so the normal Jacobian
has an exactly zero yaw entry.  Tangential relative motion does see yaw:
the contact point on the disk moves with lever arm equal to the disk
radius.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SystemState, TaskDescription


@dataclass(frozen=True)
class ContactPoint:
    """One finger-disk pair within detection range.

    j_n and j_t map a generalized displacement [dq_obj, dq_rbt] to the
    change in normal gap / tangential slip at the contact.  normal points
    from the disk center toward the finger and has unit length.
    """

    finger: int
    phi: float
    normal: np.ndarray
    j_n: np.ndarray
    j_t: np.ndarray


def contact_set(state: SystemState, task: TaskDescription, d_max: float) -> list[ContactPoint]:
    """All finger-disk pairs with phi <= d_max.

    Pairs beyond d_max exert no force in either stepper.  A finger exactly
    at the disk center has no defined normal; that configuration cannot be
    produced by the steppers, but we keep the function total by picking +x.
    """
    p_obj = state.q_obj[:2]
    n = 3 + state.n_rbt
    contacts = []
    for i in range(task.n_fingers):
        p_f = state.q_rbt[2 * i: 2 * i + 2]
        d_vec = p_f - p_obj
        dist = float(np.hypot(d_vec[0], d_vec[1]))
        phi = dist - task.contact_radius
        if phi > d_max:
            continue
        if dist < 1e-12:
            normal = np.array([1.0, 0.0])
        else:
            normal = d_vec / dist
        tangent = np.array([-normal[1], normal[0]])
        j_n = np.zeros(n)
        j_n[0:2] = -normal
        # yaw entry is exactly zero: rotating a disk does not change the gap
        j_n[3 + 2 * i: 5 + 2 * i] = normal
        j_t = np.zeros(n)
        j_t[0:2] = -tangent
        j_t[2] = -task.disk_radius
        j_t[3 + 2 * i: 5 + 2 * i] = tangent
        contacts.append(ContactPoint(finger=i, phi=phi, normal=normal, j_n=j_n, j_t=j_t))
    return contacts


def min_phi(state: SystemState, task: TaskDescription) -> float:
    """Smallest finger-disk signed distance (ignoring the detection cutoff)."""
    p_obj = state.q_obj[:2]
    best = np.inf
    for i in range(task.n_fingers):
        p_f = state.q_rbt[2 * i: 2 * i + 2]
        dist = float(np.hypot(*(p_f - p_obj)))
        best = min(best, dist - task.contact_radius)
    return best


def finger_clearance(q_rbt: np.ndarray, task: TaskDescription) -> float:
    """Smallest center distance between any two fingers."""
    if task.n_fingers < 2:
        return np.inf
    best = np.inf
    for i in range(task.n_fingers):
        for j in range(i + 1, task.n_fingers):
            pi = np.asarray(q_rbt)[2 * i: 2 * i + 2]
            pj = np.asarray(q_rbt)[2 * j: 2 * j + 2]
            best = min(best, float(np.hypot(*(pi - pj))))
    return best
