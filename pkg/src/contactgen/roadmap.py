"""Precomputed yaw-rotation roadmap over canonical disk headings.

Eight canonical yaws (multiples of 45 degrees in (-180, 180]) form a cycle
graph whose directed edges each carry a validated action sequence rotating
the disk 45 degrees in place.  The graph is built once and reused for every
query; a query connects the start heading to the nearest canonical yaw,
walks Dijkstra-shortest edges to the canonical yaw nearest the requested
goal heading, and finishes with an adjustment segment of at most 22.5
degrees.  Because the disk is rotationally symmetric, node grasps and edge
action sequences are position-free: they are stored relative to the object
center and re-aimed rigidly to wherever the object actually sits.

The primitives assume finger clearance all around the disk, so queries are
reliable where the re-aimed grasps fit the joint box; a start pressed
against a workspace wall may leave no room for the precomputed fingers.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .core import (DynamicsParams, SystemState, TaskDescription, ang_diff,
                   weighted_distance, wrap_angle)
from .dynamics import step_smoothed
from .planners import (GraspSampleError, Plan, PlannerConfig, PlanStep,
                       Regrasp, sample_grasp)
from .steering import steer

N_CANONICAL = 8
YAW_STEP = np.pi / 4.0
# per-edge synthesis and replay budget; a 45 degree rotation needs a few
# dozen steering hops, so the cap only catches genuinely stuck grasps
EDGE_STEP_CAP = 400
# edges are synthesized tighter than the query tolerance so that drift
# accumulated across a multi-edge path still lands inside it
EDGE_TOL = 0.01
GRASP_TRIES = 50
QUERY_TOL = PlannerConfig().goal_tol

EDGE_PLUS = "YawPlus45"
EDGE_MINUS = "YawMinus45"


class RoadmapBuildError(RuntimeError):
    """A primitive edge could not be synthesized or validated."""


def canonical_yaws() -> np.ndarray:
    """Ascending multiples of 45 degrees in (-180, 180]."""
    return (np.arange(N_CANONICAL) - 3) * YAW_STEP


def nearest_canonical(yaw: float) -> int:
    """Index of the canonical yaw closest to yaw; ties take the lower index."""
    yaws = canonical_yaws()
    return int(np.argmin(np.abs([ang_diff(yaw, y) for y in yaws])))


@dataclass(frozen=True)
class RoadmapEdge:
    source: int
    target: int
    label: str
    actions: list          # fingertip commands relative to the object center
    cost: float = 1.0


@dataclass
class PrimitiveGraph:
    yaws: np.ndarray
    grasps: list           # per-node fingertip configs relative to the center
    edges: dict            # (source index, target index) -> RoadmapEdge
    params: DynamicsParams
    seed: int
    center: np.ndarray     # nominal object position the edges were built at

    def out_edges(self, node: int):
        plus = (node, (node + 1) % N_CANONICAL)
        minus = (node, (node - 1) % N_CANONICAL)
        return [self.edges[k] for k in (plus, minus) if k in self.edges]

    def node_state(self, node: int, task: TaskDescription) -> SystemState:
        q_obj = np.array([self.center[0], self.center[1], self.yaws[node]])
        return SystemState(q_obj=q_obj, q_rbt=self._aim(self.grasps[node],
                                                        self.center, task))

    @staticmethod
    def _aim(rel, center, task: TaskDescription) -> np.ndarray:
        q = rel + np.tile(center, task.n_fingers)
        return np.clip(q, task.q_rbt_lb, task.q_rbt_ub)

    def shortest_path(self, source: int, target: int) -> list:
        """Dijkstra node sequence; cost ties take the lexicographically
        smallest sequence of node indices."""
        heap = [(0.0, (source,))]
        settled = set()
        while heap:
            cost, path = heapq.heappop(heap)
            node = path[-1]
            if node in settled:
                continue
            settled.add(node)
            if node == target:
                return list(path)
            for edge in self.out_edges(node):
                if edge.target not in settled:
                    heapq.heappush(heap, (cost + edge.cost,
                                          path + (edge.target,)))
        raise RoadmapBuildError("graph is not connected")


def _synthesize_edge(state: SystemState, yaw_target: float, center,
                     params: DynamicsParams, task: TaskDescription):
    """Iterated steering from a node state to the neighboring yaw, holding
    position.  Returns the absolute action list or None if the grasp stalls
    or the budget runs out."""
    target = np.array([center[0], center[1], yaw_target])
    actions = []
    for _ in range(EDGE_STEP_CAP):
        new_state, action = steer(state, target, params, task)
        if np.abs(action - state.q_rbt).max() < 1e-12:
            return None
        actions.append(action)
        state = new_state
        if weighted_distance(state.q_obj, target) <= EDGE_TOL:
            return actions
    return None


def _validate_edge(graph: PrimitiveGraph, edge: RoadmapEdge,
                   task: TaskDescription) -> bool:
    """Re-simulate the stored sequence from the exact source node state."""
    state = graph.node_state(edge.source, task)
    offset = np.tile(graph.center, task.n_fingers)
    target = np.array([graph.center[0], graph.center[1],
                       graph.yaws[edge.target]])
    for rel in edge.actions:
        state = step_smoothed(state, rel + offset, graph.params, task)
    return weighted_distance(state.q_obj, target) <= EDGE_TOL


def build_primitive_graph(task: TaskDescription, params: DynamicsParams,
                          rng_seed: int) -> PrimitiveGraph:
    """Fix one seeded grasp per canonical yaw and synthesize both 45 degree
    rotation primitives from it, validating each by re-simulation."""
    rng = np.random.default_rng(rng_seed)
    yaws = canonical_yaws()
    center = np.asarray(task.goal[:2], dtype=float)
    offset = np.tile(center, task.n_fingers)
    graph = PrimitiveGraph(yaws=yaws, grasps=[None] * N_CANONICAL, edges={},
                           params=params, seed=rng_seed, center=center.copy())
    for i in range(N_CANONICAL):
        node_pose = np.array([center[0], center[1], yaws[i]])
        plus_j = (i + 1) % N_CANONICAL
        minus_j = (i - 1) % N_CANONICAL
        failed = EDGE_PLUS
        for _ in range(GRASP_TRIES):
            try:
                q_rbt = sample_grasp(node_pose, task, rng)
            except GraspSampleError:
                continue
            state = SystemState(q_obj=node_pose.copy(), q_rbt=q_rbt)
            failed = EDGE_PLUS
            plus = _synthesize_edge(state, yaws[i] + YAW_STEP, center,
                                    params, task)
            if plus is None:
                continue
            failed = EDGE_MINUS
            minus = _synthesize_edge(state, yaws[i] - YAW_STEP, center,
                                     params, task)
            if minus is None:
                continue
            graph.grasps[i] = q_rbt - offset
            graph.edges[(i, plus_j)] = RoadmapEdge(
                i, plus_j, EDGE_PLUS, [a - offset for a in plus])
            graph.edges[(i, minus_j)] = RoadmapEdge(
                i, minus_j, EDGE_MINUS, [a - offset for a in minus])
            break
        else:
            raise RoadmapBuildError(
                f"edge {failed} from canonical yaw "
                f"{np.degrees(yaws[i]):.0f} deg: no grasp drives it within "
                f"{EDGE_STEP_CAP} actions after {GRASP_TRIES} draws")
    for edge in graph.edges.values():
        if not _validate_edge(graph, edge, task):
            raise RoadmapBuildError(
                f"edge {edge.label} from canonical yaw "
                f"{np.degrees(yaws[edge.source]):.0f} deg failed replay "
                f"validation")
    return graph


def _drive(state: SystemState, target, grasp_abs, params, task, items,
           tol: float) -> SystemState:
    """One steered contact segment toward target; skipped entirely when the
    state already satisfies it."""
    if weighted_distance(state.q_obj, target) <= tol:
        return state
    if np.abs(grasp_abs - state.q_rbt).max() > 0.0:
        items.append(Regrasp(grasp_abs.copy()))
        state = SystemState(q_obj=state.q_obj.copy(), q_rbt=grasp_abs.copy())
    for _ in range(EDGE_STEP_CAP):
        new_state, action = steer(state, target, params, task)
        items.append(PlanStep(state, action))
        state = new_state
        if weighted_distance(state.q_obj, target) <= tol:
            break
        if np.abs(action - state.q_rbt).max() < 1e-12:
            break
    return state


def _replay_edge(state: SystemState, edge: RoadmapEdge,
                 graph: PrimitiveGraph, task: TaskDescription,
                 items: list) -> SystemState:
    """Execute a stored primitive re-aimed rigidly to the current center."""
    center = state.q_obj[:2]
    grasp = graph._aim(graph.grasps[edge.source], center, task)
    items.append(Regrasp(grasp.copy()))
    state = SystemState(q_obj=state.q_obj.copy(), q_rbt=grasp)
    offset = np.tile(center, task.n_fingers)
    for rel in edge.actions:
        action = np.clip(rel + offset, task.q_rbt_lb, task.q_rbt_ub)
        items.append(PlanStep(state, action))
        state = step_smoothed(state, action, graph.params, task)
    return state


def primitive_plan(start: SystemState, goal_yaw: float,
                   graph: PrimitiveGraph, task: TaskDescription) -> Plan:
    """Rotate the disk from its current heading to goal_yaw in place.

    Connects to the nearest canonical yaw, replays Dijkstra-shortest
    precomputed primitives, then steers the final gap (at most 22.5
    degrees).  The object is meant to stay where it started; the goal pose
    keeps the start position.
    """
    goal_yaw = wrap_angle(goal_yaw)
    goal = np.array([start.q_obj[0], start.q_obj[1], goal_yaw])
    items: list = []
    state = start
    i0 = nearest_canonical(start.q_obj[2])
    ig = nearest_canonical(goal_yaw)
    connect = np.array([start.q_obj[0], start.q_obj[1], graph.yaws[i0]])
    state = _drive(state, connect,
                   graph._aim(graph.grasps[i0], state.q_obj[:2], task),
                   graph.params, task, items, EDGE_TOL)
    path = graph.shortest_path(i0, ig)
    for u, v in zip(path, path[1:]):
        state = _replay_edge(state, graph.edges[(u, v)], graph, task, items)
    state = _drive(state, goal,
                   graph._aim(graph.grasps[ig], state.q_obj[:2], task),
                   graph.params, task, items, QUERY_TOL)
    success = weighted_distance(state.q_obj, goal) <= QUERY_TOL
    return Plan(start=start, goal=goal, items=items, success=success,
                planner="primitive", seed=graph.seed, final_state=state)
