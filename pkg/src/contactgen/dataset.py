"""Demonstration storage and hindsight-goal relabeling.

Two binary file kinds, both little-endian with a JSON header:

  demo file   magic ``CGDM``, u32 header length, header JSON, then per demo:
              u32 T, u32 n_regrasp, u32 chunk_index, u32 plan_id length,
              plan_id utf-8, f64 goal[3], f64 step_s, u32 indices[n_regrasp],
              f64 states[T x (3 + n_rbt)], f64 actions[(T - 1) x n_rbt].
  tuple file  magic ``CGTP``, u32 header length, header JSON, then per tuple:
              f64 obs[(h_o + 1) x (4 + n_rbt)], f64 actions[h_a x n_rbt],
              f64 goal[4].

Headers carry the schema version, task and dynamics hashes, planner id, and
seed, so a file is self-describing and refuses to load against the wrong
task. States are stored raw ([x, y, theta, fingers]); the learner-facing
featurization maps each pose to [x, y, sin theta, cos theta] to avoid the
angle seam, and goals are stored in that encoded form.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import SystemState, canonical_hash
from .rollout import Demonstration

SCHEMA_VERSION = 1
PLANNER_IDS = ("rrt", "greedy", "primitive")

_MAGIC_DEMO = b"CGDM"
_MAGIC_TUPLE = b"CGTP"


class DatasetError(RuntimeError):
    pass


class VersionError(DatasetError):
    """File magic or schema version does not match this reader."""


class TruncationError(DatasetError):
    """File ends early or carries trailing bytes; nothing is returned."""


class TaskHashError(DatasetError):
    """File was written for a different task definition."""


@dataclass(frozen=True)
class DatasetConfig:
    """Relabeling shape: observation history, action horizon, h_g rule."""

    h_o: int = 3
    h_a: int = 60
    rule: str = "uniform"
    k: int = 4

    def __post_init__(self):
        if self.h_o < 1 or self.h_a < 1 or self.k < 1:
            raise ValueError("h_o, h_a, and k must all be >= 1")
        if self.rule not in ("all", "uniform"):
            raise ValueError(f"unknown h_g rule {self.rule!r}")

    def to_dict(self) -> dict:
        return {"h_o": self.h_o, "h_a": self.h_a, "rule": self.rule,
                "k": self.k}


@dataclass(frozen=True)
class RelabeledTuple:
    """One training example: history, action chunk, hindsight goal."""

    obs: np.ndarray        # (h_o + 1, 4 + n_rbt) encoded states
    actions: np.ndarray    # (h_a, n_rbt)
    goal: np.ndarray       # (4,) encoded object pose


def encode_pose(q_obj: np.ndarray) -> np.ndarray:
    """Map [x, y, theta] to the seam-free [x, y, sin, cos] form."""
    return np.array([q_obj[0], q_obj[1],
                     np.sin(q_obj[2]), np.cos(q_obj[2])])


def decode_pose(enc: np.ndarray) -> np.ndarray:
    return np.array([enc[0], enc[1], np.arctan2(enc[2], enc[3])])


def encode_state(state: SystemState) -> np.ndarray:
    return np.concatenate([encode_pose(state.q_obj), state.q_rbt])


def relabel(demo: Demonstration, cfg: DatasetConfig,
            rng=None) -> list[RelabeledTuple]:
    """Emit hindsight-relabeled tuples from one demonstration.

    Anchors run over t in [h_o, T - h_a - 1]; for each, the goal offset h_g
    spans [1, T - (t + h_a)] and the goal is the object pose of the state
    reached h_g steps past the action horizon, copied verbatim. rule="all"
    enumerates every offset; rule="uniform" draws cfg.k of them with
    replacement. Demos shorter than h_o + h_a + 1 states yield nothing.
    """
    T = len(demo)
    if T < cfg.h_o + cfg.h_a + 1:
        return []
    if cfg.rule == "uniform" and rng is None:
        raise ValueError("uniform h_g rule needs an rng")
    enc = np.stack([encode_state(s) for s in demo.states])
    acts = np.stack(demo.actions)
    out = []
    for t in range(cfg.h_o, T - cfg.h_a):
        hg_max = T - (t + cfg.h_a)
        if cfg.rule == "all":
            offsets = range(1, hg_max + 1)
        else:
            offsets = rng.integers(1, hg_max + 1, size=cfg.k)
        obs = enc[t - cfg.h_o:t + 1].copy()
        action = acts[t:t + cfg.h_a].copy()
        for h_g in offsets:
            idx = t + cfg.h_a + int(h_g) - 1
            assert cfg.h_o <= t and idx < T  # tuples never leave the chunk
            goal = encode_pose(demo.states[idx].q_obj)
            out.append(RelabeledTuple(obs=obs, actions=action, goal=goal))
    return out


def all_tuple_count(T: int, cfg: DatasetConfig) -> int:
    """Closed form for the rule="all" tuple count of a T-state demo."""
    n = T - cfg.h_a - cfg.h_o
    return n * (n + 1) // 2 if n > 0 else 0


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _u32(x: int) -> bytes:
    return struct.pack("<I", x)


class _Cursor:
    """Offset reader over a byte string that fails closed on shortfall."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError("file ends mid-record")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").copy()

    def done(self):
        if self.pos != len(self.data):
            raise TruncationError("trailing bytes after the last record")


def _open_header(data: bytes, magic: bytes) -> tuple[_Cursor, dict]:
    cur = _Cursor(data)
    if cur.take(4) != magic:
        raise VersionError(f"not a {magic.decode()} file")
    header = json.loads(cur.take(cur.u32()).decode())
    if header.get("schema") != SCHEMA_VERSION:
        raise VersionError(f"schema {header.get('schema')}, "
                           f"reader supports {SCHEMA_VERSION}")
    return cur, header


def _check_task(header: dict, expect_task) -> None:
    if expect_task is None:
        return
    want = canonical_hash(expect_task.to_dict())
    if header["task"] != want:
        raise TaskHashError(f"file task {header['task']}, expected {want}")


def _header_bytes(header: dict) -> bytes:
    blob = json.dumps(header, sort_keys=True).encode()
    return _u32(len(blob)) + blob


def write_demos(demos: Sequence[Demonstration], path, *, task, params,
                planner: str, seed: int) -> str:
    """Serialize demonstrations; returns the file's sha256 hex digest."""
    if planner not in PLANNER_IDS:
        raise ValueError(f"planner id must be one of {PLANNER_IDS}")
    n_rbt = task.n_rbt
    header = {
        "schema": SCHEMA_VERSION,
        "task": canonical_hash(task.to_dict()),
        "params": canonical_hash(params.to_dict()),
        "planner": planner,
        "seed": int(seed),
        "n_rbt": n_rbt,
        "n_demos": len(demos),
    }
    parts = [_MAGIC_DEMO, _header_bytes(header)]
    for demo in demos:
        T = len(demo)
        states = np.stack([s.q for s in demo.states])
        if states.shape[1] != 3 + n_rbt:
            raise ValueError("demo robot dimension does not match the task")
        pid = demo.plan_id.encode()
        parts.append(_u32(T) + _u32(len(demo.regrasp_indices))
                     + _u32(demo.chunk_index) + _u32(len(pid)) + pid)
        parts.append(np.asarray(demo.goal, dtype="<f8").tobytes())
        parts.append(struct.pack("<d", demo.step_s))
        parts.append(np.asarray(demo.regrasp_indices,
                                dtype="<u4").tobytes())
        parts.append(states.astype("<f8").tobytes())
        if T > 1:
            parts.append(np.stack(demo.actions).astype("<f8").tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as f:
        f.write(blob)
    return hashlib.sha256(blob).hexdigest()


def read_demos(path, *, expect_task=None) -> tuple[list[Demonstration], dict]:
    """Parse a demo file; fails closed on any structural damage."""
    with open(path, "rb") as f:
        data = f.read()
    cur, header = _open_header(data, _MAGIC_DEMO)
    _check_task(header, expect_task)
    n_rbt = header["n_rbt"]
    demos = []
    for _ in range(header["n_demos"]):
        T = cur.u32()
        n_rg = cur.u32()
        chunk_index = cur.u32()
        plan_id = cur.take(cur.u32()).decode()
        goal = tuple(cur.f64s(3))
        step_s = struct.unpack("<d", cur.take(8))[0]
        indices = np.frombuffer(cur.take(4 * n_rg), dtype="<u4")
        states = cur.f64s(T * (3 + n_rbt)).reshape(T, 3 + n_rbt)
        actions = cur.f64s((T - 1) * n_rbt).reshape(T - 1, n_rbt)
        demos.append(Demonstration(
            states=[SystemState(q_obj=row[:3], q_rbt=row[3:])
                    for row in states],
            actions=[row for row in actions],
            step_s=step_s,
            regrasp_indices=[int(i) for i in indices],
            plan_id=plan_id,
            chunk_index=chunk_index,
            goal=goal,
        ))
    cur.done()
    return demos, header


def write_tuples(tuples: Sequence[RelabeledTuple], path, *, task, params,
                 planner: str, seed: int, cfg: DatasetConfig,
                 source: Optional[str] = None) -> str:
    """Serialize relabeled tuples; returns the file's sha256 hex digest.

    source, when given, is the digest of the demo file the tuples came
    from, kept in the header for provenance.
    """
    if planner not in PLANNER_IDS:
        raise ValueError(f"planner id must be one of {PLANNER_IDS}")
    n_rbt = task.n_rbt
    header = {
        "schema": SCHEMA_VERSION,
        "task": canonical_hash(task.to_dict()),
        "params": canonical_hash(params.to_dict()),
        "planner": planner,
        "seed": int(seed),
        "n_rbt": n_rbt,
        "n_tuples": len(tuples),
        "config": cfg.to_dict(),
        "source": source,
    }
    obs_shape = (cfg.h_o + 1, 4 + n_rbt)
    act_shape = (cfg.h_a, n_rbt)
    parts = [_MAGIC_TUPLE, _header_bytes(header)]
    for tup in tuples:
        if tup.obs.shape != obs_shape or tup.actions.shape != act_shape:
            raise ValueError("tuple shape does not match the config")
        parts.append(tup.obs.astype("<f8").tobytes())
        parts.append(tup.actions.astype("<f8").tobytes())
        parts.append(np.asarray(tup.goal, dtype="<f8").tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as f:
        f.write(blob)
    return hashlib.sha256(blob).hexdigest()


def read_tuples(path, *, expect_task=None) -> tuple[list[RelabeledTuple],
                                                    dict]:
    with open(path, "rb") as f:
        data = f.read()
    cur, header = _open_header(data, _MAGIC_TUPLE)
    _check_task(header, expect_task)
    n_rbt = header["n_rbt"]
    h_o = header["config"]["h_o"]
    h_a = header["config"]["h_a"]
    out = []
    for _ in range(header["n_tuples"]):
        obs = cur.f64s((h_o + 1) * (4 + n_rbt)).reshape(h_o + 1, 4 + n_rbt)
        actions = cur.f64s(h_a * n_rbt).reshape(h_a, n_rbt)
        goal = cur.f64s(4)
        out.append(RelabeledTuple(obs=obs, actions=actions, goal=goal))
    cur.done()
    return out, header
