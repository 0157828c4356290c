"""Demonstration-quality audit: direction entropy, progress, regrasps.

Velocity direction entropy buckets object motion by grid cell and scores
how spread out the movement directions are inside each cell; progress
histograms score per-contact-segment advance toward the goal; regrasp
entropy scores when in normalized time regrasps happen. All three are pure
functions of the demonstrations and the config, and the combined report
echoes the config plus the hashes of the dataset files it was computed
from.

Grid cells are anchored at the origin (index = floor(position / cell)), so
maps from different datasets align cell-for-cell and can be differenced.
Cells nobody visited carry no value at all rather than a zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import is_success, weighted_distance, wrap_angle
from .rollout import Demonstration

__all__ = [
    "MetricsConfig", "VelocityEntropy", "ProgressHistogram",
    "RegraspEntropy", "EntropyReport", "shannon_entropy",
    "velocity_entropy", "progress_histogram", "regrasp_entropy",
    "build_report", "is_success", "weighted_distance",
]

ANGULAR_CLASSES = 3          # ccw / cw / none
MIN_DISPLACEMENT = 1e-4      # below this, linear direction is undefined
PROGRESS_BIN = 0.05


@dataclass(frozen=True)
class MetricsConfig:
    cell: float = 0.05
    B_lin: int = 16
    omega_eps: float = 0.01
    intervals: int = 25
    h_a: int = 60

    def __post_init__(self):
        if self.cell <= 0:
            raise ValueError("cell must be positive")
        if self.B_lin < 2:
            raise ValueError("need at least 2 direction bins")
        if self.intervals < 1 or self.h_a < 1:
            raise ValueError("intervals and h_a must be >= 1")

    def to_dict(self) -> dict:
        return {"cell": self.cell, "B_lin": self.B_lin,
                "omega_eps": self.omega_eps, "intervals": self.intervals,
                "h_a": self.h_a}


def shannon_entropy(counts: Sequence[int], B: int) -> float:
    """Entropy of a count vector, normalized to [0, 1] by log base B."""
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise ValueError("need at least one sample")
    if B < 2:
        raise ValueError("base must be >= 2")
    p = c[c > 0] / total
    # fsum keeps the result independent of bin order
    return -math.fsum(p * np.log(p)) / math.log(B)


@dataclass(frozen=True)
class VelocityEntropy:
    """Per-cell direction entropies; maps are keyed by (ix, iy)."""

    linear: dict
    angular: dict
    occupancy: dict
    linear_counts: dict
    skipped: int
    mean_linear: float
    mean_angular: float


@dataclass(frozen=True)
class ProgressHistogram:
    samples: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def n_segments(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class RegraspEntropy:
    p: np.ndarray
    entropy: np.ndarray
    mean: float


def _cell_of(pos, cell: float) -> tuple[int, int]:
    return (int(math.floor(pos[0] / cell)), int(math.floor(pos[1] / cell)))


def velocity_entropy(demos: Sequence[Demonstration],
                     cfg: MetricsConfig) -> VelocityEntropy:
    """Direction entropy of object motion, bucketed by grid cell.

    Each sample differences the object pose h_a steps apart and lands in
    the cell containing the position at the window start. The linear
    direction goes to one of B_lin equal sectors; displacements under
    0.1 mm are skipped (and counted) since their direction is noise. Yaw
    change classifies as ccw / cw / none with a dead band of omega_eps.
    """
    if not demos:
        raise ValueError("need at least one demonstration")
    if len({d.step_s for d in demos}) != 1:
        raise ValueError("demonstrations must share a step duration")
    lin: dict[tuple, np.ndarray] = {}
    ang: dict[tuple, np.ndarray] = {}
    skipped = 0
    sector = 2.0 * np.pi / cfg.B_lin
    for demo in demos:
        for t in range(len(demo) - cfg.h_a):
            a = demo.states[t].q_obj
            b = demo.states[t + cfg.h_a].q_obj
            key = _cell_of(a[:2], cfg.cell)
            dth = wrap_angle(b[2] - a[2])
            kls = 2 if abs(dth) <= cfg.omega_eps else (0 if dth > 0 else 1)
            ang.setdefault(key, np.zeros(ANGULAR_CLASSES, dtype=int))[kls] += 1
            dp = b[:2] - a[:2]
            norm = float(np.hypot(dp[0], dp[1]))
            if norm < MIN_DISPLACEMENT:
                skipped += 1
                continue
            sec = int((np.arctan2(dp[1], dp[0]) + np.pi) / sector)
            sec = min(sec, cfg.B_lin - 1)
            lin.setdefault(key, np.zeros(cfg.B_lin, dtype=int))[sec] += 1
    linear = {k: shannon_entropy(v, cfg.B_lin) for k, v in lin.items()}
    angular = {k: shannon_entropy(v, ANGULAR_CLASSES) for k, v in ang.items()}
    occupancy = {k: int(v.sum()) for k, v in ang.items()}
    lin_counts = {k: int(v.sum()) for k, v in lin.items()}
    mean_linear = _weighted_mean(linear, lin_counts)
    mean_angular = _weighted_mean(angular, occupancy)
    return VelocityEntropy(linear=linear, angular=angular,
                           occupancy=occupancy, linear_counts=lin_counts,
                           skipped=skipped, mean_linear=mean_linear,
                           mean_angular=mean_angular)


def _weighted_mean(values: dict, weights: dict) -> float:
    total = sum(weights.get(k, 0) for k in values)
    if total == 0:
        return float("nan")
    return sum(values[k] * weights.get(k, 0) for k in values) / total


def _segment_bounds(demo: Demonstration) -> list[tuple[int, int]]:
    # regrasp_indices mark where a regrasp motion begins; segments tile the
    # demo between them so per-demo progress telescopes exactly
    last = len(demo) - 1
    cuts = sorted({0, last, *(r for r in demo.regrasp_indices
                              if 0 < r < last)})
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:])]


def progress_histogram(demos: Sequence[Demonstration],
                       cfg: MetricsConfig) -> ProgressHistogram:
    """Signed goal progress per contact segment, binned at 0.05 D-units.

    Progress of a segment is D(start) - D(end) against the demo's own
    goal, positive when the segment moved the object closer.
    """
    samples = []
    for demo in demos:
        goal = np.asarray(demo.goal)
        for a, b in _segment_bounds(demo):
            da = weighted_distance(demo.states[a].q_obj, goal)
            db = weighted_distance(demo.states[b].q_obj, goal)
            samples.append(da - db)
    samples = np.asarray(samples)
    if samples.size:
        lo = math.floor(samples.min() / PROGRESS_BIN) * PROGRESS_BIN
        hi = math.ceil(samples.max() / PROGRESS_BIN) * PROGRESS_BIN
        hi = max(hi, lo + PROGRESS_BIN)
        edges = np.arange(lo, hi + 0.5 * PROGRESS_BIN, PROGRESS_BIN)
    else:
        edges = np.array([0.0, PROGRESS_BIN])
    counts, edges = np.histogram(samples, bins=edges)
    return ProgressHistogram(samples=samples, bin_edges=edges, counts=counts)


def regrasp_entropy(demos: Sequence[Demonstration],
                    cfg: MetricsConfig) -> RegraspEntropy:
    """Bernoulli entropy of "a regrasp happened here" per time interval.

    Completion time normalizes to [0, 1] per demo; an interval scores the
    fraction of demos with at least one regrasp inside it.
    """
    if not demos:
        raise ValueError("need at least one demonstration")
    hits = np.zeros(cfg.intervals, dtype=int)
    for demo in demos:
        span = max(len(demo) - 1, 1)
        idxs = {min(int(r / span * cfg.intervals), cfg.intervals - 1)
                for r in demo.regrasp_indices}
        for i in idxs:
            hits[i] += 1
    n = len(demos)
    p = hits / n
    ent = np.array([shannon_entropy([k, n - k], 2) for k in hits])
    return RegraspEntropy(p=p, entropy=ent, mean=float(ent.mean()))


@dataclass(frozen=True)
class EntropyReport:
    """Full audit of one dataset, JSON-serializable via to_dict."""

    config: MetricsConfig
    velocity: VelocityEntropy
    progress: ProgressHistogram
    regrasp: RegraspEntropy
    n_demos: int
    digests: tuple = ()

    def to_dict(self) -> dict:
        def cellmap(m, cast):
            return {f"{k[0]},{k[1]}": cast(v) for k, v in sorted(m.items())}
        return {
            "config": self.config.to_dict(),
            "n_demos": self.n_demos,
            "digests": list(self.digests),
            "velocity": {
                "linear": cellmap(self.velocity.linear, float),
                "angular": cellmap(self.velocity.angular, float),
                "occupancy": cellmap(self.velocity.occupancy, int),
                "linear_counts": cellmap(self.velocity.linear_counts, int),
                "skipped": self.velocity.skipped,
                "mean_linear": self.velocity.mean_linear,
                "mean_angular": self.velocity.mean_angular,
            },
            "progress": {
                "samples": [float(x) for x in self.progress.samples],
                "bin_edges": [float(x) for x in self.progress.bin_edges],
                "counts": [int(x) for x in self.progress.counts],
            },
            "regrasp": {
                "p": [float(x) for x in self.regrasp.p],
                "entropy": [float(x) for x in self.regrasp.entropy],
                "mean": self.regrasp.mean,
            },
        }


def build_report(demos: Sequence[Demonstration], cfg: MetricsConfig,
                 digests: Sequence[str] = ()) -> EntropyReport:
    return EntropyReport(config=cfg,
                         velocity=velocity_entropy(demos, cfg),
                         progress=progress_histogram(demos, cfg),
                         regrasp=regrasp_entropy(demos, cfg),
                         n_demos=len(demos),
                         digests=tuple(digests))
