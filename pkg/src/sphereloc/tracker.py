"""Partition-search scheduling for a target tracked across sphere tiles.

Two per-frame strategies over a pluggable per-partition detector:

- optimized: remembers the partition that last contained the target.
  A cold tracker scans partitions in ascending index; a warm one probes
  the remembered partition first and then the others in increasing
  angular distance from it.  Either way the scan stops at the first
  partition that yields detections.
- greedy: unconditionally scans every partition, collects every
  detection, and fuses them all.

The remembered partition survives frames where nothing is found (an
optional staleness horizon can clear it after a run of misses).  Frame
results report a modeled elapsed time, detector calls times a constant
per-call cost, so replays are reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .fiducial import BodyModel, BodyPoseEstimate, Detection, fuse_body_pose
from .partition import PartitionLayout

DEFAULT_MS_PER_CALL = 10.0


def precompute_neighbor_order(layout: PartitionLayout) -> np.ndarray:
    """Row i = all partition indices by distance from center i.

    Self first (distance zero), remaining ties broken by ascending
    index, so the table is a deterministic function of the layout.
    """
    n = layout.n
    order = np.empty((n, n), dtype=int)
    for i in range(n):
        d = geo.angular_distance(layout.centers[i], layout.centers)
        row = np.lexsort((np.arange(n), d))
        if row[0] != i:  # duplicate-center tie: keep self first regardless
            self_pos = int(np.nonzero(row == i)[0][0])
            row = np.concatenate(([i], np.delete(row, self_pos)))
        order[i] = row
    return order


@dataclass
class TrackerState:
    """Per-target search state shared across frames (single writer)."""

    layout: PartitionLayout
    neighbor_order: np.ndarray
    model: BodyModel | None = None
    ms_per_call: float = DEFAULT_MS_PER_CALL
    staleness_horizon: int | None = None
    last_partition: int | None = None
    consecutive_misses: int = 0
    orientations: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.neighbor_order.shape != (self.layout.n, self.layout.n):
            raise ValueError("neighbor_order must be square in the layout size")
        if self.staleness_horizon is not None and self.staleness_horizon < 1:
            raise ValueError("staleness horizon must be at least 1 frame")
        if not self.orientations:
            self.orientations = [
                geo.rotation_aligning(c) for c in self.layout.centers
            ]


def make_tracker(
    layout: PartitionLayout,
    model: BodyModel | None = None,
    ms_per_call: float = DEFAULT_MS_PER_CALL,
    staleness_horizon: int | None = None,
) -> TrackerState:
    return TrackerState(
        layout=layout,
        neighbor_order=precompute_neighbor_order(layout),
        model=model,
        ms_per_call=ms_per_call,
        staleness_horizon=staleness_horizon,
    )


@dataclass(frozen=True)
class FrameResult:
    found: bool
    partition: int | None            # first partition that fired
    detections: list[Detection]
    fused: BodyPoseEstimate | None
    detector_calls: int
    elapsed_ms: float


def _call_detector(frame, index: int) -> list[Detection]:
    """One probe; a detector exception counts as a miss on that tile."""
    try:
        return list(frame(index) or [])
    except Exception:
        return []


def _fuse(state: TrackerState, detections: list[Detection]) -> BodyPoseEstimate | None:
    if state.model is None or not detections:
        return None
    views = [state.orientations[d.partition_index] for d in detections]
    return fuse_body_pose(detections, state.model, views)


def _check_budget(budget: int | None) -> None:
    if budget is not None and budget < 1:
        raise ValueError("per-frame budget must allow at least one call")


def step_optimized(state: TrackerState, frame, budget: int | None = None) -> FrameResult:
    """First-hit scan: last-seen partition first, then by distance.

    Cold (no remembered partition) scans ascending indices.  Stops at
    the first partition with detections; a full miss leaves the
    remembered partition in place so the next frame still starts there.
    """
    _check_budget(budget)
    if state.last_partition is None:
        order = range(state.layout.n)
    else:
        order = state.neighbor_order[state.last_partition]
    calls = 0
    hit: int | None = None
    detections: list[Detection] = []
    for index in order:
        if budget is not None and calls >= budget:
            break
        calls += 1
        detections = _call_detector(frame, int(index))
        if detections:
            hit = int(index)
            break
    if hit is not None:
        state.last_partition = hit
        state.consecutive_misses = 0
    else:
        detections = []
        state.consecutive_misses += 1
        if (
            state.staleness_horizon is not None
            and state.consecutive_misses >= state.staleness_horizon
        ):
            state.last_partition = None
            state.consecutive_misses = 0
    return FrameResult(
        found=hit is not None,
        partition=hit,
        detections=detections,
        fused=_fuse(state, detections),
        detector_calls=calls,
        elapsed_ms=calls * state.ms_per_call,
    )


def step_greedy(state: TrackerState, frame, budget: int | None = None) -> FrameResult:
    """Exhaustive scan: every partition probed, all detections fused.

    Ignores and never updates the remembered partition; a budget simply
    truncates the ascending scan.
    """
    _check_budget(budget)
    calls = 0
    first_hit: int | None = None
    detections: list[Detection] = []
    for index in range(state.layout.n):
        if budget is not None and calls >= budget:
            break
        calls += 1
        found_here = _call_detector(frame, index)
        if found_here and first_hit is None:
            first_hit = index
        detections.extend(found_here)
    return FrameResult(
        found=bool(detections),
        partition=first_hit,
        detections=detections,
        fused=_fuse(state, detections),
        detector_calls=calls,
        elapsed_ms=calls * state.ms_per_call,
    )
