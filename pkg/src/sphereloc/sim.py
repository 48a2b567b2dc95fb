"""Synthetic spherical scenes with a fiducial-faced target body.

The camera rig sits at the origin.  A rigid body whose faces carry
square fiducials moves along a scripted trajectory around it; frames
can be materialized two ways:

- rendered: a full equirectangular image, ray-cast per pixel against
  every front-facing marker plane (quiet zone included, nearest face
  wins), over a deterministic background gradient.  The pixel-center
  geometry is the exact inverse of the rectifier's sampling rules.
- geometric: no pixels at all — marker corners are projected into a
  hypothetical tile, gated by frustum/incidence/apparent-size rules,
  perturbed with corner noise, and pushed through the same homography
  pose math the image detector uses.  This runs orders of magnitude
  faster and is the backbone for search-strategy experiments.

Experiments replay a feed through the partition trackers and produce
per-frame rows plus a summary; all randomness is drawn from
per-(seed, frame, face) streams, so results are byte-identical across
runs and across probe orders.
"""

from __future__ import annotations

import json
import os
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import geometry as geo
from .fiducial import (
    BodyModel,
    Detection,
    FiducialError,
    GRID,
    MarkerSpec,
    Pose,
    detect_markers,
    estimate_marker_pose,
    load_body_model,
    make_marker,
    marker_object_corners,
    save_body_model,
)
from .images import EquirectImage, write_image
from .partition import PartitionLayout
from .rectify import PinholeIntrinsics, rectify_partition
from . import tracker as trk

MIN_RANGE_M = 0.05
DEFAULT_BG = (110.0, 50.0)          # base luma + directional gradient gain
_BG_DIR = np.array([0.3, 0.5, 0.8]) / np.linalg.norm([0.3, 0.5, 0.8])
_bg_cache: dict = {}


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Scripted target path around the origin, evaluable at any t."""

    kind: str
    duration: float                 # seconds
    sample_rate: float              # frames per second
    params: dict

    def __post_init__(self):
        if self.kind not in ("circle", "lissajous", "waypoint-spline"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.duration < 0 or self.sample_rate <= 0:
            raise ValueError("need duration >= 0 and sample_rate > 0")
        ts = np.linspace(0.0, self.duration, 1001) if self.duration > 0 else np.zeros(1)
        ranges = np.linalg.norm(self.position(ts), axis=-1)
        if ranges.min() <= MIN_RANGE_M:
            raise ValueError(
                f"trajectory passes within {MIN_RANGE_M} m of the camera"
            )

    @classmethod
    def circle(
        cls,
        radius: float = 0.7,
        height: float = 0.05,
        rate_hz: float = 0.1,
        phase: float = 0.0,
        duration: float = 20.0,
        sample_rate: float = 10.0,
    ) -> "Trajectory":
        return cls(
            kind="circle",
            duration=duration,
            sample_rate=sample_rate,
            params={
                "radius": radius,
                "height": height,
                "rate_hz": rate_hz,
                "phase": phase,
            },
        )

    @classmethod
    def lissajous(
        cls,
        range_m: float = 0.7,
        range_amp: float = 0.1,
        lat_amp_deg: float = 25.0,
        lon_rate_hz: float = 0.05,
        lat_rate_hz: float = 0.085,
        range_rate_hz: float = 0.03,
        duration: float = 20.0,
        sample_rate: float = 10.0,
    ) -> "Trajectory":
        return cls(
            kind="lissajous",
            duration=duration,
            sample_rate=sample_rate,
            params={
                "range_m": range_m,
                "range_amp": range_amp,
                "lat_amp_deg": lat_amp_deg,
                "lon_rate_hz": lon_rate_hz,
                "lat_rate_hz": lat_rate_hz,
                "range_rate_hz": range_rate_hz,
            },
        )

    @classmethod
    def waypoints(
        cls, points, sample_rate: float = 10.0
    ) -> "Trajectory":
        """Cubic spline through (t, x, y, z) rows; duration = last t."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 4 or pts.shape[0] < 2:
            raise ValueError("waypoints need at least two (t, x, y, z) rows")
        if (np.diff(pts[:, 0]) <= 0).any():
            raise ValueError("waypoint times must be strictly increasing")
        if pts[0, 0] != 0.0:
            raise ValueError("first waypoint must be at t=0")
        return cls(
            kind="waypoint-spline",
            duration=float(pts[-1, 0]),
            sample_rate=sample_rate,
            params={"points": pts.tolist()},
        )

    def position(self, t) -> np.ndarray:
        """(…, 3) position in meters at time(s) t ∈ [0, duration]."""
        t = np.asarray(t, dtype=float)
        if (t < -1e-9).any() or (t > self.duration + 1e-9).any():
            raise ValueError("t outside [0, duration]")
        p = self.params
        if self.kind == "circle":
            ang = 2.0 * np.pi * p["rate_hz"] * t + p["phase"]
            return np.stack(
                [
                    p["radius"] * np.cos(ang),
                    p["radius"] * np.sin(ang),
                    np.full_like(t, p["height"]),
                ],
                axis=-1,
            )
        if self.kind == "lissajous":
            lat = np.radians(p["lat_amp_deg"]) * np.sin(
                2.0 * np.pi * p["lat_rate_hz"] * t
            )
            lon = 2.0 * np.pi * p["lon_rate_hz"] * t
            lon = np.mod(lon + np.pi, 2.0 * np.pi) - np.pi
            rng_m = p["range_m"] + p["range_amp"] * np.sin(
                2.0 * np.pi * p["range_rate_hz"] * t
            )
            return rng_m[..., np.newaxis] * geo.geo_to_dir(lat, lon)
        pts = np.asarray(p["points"])
        spline = CubicSpline(pts[:, 0], pts[:, 1:], axis=0)
        return spline(t)

    def times(self) -> np.ndarray:
        count = int(round(self.duration * self.sample_rate))
        return np.arange(count) / self.sample_rate


# ---------------------------------------------------------------------------
# Body and feed
# ---------------------------------------------------------------------------


def _face_rotation(normal: np.ndarray) -> np.ndarray:
    """Marker->body rotation with marker +Z along the face normal."""
    aligned = geo.rotation_aligning(np.asarray(normal, dtype=float))
    # columns of `aligned` are [forward, right, up]; the marker frame
    # wants [right, up, forward] so X spans the face, Z points out
    return aligned[:, [1, 2, 0]]


def default_body(face_offset: float = 0.12, name: str = "nine-face") -> BodyModel:
    """Nine outward faces: top, four upper-diagonal, four equatorial."""
    s = 1.0 / np.sqrt(2.0)
    normals = [
        (0.0, 0.0, 1.0),
        (s, 0.0, s), (0.0, s, s), (-s, 0.0, s), (0.0, -s, s),
        (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (-1.0, 0.0, 0.0), (0.0, -1.0, 0.0),
    ]
    ids = tuple(range(len(normals)))
    rotations = {}
    translations = {}
    for marker_id, normal in zip(ids, normals):
        n = np.asarray(normal)
        rotations[marker_id] = _face_rotation(n)
        translations[marker_id] = n * face_offset
    return BodyModel(
        name=name, marker_ids=ids, rotations=rotations, translations=translations
    )


@dataclass(frozen=True)
class Feed:
    """A deterministic frame source: trajectory + body + orientation."""

    trajectory: Trajectory
    body: BodyModel = field(default_factory=default_body)
    marker_side: float = 0.08       # meters, physical fiducial size
    orientation_mode: str = "aim"   # "aim" top face at camera, or "spin"
    spin_axis: tuple = (0.3, 0.5, 0.8)
    spin_rate_hz: float = 0.05
    src_h: int = 480                # equirectangular height; width = 2h

    def __post_init__(self):
        if self.orientation_mode not in ("aim", "spin"):
            raise ValueError("orientation_mode must be 'aim' or 'spin'")
        if self.src_h < 16 or self.marker_side <= 0:
            raise ValueError("bad feed dimensions")

    def marker_specs(self) -> dict[int, MarkerSpec]:
        return {m: make_marker(m, self.marker_side) for m in self.body.marker_ids}

    def frame_count(self) -> int:
        return len(self.trajectory.times())

    def pose_at(self, t: float) -> Pose:
        position = self.trajectory.position(t)
        if self.orientation_mode == "spin":
            axis = geo.normalize(np.asarray(self.spin_axis, dtype=float))
            rot = geo.rotation_about(axis, 2.0 * np.pi * self.spin_rate_hz * t)
        else:
            # minimal rotation taking the body +z (top face) to look
            # back at the camera
            target = -geo.normalize(position)
            z = np.array([0.0, 0.0, 1.0])
            c = float(np.clip(z @ target, -1.0, 1.0))
            if c > 1.0 - 1e-12:
                rot = np.eye(3)
            elif c < -1.0 + 1e-12:
                rot = geo.rotation_about([1.0, 0.0, 0.0], np.pi)
            else:
                rot = geo.rotation_about(np.cross(z, target), float(np.arccos(c)))
        return Pose(rotation=rot, translation=position)


@dataclass(frozen=True)
class SceneFrame:
    timestamp: float
    pose: Pose                      # body in the camera-rig frame
    image: EquirectImage | None
    face_visibility: dict[int, bool]


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _background(h: int, bg: tuple) -> np.ndarray:
    """(h, 2h) float gradient, cached — it only depends on direction."""
    key = (h, bg)
    if key not in _bg_cache:
        w = 2 * h
        i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        lat = np.pi / 2.0 - (i + 0.5) * np.pi / h
        lon = -np.pi + (j + 0.5) * 2.0 * np.pi / w
        d = geo.geo_to_dir(lat, lon)
        _bg_cache[key] = bg[0] + bg[1] * (d @ _BG_DIR)
    return _bg_cache[key]


def _face_poses(body: BodyModel, pose: Pose) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Marker->rig rotation and translation for every face."""
    out = {}
    for marker_id in body.marker_ids:
        rot = pose.rotation @ body.rotations[marker_id]
        t = pose.rotation @ body.translations[marker_id] + pose.translation
        out[marker_id] = (rot, t)
    return out


def render_frame(
    pose: Pose,
    body: BodyModel,
    markers: dict[int, MarkerSpec],
    src_h: int = 480,
    supersample: int = 2,
    bg: tuple = DEFAULT_BG,
) -> EquirectImage:
    """Ray-cast the body's marker faces into an equirectangular frame.

    Only pixels inside each face's angular bounding window are traced;
    the rest is the cached background gradient.  Within a window the
    face color is coverage-averaged over supersamples and composited
    front-to-back on a per-pixel-center depth test.
    """
    h, w = src_h, 2 * src_h
    img = _background(h, bg).copy()
    depth = np.full((h, w), np.inf)
    frac = (np.arange(supersample) + 0.5) / supersample - 0.5
    for marker_id, (rot, t) in _face_poses(body, pose).items():
        spec = markers[marker_id]
        half = spec.side_length / 2.0
        cell = spec.side_length / GRID
        rng_m = float(np.linalg.norm(t))
        if rng_m < MIN_RANGE_M:
            continue
        normal = rot[:, 2]
        if normal @ t >= 0:  # face points away from the camera
            continue
        # angular bounding window around the quiet-zone disc
        ext = (half + cell) * np.sqrt(2.0)
        rho = np.arctan2(ext, rng_m) + 2.5 * np.pi / h  # pad ~2.5 px
        lat0, lon0 = geo.dir_to_geo(t / rng_m)
        lat_hi = min(lat0 + rho, np.pi / 2)
        lat_lo = max(lat0 - rho, -np.pi / 2)
        r0 = max(int(np.floor((np.pi / 2 - lat_hi) * h / np.pi - 0.5)), 0)
        r1 = min(int(np.ceil((np.pi / 2 - lat_lo) * h / np.pi - 0.5)), h - 1)
        if r1 < r0:
            continue
        rows = np.arange(r0, r1 + 1)
        max_abs_lat = max(abs(lat_lo), abs(lat_hi))
        if max_abs_lat > np.pi / 2 - 2.0 * np.pi / h:
            cols = np.arange(w)  # pole in window: full wrap
        else:
            dlon = rho / np.cos(max_abs_lat)
            c0 = int(np.floor((lon0 - dlon + np.pi) * w / (2 * np.pi) - 0.5))
            c1 = int(np.ceil((lon0 + dlon + np.pi) * w / (2 * np.pi) - 0.5))
            cols = np.mod(np.arange(c0, c1 + 1), w)
        ii, jj = np.meshgrid(rows, cols, indexing="ij")
        acc = np.zeros(ii.shape)
        cover = np.zeros(ii.shape)
        center_depth = None
        offsets = [(di, dj) for di in frac for dj in frac]
        for di, dj in [(0.0, 0.0)] + offsets:
            lat = np.pi / 2.0 - (ii + 0.5 + di) * np.pi / h
            lon = -np.pi + (jj + 0.5 + dj) * 2.0 * np.pi / w
            d = geo.geo_to_dir(lat, lon)
            denom = d @ normal
            safe = np.where(np.abs(denom) < 1e-12, 1e-12, denom)
            s = (normal @ t) / safe
            hitp = s[..., np.newaxis] * d - t
            X = hitp @ rot[:, 0]
            Y = hitp @ rot[:, 1]
            front = s > MIN_RANGE_M
            quiet = front & (np.abs(X) <= half + cell) & (np.abs(Y) <= half + cell)
            if center_depth is None:
                center_depth = np.where(quiet, s, np.inf)
                continue  # pixel-center pass only sets depth
            inside = quiet & (np.abs(X) <= half) & (np.abs(Y) <= half)
            col = np.clip(np.floor((X + half) / cell).astype(int), 0, GRID - 1)
            row = np.clip(np.floor((half - Y) / cell).astype(int), 0, GRID - 1)
            shade = np.where(inside, spec.code_grid[row, col] * 255.0, 255.0)
            acc += np.where(quiet, shade, 0.0)
            cover += quiet
        total = supersample * supersample
        window_bg = img[ii, jj]
        blended = (acc + (total - cover) * window_bg) / total
        closer = (cover > 0) & (center_depth < depth[ii, jj])
        img[ii, jj] = np.where(closer, blended, window_bg)
        depth[ii, jj] = np.where(closer, center_depth, depth[ii, jj])
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return EquirectImage(pixels=np.repeat(pixels[:, :, np.newaxis], 3, axis=2))


def make_frame(feed: Feed, index: int, render: bool = False) -> SceneFrame:
    """Materialize frame `index`: pose, visibility flags, optional pixels."""
    t = float(feed.trajectory.times()[index])
    pose = feed.pose_at(t)
    visibility = {}
    for marker_id, (rot, tr) in _face_poses(feed.body, pose).items():
        rng_m = float(np.linalg.norm(tr))
        cos_inc = float(rot[:, 2] @ (-tr / rng_m))
        visibility[marker_id] = rng_m > MIN_RANGE_M and cos_inc > 0.0
    image = None
    if render:
        image = render_frame(pose, feed.body, feed.marker_specs(), feed.src_h)
    return SceneFrame(
        timestamp=t, pose=pose, image=image, face_visibility=visibility
    )


# ---------------------------------------------------------------------------
# Geometric detector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricDetectorModel:
    """Image-free detector stand-in: gates plus corner noise.

    Detection fires with probability `detection_prob` when the shortest
    projected edge sits exactly at `min_side_px`, rising linearly to
    certainty at twice that size — small apparent markers are flaky
    before they become undetectable.  The default probability of 1
    collapses the ramp to a hard size threshold.
    """

    min_side_px: float = 8.0        # smallest decodable apparent edge
    max_incidence_deg: float = 70.0
    detection_prob: float = 1.0     # fire probability at the size threshold
    sigma_px: float = 0.0           # corner noise
    border_margin_px: float = 2.0   # frustum margin for all four corners

    def __post_init__(self):
        if not 0.0 <= self.detection_prob <= 1.0:
            raise ValueError("detection probability must be in [0, 1]")
        if self.sigma_px < 0:
            raise ValueError("corner noise must be non-negative")

    def fire_probability(self, min_edge_px: float) -> float:
        if min_edge_px < self.min_side_px:
            return 0.0
        ramp = min(min_edge_px / self.min_side_px - 1.0, 1.0)
        return self.detection_prob + (1.0 - self.detection_prob) * ramp


def geometric_detect(
    pose: Pose,
    center: np.ndarray,
    fov_deg: float,
    side: int,
    model: GeometricDetectorModel,
    body: BodyModel,
    markers: dict[int, MarkerSpec],
    noise_key: int | Sequence[int] = 0,
    partition_index: int = 0,
) -> list[Detection]:
    """Project each face into the tile and apply the detection gates.

    A face is detectable when the bordered marker (payload plus quiet
    zone) falls inside the frustum with the configured margin, the
    incidence angle stays under the maximum, and the shortest projected
    edge reaches the minimum apparent size; corner noise then propagates
    into the returned pose through the standard homography estimate.

    Randomness is keyed by ``(*noise_key, marker_id)``: detection
    flicker and corner jitter belong to the viewed face, so probing the
    same face from two overlapping partitions sees the same draws (the
    overlap resamples the same physical corners), while distinct faces
    stay independent.  Keying by face also makes results independent of
    which partitions are probed and in what order.
    """
    if isinstance(noise_key, (int, np.integer)):
        noise_key = (int(noise_key),)
    view_rot = geo.rotation_aligning(np.asarray(center, dtype=float))
    intr = PinholeIntrinsics.for_view(fov_deg, side)
    cos_max = np.cos(np.radians(model.max_incidence_deg))
    lim_lo = -0.5 + model.border_margin_px
    lim_hi = side - 0.5 - model.border_margin_px
    detections = []
    for marker_id, (rot, t) in _face_poses(body, pose).items():
        spec = markers[marker_id]
        rot_c = view_rot.T @ rot
        t_c = view_rot.T @ t
        if t_c[0] < MIN_RANGE_M:
            continue
        rng_m = float(np.linalg.norm(t_c))
        if rot_c[:, 2] @ (-t_c / rng_m) < cos_max:
            continue
        pad = (GRID + 2) / GRID  # quiet zone must be in view
        obj = np.column_stack([marker_object_corners(spec.side_length), np.zeros(4)])
        cam = obj @ rot_c.T + t_c
        full = np.vstack([cam, obj * pad @ rot_c.T + t_c])
        if (full[:, 0] <= 1e-9).any():
            continue
        fu = intr.cx - intr.f * full[:, 1] / full[:, 0]
        fv = intr.cy - intr.f * full[:, 2] / full[:, 0]
        if (fu < lim_lo).any() or (fu > lim_hi).any() or (fv < lim_lo).any() or (fv > lim_hi).any():
            continue
        quad = np.column_stack([fu[:4], fv[:4]])
        edges = np.linalg.norm(np.roll(quad, -1, axis=0) - quad, axis=1)
        rng = np.random.default_rng([*noise_key, marker_id])
        if rng.random() >= model.fire_probability(float(edges.min())):
            continue
        noisy = quad + rng.normal(0.0, model.sigma_px, (4, 2))
        try:
            est = estimate_marker_pose(noisy, intr, spec.side_length)
        except FiducialError:
            continue
        detections.append(
            Detection(
                marker_id=marker_id,
                corners=noisy,
                pose=est,
                partition_index=partition_index,
            )
        )
    return detections


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

EXPERIMENT_COLUMNS = [
    "frame", "t", "dropped", "found", "partition", "detector_calls",
    "elapsed_ms", "pixels", "marker_count",
    "gt_x", "gt_y", "gt_z", "gt_qw", "gt_qx", "gt_qy", "gt_qz",
    "est_x", "est_y", "est_z", "est_qw", "est_qx", "est_qy", "est_qz",
    "err_pos", "err_range",
]

MS_PER_MEGAPIXEL = 200.0


@dataclass(frozen=True)
class ExperimentReport:
    rows: list[dict]
    summary: dict


def tile_side_for(layout: PartitionLayout, src_h: int) -> int:
    """Tile resolution matching the source's equatorial pixel density."""
    return max(32, int(round(layout.theta_deg / 360.0 * 2 * src_h)))


def run_experiment(
    feed: Feed,
    layout: PartitionLayout,
    algo: str = "optimized",
    detector: str = "geometric",
    budget: int | None = None,
    seed: int = 0,
    model: GeometricDetectorModel | None = None,
    tile_side: int | None = None,
    cost: str = "per-call",
    ms_per_call: float = trk.DEFAULT_MS_PER_CALL,
    ms_per_megapixel: float = MS_PER_MEGAPIXEL,
    realtime: bool = False,
    staleness_horizon: int | None = None,
) -> ExperimentReport:
    """Replay a feed through one tracker over one layout.

    Geometric-detector randomness is keyed by (seed, frame, face), so
    the same frame gives the same outcomes no matter which algorithm
    asks or in what order it probes, and identical configurations yield
    identical reports.

    ``cost`` selects the processing-time proxy: "per-call" charges a flat
    ``ms_per_call`` per detector invocation, "per-pixel" charges
    ``ms_per_megapixel`` for every megapixel rectified, so larger tiles
    cost proportionally more.  With ``realtime=True`` the feed plays at
    its native rate: frames that arrive while the previous one is still
    being processed are dropped (recorded with ``dropped=1``), which is
    how an on-board pipeline with a fixed compute budget actually loses
    frames.
    """
    if algo not in ("optimized", "greedy"):
        raise ValueError(f"unknown algorithm {algo!r}")
    if detector not in ("geometric", "image"):
        raise ValueError(f"unknown detector {detector!r}")
    if cost not in ("per-call", "per-pixel"):
        raise ValueError(f"unknown cost model {cost!r}")
    if model is None:
        model = GeometricDetectorModel()
    side = tile_side if tile_side is not None else tile_side_for(layout, feed.src_h)
    if cost == "per-pixel":
        ms_per_call = ms_per_megapixel * side * side * 1e-6
    markers = feed.marker_specs()
    dictionary = list(markers.values())
    state = trk.make_tracker(
        layout,
        model=feed.body,
        ms_per_call=ms_per_call,
        staleness_horizon=staleness_horizon,
    )
    step = trk.step_optimized if algo == "optimized" else trk.step_greedy
    times = feed.trajectory.times()
    rows: list[dict] = []
    busy_until = -np.inf
    for i, t in enumerate(times):
        pose = feed.pose_at(float(t))
        if realtime and t < busy_until - 1e-9:
            rows.append(_dropped_row(i, float(t), pose))
            continue
        if detector == "geometric":
            def probe(idx, _pose=pose, _i=i):
                return geometric_detect(
                    _pose, layout.centers[idx], layout.theta_deg, side,
                    model, feed.body, markers, noise_key=(seed, _i),
                    partition_index=idx,
                )
        else:
            cache: dict = {}

            def probe(idx, _pose=pose, _cache=cache):
                if "img" not in _cache:
                    _cache["img"] = render_frame(
                        _pose, feed.body, markers, feed.src_h
                    )
                view = rectify_partition(
                    _cache["img"], layout.centers[idx], layout.theta_deg,
                    side, partition_index=idx,
                )
                return detect_markers(view, dictionary=dictionary)

        result = step(state, probe, budget)
        busy_until = t + result.elapsed_ms * 1e-3
        rows.append(_experiment_row(i, float(t), pose, result, side))
    return ExperimentReport(
        rows=rows,
        summary=_summarize(rows, layout, algo, detector, seed, side, budget),
    )


def _gt_fields(pose: Pose) -> dict:
    gt_q = geo.quat_from_rotation(pose.rotation)
    return {
        "gt_x": pose.translation[0],
        "gt_y": pose.translation[1],
        "gt_z": pose.translation[2],
        "gt_qw": gt_q[0], "gt_qx": gt_q[1], "gt_qy": gt_q[2], "gt_qz": gt_q[3],
    }


_EMPTY_EST = {
    "est_x": None, "est_y": None, "est_z": None,
    "est_qw": None, "est_qx": None, "est_qy": None, "est_qz": None,
    "err_pos": None, "err_range": None,
}


def _dropped_row(i: int, t: float, pose: Pose) -> dict:
    row = {
        "frame": i,
        "t": t,
        "dropped": 1,
        "found": 0,
        "partition": -1,
        "detector_calls": 0,
        "elapsed_ms": 0.0,
        "pixels": 0,
        "marker_count": 0,
    }
    row.update(_gt_fields(pose))
    row.update(_EMPTY_EST)
    return row


def _experiment_row(i: int, t: float, pose: Pose, result, side: int) -> dict:
    row = {
        "frame": i,
        "t": t,
        "dropped": 0,
        "found": int(result.found),
        "partition": result.partition if result.partition is not None else -1,
        "detector_calls": result.detector_calls,
        "elapsed_ms": result.elapsed_ms,
        "pixels": result.detector_calls * side * side,
        "marker_count": result.fused.marker_count if result.fused else 0,
    }
    row.update(_gt_fields(pose))
    if result.fused is not None:
        est = result.fused.pose
        est_q = geo.quat_from_rotation(est.rotation)
        row.update(
            est_x=est.translation[0], est_y=est.translation[1], est_z=est.translation[2],
            est_qw=est_q[0], est_qx=est_q[1], est_qy=est_q[2], est_qz=est_q[3],
            err_pos=float(np.linalg.norm(est.translation - pose.translation)),
            err_range=float(
                abs(np.linalg.norm(est.translation) - np.linalg.norm(pose.translation))
            ),
        )
    else:
        row.update(_EMPTY_EST)
    return row


def _summarize(rows, layout, algo, detector, seed, side, budget) -> dict:
    found = [r for r in rows if r["found"]]
    localized = [r for r in found if r["err_pos"] is not None]
    def _mean(key):
        vals = [r[key] for r in localized]
        return float(np.mean(vals)) if vals else float("nan")
    return {
        "frames": len(rows),
        "frames_dropped": sum(r["dropped"] for r in rows),
        "detections": len(found),
        "localizations": len(localized),
        "detection_rate": len(found) / len(rows) if rows else 0.0,
        "mean_abs_distance_error_m": _mean("err_range"),
        "mean_position_error_m": _mean("err_pos"),
        "mean_detector_calls": (
            float(np.mean([r["detector_calls"] for r in rows])) if rows else 0.0
        ),
        "pixels_processed": int(sum(r["pixels"] for r in rows)),
        "n_partitions": layout.n,
        "theta_deg": layout.theta_deg,
        "tile_side": side,
        "algo": algo,
        "detector": detector,
        "seed": seed,
        "budget": budget if budget is not None else 0,
    }


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


def experiment_csv(report: ExperimentReport) -> str:
    """Deterministic CSV text of the per-frame table."""
    lines = [",".join(EXPERIMENT_COLUMNS)]
    for row in report.rows:
        lines.append(",".join(_csv_cell(row[c]) for c in EXPERIMENT_COLUMNS))
    return "\n".join(lines) + "\n"


def write_experiment_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(experiment_csv(report))


def write_summary_json(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Tracking results and feed directories: the files the command-line
# verbs exchange.
# ---------------------------------------------------------------------------

TRACK_COLUMNS = [
    "frame", "found", "partition", "detector_calls",
    "est_x", "est_y", "est_z", "est_qw", "est_qx", "est_qy", "est_qz",
    "elapsed_ms",
]

GROUND_TRUTH_COLUMNS = [
    "frame", "t",
    "gt_x", "gt_y", "gt_z", "gt_qw", "gt_qx", "gt_qy", "gt_qz",
]


def track_csv(report: ExperimentReport) -> str:
    """Tracking-results table: estimates only, no ground truth."""
    lines = [",".join(TRACK_COLUMNS)]
    for row in report.rows:
        lines.append(",".join(_csv_cell(row[c]) for c in TRACK_COLUMNS))
    return "\n".join(lines) + "\n"


def write_track_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(track_csv(report))


def ground_truth_csv(feed: Feed) -> str:
    lines = [",".join(GROUND_TRUTH_COLUMNS)]
    for i, t in enumerate(feed.trajectory.times()):
        pose = feed.pose_at(float(t))
        row = {"frame": i, "t": float(t)}
        row.update(_gt_fields(pose))
        lines.append(",".join(_csv_cell(row[c]) for c in GROUND_TRUTH_COLUMNS))
    return "\n".join(lines) + "\n"


def save_feed(feed: Feed, dirpath, render: bool = False) -> None:
    """Persist a feed as a directory: feed.json, body.json, a ground
    truth table, and (optionally) every rendered frame."""
    os.makedirs(dirpath, exist_ok=True)
    doc = {
        "trajectory": {
            "kind": feed.trajectory.kind,
            "duration": feed.trajectory.duration,
            "sample_rate": feed.trajectory.sample_rate,
            "params": feed.trajectory.params,
        },
        "marker_side": feed.marker_side,
        "orientation_mode": feed.orientation_mode,
        "spin_axis": list(feed.spin_axis),
        "spin_rate_hz": feed.spin_rate_hz,
        "src_h": feed.src_h,
        "body": "body.json",
    }
    with open(os.path.join(dirpath, "feed.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    save_body_model(feed.body, os.path.join(dirpath, "body.json"))
    with open(
        os.path.join(dirpath, "ground_truth.csv"), "w", encoding="utf-8",
        newline="\n",
    ) as fh:
        fh.write(ground_truth_csv(feed))
    if render:
        markers = feed.marker_specs()
        for i, t in enumerate(feed.trajectory.times()):
            frame = render_frame(
                feed.pose_at(float(t)), feed.body, markers, feed.src_h
            )
            write_image(
                os.path.join(dirpath, f"frame_{i:04d}.png"), frame.pixels
            )


def load_feed(dirpath) -> Feed:
    with open(os.path.join(dirpath, "feed.json"), encoding="utf-8") as fh:
        doc = json.load(fh)
    tr = doc["trajectory"]
    trajectory = Trajectory(
        kind=tr["kind"],
        duration=float(tr["duration"]),
        sample_rate=float(tr["sample_rate"]),
        params=tr["params"],
    )
    body = load_body_model(os.path.join(dirpath, doc["body"]))
    return Feed(
        trajectory=trajectory,
        body=body,
        marker_side=float(doc["marker_side"]),
        orientation_mode=str(doc["orientation_mode"]),
        spin_axis=tuple(doc["spin_axis"]),
        spin_rate_hz=float(doc["spin_rate_hz"]),
        src_h=int(doc["src_h"]),
    )
