"""Square fiducial markers: codec, detector, planar pose, and fusion.

Markers are 6x6 binary grids: a forced-black outer ring around a 4x4
payload of 16 cells, 8 of which carry the id byte and 8 of which are
parity.  Payload words live in a length-16 linear code of minimum
distance 4 whose coordinates are indexed by the payload cells; because
a quarter-turn of the grid is an affine permutation of those indices,
the code maps onto itself under rotation, and any two distinct words —
rotated any way — still differ in at least 4 cells.  One word per id is
picked from the 8-word coset matching the id's data bits, constrained
to have all four rotations distinct and disjoint from every other id's
rotations, so a decoded word pins down both the id and the marker's
orientation.

Conventions used throughout:

- Marker object frame: X right, Y up, Z out of the face toward the
  viewer; corners at (+-side/2, +-side/2, 0).
- Detection corners are ordered [top-left, bottom-left, bottom-right,
  top-right] of the *decoded* orientation.
- Poses are expressed in the view's canonical camera frame (+x forward,
  +y left, +z up), the same frame whose orientation matrix the
  rectifier attaches to each tile.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from . import geometry as geo
from .images import to_gray
from .rectify import PinholeIntrinsics, RectifiedView

GRID = 6                  # full grid side, cells
PAYLOAD = 4               # payload sub-grid side
QUIET_CELLS = 1           # white margin around the grid, in cells
_CODEC_SEED = 7           # fixed so every build yields the same dictionary

# canonical camera (x fwd, y left, z up) from CV camera (x right, y down,
# z fwd); columns are the images of the CV basis vectors
CANONICAL_FROM_CV = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


class FiducialError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


def _rotation_perm() -> np.ndarray:
    """Index permutation of a quarter-turn: rotated[perm] = word."""
    perm = np.zeros(PAYLOAD * PAYLOAD, dtype=int)
    for r in range(PAYLOAD):
        for c in range(PAYLOAD):
            perm[PAYLOAD * c + (PAYLOAD - 1 - r)] = PAYLOAD * r + c
    return perm


def _all_codewords() -> np.ndarray:
    """The full (2048, 16) distance-4 code over the payload cells.

    Words are evaluations of degree-<=2 Boolean polynomials in the four
    bits of the cell label (r1, r0, c1, c0); a quarter-turn acts on the
    labels as an affine map, hence permutes this code onto itself.
    """
    labels = np.array(
        [
            [(r >> 1) & 1, r & 1, (c >> 1) & 1, c & 1]
            for r in range(PAYLOAD)
            for c in range(PAYLOAD)
        ],
        dtype=np.uint8,
    )
    cols = [np.ones(16, dtype=np.uint8)]
    cols += [labels[:, a] for a in range(4)]
    cols += [labels[:, a] & labels[:, b] for a in range(4) for b in range(a + 1, 4)]
    basis = np.array(cols, dtype=np.uint8)
    msgs = ((np.arange(2048)[:, None] >> np.arange(11)[None, :]) & 1).astype(np.uint8)
    return (msgs @ basis) % 2


def _pick_data_positions(code: np.ndarray) -> list[int]:
    """8 payload cells whose bits range over all 256 values independently."""
    preference = [
        (0, 0), (0, 3), (3, 0), (3, 3),       # corner cells
        (1, 1), (1, 2), (2, 1), (2, 2),       # center cells
        (0, 1), (0, 2), (1, 0), (1, 3),
        (2, 0), (2, 3), (3, 1), (3, 2),
    ]
    chosen: list[int] = []
    for r, c in preference:
        cand = chosen + [PAYLOAD * r + c]
        pats = code[:, cand] @ (1 << np.arange(len(cand)))
        if len(set(pats.tolist())) == 1 << len(cand):
            chosen = cand
        if len(chosen) == 8:
            return chosen
    raise FiducialError("could not find independent data cells")


class _Codec:
    """Immutable id <-> payload-word tables, built once per process."""

    def __init__(self):
        code = _all_codewords()
        self.perm = _rotation_perm()
        self.data_positions = _pick_data_positions(code)
        patterns = code[:, self.data_positions] @ (1 << np.arange(8))
        words = self._assign(code, patterns)
        self.words = words                       # (256, 16) uint8
        self.table: dict[bytes, tuple[int, int]] = {}
        for marker_id in range(256):
            w = words[marker_id]
            for k in range(4):
                key = bytes(w)
                if key in self.table:
                    raise FiducialError("rotation collision in the dictionary")
                self.table[key] = (marker_id, k)
                w = w[self.perm]
        self._verify()

    def _orbit_keys(self, word: np.ndarray) -> set[bytes]:
        keys = set()
        w = word
        for _ in range(4):
            keys.add(bytes(w))
            w = w[self.perm]
        return keys

    def _assign(self, code: np.ndarray, patterns: np.ndarray) -> np.ndarray:
        """One orbit-disjoint, rotation-asymmetric word per id.

        Depth-first over ids with backtracking; candidate order within
        each 8-word coset is a fixed seeded shuffle, so the dictionary
        is deterministic.
        """
        candidates = {}
        for marker_id in range(256):
            coset = code[np.nonzero(patterns == marker_id)[0]]
            rng = np.random.default_rng([_CODEC_SEED, marker_id])
            candidates[marker_id] = coset[rng.permutation(len(coset))]
        chosen: dict[int, np.ndarray] = {}
        used: set[bytes] = set()
        stack: list[tuple[int, int, set[bytes]]] = []
        next_k = dict.fromkeys(range(256), 0)
        marker_id = 0
        while marker_id < 256:
            placed = False
            for k in range(next_k[marker_id], len(candidates[marker_id])):
                word = candidates[marker_id][k]
                keys = self._orbit_keys(word)
                if len(keys) != 4 or keys & used:
                    continue
                chosen[marker_id] = word
                used |= keys
                stack.append((marker_id, k, keys))
                next_k[marker_id] = k + 1
                placed = True
                break
            if placed:
                marker_id += 1
                continue
            next_k[marker_id] = 0
            if not stack:
                raise FiducialError("dictionary assignment is infeasible")
            prev_id, _, prev_keys = stack.pop()
            used -= prev_keys
            del chosen[prev_id]
            marker_id = prev_id
        return np.array([chosen[i] for i in range(256)], dtype=np.uint8)

    def _verify(self):
        """Exhaustive build-time checks: separation, ids, round trips."""
        if len(self.table) != 1024:
            raise FiducialError("dictionary must hold 256 ids x 4 rotations")
        packed = np.array(
            [np.frombuffer(k, dtype=np.uint8) @ (1 << np.arange(16)) for k in self.table],
            dtype=np.uint32,
        )
        xors = packed[:, None] ^ packed[None, :]
        dist = np.zeros_like(xors)
        for s in range(16):
            dist += (xors >> s) & 1
        np.fill_diagonal(dist, 16)
        if int(dist.min()) < 4:
            raise FiducialError("dictionary separation below 4 bits")
        shifts = 1 << np.arange(8)
        for marker_id in range(256):
            if int(self.words[marker_id][self.data_positions] @ shifts) != marker_id:
                raise FiducialError("data cells do not recover the id")

    def encode(self, marker_id: int) -> np.ndarray:
        if not 0 <= marker_id <= 255:
            raise ValueError("marker id must be in 0..255")
        return self.words[marker_id].copy()

    def decode(self, word: np.ndarray, correct_single_bit: bool = False):
        """-> (id, quarter_turns) or None.

        quarter_turns is how many clockwise quarter-turns separate the
        observed grid from the canonical one.
        """
        word = np.asarray(word, dtype=np.uint8)
        hit = self.table.get(bytes(word))
        if hit is not None:
            return hit
        if correct_single_bit:
            # distance-4 separation makes any 1-bit error uniquely closest
            for i in range(16):
                word[i] ^= 1
                hit = self.table.get(bytes(word))
                word[i] ^= 1
                if hit is not None:
                    return hit
        return None


@lru_cache(maxsize=1)
def codec() -> _Codec:
    return _Codec()


# ---------------------------------------------------------------------------
# Marker specs and rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkerSpec:
    """One dictionary entry: id, physical size, and its painted grid."""

    id: int
    side_length: float        # meters, spanning the full 6x6 grid
    code_grid: np.ndarray     # (6, 6) uint8, 1 = white cell

    def __post_init__(self):
        grid = np.asarray(self.code_grid, dtype=np.uint8)
        if grid.shape != (GRID, GRID) or not np.isin(grid, (0, 1)).all():
            raise ValueError("code grid must be 6x6 binary")
        ring = np.ones((GRID, GRID), dtype=bool)
        ring[1:-1, 1:-1] = False
        if grid[ring].any():
            raise ValueError("outer ring cells must all be black")
        word = grid[1:-1, 1:-1].reshape(-1)
        if not np.array_equal(word, codec().encode(self.id)):
            raise ValueError("payload does not encode this marker id")
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")
        object.__setattr__(self, "code_grid", grid)


def make_marker(marker_id: int, side_length: float = 0.05) -> MarkerSpec:
    grid = np.zeros((GRID, GRID), dtype=np.uint8)
    grid[1:-1, 1:-1] = codec().encode(marker_id).reshape(PAYLOAD, PAYLOAD)
    return MarkerSpec(id=marker_id, side_length=side_length, code_grid=grid)


def default_dictionary(side_length: float = 0.05) -> list[MarkerSpec]:
    return [make_marker(i, side_length) for i in range(256)]


def marker_image(marker_id: int, px: int, quiet: bool = True) -> np.ndarray:
    """RGB8 rendering of a marker, nearest-sampled to px x px.

    `quiet` surrounds the grid with a one-cell white margin, which the
    detector needs for contrast against the border ring.
    """
    if px < GRID:
        raise ValueError(f"px must be at least {GRID}")
    grid = make_marker(marker_id, 1.0).code_grid
    if quiet:
        padded = np.ones((GRID + 2 * QUIET_CELLS,) * 2, dtype=np.uint8)
        padded[QUIET_CELLS:-QUIET_CELLS, QUIET_CELLS:-QUIET_CELLS] = grid
        grid = padded
    side = grid.shape[0]
    idx = np.minimum((np.arange(px) * side) // px, side - 1)
    img = (grid[np.ix_(idx, idx)] * 255).astype(np.uint8)
    return np.repeat(img[:, :, np.newaxis], 3, axis=2)


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorParams:
    thresh_window: int = 0          # 0 = side // 8, forced odd
    thresh_rel: float = 0.12        # mask = gray < local_mean * (1 - rel)
    min_area: int = 100             # component pixels
    max_area_frac: float = 0.5
    min_edge_px: float = 10.0
    cell_subsamples: int = 3
    refine_subpixel: bool = True
    correct_single_bit: bool = False
    pose_refine: bool = False


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray        # (3, 3)
    translation: np.ndarray     # (3,) meters

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not geo.is_rotation(rot, tol=1e-8):
            raise ValueError("pose rotation must be orthonormal, det +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class Detection:
    marker_id: int
    corners: np.ndarray         # (4, 2) sub-pixel, decoded order TL,BL,BR,TR
    pose: Pose | None
    partition_index: int


def _quad_from_hull(points: np.ndarray) -> np.ndarray | None:
    """Reduce a convex hull to its 4 dominant vertices.

    Iteratively removes the vertex whose removal loses the least area
    (the flattest corner) until 4 remain.
    """
    try:
        hull = ConvexHull(points)
    except QhullError:
        return None
    verts = points[hull.vertices].astype(float)
    while len(verts) > 4:
        n = len(verts)
        prev = verts[np.arange(n) - 1]
        nxt = verts[(np.arange(n) + 1) % n]
        cross = np.abs(
            (verts[:, 0] - prev[:, 0]) * (nxt[:, 1] - prev[:, 1])
            - (verts[:, 1] - prev[:, 1]) * (nxt[:, 0] - prev[:, 0])
        )
        verts = np.delete(verts, int(np.argmin(cross)), axis=0)
    if len(verts) < 4:
        return None
    return verts


def _order_quad(quad: np.ndarray) -> np.ndarray:
    """Start at the top-left-most vertex, cycle with negative shoelace.

    Negative shoelace in (u, v) image coordinates matches the canonical
    TL->BL->BR->TR corner cycle.
    """
    start = int(np.argmin(quad[:, 0] + quad[:, 1]))
    quad = np.roll(quad, -start, axis=0)
    x, y = quad[:, 0], quad[:, 1]
    shoelace = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if shoelace > 0:
        quad = quad[[0, 3, 2, 1]]
    return quad


def _bilinear(gray: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    tu = u - u0
    tv = v - v0
    top = gray[v0, u0] * (1 - tu) + gray[v0, u1] * tu
    bot = gray[v1, u0] * (1 - tu) + gray[v1, u1] * tu
    return top * (1 - tv) + bot * tv


def _refine_edges(gray: np.ndarray, quad: np.ndarray) -> np.ndarray | None:
    """Sub-pixel corners from mid-level edge crossings.

    Intensity profiles are sampled perpendicular to the middle stretch
    of each edge, running dark interior to bright quiet zone.  Each
    profile's crossing of the halfway level between its extremes is
    located by linear interpolation — unbiased for a straight step edge
    under any symmetric blur — then a total-least-squares line per edge
    and pairwise line intersections give the corners.
    """
    lines = []
    offsets = np.arange(-2.5, 2.51, 0.25)
    for e in range(4):
        a, b = quad[e], quad[(e + 1) % 4]
        edge = b - a
        length = np.hypot(*edge)
        if length < 4:
            return None
        # negative-shoelace corner cycle puts this normal on the outside
        normal = np.array([-edge[1], edge[0]]) / length
        ts = np.linspace(0.2, 0.8, 9)
        pts = a[None, :] + ts[:, None] * edge[None, :]
        samples = pts[:, None, :] + offsets[None, :, None] * normal[None, None, :]
        prof = _bilinear(gray, samples[..., 0], samples[..., 1])
        crossings = []
        for i in range(len(ts)):
            p = prof[i]
            lo, hi = p.min(), p.max()
            if hi - lo < 0.05:
                continue
            mid = 0.5 * (lo + hi)
            k0, k1 = int(np.argmin(p)), int(np.argmax(p))
            if k1 <= k0:
                continue
            for k in range(k0, k1):
                if p[k] < mid <= p[k + 1]:
                    frac = (mid - p[k]) / (p[k + 1] - p[k])
                    off = offsets[k] + frac * (offsets[k + 1] - offsets[k])
                    crossings.append(pts[i] + off * normal)
                    break
        if len(crossings) < 3:
            return None
        crossings = np.array(crossings)
        centroid = crossings.mean(axis=0)
        _, _, vt = np.linalg.svd(crossings - centroid)
        lines.append((centroid, vt[0]))
    corners = []
    for e in range(4):
        (p1, d1) = lines[e - 1]
        (p2, d2) = lines[e]
        mat = np.column_stack([d1, -d2])
        if abs(np.linalg.det(mat)) < 1e-9:
            return None
        s = np.linalg.solve(mat, p2 - p1)
        # lines[e] joins quad[e] to quad[e+1], so this meet is vertex e
        corners.append(p1 + s[0] * d1)
    refined = np.array(corners)
    # Hull vertices under-reach rounded tips roughly in proportion to
    # quad size, so the divergence bound scales with the mean edge; the
    # nearest competing straight line (first cell boundary) sits a full
    # cell in, so anything under edge/GRID is still unambiguous.
    edge_px = float(np.mean(np.linalg.norm(np.roll(quad, -1, axis=0) - quad, axis=1)))
    if np.max(np.linalg.norm(refined - quad, axis=1)) > max(3.0, 0.08 * edge_px):
        return None  # refinement diverged; reject rather than guess
    return refined


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """DLT from 4+ point pairs, src -> dst, both (n, 2)."""
    n = len(src)
    rows = []
    for i in range(n):
        x, y = src[i]
        u, v = dst[i]
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.array(rows, dtype=float))
    h = vt[-1].reshape(3, 3)
    if abs(h[2, 2]) < 1e-12:
        raise FiducialError("degenerate homography")
    return h / h[2, 2]


def _apply_h(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    q = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return q[:, :2] / q[:, 2:3]


_UNWARP_SRC = np.array([[0.0, 0.0], [0.0, GRID], [GRID, GRID], [GRID, 0.0]])


def _read_cells(gray: np.ndarray, corners: np.ndarray, subsamples: int) -> np.ndarray:
    """(6, 6) mean intensities sampled through the corner homography."""
    h = _homography(_UNWARP_SRC, corners)
    frac = (np.arange(subsamples) + 0.5) / subsamples
    gx, gy = np.meshgrid(frac, frac, indexing="xy")
    offsets = np.column_stack([gx.ravel(), gy.ravel()])
    cells = np.empty((GRID, GRID))
    for r in range(GRID):
        for c in range(GRID):
            pts = offsets + np.array([c, r])
            img_pts = _apply_h(h, pts)
            cells[r, c] = _bilinear(gray, img_pts[:, 0], img_pts[:, 1]).mean()
    return cells


def _otsu_split(values: np.ndarray) -> float:
    """Threshold maximizing between-class variance over a small sample."""
    v = np.sort(values.ravel())
    best_t, best_score = v[0] - 1.0, -1.0
    for i in range(1, len(v)):
        lo, hi = v[:i], v[i:]
        if hi[0] == lo[-1]:
            continue
        score = len(lo) * len(hi) * (hi.mean() - lo.mean()) ** 2
        if score > best_score:
            best_score = score
            best_t = 0.5 * (lo[-1] + hi[0])
    return best_t


def detect_markers(
    view: RectifiedView,
    intrinsics: PinholeIntrinsics | None = None,
    dictionary: list[MarkerSpec] | None = None,
    params: DetectorParams = DetectorParams(),
) -> list[Detection]:
    """Find and decode dictionary markers in one rectified tile.

    Stages: adaptive threshold (local mean), connected components,
    convex-hull quad fit, optional sub-pixel edge refinement, cell
    sampling through the corner homography, payload decode under all
    four rotations, then planar pose when intrinsics are given.
    """
    if dictionary is None:
        dictionary = default_dictionary()
    by_id = {spec.id: spec for spec in dictionary}
    if len(by_id) != len(dictionary):
        raise ValueError("dictionary has duplicate marker ids")
    if intrinsics is None:
        intrinsics = view.intrinsics
    gray = to_gray(view.image)
    side = view.side
    win = params.thresh_window or max(3, (side // 8) | 1)
    local_mean = ndimage.uniform_filter(gray, size=win, mode="nearest")
    mask = gray < local_mean * (1.0 - params.thresh_rel)
    labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    detections: list[Detection] = []
    max_area = params.max_area_frac * side * side
    for lab, region in enumerate(ndimage.find_objects(labels), start=1):
        if region is None:
            continue
        ys, xs = np.nonzero(labels[region] == lab)
        area = len(xs)
        if area < params.min_area or area > max_area:
            continue
        pts = np.column_stack(
            [xs + region[1].start, ys + region[0].start]
        ).astype(float)
        quad = _quad_from_hull(pts)
        if quad is None:
            continue
        quad = _order_quad(quad)
        edges = np.linalg.norm(np.roll(quad, -1, axis=0) - quad, axis=1)
        if edges.min() < params.min_edge_px:
            continue
        if edges.min() / edges.max() < 0.2:
            continue
        # hull area must agree with the pixel count, or it is no quad
        x, y = quad[:, 0], quad[:, 1]
        quad_area = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        if not 0.5 < area / quad_area < 1.5:
            continue
        corners = quad.copy()
        if params.refine_subpixel:
            refined = _refine_edges(gray, quad)
            if refined is not None:
                corners = refined
        try:
            cells = _read_cells(gray, corners, params.cell_subsamples)
        except FiducialError:
            continue
        thresh = _otsu_split(cells)
        bits = (cells > thresh).astype(np.uint8)
        ring = np.ones((GRID, GRID), dtype=bool)
        ring[1:-1, 1:-1] = False
        if bits[ring].any():
            continue
        word = bits[1:-1, 1:-1].reshape(-1)
        hit = codec().decode(word, params.correct_single_bit)
        if hit is None:
            continue
        marker_id, turns = hit
        if marker_id not in by_id:
            continue
        # observed grid = canonical rotated `turns` quarter-turns CW, so
        # canonical corner j sits at observed index (j - turns) mod 4
        reorder = [(j - turns) % 4 for j in range(4)]
        corners = corners[reorder]
        pose = None
        try:
            pose = estimate_marker_pose(
                corners, intrinsics, by_id[marker_id].side_length, params.pose_refine
            )
        except FiducialError:
            pose = None
        detections.append(
            Detection(
                marker_id=marker_id,
                corners=corners,
                pose=pose,
                partition_index=view.partition_index,
            )
        )
    return detections


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------


def marker_object_corners(side_length: float) -> np.ndarray:
    """(4, 2) marker-plane corners in decoded order TL, BL, BR, TR."""
    h = side_length / 2.0
    return np.array([[-h, h], [-h, -h], [h, -h], [h, h]])


def _project_cv(rotation, translation, obj_pts, intr) -> np.ndarray:
    cam = obj_pts @ rotation.T + translation
    return np.column_stack(
        [
            intr.cx + intr.f * cam[:, 0] / cam[:, 2],
            intr.cy + intr.f * cam[:, 1] / cam[:, 2],
        ]
    )


def reprojection_rms(
    pose: Pose, corners: np.ndarray, intr: PinholeIntrinsics, side_length: float
) -> float:
    """RMS pixel error of the pose against the detected corners."""
    rot_cv = CANONICAL_FROM_CV.T @ pose.rotation
    t_cv = CANONICAL_FROM_CV.T @ pose.translation
    obj = np.column_stack(
        [marker_object_corners(side_length), np.zeros(4)]
    )
    proj = _project_cv(rot_cv, t_cv, obj, intr)
    return float(np.sqrt(np.mean(np.sum((proj - corners) ** 2, axis=1))))


def _refine_pose_cv(rot, t, obj, corners, intr, iters=10):
    """Gauss-Newton on reprojection, axis-angle update about the estimate."""
    for _ in range(iters):
        proj = _project_cv(rot, t, obj, intr)
        residual = (corners - proj).ravel()
        jac = np.zeros((8, 6))
        eps = 1e-6
        for p in range(6):
            d = np.zeros(6)
            d[p] = eps
            rot_d = rot @ geo.rotation_about(np.eye(3)[p % 3], eps) if p < 3 else rot
            t_d = t + d[3:] if p >= 3 else t
            proj_d = _project_cv(rot_d, t_d, obj, intr)
            jac[:, p] = (proj_d - proj).ravel() / eps
        try:
            delta, *_ = np.linalg.lstsq(jac, residual, rcond=None)
        except np.linalg.LinAlgError:
            break
        rot = rot @ (
            geo.rotation_about([1, 0, 0], delta[0])
            @ geo.rotation_about([0, 1, 0], delta[1])
            @ geo.rotation_about([0, 0, 1], delta[2])
        )
        t = t + delta[3:]
        if np.linalg.norm(delta) < 1e-12:
            break
    return rot, t


def estimate_marker_pose(
    corners: np.ndarray | Detection,
    intr: PinholeIntrinsics,
    side_length: float | MarkerSpec,
    refine: bool = False,
) -> Pose:
    """Planar pose from 4 decoded corners, in the canonical view frame.

    Decomposes the object-plane-to-normalized-image homography: the
    first two columns are the scaled in-plane rotation axes, their cross
    product completes the basis, and an SVD projection restores exact
    orthonormality.  The translation sign is fixed so the marker lies in
    front of the camera.

    `corners` may be a Detection and `side_length` a MarkerSpec.
    """
    if isinstance(corners, Detection):
        corners = corners.corners
    if isinstance(side_length, MarkerSpec):
        side_length = side_length.side_length
    corners = np.asarray(corners, dtype=float)
    if corners.shape != (4, 2):
        raise ValueError("need exactly 4 corner points")
    obj2 = marker_object_corners(side_length)
    norm_pts = (corners - [intr.cx, intr.cy]) / intr.f
    h = _homography(obj2, norm_pts)
    if np.linalg.matrix_rank(h, tol=1e-10) < 3:
        raise FiducialError("degenerate homography")
    # h maps (X, Y, 1) to normalized CV image coords, scaled so the
    # marker center projects to positive depth (h22 = 1 after DLT)
    n1 = np.linalg.norm(h[:, 0])
    n2 = np.linalg.norm(h[:, 1])
    if n1 < 1e-12 or n2 < 1e-12:
        raise FiducialError("degenerate homography")
    scale = 2.0 / (n1 + n2)
    r1 = h[:, 0] * scale
    r2 = h[:, 1] * scale
    t = h[:, 2] * scale
    r3 = np.cross(r1, r2)
    basis = np.column_stack([r1, r2, r3])
    u, _, vt = np.linalg.svd(basis)
    rot = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
    if t[2] <= 0:
        raise FiducialError("marker resolved behind the camera")
    obj3 = np.column_stack([obj2, np.zeros(4)])
    if refine:
        rot, t = _refine_pose_cv(rot, t, obj3, corners, intr)
    return Pose(
        rotation=CANONICAL_FROM_CV @ rot, translation=CANONICAL_FROM_CV @ t
    )


# ---------------------------------------------------------------------------
# Body model and fusion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BodyModel:
    """Rigid marker arrangement: marker frame -> body frame transforms."""

    name: str
    marker_ids: tuple[int, ...]
    rotations: dict[int, np.ndarray] = field(compare=False)
    translations: dict[int, np.ndarray] = field(compare=False)

    def __post_init__(self):
        if len(set(self.marker_ids)) != len(self.marker_ids):
            raise ValueError("marker ids must be unique")
        for i in self.marker_ids:
            if not geo.is_rotation(self.rotations[i], tol=1e-8):
                raise ValueError(f"marker {i} transform is not rigid")


def save_body_model(model: BodyModel, path) -> None:
    doc = {
        "name": model.name,
        "markers": [
            {
                "id": int(i),
                "t": [float(x) for x in model.translations[i]],
                "q": [float(x) for x in geo.quat_from_rotation(model.rotations[i])],
            }
            for i in model.marker_ids
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_body_model(path) -> BodyModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    ids = []
    rotations = {}
    translations = {}
    for entry in doc["markers"]:
        i = int(entry["id"])
        ids.append(i)
        rotations[i] = geo.rotation_from_quat(np.asarray(entry["q"], dtype=float))
        translations[i] = np.asarray(entry["t"], dtype=float)
    return BodyModel(
        name=str(doc.get("name", "body")),
        marker_ids=tuple(ids),
        rotations=rotations,
        translations=translations,
    )


@dataclass(frozen=True)
class BodyPoseEstimate:
    pose: Pose
    marker_count: int


def fuse_body_pose(
    detections: list[Detection],
    model: BodyModel,
    view_orientations: list[np.ndarray],
) -> BodyPoseEstimate | None:
    """Average per-marker body-pose hypotheses into one estimate.

    Each detection's marker pose is carried to the camera-rig frame by
    its view's orientation, composed with the marker->body transform,
    then translations are averaged arithmetically and rotations through
    the dominant eigenvector of the quaternion outer-product sum.
    Returns None when no detection matches the model.
    """
    if len(detections) != len(view_orientations):
        raise ValueError("need one view orientation per detection")
    translations = []
    quats = []
    for det, view_rot in zip(detections, view_orientations):
        if det.pose is None or det.marker_id not in model.rotations:
            continue
        rot_rig = np.asarray(view_rot) @ det.pose.rotation
        t_rig = np.asarray(view_rot) @ det.pose.translation
        body_rot = rot_rig @ model.rotations[det.marker_id].T
        body_t = t_rig - body_rot @ model.translations[det.marker_id]
        translations.append(body_t)
        quats.append(geo.quat_from_rotation(body_rot))
    if not translations:
        return None
    mean_t = np.mean(translations, axis=0)
    mean_q = geo.average_quaternions(np.array(quats))
    return BodyPoseEstimate(
        pose=Pose(rotation=geo.rotation_from_quat(mean_q), translation=mean_t),
        marker_count=len(translations),
    )
