"""Equirectangular-to-rectilinear view extraction.

Each sphere partition becomes a square pinhole-model tile.  The tile's
camera frame is canonical (+x forward, +y left, +z up); pixel (u, v)
looks along the ray

    (1, -(u - cx)/f, (cy - v)/f)

so u grows rightward and v grows downward in the delivered image, and
the focal length f = (s/2)/tan(fov/2) makes the fov span the full s-pixel
side.  The tile orientation rotates that canonical frame out to the
partition center with north up.

Every output pixel is an independent pure function of (u, v, source,
center, fov, s): the scattered-pixel path and the whole-image path run
the same per-element arithmetic, which is what makes row- or
pixel-parallel scheduling safe and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .images import EquirectImage
from .partition import PartitionLayout


@dataclass(frozen=True)
class PinholeIntrinsics:
    f: float          # focal length, pixels
    cx: float         # principal point, pixels
    cy: float

    @classmethod
    def for_view(cls, fov_deg: float, side: int) -> "PinholeIntrinsics":
        if not 0.0 < fov_deg < 180.0:
            raise ValueError("pinhole intrinsics need 0 < fov < 180 deg")
        f = (side / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
        c = (side - 1) / 2.0
        return cls(f=f, cx=c, cy=c)


@dataclass(frozen=True)
class RectifiedView:
    image: np.ndarray          # (s, s, 3) uint8
    fov_deg: float
    orientation: np.ndarray    # camera-to-world rotation
    partition_index: int

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[0] != img.shape[1] or img.shape[2] != 3:
            raise ValueError("view image must be square RGB")
        if img.shape[0] < 16:
            raise ValueError("view side must be at least 16 px")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("view fov must be in (0, 180) deg")
        if not geo.is_rotation(self.orientation):
            raise ValueError("orientation must be a rotation matrix")

    @property
    def side(self) -> int:
        return self.image.shape[0]

    @property
    def intrinsics(self) -> PinholeIntrinsics:
        return PinholeIntrinsics.for_view(self.fov_deg, self.side)


def pixel_rays(u, v, intr: PinholeIntrinsics) -> np.ndarray:
    """Unit rays in the canonical camera frame for pixel coords (u, v)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    rays = np.stack(
        [np.ones_like(u), -(u - intr.cx) / intr.f, (intr.cy - v) / intr.f], axis=-1
    )
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def project_rays(dirs: np.ndarray, intr: PinholeIntrinsics):
    """Canonical-frame directions -> (u, v, in_front) pixel coordinates.

    in_front is False for rays at or behind the image plane; their u, v
    are filled with NaN.
    """
    dirs = np.asarray(dirs, dtype=float)
    x = dirs[..., 0]
    in_front = x > 1e-12
    safe_x = np.where(in_front, x, 1.0)
    u = np.where(in_front, intr.cx - intr.f * dirs[..., 1] / safe_x, np.nan)
    v = np.where(in_front, intr.cy - intr.f * dirs[..., 2] / safe_x, np.nan)
    return u, v, in_front


def sample_equirect(src: EquirectImage, lat, lon, interp: str = "bilinear") -> np.ndarray:
    """Sample source pixels at (lat, lon) with longitude wraparound.

    Fractional column indices wrap modulo the width; fractional rows
    clamp at the pole rows, so no lookup ever leaves the source grid.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    h, w = src.h, src.w
    col = (lon + np.pi) * w / (2.0 * np.pi) - 0.5
    row = (np.pi / 2.0 - lat) * h / np.pi - 0.5
    pix = src.pixels
    if interp == "nearest":
        j = np.mod(np.rint(col).astype(np.int64), w)
        i = np.clip(np.rint(row).astype(np.int64), 0, h - 1)
        return pix[i, j]
    if interp != "bilinear":
        raise ValueError(f"unknown interpolation {interp!r}")
    row = np.clip(row, 0.0, h - 1.0)
    j0 = np.floor(col).astype(np.int64)
    i0 = np.floor(row).astype(np.int64)
    tj = (col - j0)[..., np.newaxis]
    ti = (row - i0)[..., np.newaxis]
    j0 = np.mod(j0, w)
    j1 = np.mod(j0 + 1, w)
    i0 = np.clip(i0, 0, h - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    p00 = pix[i0, j0].astype(np.float64)
    p01 = pix[i0, j1].astype(np.float64)
    p10 = pix[i1, j0].astype(np.float64)
    p11 = pix[i1, j1].astype(np.float64)
    top = p00 * (1.0 - tj) + p01 * tj
    bot = p10 * (1.0 - tj) + p11 * tj
    val = top * (1.0 - ti) + bot * ti
    return np.clip(np.rint(val), 0, 255).astype(np.uint8)


def rectify_pixels(
    src: EquirectImage,
    center: np.ndarray,
    fov_deg: float,
    side: int,
    u,
    v,
    interp: str = "bilinear",
) -> np.ndarray:
    """Colors of an arbitrary subset of output pixels.

    Same arithmetic as rectify_partition, element for element; useful
    for scattered spot checks and for verifying scheduling independence.
    """
    intr = PinholeIntrinsics.for_view(fov_deg, side)
    rot = geo.rotation_aligning(np.asarray(center, dtype=float))
    rays = pixel_rays(u, v, intr)
    world = rays @ rot.T
    lat, lon = geo.dir_to_geo(world)
    return sample_equirect(src, lat, lon, interp)


def rectify_partition(
    src: EquirectImage,
    center: np.ndarray,
    fov_deg: float,
    side: int = 512,
    interp: str = "bilinear",
    partition_index: int = 0,
) -> RectifiedView:
    """Extract the pinhole tile of the cap at `center`.

    The center output pixel looks exactly along `center`; rays are the
    pinhole bundle rotated there with north up, sampled from the source
    with wraparound/clamp rules.
    """
    if fov_deg >= 180.0:
        raise ValueError(
            f"fov {fov_deg:.1f} deg is not rectilinear; views wider than 180 deg "
            "cannot be produced by a perspective tile"
        )
    u, v = np.meshgrid(np.arange(side), np.arange(side), indexing="xy")
    img = rectify_pixels(src, center, fov_deg, side, u, v, interp)
    return RectifiedView(
        image=img,
        fov_deg=fov_deg,
        orientation=geo.rotation_aligning(np.asarray(center, dtype=float)),
        partition_index=partition_index,
    )


def rectify_all(
    src: EquirectImage, layout: PartitionLayout, side: int = 512, interp: str = "bilinear"
) -> list[RectifiedView]:
    """One tile per cap, fov = the layout's covering angle, index order."""
    return [
        rectify_partition(
            src, layout.centers[i], layout.theta_deg, side, interp, partition_index=i
        )
        for i in range(layout.n)
    ]


def pixel_to_direction(view: RectifiedView, u, v) -> np.ndarray:
    """World direction seen by view pixel (u, v)."""
    rays = pixel_rays(u, v, view.intrinsics)
    return rays @ np.asarray(view.orientation).T


def direction_to_pixel(view: RectifiedView, d: np.ndarray):
    """World direction -> (u, v), or None when outside the frustum.

    The frustum bound is the physical pixel span [-0.5, side-0.5] in
    both axes; directions at or behind the tile plane are rejected.
    """
    d_cam = np.asarray(view.orientation).T @ np.asarray(d, dtype=float)
    u, v, in_front = project_rays(d_cam, view.intrinsics)
    if not in_front:
        return None
    lim_lo, lim_hi = -0.5, view.side - 0.5
    if not (lim_lo <= u <= lim_hi and lim_lo <= v <= lim_hi):
        return None
    return float(u), float(v)


def rotate_equirect(src: EquirectImage, rot: np.ndarray, interp: str = "bilinear") -> EquirectImage:
    """Resample the panorama so the scene appears rotated by `rot`.

    Output direction d shows what the source held at rot^T d.
    """
    h, w = src.h, src.w
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    lat = np.pi / 2.0 - (i + 0.5) * np.pi / h
    lon = -np.pi + (j + 0.5) * 2.0 * np.pi / w
    dirs = geo.geo_to_dir(lat, lon)
    src_dirs = dirs @ np.asarray(rot)  # == (rot.T @ d) rowwise
    s_lat, s_lon = geo.dir_to_geo(src_dirs)
    return EquirectImage(pixels=sample_equirect(src, s_lat, s_lon, interp))
