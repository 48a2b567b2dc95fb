"""Image containers and file I/O.

Two formats are supported: binary portable pixmap (P6) written
byte-exactly (fixed header layout, no comments), and anything Pillow
can handle (PNG in practice).  Pixels are always (h, w, 3) uint8
arrays in RGB order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class EquirectImage:
    """Full-sphere equirectangular frame.

    Columns span longitude (-pi, pi], left edge at -pi; rows span
    latitude with +pi/2 at the top.  Pixel centers sit half a pixel in
    from the edges, so width must be exactly twice the height.
    """

    pixels: np.ndarray  # (h, w, 3) uint8

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError("pixels must be an (h, w, 3) uint8 array")
        if p.shape[1] != 2 * p.shape[0]:
            raise ValueError("equirectangular frames need width == 2 * height")
        object.__setattr__(self, "pixels", p)

    @property
    def h(self) -> int:
        return self.pixels.shape[0]

    @property
    def w(self) -> int:
        return self.pixels.shape[1]


def _check_rgb8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("expected an (h, w, 3) uint8 array")
    return img


def write_ppm(path, img: np.ndarray) -> None:
    """Binary P6 with the fixed header 'P6\\n<w> <h>\\n255\\n'.

    The header has a single canonical form, so identical pixel arrays
    produce identical files byte for byte.
    """
    img = _check_rgb8(img)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError("not a binary (P6) pixmap")
    # header = magic, width, height, maxval tokens; '#' comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated pixmap header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    expected = w * h * 3
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise ValueError("pixmap raster shorter than header promises")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def write_image(path, img: np.ndarray) -> None:
    """Write RGB8 pixels; .ppm goes through the byte-exact P6 writer."""
    img = _check_rgb8(img)
    if os.fspath(path).lower().endswith(".ppm"):
        write_ppm(path, img)
    else:
        Image.fromarray(img, mode="RGB").save(path)


def read_image(path) -> np.ndarray:
    if os.fspath(path).lower().endswith(".ppm"):
        return read_ppm(path)
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def to_gray(img: np.ndarray) -> np.ndarray:
    """RGB8 -> luma in [0, 1] as float64."""
    img = _check_rgb8(img)
    weights = np.array([0.299, 0.587, 0.114])
    return (img.astype(np.float64) @ weights) / 255.0
