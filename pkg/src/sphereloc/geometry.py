"""Spherical geometry primitives shared by every module in the package.

Conventions (package-wide):

- World frame is right-handed; the canonical optical axis is +x and
  north is +z.
- Latitude is measured from the equator, in [-pi/2, +pi/2] with +pi/2 at
  the north pole.  Longitude is measured from the +x meridian towards
  +y, in (-pi, pi].  The longitude of an exact pole is 0.
- Directions are unit 3-vectors; rotations are 3x3 orthonormal matrices
  with determinant +1.  Everything accepts stacked inputs with a
  trailing axis of size 3 and broadcasts like numpy.

All functions here are pure; none keeps mutable state.
"""

from __future__ import annotations

import numpy as np

OPTICAL_AXIS = np.array([1.0, 0.0, 0.0])
NORTH = np.array([0.0, 0.0, 1.0])

# |sin(lat)| beyond which the north-up roll convention switches to the
# prime-meridian fallback (center within 0.1 deg of a pole).
_POLE_Z = np.sin(np.radians(89.9))

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v scaled to unit length along the last axis.

    Raises ValueError on (near-)zero input, which would have no
    meaningful direction.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm < 1e-15):
        raise ValueError("cannot normalize a zero-length vector")
    return v / norm


def angular_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    """Great-circle angle between unit vectors, in radians in [0, pi]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return np.arccos(dot)


def chord_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    """Angle between unit vectors via the chord length.

    Resolves tiny angles (down to ~1e-15 rad) that arccos of the dot
    product cannot; used by round-trip tests.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half_chord = 0.5 * np.linalg.norm(a - b, axis=-1)
    return 2.0 * np.arcsin(np.clip(half_chord, 0.0, 1.0))


def dir_to_geo(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit direction -> (lat, lon) in radians.

    At an exact pole both x and y are 0 and the longitude canonicalizes
    to 0 (atan2(0, 0) == 0).
    """
    d = np.asarray(d, dtype=float)
    lat = np.arcsin(np.clip(d[..., 2], -1.0, 1.0))
    lon = np.arctan2(d[..., 1], d[..., 0])
    # atan2 can return -pi for y == -0.0; the contract is lon in (-pi, pi].
    lon = np.where(lon <= -np.pi, np.pi, lon)
    return lat, lon


def geo_to_dir(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """(lat, lon) in radians -> unit direction."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    cos_lat = np.cos(lat)
    return np.stack(
        [cos_lat * np.cos(lon), cos_lat * np.sin(lon), np.sin(lat)], axis=-1
    )


def inverse_stereographic(
    x: np.ndarray, y: np.ndarray, radius: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Map plane points back to (lat, lon) through the stereographic inverse.

    rho = sqrt(x^2 + y^2), c = 2*atan(rho / 2R),
    lon = atan2(x*sin(c), rho*cos(c)), lat = asin(y*sin(c) / rho).
    The rho -> 0 limit is (lat, lon) = (0, 0), the tangent point.
    """
    if radius <= 0:
        raise ValueError("sphere radius must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = np.hypot(x, y)
    c = 2.0 * np.arctan(rho / (2.0 * radius))
    sin_c = np.sin(c)
    safe_rho = np.where(rho == 0.0, 1.0, rho)
    lat = np.arcsin(np.clip(np.where(rho == 0.0, 0.0, y * sin_c / safe_rho), -1.0, 1.0))
    lon = np.arctan2(x * sin_c, rho * np.cos(c))
    return lat, lon


def rotation_aligning(center: np.ndarray) -> np.ndarray:
    """Rotation taking the canonical optical axis (+x) to `center`.

    Roll is fixed by the north-up convention: the rotated +z axis is the
    projection of world north onto the plane perpendicular to `center`.
    Within 0.1 deg of a pole that projection degenerates and the up
    reference falls back to the prime-meridian tangent taken in the
    direction of increasing latitude, i.e. -x at the north pole and +x
    at the south pole.
    """
    f = np.asarray(center, dtype=float)
    if abs(f[2]) > _POLE_Z:
        up_ref = np.array([-1.0, 0.0, 0.0]) if f[2] > 0 else np.array([1.0, 0.0, 0.0])
    else:
        up_ref = NORTH
    up = up_ref - np.dot(up_ref, f) * f
    up = up / np.linalg.norm(up)
    right = np.cross(up, f)
    return np.column_stack([f, right, up])


def is_rotation(mat: np.ndarray, tol: float = 1e-10) -> bool:
    """True when mat is orthonormal with determinant +1 within tol."""
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (3, 3):
        return False
    ortho = np.max(np.abs(mat.T @ mat - np.eye(3)))
    return bool(ortho <= tol and abs(np.linalg.det(mat) - 1.0) <= tol)


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation by `angle` radians about the unit vector `axis`."""
    axis = normalize(np.asarray(axis, dtype=float))
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def fibonacci_sphere(count: int) -> np.ndarray:
    """Deterministic near-uniform sphere sample, shape (count, 3).

    Endpoint variant of the Fibonacci lattice: count == 1 yields the
    north pole, count == 2 both poles, larger counts interleave the
    golden angle in longitude between them.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return NORTH[np.newaxis, :].copy()
    i = np.arange(count, dtype=float)
    z = 1.0 - 2.0 * i / (count - 1)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    lon = _GOLDEN_ANGLE * i
    return np.stack([r * np.cos(lon), r * np.sin(lon), z], axis=-1)


# ---------------------------------------------------------------------------
# Quaternion helpers (w, x, y, z ordering, scalar first).
# ---------------------------------------------------------------------------


def quat_from_rotation(mat: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), w >= 0."""
    m = np.asarray(mat, dtype=float)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = 2.0 * np.sqrt(1.0 + trace)
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        k = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
        if k == 0:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = np.array(
                [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
            )
        elif k == 1:
            s = 2.0 * np.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2])
            q = np.array(
                [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
            )
        else:
            s = 2.0 * np.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2])
            q = np.array(
                [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
            )
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def rotation_from_quat(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) -> rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def average_quaternions(quats: np.ndarray) -> np.ndarray:
    """Mean orientation of a stack of unit quaternions, shape (n, 4).

    Dominant eigenvector of the accumulated outer-product matrix; the
    sign ambiguity of each input quaternion drops out because q and -q
    contribute the same outer product.
    """
    quats = np.asarray(quats, dtype=float)
    if quats.ndim != 2 or quats.shape[1] != 4 or quats.shape[0] < 1:
        raise ValueError("expected an (n, 4) stack of quaternions")
    acc = quats.T @ quats
    _, vecs = np.linalg.eigh(acc)
    mean = vecs[:, -1]
    if mean[0] < 0:
        mean = -mean
    return mean / np.linalg.norm(mean)
